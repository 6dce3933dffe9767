#!/usr/bin/env python3
"""Regenerate the golden trace fixture for the bundled demo shot.

Run from the repository root after an intentional behavior change:

    python3 scripts/make_golden.py

The golden file freezes the full simulated trace of the demo sequence;
tests compare against it tick-exactly.
"""

import gzip
import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parent.parent / "src"))

from seqware.compiler import compile_queue
from seqware.demo import build_demo_queue
from seqware.engine import run
from seqware.trace_io import format_trace_csv

GOLDEN = pathlib.Path(__file__).resolve().parent.parent / "tests" / "data" / "demo_trace.csv.gz"


def main():
    out = build_demo_queue()
    compiled = compile_queue(out.transitions, defaults=out.defaults)
    trace = run(compiled)
    text = format_trace_csv(trace)
    GOLDEN.parent.mkdir(parents=True, exist_ok=True)
    with GOLDEN.open("wb") as raw:
        # mtime=0 keeps the archive byte-reproducible
        with gzip.GzipFile(fileobj=raw, mode="wb", compresslevel=9, mtime=0) as f:
            f.write(text.encode())
    print(f"wrote {GOLDEN} ({GOLDEN.stat().st_size} bytes, "
          f"{len(trace.events)} events, end_tick={trace.end_tick})")


if __name__ == "__main__":
    main()
