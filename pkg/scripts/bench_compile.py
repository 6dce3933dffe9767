#!/usr/bin/env python3
"""Time compilation of the synthetic 129,042-transition benchmark queue."""

import pathlib
import sys
import time

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parent.parent / "src"))
sys.path.insert(0, str(pathlib.Path(__file__).resolve().parent.parent / "tests"))

from test_acceptance import TARGET_TRANSITIONS, build_synthetic_queue
from seqware.compiler import compile_queue


def main():
    out = build_synthetic_queue()
    assert len(out.transitions) == TARGET_TRANSITIONS
    times = []
    for _ in range(5):
        start = time.perf_counter()
        compiled = compile_queue(out.transitions, defaults=out.defaults)
        times.append(time.perf_counter() - start)
    print(f"{TARGET_TRANSITIONS} transitions -> end_tick {compiled.end_tick}")
    print("compile seconds per run: " + " ".join(f"{t:.3f}" for t in times))
    print(f"best: {min(times):.3f} s")


if __name__ == "__main__":
    main()
