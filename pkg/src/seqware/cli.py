"""Operator command line.

    seqware serve   --port 8282 --trace-dir shots/
    seqware run     sequence.seq --out shot.csv --format csv
    seqware analyze shot1.csv shot2.csv --line d2.18
    seqware decode  shot.csv --pinmap pins.map --device dds1

Every command is deterministic: identical inputs and flags produce
byte-identical outputs.  Exit codes: 0 success, 1 user error (bad
arguments, parse errors, missing inputs), 2 internal error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .compiler import ConflictPolicy, compile_queue
from .engine import jitter_analysis, run
from .errors import SeqwareError, SequenceFileError
from .peripherals import decode_device
from .protocol import DEFAULT_DISCOVERY_PORT
from .sequence_file import build_queue, load_pinmap, load_sequence_file, parse_time
from .timeline import TICK_SECONDS
from .trace_io import read_trace_csv, write_trace_csv, write_trace_vcd

_POLICIES = {
    "reject": ConflictPolicy.REJECT,
    "last-wins": ConflictPolicy.LAST_WRITER_WINS,
}


def _env(name, default=None):
    return os.environ.get(f"SEQWARE_{name}", default)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="seqware",
        description="deterministic experiment sequencing: compile, simulate, serve",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    serve = sub.add_parser("serve", help="run the control service")
    serve.add_argument("--port", type=int,
                       default=int(_env("PORT", DEFAULT_DISCOVERY_PORT)),
                       help="UDP discovery port (0 picks a free port)")
    serve.add_argument("--host", default=_env("HOST", "127.0.0.1"),
                       help="bind address (loopback by default)")
    serve.add_argument("--trace-dir", default=_env("TRACE_DIR"),
                       help="write one trace CSV per shot into this directory")
    serve.add_argument("--conflict-policy", choices=sorted(_POLICIES),
                       default=_env("CONFLICT_POLICY", "reject"))
    serve.add_argument("--pinmap", default=_env("PINMAP"),
                       help="device pin map; shots also get per-device decoded CSVs")
    serve.add_argument("--settle-seconds", type=float, default=0.0,
                       help="extra hardware-busy time per shot")

    run_cmd = sub.add_parser("run", help="compile and simulate a sequence file")
    run_cmd.add_argument("file")
    run_cmd.add_argument("--out", help="trace output path (default: <file>.csv)")
    run_cmd.add_argument("--format", choices=("csv", "vcd"),
                         default=_env("FORMAT", "csv"))
    run_cmd.add_argument("--conflict-policy", choices=sorted(_POLICIES),
                         default=_env("CONFLICT_POLICY", "reject"))
    run_cmd.add_argument("--pinmap", default=_env("PINMAP"))
    run_cmd.add_argument("--compiled-out",
                         help="also write the compiled sequence in its "
                         "versioned binary form (docs/compiled-format.md)")

    analyze = sub.add_parser("analyze", help="transition timing across traces")
    analyze.add_argument("traces", nargs="+")
    analyze.add_argument("--line", required=True, help="source id, e.g. d2.18")
    analyze.add_argument("--reference-period-ticks", type=int, default=5)
    analyze.add_argument("--window", help="restrict to a time window START,END "
                         "with units, e.g. 0us,10ms")
    analyze.add_argument("--histogram", help="write phase histogram CSV here")

    decode = sub.add_parser("decode", help="decode device pins from a trace")
    decode.add_argument("trace")
    decode.add_argument("--pinmap", required=True)
    decode.add_argument("--device", required=True)
    decode.add_argument("--out", help="write the timeline as CSV here")

    return parser


def cmd_serve(args) -> int:
    from .service import ControlService

    logging.basicConfig(level=logging.INFO,
                        format="%(asctime)s %(name)s %(message)s")
    pinmap = load_pinmap(args.pinmap) if args.pinmap else {}
    service = ControlService(
        discovery_port=args.port,
        host=args.host,
        trace_dir=args.trace_dir,
        conflict_policy=_POLICIES[args.conflict_policy],
        shot_settle_seconds=args.settle_seconds,
    )
    if pinmap and args.trace_dir:
        from .errors import LineNotFoundError

        def export_decodes(trace, shot_index):
            for name, spec in sorted(pinmap.items()):
                try:
                    rows = decode_device(trace, spec.pins, spec.kind, spec.sysclk)
                except LineNotFoundError:
                    continue   # this shot never drove the device's pins
                path = os.path.join(args.trace_dir,
                                    f"shot_{shot_index:04d}.{name}.csv")
                _write_decode_csv(rows, spec.kind, path)
        service.on_trace = export_decodes
    try:
        service.start()
    except OSError as exc:
        print(f"error: cannot bind {args.host}:{args.port}: {exc}", file=sys.stderr)
        return 1
    print(f"seqware service: discovery on {args.host}:{service.discovery_port}",
          flush=True)
    try:
        while True:
            service._stop.wait(3600)
            if service._stop.is_set():
                break
    except KeyboardInterrupt:
        pass
    finally:
        service.stop()
    return 0


def cmd_run(args) -> int:
    parsed = load_sequence_file(args.file)
    pinmap = load_pinmap(args.pinmap) if args.pinmap else {}
    builder = build_queue(parsed, extra_devices=pinmap)
    compiled = compile_queue(builder.transitions,
                             policy=_POLICIES[args.conflict_policy],
                             defaults=builder.defaults)
    trace = run(compiled)
    out = args.out or f"{os.path.splitext(args.file)[0]}.{args.format}"
    if args.format == "csv":
        write_trace_csv(trace, out)
    else:
        write_trace_vcd(trace, out)
    if args.compiled_out:
        with open(args.compiled_out, "wb") as f:
            f.write(compiled.to_bytes())
    print(f"elements={compiled.transition_count} "
          f"total_time={compiled.total_time_seconds!r}s "
          f"end_tick={compiled.end_tick} trace={out}")
    return 0


def _parse_window(text):
    try:
        start_s, end_s = text.split(",")
        return parse_time(start_s), parse_time(end_s)
    except ValueError as exc:
        raise SeqwareError(f"bad --window: {exc}") from None


def _window_filter(trace, window):
    if window is None:
        return trace
    from dataclasses import replace
    start, end = window
    lo = round(start / TICK_SECONDS)
    hi = round(end / TICK_SECONDS)
    events = tuple(e for e in trace.events if lo <= e.tick <= hi)
    return replace(trace, events=events)


def cmd_analyze(args) -> int:
    window = _parse_window(args.window) if args.window else None
    traces = [_window_filter(read_trace_csv(path), window) for path in args.traces]
    print(f"line {args.line}: {len(traces)} trace(s)")
    for path, trace in zip(args.traces, traces):
        ticks = [e.tick for e in trace.events if e.source == args.line]
        if not ticks:
            print(f"error: line {args.line} has no transitions in {path}",
                  file=sys.stderr)
            return 1
        head = " ".join(str(t) for t in ticks[:8])
        more = f" ... ({len(ticks)} total)" if len(ticks) > 8 else ""
        print(f"  {path}: first={ticks[0]} last={ticks[-1]} ticks: {head}{more}")
    if len(traces) < 2:
        print("need two or more traces for spread/drift statistics")
        return 0
    stats = jitter_analysis(traces, args.line,
                            reference_period_ticks=args.reference_period_ticks)
    print(f"reference period: {stats.reference_period_ticks} ticks")
    print(f"spread: {stats.spread_seconds!r} s")
    print(f"drift:  {stats.drift_seconds!r} s")
    if args.histogram:
        counts = {}
        for phase in stats.first_phases_ticks:
            counts[phase] = counts.get(phase, 0) + 1
        with open(args.histogram, "w", newline="\n") as f:
            f.write("phase_ticks,count\n")
            for phase in sorted(counts):
                f.write(f"{phase},{counts[phase]}\n")
        print(f"histogram={args.histogram}")
    return 0


def _fmt(value):
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, dict):
        return ";".join(f"{k}={_fmt(v)}" for k, v in sorted(value.items()))
    return str(value)


def _write_decode_csv(rows, kind, path):
    with open(path, "w", newline="\n") as f:
        f.write(_decode_table(rows, kind))


def _decode_table(rows, kind) -> str:
    if kind == "ad5372":
        header = "tick,time_s,kind,voltages"
        lines = [header]
        for row in rows:
            changed = {ch: v for ch, v in row.voltages.items() if v != 0.0}
            lines.append(f"{row.tick},{row.tick * TICK_SECONDS!r},{row.kind},"
                         f"{_fmt(changed)}")
    else:
        header = "tick,time_s,kind,frequency_hz,amplitude,mode,phase_turns"
        lines = [header]
        for row in rows:
            lines.append(
                f"{row.tick},{row.tick * TICK_SECONDS!r},{row.kind},"
                f"{_fmt(row.frequency)},{_fmt(row.amplitude)},{row.mode},"
                f"{_fmt(row.phase_turns)}"
            )
    return "\n".join(lines) + "\n"


def cmd_decode(args) -> int:
    trace = read_trace_csv(args.trace)
    pinmap = load_pinmap(args.pinmap)
    if args.device not in pinmap:
        print(f"error: device {args.device!r} not in {args.pinmap}", file=sys.stderr)
        return 1
    spec = pinmap[args.device]
    rows = decode_device(trace, spec.pins, spec.kind, spec.sysclk)
    table = _decode_table(rows, spec.kind)
    sys.stdout.write(table)
    if args.out:
        with open(args.out, "w", newline="\n") as f:
            f.write(table)
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {
        "serve": cmd_serve,
        "run": cmd_run,
        "analyze": cmd_analyze,
        "decode": cmd_decode,
    }
    try:
        return handlers[args.command](args)
    except SequenceFileError as exc:
        name = getattr(args, "file", getattr(args, "pinmap", ""))
        print(f"{name}:{exc.line_no}: error: {exc.message}", file=sys.stderr)
        return 1
    except (SeqwareError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:   # internal
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
