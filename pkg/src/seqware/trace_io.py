"""Trace export and import.

Two formats, both deterministic down to the byte for a given trace:

CSV (``# seqware-trace v1``)
    Header comments carry the clock source, end tick, and initial
    states: one ``# initial,d,<engine>,<enable hex8>,<state hex8>``
    line per engine in id order, one ``# initial,a,<board>,<channel>,
    <code>`` line per analog channel.  Then ``tick,source,value`` rows,
    tick-ordered.  Digital values are ``0``, ``1`` or ``z``; analog
    values are volts, printed as the shortest exact representation of
    the underlying binary float (codes are exact in binary, so reading
    the file back reproduces the code).

VCD
    ``$timescale 1ns`` with timestamps = tick * 20.  Digital lines are
    1-bit wires named ``d<connector>_<channel>``, analog channels real
    vars named ``a<board>_<channel>`` in volts.  Only sources that
    change during the trace are declared; initial values go into
    ``$dumpvars``.
"""

from __future__ import annotations

from .engine import Trace, TraceEvent
from .timeline import LatchState, code_to_volts, volts_to_code

CSV_HEADER = "# seqware-trace v1"


def _is_analog(source: str) -> bool:
    return source.startswith("a")


def format_trace_csv(trace: Trace) -> str:
    lines = [
        CSV_HEADER,
        f"# clock_source={trace.clock_source}",
        f"# end_tick={trace.end_tick}",
    ]
    for eid in sorted(trace.initial_latches):
        latch = trace.initial_latches[eid]
        lines.append(
            f"# initial,d,{eid},{latch.output_enable:08x},{latch.output_state:08x}"
        )
    for board, ch in sorted(trace.initial_codes):
        lines.append(f"# initial,a,{board},{ch},{trace.initial_codes[(board, ch)]}")
    lines.append("tick,source,value")
    for event in trace.events:
        if _is_analog(event.source):
            value = repr(code_to_volts(event.value))
        else:
            value = str(event.value)
        lines.append(f"{event.tick},{event.source},{value}")
    return "\n".join(lines) + "\n"


def write_trace_csv(trace: Trace, path):
    with open(path, "w", newline="\n") as f:
        f.write(format_trace_csv(trace))


def parse_trace_csv(text: str) -> Trace:
    clock_source = "external"
    end_tick = 0
    initial_latches = {}
    initial_codes = {}
    events = []
    lines = text.splitlines()
    if not lines or lines[0] != CSV_HEADER:
        raise ValueError("not a seqware trace CSV")
    for line in lines[1:]:
        if line.startswith("# clock_source="):
            clock_source = line.split("=", 1)[1]
        elif line.startswith("# end_tick="):
            end_tick = int(line.split("=", 1)[1])
        elif line.startswith("# initial,d,"):
            _, _, eid, enable, state = line[2:].split(",")
            initial_latches[int(eid)] = LatchState(int(enable, 16), int(state, 16))
        elif line.startswith("# initial,a,"):
            _, _, board, ch, code = line[2:].split(",")
            initial_codes[(int(board), int(ch))] = int(code)
        elif line.startswith("#") or line == "tick,source,value" or not line:
            continue
        else:
            tick_s, source, value_s = line.split(",")
            if _is_analog(source):
                value = volts_to_code(float(value_s))
            elif value_s == "z":
                value = "z"
            else:
                value = int(value_s)
            events.append(TraceEvent(int(tick_s), source, value))
    return Trace(
        end_tick=end_tick,
        events=tuple(events),
        initial_latches=initial_latches,
        initial_codes=initial_codes,
        clock_source=clock_source,
    )


def read_trace_csv(path) -> Trace:
    with open(path, "r") as f:
        return parse_trace_csv(f.read())


def _vcd_identifier(index: int) -> str:
    # printable VCD id characters, '!' .. '~'
    chars = []
    index += 1
    while index:
        index, rem = divmod(index - 1, 94)
        chars.append(chr(33 + rem))
    return "".join(reversed(chars))


def format_trace_vcd(trace: Trace) -> str:
    sources = trace.sources()
    ids = {src: _vcd_identifier(i) for i, src in enumerate(sources)}
    out = [
        "$version seqware trace v1 $end",
        f"$comment clock_source={trace.clock_source} end_tick={trace.end_tick} $end",
        "$timescale 1ns $end",
        "$scope module seq $end",
    ]
    for src in sources:
        name = src.replace(".", "_")
        if _is_analog(src):
            out.append(f"$var real 64 {ids[src]} {name} $end")
        else:
            out.append(f"$var wire 1 {ids[src]} {name} $end")
    out.append("$upscope $end")
    out.append("$enddefinitions $end")

    def fmt(src, value):
        if _is_analog(src):
            return f"r{code_to_volts(value)!r} {ids[src]}"
        return f"{value}{ids[src]}"

    out.append("#0")
    out.append("$dumpvars")
    for src in sources:
        if _is_analog(src):
            board, ch = src[1:].split(".")
            code = trace.initial_codes.get((int(board), int(ch)), 0)
            out.append(fmt(src, code))
        else:
            connector, ch = src[1:].split(".")
            latch = trace.initial_latches.get(int(connector), LatchState())
            out.append(f"{latch.line_value(int(ch))}{ids[src]}")
    out.append("$end")

    last_tick = 0
    for event in trace.events:
        if event.tick != last_tick:
            out.append(f"#{event.tick * 20}")
            last_tick = event.tick
        out.append(fmt(event.source, event.value))
    if trace.end_tick != last_tick or not trace.events:
        out.append(f"#{trace.end_tick * 20}")
    return "\n".join(out) + "\n"


def write_trace_vcd(trace: Trace, path):
    with open(path, "w", newline="\n") as f:
        f.write(format_trace_vcd(trace))
