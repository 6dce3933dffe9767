"""Cycle-accurate execution of compiled sequences.

Five digital timing engines (one per connector plus the RTSI bus) start
on a shared trigger at tick 0.  Each engine holds its 64-bit latch for
the programmed number of ticks, then loads the next instruction from
its FIFO.  Analog boards consume their buffered updates on analog grid
edges (every 80 ticks), clocked off the RTSI bus.

The simulator hops between instruction boundaries instead of stepping
5e7 ticks per second of sequence, but it is observationally identical
to per-tick execution; :func:`replay_check` verifies that against a
brute-force per-tick oracle.

Host replenishment of the FIFOs and analog buffers is ideal (never
late) by default.  Passing ``host_period_ticks`` switches to a
rate-limited model delivering one instruction per period after the
initial fill, which can underrun.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from statistics import mean, pstdev

import numpy as np

from .compiler import CompiledSequence
from .errors import (
    AnalogBufferUnderrunError,
    FifoUnderrunError,
    LineNotFoundError,
)
from .timeline import (
    ANALOG_GRID_TICKS,
    TICK_SECONDS,
    channel_count,
)

TRI_STATE = "z"


@dataclass(frozen=True, slots=True)
class TraceEvent:
    """One recorded change: digital values are 0, 1 or "z"; analog
    values are the signed DAC code."""

    tick: int
    source: str
    value: object


@dataclass(frozen=True)
class Trace:
    """Time-ordered record of every simulated output change."""

    end_tick: int
    events: tuple
    initial_latches: dict       # engine id -> LatchState before the trigger
    initial_codes: dict         # (board, channel) -> DAC code before the trigger
    clock_source: str = "external"

    def sources(self):
        return sorted({e.source for e in self.events})

    def events_for(self, source: str):
        return [e for e in self.events if e.source == source]


def _line_values(latch, n_lines):
    return [latch.line_value(ch) for ch in range(n_lines)]


def run(seq: CompiledSequence, fifo_capacity: int = 16,
        analog_buffer_capacity: int = 64, host_period_ticks=None,
        analog_host_period_ticks=None, clock_source: str = "external") -> Trace:
    """Execute a compiled sequence and record every output change.

    Raises FifoUnderrunError / AnalogBufferUnderrunError only under the
    rate-limited host models; the default ideal host never underruns.
    """
    if fifo_capacity < 1 or analog_buffer_capacity < 1:
        raise ValueError("capacities must be >= 1")

    raw_events = []

    for program, default in zip(seq.engines, seq.default_latches):
        if program.total_ticks != seq.end_tick:
            raise ValueError(
                f"engine {program.engine_id} program spans {program.total_ticks} "
                f"ticks, sequence ends at {seq.end_tick}"
            )
        n_lines = channel_count(program.engine_id)
        current = default
        tick = 0
        for index, (latch, duration) in enumerate(program.instructions):
            if host_period_ticks is not None and index >= fifo_capacity:
                delivered_at = (index - fifo_capacity + 1) * host_period_ticks
                if delivered_at > tick:
                    raise FifoUnderrunError(
                        f"engine {program.engine_id}: instruction {index} needed "
                        f"at tick {tick}, host delivers it at {delivered_at}"
                    )
            if latch != current:
                changed = ((latch.output_enable ^ current.output_enable)
                           | (latch.output_state ^ current.output_state))
                for ch in range(n_lines):
                    if not (changed >> ch) & 1:
                        continue
                    old_v = current.line_value(ch)
                    new_v = latch.line_value(ch)
                    if old_v != new_v:
                        raw_events.append(
                            (tick, 0, program.engine_id, ch, new_v)
                        )
                current = latch
            tick += duration

    for program in seq.analog:
        entries = []
        for ch, channel_entries in enumerate(program.channels):
            for slot, code in channel_entries:
                entries.append((slot, ch, code))
        entries.sort()
        codes = list(seq.default_codes[program.board])
        for index, (slot, ch, code) in enumerate(entries):
            if analog_host_period_ticks is not None and index >= analog_buffer_capacity:
                delivered_at = (index - analog_buffer_capacity + 1) * analog_host_period_ticks
                if delivered_at > slot * ANALOG_GRID_TICKS:
                    raise AnalogBufferUnderrunError(
                        f"board {program.board}: update {index} needed at grid "
                        f"slot {slot}, host delivers it at tick {delivered_at}"
                    )
            if code != codes[ch]:
                raw_events.append(
                    (slot * ANALOG_GRID_TICKS, 1, program.board, ch, code)
                )
                codes[ch] = code

    raw_events.sort(key=lambda e: e[:4])
    events = tuple(
        TraceEvent(tick, f"{'da'[kind]}{a}.{b}", value)
        for tick, kind, a, b, value in raw_events
    )
    return Trace(
        end_tick=seq.end_tick,
        events=events,
        initial_latches={p.engine_id: d for p, d in zip(seq.engines, seq.default_latches)},
        initial_codes={
            (board, ch): seq.default_codes[board][ch]
            for board in range(len(seq.analog))
            for ch in range(len(seq.default_codes[board]))
        },
        clock_source=clock_source,
    )


# --- per-tick oracle ---------------------------------------------------------

_VALUE_CODE = {0: 0, 1: 1, TRI_STATE: 2}


def _per_tick_from_instructions(program, default, end_tick):
    """(enable, state) uint64 arrays with one entry per tick."""
    enables = [default.output_enable]
    states = [default.output_state]
    durations = [0]
    for latch, duration in program.instructions:
        enables.append(latch.output_enable)
        states.append(latch.output_state)
        durations.append(duration)
    enable = np.repeat(np.asarray(enables, dtype=np.uint64),
                       np.asarray(durations, dtype=np.int64))
    state = np.repeat(np.asarray(states, dtype=np.uint64),
                      np.asarray(durations, dtype=np.int64))
    assert len(enable) == end_tick
    return enable, state


def _per_tick_from_events(initial_value, changes, end_tick):
    """Fill a per-tick value array from (tick, value) change points."""
    boundaries = [0]
    values = [initial_value]
    for tick, value in changes:
        if tick == boundaries[-1]:
            values[-1] = value
        else:
            boundaries.append(tick)
            values.append(value)
    boundaries.append(end_tick)
    lengths = np.diff(np.asarray(boundaries, dtype=np.int64))
    return np.repeat(np.asarray(values, dtype=np.int8), lengths)


def replay_check(seq: CompiledSequence, trace: Trace, max_ticks: int = 2_000_000) -> bool:
    """True iff the trace reproduces, tick by tick, the line and channel
    states a direct per-tick evaluation of the programs implies.

    Brute force: builds one value per tick per line, so keep sequences
    under ``max_ticks``.
    """
    end = seq.end_tick
    if end > max_ticks:
        raise ValueError(f"sequence spans {end} ticks; oracle capped at {max_ticks}")
    if trace.end_tick != end:
        return False

    by_source = {}
    for event in trace.events:
        by_source.setdefault(event.source, []).append((event.tick, event.value))

    seen_sources = set()

    for program, default in zip(seq.engines, seq.default_latches):
        enable, state = _per_tick_from_instructions(program, default, end)
        n_lines = channel_count(program.engine_id)
        for ch in range(n_lines):
            bit_e = (enable >> np.uint64(ch)) & np.uint64(1)
            bit_s = (state >> np.uint64(ch)) & np.uint64(1)
            expected = np.where(bit_e == 0, np.int8(2), bit_s.astype(np.int8))
            source = f"d{program.engine_id}.{ch}"
            seen_sources.add(source)
            changes = [(t, _VALUE_CODE[v]) for t, v in by_source.get(source, [])]
            initial = _VALUE_CODE[default.line_value(ch)]
            actual = _per_tick_from_events(initial, changes, end)
            if not np.array_equal(expected, actual):
                return False

    n_slots = end // ANALOG_GRID_TICKS
    for program in seq.analog:
        for ch, entries in enumerate(program.channels):
            source = f"a{program.board}.{ch}"
            seen_sources.add(source)
            initial = seq.default_codes[program.board][ch]
            slot_changes = [(slot, code) for slot, code in entries]
            expected = _per_tick_slot_values(initial, slot_changes, n_slots)
            events = by_source.get(source, [])
            for tick, _ in events:
                if tick % ANALOG_GRID_TICKS:
                    return False
            actual = _per_tick_slot_values(
                initial, [(t // ANALOG_GRID_TICKS, v) for t, v in events], n_slots
            )
            if not np.array_equal(expected, actual):
                return False

    # a trace inventing sources the programs do not drive also fails
    return set(by_source) <= seen_sources


def _per_tick_slot_values(initial, changes, n_slots):
    boundaries = [0]
    values = [initial]
    for slot, value in changes:
        if slot == boundaries[-1]:
            values[-1] = value
        else:
            boundaries.append(slot)
            values.append(value)
    boundaries.append(n_slots)
    lengths = np.diff(np.asarray(boundaries, dtype=np.int64))
    return np.repeat(np.asarray(values, dtype=np.int32), lengths)


# --- trace statistics ---------------------------------------------------------

@dataclass(frozen=True, slots=True)
class JitterStats:
    """Transition-timing statistics of one line across repeated runs.

    Each run's transition times are reduced to a phase against a
    reference period (5 ticks mirrors a 10 MHz reference against the
    50 MHz clock).  Spread is the population standard deviation of the
    first transition's phase; drift is the mean change in phase between
    the first (early marker) and last (late marker) transitions within
    a run.
    """

    line: str
    reference_period_ticks: int
    n_runs: int
    first_phases_ticks: tuple
    spread_seconds: float
    drift_seconds: float
    per_run_ticks: tuple = field(repr=False, default=())


def jitter_analysis(traces, line: str, reference_period_ticks: int = 5) -> JitterStats:
    """Compare one line's transition timing across repeated traces."""
    if len(traces) < 2:
        raise ValueError("jitter analysis needs at least two traces")
    per_run = []
    for trace in traces:
        ticks = [e.tick for e in trace.events if e.source == line]
        if not ticks:
            raise LineNotFoundError(f"line {line} has no transitions in trace")
        per_run.append(tuple(ticks))
    period = reference_period_ticks
    first_phases = [run[0] % period for run in per_run]
    drifts = [(run[-1] % period) - (run[0] % period) for run in per_run]
    return JitterStats(
        line=line,
        reference_period_ticks=period,
        n_runs=len(per_run),
        first_phases_ticks=tuple(first_phases),
        spread_seconds=pstdev(first_phases) * TICK_SECONDS,
        drift_seconds=mean(drifts) * TICK_SECONDS,
        per_run_ticks=tuple(per_run),
    )
