"""Transition queue to engine programs.

Compilation sorts the queue chronologically (stable within a tick by
enqueue order), folds same-tick writes on each connector into a single
latch state, converts event gaps into per-engine hold durations, snaps
analog updates to the 80-tick analog grid, and pads every program so
all five digital engines and both analog boards terminate on the same
tick, which is always a multiple of 80.

compile_queue is a pure function: the same queue (including order)
yields a bit-identical result.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import Enum

from .errors import ConflictError, EmptyQueueError
from .sequence import DefaultStates
from .timeline import (
    ANALOG_BOARDS,
    ANALOG_CHANNELS,
    ANALOG_GRID_TICKS,
    AnalogSet,
    ENGINE_IDS,
    LatchState,
    TICK_SECONDS,
    _quantize,
    seconds_to_ticks,
)

ANALOG_SLOTS_PER_SECOND = 625_000


class ConflictPolicy(Enum):
    REJECT = "reject"
    LAST_WRITER_WINS = "last-wins"


@dataclass(frozen=True, slots=True)
class EngineProgram:
    """Instruction stream for one timing engine: hold ``latch`` for
    ``duration`` ticks, then move to the next instruction."""

    engine_id: int
    instructions: tuple   # of (LatchState, duration_ticks)

    @property
    def total_ticks(self) -> int:
        return sum(d for _, d in self.instructions)


@dataclass(frozen=True, slots=True)
class AnalogProgram:
    """Per-channel (grid_index, code) updates for one board; grid
    indices are strictly increasing per channel."""

    board: int
    channels: tuple       # 8 tuples of (grid_index, code)
    coalesced: tuple      # per channel: updates dropped by same-slot merging


@dataclass(frozen=True, slots=True)
class CompiledSequence:
    engines: tuple                # 5 EnginePrograms, connector order then RTSI
    analog: tuple                 # 2 AnalogPrograms
    end_tick: int
    transition_count: int
    total_time_seconds: float
    origin_shift_seconds: float
    default_latches: tuple        # LatchState per engine, pre-trigger
    default_codes: tuple          # per board: 8 codes, pre-trigger

    def to_bytes(self) -> bytes:
        return serialize(self)

    @classmethod
    def from_bytes(cls, blob: bytes) -> "CompiledSequence":
        return deserialize(blob)


def quantize_analog(t) -> int:
    """Nearest analog grid slot (1.6 us period), ties to even."""
    return _quantize(t, ANALOG_SLOTS_PER_SECOND)


def normalize_origin(queue):
    """Shift all times so the earliest transition lands at tick 0.

    Returns (shifted_queue, shift_seconds) where shift is the amount
    added to every time.
    """
    if not queue:
        return list(queue), 0.0
    earliest = min(tr.time for tr in queue)
    if earliest == 0:
        return list(queue), 0.0
    shift = -earliest
    return [type(tr)(tr.time + shift, tr.payload) for tr in queue], shift


def compile_queue(queue, policy=ConflictPolicy.REJECT, defaults=None) -> CompiledSequence:
    """Compile a transition queue into engine and analog programs."""
    if not queue:
        raise EmptyQueueError("cannot compile an empty transition queue")
    if defaults is None:
        defaults = DefaultStates()

    # shift the whole queue so the earliest transition is at tick 0
    earliest = min(tr.time for tr in queue)
    shift = 0.0 if earliest == 0 else -earliest

    digital = {eid: [] for eid in ENGINE_IDS}
    analog = {}   # (board, channel) -> [(slot, idx, code)]
    for idx, tr in enumerate(queue):
        payload = tr.payload
        t = tr.time + shift
        if isinstance(payload, AnalogSet):
            slot = quantize_analog(t)
            analog.setdefault((payload.board, payload.channel), []).append(
                (slot, idx, payload.code)
            )
        else:
            tick = seconds_to_ticks(t)
            digital[payload.connector].append(
                (tick, idx, payload.channel_mask, payload.output_enable, payload.output_state)
            )

    last_tick = 0
    events_per_engine = {}
    for eid in ENGINE_IDS:
        entries = sorted(digital[eid])
        latch = defaults.digital_latch(eid)
        events = []
        i = 0
        while i < len(entries):
            tick = entries[i][0]
            written_mask = written_enable = written_state = 0
            while i < len(entries) and entries[i][0] == tick:
                _, _, mask, enable, state = entries[i]
                overlap = mask & written_mask
                if overlap:
                    differs = overlap & (
                        (written_enable ^ enable) | (written_state ^ state)
                    )
                    if differs and policy is ConflictPolicy.REJECT:
                        raise ConflictError(
                            f"connector {eid} tick {tick}: lines {differs:#x} "
                            "written twice with different states"
                        )
                written_mask |= mask
                written_enable = (written_enable & ~mask) | (enable & mask)
                written_state = (written_state & ~mask) | (state & mask)
                latch = latch.apply_masked(mask, enable, state)
                i += 1
            events.append((tick, latch))
        events_per_engine[eid] = events
        if events:
            last_tick = max(last_tick, events[-1][0])

    analog_sorted = {}
    for key, entries in analog.items():
        entries.sort()
        merged = []
        dropped = 0
        for slot, _, code in entries:
            if merged and merged[-1][0] == slot:
                merged[-1] = (slot, code)   # last write in a slot is output
                dropped += 1
            else:
                merged.append((slot, code))
        analog_sorted[key] = (merged, dropped)
        if merged:
            last_tick = max(last_tick, merged[-1][0] * ANALOG_GRID_TICKS)

    # all engines terminate together on an analog grid edge
    end_tick = -(-(last_tick + 1) // ANALOG_GRID_TICKS) * ANALOG_GRID_TICKS

    engines = []
    default_latches = []
    for eid in ENGINE_IDS:
        default = defaults.digital_latch(eid)
        default_latches.append(default)
        events = events_per_engine[eid]
        instructions = []
        if not events:
            instructions.append((default, end_tick))
        else:
            first_tick = events[0][0]
            if first_tick > 0:
                instructions.append((default, first_tick))
            for n, (tick, latch) in enumerate(events):
                next_tick = events[n + 1][0] if n + 1 < len(events) else end_tick
                instructions.append((latch, next_tick - tick))
        engines.append(EngineProgram(eid, tuple(instructions)))

    boards = []
    default_codes = []
    for board in range(ANALOG_BOARDS):
        channels = []
        coalesced = []
        codes = []
        for ch in range(ANALOG_CHANNELS):
            merged, dropped = analog_sorted.get((board, ch), ([], 0))
            channels.append(tuple(merged))
            coalesced.append(dropped)
            codes.append(defaults.analog_code(board, ch))
        boards.append(AnalogProgram(board, tuple(channels), tuple(coalesced)))
        default_codes.append(tuple(codes))

    return CompiledSequence(
        engines=tuple(engines),
        analog=tuple(boards),
        end_tick=end_tick,
        transition_count=len(queue),
        total_time_seconds=end_tick * TICK_SECONDS,
        origin_shift_seconds=shift,
        default_latches=tuple(default_latches),
        default_codes=tuple(default_codes),
    )


@dataclass(frozen=True, slots=True)
class AnalogRateReport:
    violations: tuple    # (channel, grid_index, extra_updates)
    full_rate_runs: tuple  # (channel, start_slot, length) of back-to-back bursts
    coalesced: tuple

    @property
    def ok(self) -> bool:
        return not self.violations


def check_analog_rate(program: AnalogProgram, burst_threshold: int = 8) -> AnalogRateReport:
    """Diagnose update-rate pressure on one analog board.

    A violation is two updates sharing one grid slot on one channel
    (compile_queue never emits these; hand-built programs might).
    Runs of consecutive occupied slots of at least ``burst_threshold``
    are reported informationally: the channel is saturating its
    one-update-per-slot budget there.
    """
    violations = []
    runs = []
    for ch, entries in enumerate(program.channels):
        prev_slot = None
        run_start = None
        run_len = 0
        for slot, _ in entries:
            if prev_slot is not None and slot == prev_slot:
                violations.append((ch, slot, 1))
            if prev_slot is not None and slot == prev_slot + 1:
                if run_start is None:
                    run_start = prev_slot
                    run_len = 2
                else:
                    run_len += 1
            else:
                if run_start is not None and run_len >= burst_threshold:
                    runs.append((ch, run_start, run_len))
                run_start = None
                run_len = 0
            prev_slot = slot
        if run_start is not None and run_len >= burst_threshold:
            runs.append((ch, run_start, run_len))
    return AnalogRateReport(tuple(violations), tuple(runs), program.coalesced)


# --- binary serialization ---------------------------------------------------
#
# Little-endian throughout.  Layout:
#   magic "SQC1", u16 format version, u16 reserved,
#   u64 end_tick, u32 transition_count, f64 origin_shift_seconds,
#   5 engine blocks:  u8 engine_id, u32 default_enable, u32 default_state,
#                     u32 n, then n * (u32 enable, u32 state, u64 duration)
#   2 analog blocks:  u8 board, 8 * i16 default codes,
#                     8 channel blocks: u32 n, u32 coalesced,
#                     then n * (u32 grid_index, i16 code)

MAGIC = b"SQC1"
FORMAT_VERSION = 1


def serialize(seq: CompiledSequence) -> bytes:
    parts = [MAGIC, struct.pack("<HH", FORMAT_VERSION, 0)]
    parts.append(struct.pack("<QId", seq.end_tick, seq.transition_count,
                             seq.origin_shift_seconds))
    for program, default in zip(seq.engines, seq.default_latches):
        parts.append(struct.pack("<BIII", program.engine_id,
                                 default.output_enable, default.output_state,
                                 len(program.instructions)))
        for latch, duration in program.instructions:
            parts.append(struct.pack("<IIQ", latch.output_enable,
                                     latch.output_state, duration))
    for program, codes in zip(seq.analog, seq.default_codes):
        parts.append(struct.pack("<B8h", program.board, *codes))
        for entries, dropped in zip(program.channels, program.coalesced):
            parts.append(struct.pack("<II", len(entries), dropped))
            for slot, code in entries:
                parts.append(struct.pack("<Ih", slot, code))
    return b"".join(parts)


def deserialize(blob: bytes) -> CompiledSequence:
    view = memoryview(blob)
    if bytes(view[:4]) != MAGIC:
        raise ValueError("not a compiled-sequence blob (bad magic)")
    version, _ = struct.unpack_from("<HH", view, 4)
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported format version {version}")
    offset = 8
    end_tick, transition_count, shift = struct.unpack_from("<QId", view, offset)
    offset += struct.calcsize("<QId")

    engines = []
    default_latches = []
    for _ in range(5):
        engine_id, default_enable, default_state, n = struct.unpack_from("<BIII", view, offset)
        offset += struct.calcsize("<BIII")
        instructions = []
        for _ in range(n):
            enable, state, duration = struct.unpack_from("<IIQ", view, offset)
            offset += struct.calcsize("<IIQ")
            instructions.append((LatchState(enable, state), duration))
        engines.append(EngineProgram(engine_id, tuple(instructions)))
        default_latches.append(LatchState(default_enable, default_state))

    analog = []
    default_codes = []
    for _ in range(ANALOG_BOARDS):
        unpacked = struct.unpack_from("<B8h", view, offset)
        offset += struct.calcsize("<B8h")
        board, codes = unpacked[0], unpacked[1:]
        channels = []
        coalesced = []
        for _ in range(ANALOG_CHANNELS):
            n, dropped = struct.unpack_from("<II", view, offset)
            offset += struct.calcsize("<II")
            entries = []
            for _ in range(n):
                slot, code = struct.unpack_from("<Ih", view, offset)
                offset += struct.calcsize("<Ih")
                entries.append((slot, code))
            channels.append(tuple(entries))
            coalesced.append(dropped)
        analog.append(AnalogProgram(board, tuple(channels), tuple(coalesced)))
        default_codes.append(codes)

    return CompiledSequence(
        engines=tuple(engines),
        analog=tuple(analog),
        end_tick=end_tick,
        transition_count=transition_count,
        total_time_seconds=end_tick * TICK_SECONDS,
        origin_shift_seconds=shift,
        default_latches=tuple(default_latches),
        default_codes=tuple(default_codes),
    )
