"""Core value types: ticks, addresses, latch states, DAC codes, transitions.

The digital timing grid is one period of the 50 MHz master clock (20 ns,
one "tick"); the hardware counter holding tick counts is 56 bits wide.
Analog cards update on a coarser grid of 80 ticks (1.6 us).  Everything
in this module is an immutable value, safe to share between threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from .errors import (
    AddressOutOfRangeError,
    NegativeTimeError,
    TickOverflowError,
    VoltageOutOfRangeError,
)

CLOCK_HZ = 50_000_000
TICK_SECONDS = 2e-8
COUNTER_BITS = 56
MAX_TICKS = 1 << COUNTER_BITS

# Analog cards are clocked at 1/80 of the digital grid (0.625 MSPS).
ANALOG_GRID_TICKS = 80
ANALOG_SLOT_SECONDS = ANALOG_GRID_TICKS * TICK_SECONDS

CONNECTOR_COUNT = 4          # 32-line output connectors
RTSI_CONNECTOR = 4           # the shared trigger/clock bus, modeled as a fifth engine
RTSI_CHANNELS = 8
CONNECTOR_CHANNELS = 32

ANALOG_BOARDS = 2
ANALOG_CHANNELS = 8

DAC_BITS = 16
DAC_SPAN_VOLTS = 20.0        # -10 V .. +10 V full scale
DAC_MIN_CODE = -(1 << (DAC_BITS - 1))
DAC_MAX_CODE = (1 << (DAC_BITS - 1)) - 1

ENGINE_IDS = tuple(range(CONNECTOR_COUNT)) + (RTSI_CONNECTOR,)


def channel_count(connector: int) -> int:
    """Number of output lines on a connector (the RTSI bus has 8)."""
    if 0 <= connector < CONNECTOR_COUNT:
        return CONNECTOR_CHANNELS
    if connector == RTSI_CONNECTOR:
        return RTSI_CHANNELS
    raise AddressOutOfRangeError(f"no such connector: {connector}")


def channel_mask_limit(connector: int) -> int:
    return (1 << channel_count(connector)) - 1


def _as_integer_ratio(value):
    # floats and ints are exact rationals; route anything else through
    # Fraction so quantization is exact regardless of the input type
    if isinstance(value, float):
        return value.as_integer_ratio()
    if isinstance(value, int):
        return value, 1
    f = Fraction(value)
    return f.numerator, f.denominator


def _round_half_even(num: int, den: int) -> int:
    """Round num/den (den > 0) to the nearest integer, ties to even."""
    q, r = divmod(num, den)
    twice = 2 * r
    if twice > den or (twice == den and q & 1):
        q += 1
    return q


def _quantize(value, scale: int) -> int:
    """Round value * scale to the nearest integer, ties to even, with
    exact-rational semantics.

    The float fast path is used whenever the product is clearly away
    from a tie; near-ties fall back to exact integer arithmetic so the
    result never depends on floating-point double rounding.
    """
    if isinstance(value, float):
        x = value * scale
        if -9e15 < x < 9e15:
            r = round(x)
            if abs(x - r) < 0.5 - 4 * math.ulp(0.5 + abs(x)):
                return r
    num, den = _as_integer_ratio(value)
    return _round_half_even(num * scale, den)


def seconds_to_ticks(t) -> int:
    """Convert a time in seconds to a tick count of the 50 MHz clock.

    Rounds to the nearest tick (ties to even), computed from the exact
    rational value of the input, so grid-exact times never drift.
    """
    if t < 0:
        raise NegativeTimeError(f"time must be >= 0, got {t}")
    ticks = _quantize(t, CLOCK_HZ)
    if ticks >= MAX_TICKS:
        raise TickOverflowError(f"{t} s exceeds the {COUNTER_BITS}-bit tick counter")
    return ticks


def signed_ticks(t) -> int:
    """Like seconds_to_ticks but permits negative times (pre-normalization)."""
    return _quantize(t, CLOCK_HZ)


def ticks_to_seconds(ticks: int) -> float:
    return ticks * TICK_SECONDS


def volts_to_code(volts: float) -> int:
    """DAC code for a voltage: truncate-toward-zero of (v / 20) * 2**16.

    +10 V saturates to the maximum code; anything outside [-10, +10] is
    rejected.
    """
    if not -10.0 <= volts <= 10.0:
        raise VoltageOutOfRangeError(f"voltage {volts} V outside -10..+10 V")
    code = int((volts / DAC_SPAN_VOLTS) * (2 ** DAC_BITS))
    if code > DAC_MAX_CODE:
        code = DAC_MAX_CODE
    return code


def code_to_volts(code: int) -> float:
    return DAC_SPAN_VOLTS * code / (2 ** DAC_BITS)


@dataclass(frozen=True, slots=True)
class DigitalAddress:
    """One output line: connector 0..3, or the RTSI bus as connector 4."""

    connector: int
    channel: int

    def __post_init__(self):
        if not 0 <= self.channel < channel_count(self.connector):
            raise AddressOutOfRangeError(
                f"channel {self.channel} out of range for connector {self.connector}"
            )

    @property
    def source(self) -> str:
        """Trace source id for this line, e.g. ``d2.16``."""
        return f"d{self.connector}.{self.channel}"


@dataclass(frozen=True, slots=True)
class AnalogAddress:
    board: int
    channel: int

    def __post_init__(self):
        if not 0 <= self.board < ANALOG_BOARDS:
            raise AddressOutOfRangeError(f"analog board {self.board} out of range")
        if not 0 <= self.channel < ANALOG_CHANNELS:
            raise AddressOutOfRangeError(f"analog channel {self.channel} out of range")

    @property
    def source(self) -> str:
        return f"a{self.board}.{self.channel}"


@dataclass(frozen=True, slots=True)
class AnalogCode:
    """Signed 16-bit DAC code; 0.3 mV per step over +-10 V."""

    code: int

    def __post_init__(self):
        if not DAC_MIN_CODE <= self.code <= DAC_MAX_CODE:
            raise VoltageOutOfRangeError(f"DAC code {self.code} out of 16-bit range")

    @property
    def volts(self) -> float:
        return code_to_volts(self.code)

    @classmethod
    def from_volts(cls, volts: float) -> "AnalogCode":
        return cls(volts_to_code(volts))


@dataclass(frozen=True, slots=True)
class LatchState:
    """Full state of one connector: 32 output-enable bits + 32 level bits.

    A line whose enable bit is 0 is tri-stated regardless of its level bit.
    """

    output_enable: int = 0
    output_state: int = 0

    def apply_masked(self, channel_mask: int, output_enable: int, output_state: int) -> "LatchState":
        """Replace enable and level bits wherever channel_mask is set."""
        keep = ~channel_mask
        return LatchState(
            (self.output_enable & keep) | (output_enable & channel_mask),
            (self.output_state & keep) | (output_state & channel_mask),
        )

    def line_value(self, channel: int):
        """0, 1, or "z" (tri-stated) for one line."""
        if not (self.output_enable >> channel) & 1:
            return "z"
        return (self.output_state >> channel) & 1


def apply_masked(prev: LatchState, channel_mask: int, output_enable: int, output_state: int) -> LatchState:
    return prev.apply_masked(channel_mask, output_enable, output_state)


@dataclass(frozen=True, slots=True)
class DigitalSet:
    """Masked write of enable/level bits on one connector."""

    connector: int
    channel_mask: int
    output_enable: int
    output_state: int

    def __post_init__(self):
        limit = channel_mask_limit(self.connector)
        if self.channel_mask & ~limit:
            raise AddressOutOfRangeError(
                f"channel mask {self.channel_mask:#x} exceeds connector {self.connector} width"
            )


@dataclass(frozen=True, slots=True)
class AnalogSet:
    """One DAC update on (board, channel)."""

    board: int
    channel: int
    code: int

    def __post_init__(self):
        AnalogAddress(self.board, self.channel)  # range check
        if not DAC_MIN_CODE <= self.code <= DAC_MAX_CODE:
            raise VoltageOutOfRangeError(f"DAC code {self.code} out of 16-bit range")

    @property
    def address(self) -> AnalogAddress:
        return AnalogAddress(self.board, self.channel)

    @property
    def analog_code(self) -> AnalogCode:
        return AnalogCode(self.code)


@dataclass(frozen=True, slots=True)
class Transition:
    """One timed output change.  Time is in seconds and may be negative
    while a sequence is being built; the compiler shifts the whole queue
    so the earliest transition lands on tick 0."""

    time: float
    payload: DigitalSet | AnalogSet

    @property
    def is_digital(self) -> bool:
        return isinstance(self.payload, DigitalSet)
