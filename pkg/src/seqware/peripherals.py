"""Serial peripheral layer: command encoders and device emulators.

Peripheral boards (DDS RF sources and DAC cards) hang off four digital
lines: IO (data), SCLK (serial clock), UPDATE (commit) and RESET.  A
command is one or more frames, each an address byte followed by that
register's payload bytes, clocked MSB first.  The device buffers frames
in shadow registers and applies them atomically on the UPDATE rising
edge, so output changes land on exact, precomputed ticks.

Framing (one SCLK period = ``p`` ticks, p >= 2, fixed per device):

* bit i of a frame starting at tick T0: IO is set at ``T0 + i*p``, SCLK
  rises at ``T0 + i*p + p//2`` and falls at ``T0 + (i+1)*p``.
* an UPDATE or RESET pulse at tick C: high at C, low at ``C + p``.

Frames for a commit are packed as late as possible before the commit
tick, never overlapping earlier frames, always ending at least one tick
before UPDATE rises.  When a requested commit cannot be met (the window
since the previous commit is too small for its frames) the commit moves
later to the first feasible tick rather than corrupting the stream.

The decoder (:class:`DeviceRegisterModel` / :func:`decode_device`) is
the inverse side: it samples IO on SCLK rising edges out of a simulated
trace, reassembles frames, applies shadow/commit semantics, and derives
the output (frequency, amplitude, voltage) over time.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import (
    AddressOutOfRangeError,
    FramingError,
    FrequencyOutOfRangeError,
    LineNotFoundError,
    ListLengthMismatchError,
    UnknownRegisterError,
)
from .timeline import (
    DigitalAddress,
    DigitalSet,
    TICK_SECONDS,
    Transition,
    signed_ticks,
    volts_to_code,
)


@dataclass(frozen=True, slots=True)
class SpiPins:
    """The four control lines of one peripheral board."""

    io: DigitalAddress
    sclk: DigitalAddress
    update: DigitalAddress
    reset: DigitalAddress

    def __post_init__(self):
        lines = {self.io, self.sclk, self.update, self.reset}
        if len(lines) != 4:
            raise AddressOutOfRangeError("SPI pins must be four distinct lines")

    @property
    def sources(self):
        return (self.io.source, self.sclk.source, self.update.source, self.reset.source)


@dataclass(frozen=True, slots=True)
class SpiFrame:
    """Register address byte plus payload bytes."""

    register_address: int
    payload: bytes

    def __post_init__(self):
        if not self.payload:
            raise ValueError("SPI frame payload must be non-empty")
        if not 0 <= self.register_address <= 0xFF:
            raise ValueError("register address must fit one byte")

    @property
    def bits(self):
        out = []
        for byte in bytes([self.register_address]) + bytes(self.payload):
            for i in range(7, -1, -1):
                out.append((byte >> i) & 1)
        return out

    @property
    def n_bits(self) -> int:
        return 8 * (1 + len(self.payload))


def _line_write(address: DigitalAddress, tick: int, state: int) -> Transition:
    bit = 1 << address.channel
    return Transition(
        tick * TICK_SECONDS,
        DigitalSet(address.connector, bit, bit, state << address.channel),
    )


def frame_transitions(pins: SpiPins, frame: SpiFrame, t0_tick: int, sclk_period_ticks: int):
    """Pin transitions for one frame starting at tick t0.  The frame
    occupies ``n_bits * period`` ticks; the final SCLK fall is the last
    event."""
    p = sclk_period_ticks
    out = []
    for i, bit in enumerate(frame.bits):
        t_bit = t0_tick + i * p
        out.append(_line_write(pins.io, t_bit, bit))
        out.append(_line_write(pins.sclk, t_bit + p // 2, 1))
        out.append(_line_write(pins.sclk, t_bit + p, 0))
    return out


def pulse_transitions(line: DigitalAddress, tick: int, sclk_period_ticks: int):
    return [_line_write(line, tick, 1), _line_write(line, tick + sclk_period_ticks, 0)]


def encode_frame(pins: SpiPins, frame: SpiFrame, t_start, sclk_period_ticks: int):
    """Encode one frame at a time in seconds.

    Returns (transitions, elapsed_seconds).  IO is stable across every
    SCLK rising edge by construction.
    """
    if sclk_period_ticks < 2:
        raise ValueError("sclk_period_ticks must be >= 2")
    t0 = signed_ticks(t_start)
    transitions = frame_transitions(pins, frame, t0, sclk_period_ticks)
    return transitions, frame.n_bits * sclk_period_ticks * TICK_SECONDS


def pulse_update(pins: SpiPins, t, sclk_period_ticks: int = 2):
    """UPDATE high then low, one SCLK period apart; the device commits
    shadow registers to active at the rising edge."""
    return pulse_transitions(pins.update, signed_ticks(t), sclk_period_ticks)


def pulse_reset(pins: SpiPins, t, sclk_period_ticks: int = 2):
    return pulse_transitions(pins.reset, signed_ticks(t), sclk_period_ticks)


# --- frequency tuning words ----------------------------------------------

def ftw_for_frequency(frequency, sysclk, width: int) -> int:
    """Tuning word for an output frequency: round(f * 2**width / sysclk).

    Rounding (ties to even) is computed from exact rationals so the
    encoder is bit-reproducible.
    """
    if not 0 <= frequency < sysclk / 2:
        raise FrequencyOutOfRangeError(
            f"frequency {frequency} Hz outside [0, sysclk/2 = {sysclk / 2} Hz)"
        )
    fnum, fden = float(frequency).as_integer_ratio()
    snum, sden = float(sysclk).as_integer_ratio()
    num = fnum * (1 << width) * sden
    den = fden * snum
    q, r = divmod(num, den)
    if 2 * r > den or (2 * r == den and q & 1):
        q += 1
    return q


def frequency_for_ftw(ftw: int, sysclk, width: int) -> float:
    return ftw * sysclk / (1 << width)


@dataclass(frozen=True, slots=True)
class FrequencyTuningWord:
    """Device-width integer setting a DDS output frequency."""

    ftw: int
    width: int

    def __post_init__(self):
        if not 0 <= self.ftw < (1 << self.width):
            raise FrequencyOutOfRangeError(f"FTW {self.ftw} exceeds {self.width} bits")

    def frequency(self, sysclk) -> float:
        return frequency_for_ftw(self.ftw, sysclk, self.width)

    @classmethod
    def for_frequency(cls, frequency, sysclk, width: int) -> "FrequencyTuningWord":
        return cls(ftw_for_frequency(frequency, sysclk, width), width)


def power_to_amplitude_code(power_dbm, max_code: int) -> int:
    """Amplitude code for a power in dBm, full scale at 0 dBm.

    -inf maps to 0 (output off); values above 0 dBm clip to full scale.
    """
    if power_dbm == float("-inf"):
        return 0
    code = round(max_code * 10 ** (power_dbm / 20))
    return min(max(code, 0), max_code)


# --- register maps (reduced to the command set in use) --------------------

AD9959_FTW_WIDTH = 32
AD9854_FTW_WIDTH = 48
AD9959_AMP_MAX = 1023   # 10-bit amplitude scale factor
AD9854_AMP_MAX = 4095   # 12-bit shaped-keying multiplier

AD9959_REG_CSR = 0x00
AD9959_REG_FR1 = 0x01
AD9959_REG_FR2 = 0x02
AD9959_REG_CFR = 0x03
AD9959_REG_CFTW0 = 0x04
AD9959_REG_CPOW0 = 0x05
AD9959_REG_ACR = 0x06
AD9959_REG_LSRR = 0x07
AD9959_REG_RDW = 0x08
AD9959_REG_FDW = 0x09
AD9959_REG_CW1 = 0x0A

AD9959_REG_LENGTHS = {
    AD9959_REG_CSR: 1,
    AD9959_REG_FR1: 3,
    AD9959_REG_FR2: 2,
    AD9959_REG_CFR: 3,
    AD9959_REG_CFTW0: 4,
    AD9959_REG_CPOW0: 2,
    AD9959_REG_ACR: 3,
    AD9959_REG_LSRR: 2,
    AD9959_REG_RDW: 4,
    AD9959_REG_FDW: 4,
    AD9959_REG_CW1: 4,
}
AD9959_GLOBAL_REGS = {AD9959_REG_CSR, AD9959_REG_FR1, AD9959_REG_FR2}

# CFR byte 0 selects what a profile pin modulates; byte 1 bit 7 enables
# stepping through intermediate words instead of a direct hop.
AD9959_AFP_NONE = 0x00
AD9959_AFP_AMPLITUDE = 0x40
AD9959_AFP_FREQUENCY = 0x80
AD9959_CFR_SWEEP_ENABLE = 0x80

# LSRR payload is the per-step dwell in units of 16 ticks.
AD9959_LSRR_TICK_UNIT = 16

AD9854_REG_PHASE1 = 0x00
AD9854_REG_FTW1 = 0x02
AD9854_REG_DELTA_FREQ = 0x04
AD9854_REG_UPDATE_CLOCK = 0x05
AD9854_REG_RAMP_RATE_CLOCK = 0x06
AD9854_REG_CONTROL = 0x07
AD9854_REG_OSK_I = 0x08
AD9854_REG_OSK_Q = 0x09

AD9854_REG_LENGTHS = {
    AD9854_REG_PHASE1: 2,
    AD9854_REG_FTW1: 6,
    AD9854_REG_DELTA_FREQ: 6,
    AD9854_REG_UPDATE_CLOCK: 4,
    AD9854_REG_RAMP_RATE_CLOCK: 3,
    AD9854_REG_CONTROL: 4,
    AD9854_REG_OSK_I: 2,
    AD9854_REG_OSK_Q: 2,
}

AD9854_MODE_SINGLE_TONE = 0
AD9854_MODE_CHIRP = 3

# AD5372: address byte = 0b11 (X-register write) in the top bits, then
# the channel register number; channels 0..31 live at offset 8.  The
# two payload bytes carry the DAC code in offset binary.
AD5372_X_WRITE = 0xC0
AD5372_CHANNEL_OFFSET = 8
AD5372_CHANNELS = 32
AD5372_MID_CODE = 0x8000


def register_defaults(kind: str):
    """Register image after RESET (all zeros except noted)."""
    if kind == "ad9959":
        regs = {("g", AD9959_REG_CSR): bytes([0xF0]),
                ("g", AD9959_REG_FR1): bytes(3),
                ("g", AD9959_REG_FR2): bytes(2)}
        for ch in range(4):
            for addr in (AD9959_REG_CFR, AD9959_REG_CFTW0, AD9959_REG_CPOW0,
                         AD9959_REG_ACR, AD9959_REG_LSRR, AD9959_REG_RDW,
                         AD9959_REG_FDW, AD9959_REG_CW1):
                regs[(ch, addr)] = bytes(AD9959_REG_LENGTHS[addr])
        return regs
    if kind == "ad9854":
        return {("g", addr): bytes(length) for addr, length in AD9854_REG_LENGTHS.items()}
    if kind == "ad5372":
        return {("x", ch): AD5372_MID_CODE.to_bytes(2, "big") for ch in range(AD5372_CHANNELS)}
    raise ValueError(f"unknown device kind: {kind}")


# --- driver side -----------------------------------------------------------

_FAR_PAST = -(1 << 62)


class _SpiMaster:
    """Frame scheduler for one board: keeps the pins strictly sequential
    and places frame groups as late as possible before their commits."""

    def __init__(self, out, pins: SpiPins, sclk_period_ticks: int):
        if sclk_period_ticks < 2:
            raise ValueError("sclk_period_ticks must be >= 2")
        self.out = out
        self.pins = pins
        self.p = sclk_period_ticks
        self.busy_until = _FAR_PAST
        self.last_commit = _FAR_PAST

    def _emit(self, transitions):
        self.out.transitions.extend(transitions)

    def reset_pulse(self, tick: int) -> int:
        tick = max(tick, self.busy_until + 1)
        self._emit(pulse_transitions(self.pins.reset, tick, self.p))
        self.busy_until = tick + self.p
        return tick

    def schedule_commit(self, frames, commit_tick=None) -> int:
        """Emit frames then an UPDATE pulse; returns the actual commit tick.

        ``commit_tick=None`` commits as early as possible after the
        frames.
        """
        duration = sum(f.n_bits for f in frames) * self.p
        earliest_start = max(self.busy_until + 1, self.last_commit + 1)
        if commit_tick is None:
            start = earliest_start
            commit_tick = start + duration + 1
        else:
            start = commit_tick - 1 - duration
            if start < earliest_start:
                start = earliest_start
                commit_tick = start + duration + 1
        # the UPDATE line needs to fall and re-arm between commits
        commit_tick = max(commit_tick, self.last_commit + self.p + 1)
        t = start
        for frame in frames:
            self._emit(frame_transitions(self.pins, frame, t, self.p))
            t += frame.n_bits * self.p
        self._emit(pulse_transitions(self.pins.update, commit_tick, self.p))
        self.busy_until = max(t, commit_tick + self.p)
        self.last_commit = commit_tick
        return commit_tick


def _check_arb_lists(frequency_list, power_list, n_step):
    if n_step < 1:
        raise ValueError("n_step must be >= 1")
    if len(frequency_list) != len(power_list):
        raise ListLengthMismatchError(
            f"{len(frequency_list)} frequencies but {len(power_list)} powers"
        )
    if len(frequency_list) not in (n_step, n_step + 1):
        raise ListLengthMismatchError(
            f"{len(frequency_list)} entries inconsistent with n_step={n_step}"
        )


class AD9854:
    """300 MSPS single-output DDS, 48-bit tuning words."""

    kind = "ad9854"

    def __init__(self, out, connector, io_pin, sclk_pin, reset_pin, update_pin,
                 refclock, multiplier=6, ramp_rate_clock=24, f_ini=0.0,
                 sclk_period_ticks=4):
        pins = SpiPins(
            DigitalAddress(connector, io_pin),
            DigitalAddress(connector, sclk_pin),
            DigitalAddress(connector, update_pin),
            DigitalAddress(connector, reset_pin),
        )
        self._spi = _SpiMaster(out, pins, sclk_period_ticks)
        self.pins = pins
        self.refclock = refclock
        self.multiplier = multiplier
        self.sysclk = refclock * multiplier
        self.ramp_rate_clock = ramp_rate_clock
        self.f_ini = f_ini
        self.last_commit_ticks = []

    def _control_frame(self, mode):
        payload = bytes([0x00, self.multiplier & 0x1F, (mode & 0x7) << 1, 0x00])
        return SpiFrame(AD9854_REG_CONTROL, payload)

    def _ftw_frame(self, frequency):
        ftw = ftw_for_frequency(frequency, self.sysclk, AD9854_FTW_WIDTH)
        return SpiFrame(AD9854_REG_FTW1, ftw.to_bytes(6, "big"))

    def _amp_frame(self, power_dbm):
        code = power_to_amplitude_code(power_dbm, AD9854_AMP_MAX)
        return SpiFrame(AD9854_REG_OSK_I, code.to_bytes(2, "big"))

    def ini(self, t):
        """Reset the board and commit its idle configuration (output off,
        tuning word preset to f_ini).  Returns the setup duration."""
        t_tick = signed_ticks(t)
        self._spi.reset_pulse(t_tick)
        frames = [
            self._control_frame(AD9854_MODE_SINGLE_TONE),
            SpiFrame(AD9854_REG_RAMP_RATE_CLOCK, int(self.ramp_rate_clock).to_bytes(3, "big")),
            self._ftw_frame(self.f_ini),
            self._amp_frame(float("-inf")),
        ]
        self._spi.schedule_commit(frames)
        return (self._spi.busy_until - t_tick) * TICK_SECONDS

    def arb(self, start_time, chirp, frequency_list, power_list, n_step, total_time):
        """Step through (frequency, power) pairs uniformly spaced over
        total_time, first commit at start_time.  Returns total_time."""
        _check_arb_lists(frequency_list, power_list, n_step)
        if total_time <= 0:
            raise ValueError("total_time must be positive")
        mode = AD9854_MODE_CHIRP if chirp else AD9854_MODE_SINGLE_TONE
        commits = []
        for k in range(len(frequency_list)):
            frames = []
            if k == 0:
                frames.append(self._control_frame(mode))
            frames.append(self._ftw_frame(frequency_list[k]))
            frames.append(self._amp_frame(power_list[k]))
            wanted = signed_ticks(start_time + k * (total_time / n_step))
            commits.append(self._spi.schedule_commit(frames, wanted))
        self.last_commit_ticks = commits
        return total_time


class AD9959:
    """Four-channel 500 MSPS DDS, 32-bit tuning words."""

    kind = "ad9959"

    def __init__(self, out, connector, io_pin, sclk_pin, reset_pin, update_pin,
                 refclock, multiplier=10, f_ini=0.0, channel=0,
                 sclk_period_ticks=4):
        pins = SpiPins(
            DigitalAddress(connector, io_pin),
            DigitalAddress(connector, sclk_pin),
            DigitalAddress(connector, update_pin),
            DigitalAddress(connector, reset_pin),
        )
        self._spi = _SpiMaster(out, pins, sclk_period_ticks)
        self.pins = pins
        self.refclock = refclock
        self.multiplier = multiplier
        self.sysclk = refclock * multiplier
        self.f_ini = f_ini
        self.channel = channel
        self.last_commit_ticks = []

    @staticmethod
    def _csr_frame(channel_bits):
        return SpiFrame(AD9959_REG_CSR, bytes([(channel_bits & 0xF) << 4]))

    def _select(self, channel):
        if not 0 <= channel < 4:
            raise AddressOutOfRangeError(f"AD9959 channel {channel} out of range")
        return self._csr_frame(1 << channel)

    @staticmethod
    def _cfr_frame(afp, sweep_enable=False):
        return SpiFrame(
            AD9959_REG_CFR,
            bytes([afp, AD9959_CFR_SWEEP_ENABLE if sweep_enable else 0x00, 0x00]),
        )

    def _ftw_frame(self, frequency):
        ftw = ftw_for_frequency(frequency, self.sysclk, AD9959_FTW_WIDTH)
        return SpiFrame(AD9959_REG_CFTW0, ftw.to_bytes(4, "big"))

    @staticmethod
    def _acr_frame(amplitude_code):
        b1 = 0x10 | ((amplitude_code >> 8) & 0x3)   # bit 4: manual amplitude
        return SpiFrame(AD9959_REG_ACR, bytes([0x00, b1, amplitude_code & 0xFF]))

    def _amp_frame(self, power_dbm):
        return self._acr_frame(power_to_amplitude_code(power_dbm, AD9959_AMP_MAX))

    def ini(self, t):
        t_tick = signed_ticks(t)
        self._spi.reset_pulse(t_tick)
        frames = [
            self._csr_frame(0xF),
            SpiFrame(AD9959_REG_FR1, bytes([(self.multiplier & 0x1F) << 2, 0x00, 0x00])),
            self._cfr_frame(AD9959_AFP_NONE),
            self._ftw_frame(self.f_ini),
            self._acr_frame(0),
        ]
        self._spi.schedule_commit(frames)
        return (self._spi.busy_until - t_tick) * TICK_SECONDS

    def arb(self, start_time, channel, frequency_list, power_list, n_step, total_time):
        """Step through (frequency, power) pairs on one channel, uniformly
        spaced over total_time.  Returns total_time."""
        _check_arb_lists(frequency_list, power_list, n_step)
        if total_time <= 0:
            raise ValueError("total_time must be positive")
        commits = []
        for k in range(len(frequency_list)):
            frames = []
            if k == 0:
                frames.append(self._select(channel))
                frames.append(self._cfr_frame(AD9959_AFP_NONE))
            frames.append(self._ftw_frame(frequency_list[k]))
            frames.append(self._amp_frame(power_list[k]))
            wanted = signed_ticks(start_time + k * (total_time / n_step))
            commits.append(self._spi.schedule_commit(frames, wanted))
        self.last_commit_ticks = commits
        return total_time

    def amplitude_mod(self, start_time, channel, a0, a1):
        """Program amplitude endpoints a0/a1 (0..1 of full scale); the
        board's profile pin then selects between them."""
        for a in (a0, a1):
            if not 0.0 <= a <= 1.0:
                raise ValueError(f"amplitude {a} outside 0..1")
        frames = [
            self._select(channel),
            self._cfr_frame(AD9959_AFP_AMPLITUDE),
            self._acr_frame(round(a0 * AD9959_AMP_MAX)),
            SpiFrame(AD9959_REG_CW1, round(a1 * AD9959_AMP_MAX).to_bytes(4, "big")),
        ]
        commit = self._spi.schedule_commit(frames, signed_ticks(start_time))
        self.last_commit_ticks = [commit]
        return 0.0

    def freq_mod(self, start_time, channel, f0, f1, ramptime, rampstep):
        """Program a profile-pin-driven sweep between f0 and f1 traversed
        in rampstep discrete steps at a rate set by ramptime."""
        if rampstep < 1:
            raise ValueError("rampstep must be >= 1")
        ftw0 = ftw_for_frequency(f0, self.sysclk, AD9959_FTW_WIDTH)
        ftw1 = ftw_for_frequency(f1, self.sysclk, AD9959_FTW_WIDTH)
        delta = max(1, -(-abs(ftw1 - ftw0) // rampstep))   # ceil
        dwell_ticks = max(1, round(signed_ticks(ramptime) / rampstep))
        dwell_units = max(1, min(0xFFFF, round(dwell_ticks / AD9959_LSRR_TICK_UNIT)))
        frames = [
            self._select(channel),
            self._cfr_frame(AD9959_AFP_FREQUENCY, sweep_enable=True),
            self._ftw_frame(f0),
            SpiFrame(AD9959_REG_CW1, ftw1.to_bytes(4, "big")),
            SpiFrame(AD9959_REG_LSRR, dwell_units.to_bytes(2, "big")),
            SpiFrame(AD9959_REG_RDW, delta.to_bytes(4, "big")),
        ]
        commit = self._spi.schedule_commit(frames, signed_ticks(start_time))
        self.last_commit_ticks = [commit]
        return 0.0


class AD5372:
    """32-channel 16-bit DAC; one SPI frame per channel write, committed
    by the shared UPDATE (LDAC) pulse."""

    kind = "ad5372"

    def __init__(self, out, connector, io_pin, sclk_pin, reset_pin, update_pin,
                 sclk_period_ticks=4):
        pins = SpiPins(
            DigitalAddress(connector, io_pin),
            DigitalAddress(connector, sclk_pin),
            DigitalAddress(connector, update_pin),
            DigitalAddress(connector, reset_pin),
        )
        self._spi = _SpiMaster(out, pins, sclk_period_ticks)
        self.pins = pins
        self.sysclk = None   # not frequency-generating
        self.last_commit_ticks = []

    def set(self, time, chan, value):
        """Output ``value`` volts on channel ``chan`` at ``time``."""
        if not 0 <= chan < AD5372_CHANNELS:
            raise AddressOutOfRangeError(f"AD5372 channel {chan} out of range")
        code = volts_to_code(value) + AD5372_MID_CODE
        frame = SpiFrame(
            AD5372_X_WRITE | (AD5372_CHANNEL_OFFSET + chan),
            code.to_bytes(2, "big"),
        )
        commit = self._spi.schedule_commit([frame], signed_ticks(time))
        self.last_commit_ticks.append(commit)
        return 0.0


DEVICE_KINDS = {"ad9959": AD9959, "ad9854": AD9854, "ad5372": AD5372}


# --- device side (emulation / decoding) ------------------------------------

@dataclass(slots=True)
class DecodedState:
    """One row of a decoded device timeline."""

    tick: int
    kind: str                      # commit | reset | pin | sweep-step
    registers: dict
    frequency: object = None       # Hz; dict per channel for the AD9959
    amplitude: object = None       # 0..1 of full scale; dict for the AD9959
    voltages: dict | None = None   # AD5372 channels, volts
    mode: str = "single-tone"
    phase_turns: object = 0.0      # accumulated output phase; dict for AD9959
    phase_continuous: bool = True


class DeviceRegisterModel:
    """Shadow/active register file of one emulated peripheral.

    Completed frames land in the shadow image; an UPDATE rising edge
    copies shadow to active.  Output is derived from the active image
    only, so register changes never show up early.
    """

    def __init__(self, kind: str, sysclk):
        if kind not in DEVICE_KINDS:
            raise ValueError(f"unknown device kind: {kind}")
        self.kind = kind
        self.sysclk = sysclk
        self.shadow = register_defaults(kind)
        self.active = dict(self.shadow)
        self.routing = 0xF if kind == "ad9959" else None
        self.profile_level = 0
        self.sweep_ftw = {}        # AD9959 sweep accumulator per channel
        self._bits = []
        self._frame_bytes = []
        self._expected_len = None

    # frame reassembly -----------------------------------------------------

    def clock_bit(self, bit: int):
        self._bits.append(bit)
        if len(self._bits) == 8:
            byte = 0
            for b in self._bits:
                byte = (byte << 1) | b
            self._bits = []
            self._byte_in(byte)

    def _frame_length(self, address: int) -> int:
        if self.kind == "ad9959" and address in AD9959_REG_LENGTHS:
            return AD9959_REG_LENGTHS[address]
        if self.kind == "ad9854" and address in AD9854_REG_LENGTHS:
            return AD9854_REG_LENGTHS[address]
        if self.kind == "ad5372" and address & 0xC0 == AD5372_X_WRITE:
            ch = (address & 0x3F) - AD5372_CHANNEL_OFFSET
            if 0 <= ch < AD5372_CHANNELS:
                return 2
        raise UnknownRegisterError(f"{self.kind}: no register at address {address:#04x}")

    def _byte_in(self, byte: int):
        self._frame_bytes.append(byte)
        if self._expected_len is None:
            self._expected_len = self._frame_length(byte)
            return
        if len(self._frame_bytes) == 1 + self._expected_len:
            address = self._frame_bytes[0]
            payload = bytes(self._frame_bytes[1:])
            self._frame_bytes = []
            self._expected_len = None
            self._shadow_write(address, payload)

    def _shadow_write(self, address: int, payload: bytes):
        if self.kind == "ad9959":
            if address in AD9959_GLOBAL_REGS:
                self.shadow[("g", address)] = payload
                if address == AD9959_REG_CSR:
                    # channel routing applies to subsequent frames at once
                    self.routing = (payload[0] >> 4) & 0xF
            else:
                for ch in range(4):
                    if (self.routing >> ch) & 1:
                        self.shadow[(ch, address)] = payload
        elif self.kind == "ad9854":
            self.shadow[("g", address)] = payload
        else:
            ch = (address & 0x3F) - AD5372_CHANNEL_OFFSET
            self.shadow[("x", ch)] = payload

    # commit / reset ---------------------------------------------------------

    def mid_frame(self) -> bool:
        return bool(self._bits) or bool(self._frame_bytes)

    def commit(self):
        self.active = dict(self.shadow)
        # committing new sweep registers re-seeds the accumulator
        self.sweep_ftw = {}

    def reset(self):
        self.shadow = register_defaults(self.kind)
        self.active = dict(self.shadow)
        self.routing = 0xF if self.kind == "ad9959" else None
        self.sweep_ftw = {}
        self._bits = []
        self._frame_bytes = []
        self._expected_len = None

    # derived output -----------------------------------------------------------

    def _cfr(self, ch):
        return self.active[(ch, AD9959_REG_CFR)]

    def channel_frequency(self, ch: int) -> float:
        if ch in self.sweep_ftw:
            return frequency_for_ftw(self.sweep_ftw[ch], self.sysclk, AD9959_FTW_WIDTH)
        ftw = int.from_bytes(self.active[(ch, AD9959_REG_CFTW0)], "big")
        return frequency_for_ftw(ftw, self.sysclk, AD9959_FTW_WIDTH)

    def channel_amplitude(self, ch: int) -> float:
        cfr = self._cfr(ch)
        if cfr[0] == AD9959_AFP_AMPLITUDE and self.profile_level:
            return (int.from_bytes(self.active[(ch, AD9959_REG_CW1)], "big") & 0x3FF) \
                / AD9959_AMP_MAX
        acr = self.active[(ch, AD9959_REG_ACR)]
        if acr[1] & 0x10:
            return (((acr[1] & 0x3) << 8) | acr[2]) / AD9959_AMP_MAX
        return 1.0   # amplitude multiplier disabled: full scale

    def derived(self):
        """(frequency, amplitude, voltages, mode) from the active image."""
        if self.kind == "ad9854":
            ftw = int.from_bytes(self.active[("g", AD9854_REG_FTW1)], "big")
            amp = int.from_bytes(self.active[("g", AD9854_REG_OSK_I)], "big") & 0xFFF
            mode_bits = (self.active[("g", AD9854_REG_CONTROL)][2] >> 1) & 0x7
            mode = "chirp" if mode_bits == AD9854_MODE_CHIRP else "single-tone"
            return (
                frequency_for_ftw(ftw, self.sysclk, AD9854_FTW_WIDTH),
                amp / AD9854_AMP_MAX,
                None,
                mode,
            )
        if self.kind == "ad9959":
            freqs = {ch: self.channel_frequency(ch) for ch in range(4)}
            amps = {ch: self.channel_amplitude(ch) for ch in range(4)}
            return freqs, amps, None, "single-tone"
        volts = {
            ch: (int.from_bytes(self.active[("x", ch)], "big") - AD5372_MID_CODE)
            * 20.0 / (1 << 16)
            for ch in range(AD5372_CHANNELS)
        }
        return None, None, volts, "dac"

    def frequency_sweep_setup(self, ch: int):
        """(ftw0, ftw1, delta, dwell_ticks) when channel ch has an active
        profile-pin frequency sweep, else None."""
        cfr = self._cfr(ch)
        if cfr[0] != AD9959_AFP_FREQUENCY or not cfr[1] & AD9959_CFR_SWEEP_ENABLE:
            return None
        ftw0 = int.from_bytes(self.active[(ch, AD9959_REG_CFTW0)], "big")
        ftw1 = int.from_bytes(self.active[(ch, AD9959_REG_CW1)], "big")
        delta = max(1, int.from_bytes(self.active[(ch, AD9959_REG_RDW)], "big"))
        dwell = max(1, int.from_bytes(self.active[(ch, AD9959_REG_LSRR)], "big")
                    * AD9959_LSRR_TICK_UNIT)
        return ftw0, ftw1, delta, dwell


def decode_device(trace, pins: SpiPins, kind: str, sysclk, profile_pin=None):
    """Decode the four pin lines of a trace into a device output timeline.

    ``profile_pin`` is an optional list of (tick, level) edges for the
    AD9959's external modulation pin.  Pin edges are applied before
    same-tick register commits.  Returns a list of :class:`DecodedState`.
    """
    model = DeviceRegisterModel(kind, sysclk)
    io_src, sclk_src, update_src, reset_src = pins.sources

    def initial_level(address):
        latch = trace.initial_latches.get(address.connector)
        if latch is None:
            return 0
        v = latch.line_value(address.channel)
        return v if v in (0, 1) else 0

    levels = {
        io_src: initial_level(pins.io),
        sclk_src: initial_level(pins.sclk),
        update_src: initial_level(pins.update),
        reset_src: initial_level(pins.reset),
    }
    pin_events = [e for e in trace.events if e.source in levels]
    if not pin_events:
        raise LineNotFoundError(f"trace carries no activity on pins {pins.sources}")

    timeline = []
    # phase accumulators: per channel for the AD9959, single otherwise
    if kind == "ad9959":
        phase = {ch: 0.0 for ch in range(4)}
        prev_freq = {ch: 0.0 for ch in range(4)}
    else:
        phase = 0.0
        prev_freq = 0.0
    prev_tick = 0

    def emit(tick, event_kind):
        nonlocal phase, prev_freq, prev_tick
        freq, amp, volts, mode = model.derived()
        dt = (tick - prev_tick) * TICK_SECONDS
        if kind == "ad9959":
            for ch in range(4):
                phase[ch] += prev_freq[ch] * dt
            prev_freq = dict(freq)
            snapshot = dict(phase)
        else:
            phase += prev_freq * dt
            prev_freq = freq if freq is not None else 0.0
            snapshot = phase
        prev_tick = tick
        timeline.append(
            DecodedState(
                tick=tick,
                kind=event_kind,
                registers=dict(model.active),
                frequency=freq,
                amplitude=amp,
                voltages=volts,
                mode=mode,
                phase_turns=snapshot,
            )
        )

    def apply_profile_edge(tick, level):
        model.profile_level = level
        if model.kind != "ad9959":
            return
        for ch in range(4):
            setup = model.frequency_sweep_setup(ch)
            cfr = model._cfr(ch)
            if cfr[0] == AD9959_AFP_AMPLITUDE:
                emit(tick, "pin")
                continue
            if setup is None:
                continue
            ftw0, ftw1, delta, dwell = setup
            lo, hi = min(ftw0, ftw1), max(ftw0, ftw1)
            target = ftw1 if level else ftw0
            current = model.sweep_ftw.get(ch, ftw0)
            step_tick = tick
            while current != target:
                if current < target:
                    current = min(current + delta, target)
                else:
                    current = max(current - delta, target)
                current = min(max(current, lo), hi)
                step_tick += dwell
                model.sweep_ftw[ch] = current
                emit(step_tick, "sweep-step")

    mod_events = sorted(profile_pin or [])
    mod_idx = 0
    pin_level = 0

    def flush_profile(up_to_tick):
        nonlocal mod_idx, pin_level
        while mod_idx < len(mod_events) and mod_events[mod_idx][0] <= up_to_tick:
            tick, level = mod_events[mod_idx]
            mod_idx += 1
            level = 1 if level else 0
            if level != pin_level:
                pin_level = level
                apply_profile_edge(tick, level)

    for event in pin_events:
        value = 1 if event.value == 1 else 0
        old = levels[event.source]
        if value == old:
            continue
        flush_profile(event.tick)
        levels[event.source] = value
        if event.source == sclk_src and value == 1:
            model.clock_bit(levels[io_src])
        elif event.source == update_src and value == 1:
            if model.mid_frame():
                raise FramingError(
                    f"UPDATE at tick {event.tick} with a partial frame pending"
                )
            model.commit()
            emit(event.tick, "commit")
        elif event.source == reset_src and value == 1:
            model.reset()
            emit(event.tick, "reset")
    # the modulation pin is an external input, not bounded by the trace
    flush_profile(float("inf"))
    return timeline
