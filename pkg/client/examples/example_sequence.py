#!/usr/bin/env python3
"""The demonstration shot, written entirely against the scripting client.

Everything here runs client-side and reaches the service only through
primitive digital_out / analog_out commands: the analog ramps compute
their own DAC bit-flip schedules, the pulse groups are generated
procedurally, and the DDS board class encodes its own serial frames per
docs/spi-devices.md.  The service compiles and executes the resulting
queue; its trace is identical to running the bundled sequence file
offline.

Usage: example_sequence.py [discovery_port]
"""

import math
import sys

import seqware_client as ew
from seqware_client import Sequence

ns, us, ms = 1e-9, 1e-6, 1e-3
MHz = 1e6

TICK_SECONDS = 2e-8
CLOCK_HZ = 50_000_000


def ticks(t):
    """Seconds to signed ticks, round half to even, exact near ties."""
    if isinstance(t, float):
        x = t * CLOCK_HZ
        if -9e15 < x < 9e15:
            r = round(x)
            if abs(x - r) < 0.5 - 4 * math.ulp(0.5 + abs(x)):
                return r
    num, den = float(t).as_integer_ratio()
    q, rem = divmod(num * CLOCK_HZ, den)
    if 2 * rem > den or (2 * rem == den and q & 1):
        q += 1
    return q


class AnalogRamp:
    """Continuous ramp as individual DAC bit flips on board 1 channel 3."""

    def __init__(self, v_start, v_end, ramp_time, tau=0):
        self.tau = tau
        self.ramp_time = ramp_time
        self.board = 1
        self.channel = 3
        self.q_val_start = int((v_start / 20) * (2 ** 16))
        self.q_val_end = int((v_end / 20) * (2 ** 16))
        if self.q_val_start > self.q_val_end + 1:
            self.output_steps = list(range(self.q_val_end + 1, self.q_val_start))
        else:
            self.output_steps = list(range(self.q_val_start, self.q_val_end + 1))
        self.length = len(self.output_steps)
        self.time_steps = [None] * self.length
        self.analog_steps = [None] * self.length

    def _output(self):
        for index in range(self.length):
            ew.analog_out(self.time_steps[index], self.board, self.channel,
                          self.analog_steps[index])

    def linear(self, t_start):
        if self.q_val_start == self.q_val_end:
            if self.length:
                self.time_steps[0] = t_start
                self.analog_steps[0] = 20 * self.output_steps[0] / (2 ** 16)
            self._output()
            return self.ramp_time
        slope = (self.q_val_end - self.q_val_start) / self.ramp_time
        for index in range(self.length):
            self.time_steps[index] = t_start + (self.output_steps[index] - self.q_val_start) / slope
            self.analog_steps[index] = 20 * self.output_steps[index] / (2 ** 16)
        if self.q_val_start > self.q_val_end + 1:
            self.time_steps.reverse()
            self.analog_steps.reverse()
        self._output()
        return self.ramp_time

    def exponential_down(self, t_start):
        delta = math.exp(self.ramp_time / self.tau)
        if delta == 1:
            raise ValueError("decay_rate or the time interval is too small")
        alpha = (delta - 1) / (self.q_val_start - self.q_val_end)
        for index in range(self.length):
            self.time_steps[index] = t_start + self.ramp_time - \
                self.tau * math.log(1 + (self.output_steps[index] -
                                         self.q_val_end) * alpha)
            self.analog_steps[index] = 20 * self.output_steps[index] / (2 ** 16)
        if self.q_val_start > self.q_val_end + 1:
            self.time_steps.reverse()
            self.analog_steps.reverse()
        self._output()
        return self.ramp_time


class PulseTrain(Sequence):
    """n pulses on one line: on, alternating off/on, ending off."""

    def __init__(self, connector, channel, n_pulses, pulse_time):
        super().__init__()
        self.connector = connector
        self.channel = channel
        self.n_pulses = n_pulses
        self.pulse_time = pulse_time

    @Sequence._update_time
    def play(self, start_time):
        def on(t):
            return ew.digital_out(t, self.connector, self.channel, 1)

        def off(t):
            return ew.digital_out(t, self.connector, self.channel, 0)

        self.abs(0.00, on)
        for n in range(self.n_pulses - 1):
            self.rel(self.pulse_time, off)
            self.rel(self.pulse_time, on)
        self.rel(self.pulse_time, off)


class PulseSchedule(Sequence):
    """Pulses from parallel lists of start offsets and lengths."""

    def __init__(self, connector, channel, time_list, length_list):
        super().__init__()
        if len(time_list) != len(length_list):
            raise ValueError("Lists are of unequal lengths")
        self.connector = connector
        self.channel = channel
        self.time_list = list(time_list)
        self.length_list = list(length_list)

    @Sequence._update_time
    def play(self, start_time):
        def on(t):
            return ew.digital_out(t, self.connector, self.channel, 1)

        def off(t):
            return ew.digital_out(t, self.connector, self.channel, 0)

        for n in range(len(self.time_list)):
            self.abs(self.time_list[n], on)
            self.rel(self.length_list[n], off)


class AD9854:
    """Client-side serial encoder for the 48-bit DDS board.

    Frame layout, bit timing and commit scheduling follow
    docs/spi-devices.md exactly, so the on-wire bitstream matches the
    service-side encoding of the same commands.
    """

    FTW_WIDTH = 48
    AMP_MAX = 4095
    REG_FTW1 = 0x02
    REG_RAMP_RATE_CLOCK = 0x06
    REG_CONTROL = 0x07
    REG_OSK_I = 0x08
    MODE_SINGLE_TONE = 0
    MODE_CHIRP = 3

    def __init__(self, connector, mosipin, sclkpin, resetpin, ioupdatepin,
                 refclock, multiplier=6, rmprateclk=24, f_ini=0.0,
                 sclk_period_ticks=4):
        self.connector = connector
        self.io = mosipin
        self.sclk = sclkpin
        self.reset = resetpin
        self.update = ioupdatepin
        self.refclock = refclock
        self.multiplier = multiplier
        self.sysclk = refclock * multiplier
        self.rmprateclk = rmprateclk
        self.f_ini = f_ini
        self.p = sclk_period_ticks
        self.busy_until = -(1 << 62)
        self.last_commit = -(1 << 62)

    # --- low-level emission --------------------------------------------

    def _line(self, pin, tick, state):
        ew.digital_out(tick * TICK_SECONDS, self.connector, pin, state)

    def _pulse(self, pin, tick):
        self._line(pin, tick, 1)
        self._line(pin, tick + self.p, 0)

    def _frame(self, tick, address, payload):
        data = bytes([address]) + bytes(payload)
        i = 0
        for byte in data:
            for bit_index in range(7, -1, -1):
                t_bit = tick + i * self.p
                self._line(self.io, t_bit, (byte >> bit_index) & 1)
                self._line(self.sclk, t_bit + self.p // 2, 1)
                self._line(self.sclk, t_bit + self.p, 0)
                i += 1
        return 8 * len(data) * self.p

    def _schedule_commit(self, frames, commit_tick=None):
        duration = sum(8 * (1 + len(payload)) for _, payload in frames) * self.p
        earliest_start = max(self.busy_until + 1, self.last_commit + 1)
        if commit_tick is None:
            start = earliest_start
            commit_tick = start + duration + 1
        else:
            start = commit_tick - 1 - duration
            if start < earliest_start:
                start = earliest_start
                commit_tick = start + duration + 1
        commit_tick = max(commit_tick, self.last_commit + self.p + 1)
        t = start
        for address, payload in frames:
            t += self._frame(t, address, payload)
        self._pulse(self.update, commit_tick)
        self.busy_until = max(t, commit_tick + self.p)
        self.last_commit = commit_tick
        return commit_tick

    # --- register encoding ------------------------------------------------

    def _ftw(self, frequency):
        if not 0 <= frequency < self.sysclk / 2:
            raise ValueError(f"frequency {frequency} out of range")
        fnum, fden = float(frequency).as_integer_ratio()
        snum, sden = float(self.sysclk).as_integer_ratio()
        num = fnum * (1 << self.FTW_WIDTH) * sden
        den = fden * snum
        q, rem = divmod(num, den)
        if 2 * rem > den or (2 * rem == den and q & 1):
            q += 1
        return q

    def _amp_code(self, power_dbm):
        if power_dbm == float("-inf"):
            return 0
        code = round(self.AMP_MAX * 10 ** (power_dbm / 20))
        return min(max(code, 0), self.AMP_MAX)

    def _control_frame(self, mode):
        return (self.REG_CONTROL,
                bytes([0x00, self.multiplier & 0x1F, (mode & 0x7) << 1, 0x00]))

    def _ftw_frame(self, frequency):
        return (self.REG_FTW1, self._ftw(frequency).to_bytes(6, "big"))

    def _amp_frame(self, power_dbm):
        return (self.REG_OSK_I, self._amp_code(power_dbm).to_bytes(2, "big"))

    # --- commands ---------------------------------------------------------

    def ini(self, t):
        t_tick = ticks(t)
        reset_tick = max(t_tick, self.busy_until + 1)
        self._pulse(self.reset, reset_tick)
        self.busy_until = reset_tick + self.p
        frames = [
            self._control_frame(self.MODE_SINGLE_TONE),
            (self.REG_RAMP_RATE_CLOCK, int(self.rmprateclk).to_bytes(3, "big")),
            self._ftw_frame(self.f_ini),
            self._amp_frame(float("-inf")),
        ]
        self._schedule_commit(frames)
        return (self.busy_until - t_tick) * TICK_SECONDS

    def arb(self, start_time, chirp, freq, power, num_steps, total_time):
        mode = self.MODE_CHIRP if chirp else self.MODE_SINGLE_TONE
        for k in range(len(freq)):
            frames = []
            if k == 0:
                frames.append(self._control_frame(mode))
            frames.append(self._ftw_frame(freq[k]))
            frames.append(self._amp_frame(power[k]))
            self._schedule_commit(frames,
                                  ticks(start_time + k * (total_time / num_steps)))
        return total_time


class DDSRamp(Sequence):
    """Linear frequency sweep: evenly spaced tuning words over ramp_time."""

    def __init__(self, freq_start, freq_stop, ramp_time, n_steps):
        super().__init__()
        self.f_start = freq_start
        self.f_stop = freq_stop
        self.ramp_time = ramp_time
        self.n_steps = n_steps
        self.power = -18.0
        self.dds = AD9854(connector=1, mosipin=29, sclkpin=25, resetpin=27,
                          ioupdatepin=31, refclock=50e6, multiplier=6,
                          rmprateclk=24, f_ini=freq_start)

    @Sequence._update_time
    def linear(self, start_time):
        t_step = self.ramp_time / self.n_steps
        slope = (self.f_stop - self.f_start) / self.ramp_time
        freq_list = [self.f_start + slope * t_step * n for n in range(self.n_steps + 1)]
        power_list = [self.power for n in range(self.n_steps + 1)]

        def dds_sweep(t):
            return self.dds.arb(t, False, freq_list, power_list,
                                self.n_steps, self.ramp_time)

        def dds_off(t):
            return self.dds.arb(t, False, [0.0], [float("-inf")], 1, 1 * ms)

        self.abs(-10 * ms, self.dds.ini)
        self.abs(0.00, dds_sweep)
        self.rel(0.00, dds_off)


class ExampleSequence(Sequence):
    def __init__(self):
        super().__init__()
        self.ramp_up = AnalogRamp(v_start=0, v_end=5, ramp_time=200 * us)
        self.ramp_down = AnalogRamp(v_start=5, v_end=1, ramp_time=400 * us,
                                    tau=100 * us)

        def analog_off(t):
            return ew.analog_out(t, 1, 3, 0)

        self.analog_off = analog_off
        self.pulse_fast = PulseTrain(connector=2, channel=18, n_pulses=15,
                                     pulse_time=50 * us)
        self.pulse_single = PulseTrain(connector=2, channel=20, n_pulses=1,
                                       pulse_time=50 * us)
        self.pulse_pattern = PulseSchedule(
            connector=2, channel=16,
            time_list=[0.01 * ms, 0.05 * ms, 0.17 * ms, 0.19 * ms,
                       0.25 * ms, 0.38 * ms, 0.43 * ms],
            length_list=[0.02 * ms, 0.10 * ms, 0.01 * ms, 0.04 * ms,
                         0.07 * ms, 0.02 * ms, 0.05 * ms],
        )
        self.dds = DDSRamp(freq_start=80 * MHz, freq_stop=5 * MHz,
                           ramp_time=1 * ms, n_steps=25)

    @Sequence._update_time
    def seq(self, start_time):
        self.abs(0.00, self.ramp_up.linear)
        self.rel(100 * us, self.ramp_down.exponential_down)
        self.rel(50 * us, self.analog_off)

        self.abs(250 * us + 270 * ns + 880.15 * us, self.pulse_single.play)
        self.rel(0.00, self.pulse_fast.play)
        self.rel(0.00, self.pulse_single.play)
        self.abs(0.5 * ms, self.pulse_pattern.play)

        self.abs(250 * us, self.dds.linear)


def main(discovery_port=ew.DEFAULT_DISCOVERY_PORT, host="127.0.0.1"):
    ew.connect(1.0, discovery_port=discovery_port, host=host)

    # defaults: the used digital and analog lines idle at 0
    ew.digital_out(0.00, 2, 16, 0)
    ew.digital_out(0.00, 2, 18, 0)
    ew.digital_out(0.00, 2, 20, 0)
    ew.analog_out(0.00, 1, 3, 0)

    ew.build_sequence()
    example = ExampleSequence()
    example.seq(0.00)
    count, seconds = ew.run_sequence()
    ew.disconnect()
    print(f"shot complete: {count} elements, {seconds} s")
    return count, seconds


if __name__ == "__main__":
    port = int(sys.argv[1]) if len(sys.argv) > 1 else ew.DEFAULT_DISCOVERY_PORT
    main(port)
