"""Bundled demonstration shot used by tests, the CLI and golden traces.

One analog channel ramps up linearly over 200 us, decays exponentially
over 400 us after a 100 us hold, then switches off.  Three digital
pulse groups run on connector 2 (a 15-pulse train on line 18, a
scheduled irregular group on line 16, two single pulses on line 20),
and a DDS board sweeps 80 MHz to 5 MHz in 25 steps over 1 ms.  The
equivalent sequence file ships as package data.
"""

from __future__ import annotations

import importlib.resources

from .peripherals import AD9854
from .sequence import (
    AnalogRamp,
    DDSSweep,
    PulseSchedule,
    PulseTrain,
    Sequence,
    SequenceBuilder,
)
from .timeline import volts_to_code
from .units import MHz, ms, ns, us


class ExampleSequence(Sequence):
    def __init__(self, out):
        super().__init__(out)
        self.ramp_up = AnalogRamp(out, v_start=0, v_end=5, ramp_time=200 * us)
        self.ramp_down = AnalogRamp(out, v_start=5, v_end=1, ramp_time=400 * us,
                                    tau=100 * us)

        def analog_off(t):
            return out.analog_out(t, 1, 3, 0)

        self.analog_off = analog_off

        self.pulse_fast = PulseTrain(out, connector=2, channel=18,
                                     n_pulses=15, pulse_time=50 * us)
        self.pulse_single = PulseTrain(out, connector=2, channel=20,
                                       n_pulses=1, pulse_time=50 * us)
        self.pulse_pattern = PulseSchedule(
            out, connector=2, channel=16,
            time_list=[0.01 * ms, 0.05 * ms, 0.17 * ms, 0.19 * ms,
                       0.25 * ms, 0.38 * ms, 0.43 * ms],
            length_list=[0.02 * ms, 0.10 * ms, 0.01 * ms, 0.04 * ms,
                         0.07 * ms, 0.02 * ms, 0.05 * ms],
        )

        self.dds = AD9854(out, connector=1, io_pin=29, sclk_pin=25, reset_pin=27,
                          update_pin=31, refclock=50e6, multiplier=6,
                          ramp_rate_clock=24, f_ini=80 * MHz)
        self.sweep = DDSSweep(out, self.dds, f_start=80 * MHz, f_stop=5 * MHz,
                              ramp_time=1 * ms, n_steps=25, power=-18.0)

    @Sequence._update_time
    def seq(self, start_time):
        self.abs(0.00, self.ramp_up.linear)
        self.rel(100 * us, self.ramp_down.exponential_down)
        self.rel(50 * us, self.analog_off)

        self.abs(250 * us + 270 * ns + 880.15 * us, self.pulse_single.play)
        self.rel(0.00, self.pulse_fast.play)
        self.rel(0.00, self.pulse_single.play)
        self.abs(0.5 * ms, self.pulse_pattern.play)

        self.abs(250 * us, self.sweep.play)


def set_demo_defaults(out: SequenceBuilder):
    """Pre-trigger defaults: the used digital lines low, the analog
    channel at 0 V."""
    for channel in (16, 18, 20):
        bit = 1 << channel
        out.defaults.set_digital(2, bit, bit, 0)
    out.defaults.set_analog(1, 3, volts_to_code(0.0))


def build_demo_queue() -> SequenceBuilder:
    """Defaults plus the full example shot, starting at t = 0."""
    out = SequenceBuilder()
    set_demo_defaults(out)
    example = ExampleSequence(out)
    example.seq(0.00)
    return out


def example_sequence_path():
    """Path of the bundled sequence file equivalent to ExampleSequence."""
    return importlib.resources.files("seqware").joinpath("data/example.seq")
