"""Sequence construction: timing contexts and procedural step generators.

A sequence is built by invoking steps.  A step is any callable taking an
absolute start time in seconds and returning its elapsed duration in
seconds.  The :class:`Sequence` base class provides absolute (``abs``)
and relative (``rel``) placement of steps plus a decorator that turns a
method into a step with its own local time origin.

Primitive outputs go through a :class:`SequenceBuilder`, which collects
:class:`~seqware.timeline.Transition` values into a queue for the
compiler.  Steps only append to that queue; building the same steps at a
shifted start time yields a uniformly shifted transition set.
"""

from __future__ import annotations

import math

from .errors import (
    AddressOutOfRangeError,
    EmptyStepListError,
    ListLengthMismatchError,
    ZeroRampTimeError,
)
from .timeline import (
    AnalogSet,
    DigitalSet,
    LatchState,
    Transition,
    channel_count,
    channel_mask_limit,
    volts_to_code,
)
from .units import ms


def null_step(t):
    """Step that does nothing and takes no time."""
    return 0.0


class DefaultStates:
    """Pre-trigger output states, set by immediate-mode commands.

    Lines not mentioned default to enabled and low; analog channels to
    0 V.  The compiler uses these as each engine's state before the
    first instruction.
    """

    def __init__(self):
        self._digital = {}   # connector -> (enable, state)
        self._analog = {}    # (board, channel) -> code

    def set_digital(self, connector, channel_mask, output_enable, output_state):
        limit = channel_mask_limit(connector)
        mask = channel_mask & limit
        enable, state = self._digital.get(connector, (limit, 0))
        keep = ~mask
        self._digital[connector] = (
            (enable & keep) | (output_enable & mask),
            (state & keep) | (output_state & mask),
        )

    def set_analog(self, board, channel, code):
        self._analog[(board, channel)] = code

    def digital_latch(self, connector) -> LatchState:
        enable, state = self._digital.get(connector, (channel_mask_limit(connector), 0))
        return LatchState(enable, state)

    def analog_code(self, board, channel) -> int:
        return self._analog.get((board, channel), 0)

    def copy(self):
        other = DefaultStates()
        other._digital = dict(self._digital)
        other._analog = dict(self._analog)
        return other


class SequenceBuilder:
    """Transition sink holding the queue under construction.

    The two primitive commands mirror the hardware's two output kinds;
    every higher-level step reduces to calls to these.
    """

    def __init__(self):
        self.transitions: list[Transition] = []
        self.defaults = DefaultStates()

    def digital_out(self, time, connector, channel, state) -> float:
        """Queue one digital line change.  Returns 0 elapsed."""
        if not 0 <= channel < channel_count(connector):
            raise AddressOutOfRangeError(
                f"channel {channel} out of range for connector {connector}"
            )
        if state not in (0, 1):
            raise ValueError(f"digital state must be 0 or 1, got {state}")
        bit = 1 << channel
        self.transitions.append(
            Transition(time, DigitalSet(connector, bit, bit, state << channel))
        )
        return 0.0

    def analog_out(self, time, board, channel, value) -> float:
        """Queue one analog output change to ``value`` volts.  Returns 0."""
        self.transitions.append(
            Transition(time, AnalogSet(board, channel, volts_to_code(value)))
        )
        return 0.0

    def set_digital_state(self, time, connector, channel_mask, output_enable_state, output_state) -> float:
        """Masked multi-line write (the full-state form of digital_out)."""
        limit = channel_mask_limit(connector)
        if channel_mask & ~limit:
            raise AddressOutOfRangeError(
                f"channel mask {channel_mask:#x} exceeds connector {connector} width"
            )
        if channel_mask == 0:
            return 0.0
        self.transitions.append(
            Transition(
                time,
                DigitalSet(
                    connector,
                    channel_mask,
                    output_enable_state & channel_mask,
                    output_state & channel_mask,
                ),
            )
        )
        return 0.0

    def set_analog_state(self, time, board, channel, value) -> float:
        """Scalar or list form: lists queue several updates at once."""
        if isinstance(time, (list, tuple)) or isinstance(value, (list, tuple)):
            if not (isinstance(time, (list, tuple)) and isinstance(value, (list, tuple))):
                raise ListLengthMismatchError("time and value must both be lists")
            if len(time) != len(value):
                raise ListLengthMismatchError(
                    f"time list ({len(time)}) and value list ({len(value)}) differ"
                )
            for t, v in zip(time, value):
                self.analog_out(t, board, channel, v)
            return 0.0
        return self.analog_out(time, board, channel, value)


class Sequence:
    """Base timing context: tracks a start time and a running cursor.

    ``abs`` places a step at a fixed offset from the sequence start;
    ``rel`` places it after the previous step finishes.  Methods of
    subclasses decorated with ``Sequence._update_time`` become steps
    whose own start time is wherever they are invoked.
    """

    def __init__(self, out: SequenceBuilder | None = None):
        self.out = out
        self.start_time = 0
        self.current_time = self.start_time

    def abs(self, t_step, step=null_step):
        """Run ``step`` at start_time + t_step; returns the step's elapsed."""
        self.current_time = t_step + self.start_time
        step_time = step(self.current_time)
        self.current_time += step_time
        return step_time

    def rel(self, delay_time, step=null_step):
        """Run ``step`` delay_time after the previous step finished.

        A list of steps all start together; the elapsed time of the
        *last* entry is the one adopted for subsequent relative timing.
        """
        self.current_time += delay_time
        if isinstance(step, list):
            if not step:
                raise EmptyStepListError("rel() called with an empty step list")
            for seq in step:
                step_time = seq(self.current_time)
            self.current_time += step_time
            return step_time
        step_time = step(self.current_time)
        self.current_time += step_time
        return step_time

    def _update_time(func):
        """Turn a (self, t) method into a step with a local time origin."""
        def time_wrapper(self, t):
            self.start_time = t
            self.current_time = t
            func(self, t)
            return self.current_time - self.start_time
        time_wrapper.__name__ = func.__name__
        time_wrapper.__doc__ = func.__doc__
        return time_wrapper


class AnalogRamp:
    """Continuous analog ramp emitted as individual DAC bit flips.

    Rather than updating at a fixed rate, the ramp computes the time at
    which each intermediate DAC code should appear, so the transition
    count is set by the voltage span, not the duration.  The code list
    runs from the start code up to and including the end code for rising
    ramps; falling ramps cover the open interval between the endpoints,
    emitted in chronological (descending-code) order.
    """

    def __init__(self, out, v_start, v_end, ramp_time, tau=0, board=1, channel=3):
        if ramp_time <= 0:
            raise ZeroRampTimeError("ramp_time must be positive")
        self.out = out
        self.tau = tau
        self.ramp_time = ramp_time
        self.board = board
        self.channel = channel
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
            self.out.analog_out(
                self.time_steps[index], self.board, self.channel, self.analog_steps[index]
            )

    def linear(self, t_start):
        """Emit a constant-slope ramp; returns ramp_time."""
        if self.q_val_start == self.q_val_end:
            # zero span: a single (re)write of the current code at t_start
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
        """Exponential decay toward the end voltage with time constant tau.

        The bit-flip schedule is the exact inverse of the decay curve, so
        the first and last codes land on t_start and t_start + ramp_time.
        """
        if self.q_val_start <= self.q_val_end:
            raise ValueError("exponential_down requires a falling ramp")
        delta = math.exp(self.ramp_time / self.tau)
        if delta == 1:
            raise ValueError("decay_rate or the time interval is too small")
        alpha = (delta - 1) / (self.q_val_start - self.q_val_end)
        for index in range(self.length):
            self.time_steps[index] = t_start + self.ramp_time - \
                self.tau * math.log(1 + (self.output_steps[index] - self.q_val_end) * alpha)
            self.analog_steps[index] = 20 * self.output_steps[index] / (2 ** 16)
        if self.q_val_start > self.q_val_end + 1:
            self.time_steps.reverse()
            self.analog_steps.reverse()
        self._output()
        return self.ramp_time


class PulseTrain(Sequence):
    """n pulses on one line: on at the start, then off/on alternating at
    a fixed spacing, ending off.  2n transitions over (2n-1) spacings."""

    def __init__(self, out, connector, channel, n_pulses, pulse_time):
        super().__init__(out)
        if n_pulses < 1:
            raise ValueError("n_pulses must be >= 1")
        if pulse_time <= 0:
            raise ValueError("pulse_time must be positive")
        self.connector = connector
        self.channel = channel
        self.n_pulses = n_pulses
        self.pulse_time = pulse_time

    @Sequence._update_time
    def play(self, start_time):
        def on(t):
            return self.out.digital_out(t, self.connector, self.channel, 1)

        def off(t):
            return self.out.digital_out(t, self.connector, self.channel, 0)

        self.abs(0.00, on)
        for n in range(self.n_pulses - 1):
            self.rel(self.pulse_time, off)
            self.rel(self.pulse_time, on)
        self.rel(self.pulse_time, off)


class PulseSchedule(Sequence):
    """Pulses from parallel lists of start offsets and lengths."""

    def __init__(self, out, connector, channel, time_list, length_list):
        super().__init__(out)
        if len(time_list) != len(length_list):
            raise ListLengthMismatchError("Lists are of unequal lengths")
        self.connector = connector
        self.channel = channel
        self.time_list = list(time_list)
        self.length_list = list(length_list)

    @Sequence._update_time
    def play(self, start_time):
        def on(t):
            return self.out.digital_out(t, self.connector, self.channel, 1)

        def off(t):
            return self.out.digital_out(t, self.connector, self.channel, 0)

        for n in range(len(self.time_list)):
            self.abs(self.time_list[n], on)
            self.rel(self.length_list[n], off)


def pulse_train(out, connector, channel, n_pulses, pulse_time, t_start):
    """Function form of :class:`PulseTrain`; returns elapsed seconds."""
    return PulseTrain(out, connector, channel, n_pulses, pulse_time).play(t_start)


def pulse_schedule(out, connector, channel, time_list, length_list, t_start):
    """Function form of :class:`PulseSchedule`; returns elapsed seconds."""
    return PulseSchedule(out, connector, channel, time_list, length_list).play(t_start)


class DDSSweep(Sequence):
    """Linear frequency sweep on a DDS board, as a sequence step.

    Builds the list of evenly spaced frequencies from f_start to f_stop
    (n_steps + 1 points), initializes the device 10 ms before its own
    start, runs the stepped sweep over ramp_time, then programs the
    output off.
    """

    def __init__(self, out, dds, f_start, f_stop, ramp_time, n_steps, power):
        super().__init__(out)
        if n_steps < 1:
            raise ValueError("n_steps must be >= 1")
        self.dds = dds
        self.f_start = f_start
        self.f_stop = f_stop
        self.ramp_time = ramp_time
        self.n_steps = n_steps
        self.power = power

    def _arb(self, t, frequency_list, power_list, n_step, total_time):
        # AD9959-style boards take a channel argument; single-output
        # boards (AD9854) do not.
        kwargs = dict(
            frequency_list=frequency_list,
            power_list=power_list,
            n_step=n_step,
            total_time=total_time,
        )
        if hasattr(self.dds, "channel"):
            return self.dds.arb(t, channel=self.dds.channel, **kwargs)
        return self.dds.arb(t, chirp=False, **kwargs)

    @Sequence._update_time
    def play(self, start_time):
        t_step = self.ramp_time / self.n_steps
        slope = (self.f_stop - self.f_start) / self.ramp_time
        freq_list = [self.f_start + slope * t_step * n for n in range(self.n_steps + 1)]
        power_list = [self.power for n in range(self.n_steps + 1)]

        def sweep(t):
            return self._arb(t, freq_list, power_list, self.n_steps, self.ramp_time)

        def dds_off(t):
            return self._arb(t, [0.0], [float("-inf")], 1, 1 * ms)

        self.abs(-10 * ms, self.dds.ini)
        self.abs(0.00, sweep)
        self.rel(0.00, dds_off)


def dds_linear_sweep(out, dds, f_start, f_stop, ramp_time, n_steps, power, t_start):
    """Function form of :class:`DDSSweep`; returns elapsed seconds."""
    return DDSSweep(out, dds, f_start, f_stop, ramp_time, n_steps, power).play(t_start)
