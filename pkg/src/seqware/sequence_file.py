"""Line-oriented sequence files and device pin maps.

A sequence file is the text mirror of programmatic sequence building:
device definitions, pre-trigger default states, then timed steps placed
with ``abs`` (offset from sequence start) or ``rel`` (after the
previous step ends).  Durations, frequencies and voltages always carry
units; unitless numbers are rejected.  Times may be sums of unit terms
(``250us+270ns``), evaluated left to right.

    device dds1 kind=ad9854 connector=1 io=29 sclk=25 update=31 reset=27 \
        refclock=50MHz multiplier=6 rmprateclk=24 f_ini=80MHz
    default digital 2 16 0
    default analog 1 3 0V
    abs 0us ramp-linear board=1 channel=3 from=0V to=5V over=200us
    rel 100us ramp-exp-down board=1 channel=3 from=5V to=1V over=400us tau=100us
    abs 250us dds-sweep device=dds1 from=80MHz to=5MHz over=1ms steps=25 power=-18dBm

A pin-map file is the ``device`` lines alone; it names each board's
four control lines, reference clock and multiplier for the CLI and the
control service.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import SequenceFileError
from .peripherals import AD5372, AD9854, AD9959, SpiPins
from .sequence import (
    AnalogRamp,
    DDSSweep,
    PulseSchedule,
    PulseTrain,
    Sequence,
    SequenceBuilder,
)
from .timeline import DigitalAddress, volts_to_code
from .units import ms

_NUMBER = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"
_TIME_RE = re.compile(rf"^({_NUMBER})(ns|us|ms|s)$")
_FREQ_RE = re.compile(rf"^({_NUMBER})(Hz|kHz|MHz|GHz)$")
_VOLT_RE = re.compile(rf"^({_NUMBER})(mV|V)$")
_POWER_RE = re.compile(rf"^({_NUMBER})dBm$")

_TIME_SCALE = {"ns": 1e-9, "us": 1e-6, "ms": 1e-3, "s": 1.0}
_FREQ_SCALE = {"Hz": 1.0, "kHz": 1e3, "MHz": 1e6, "GHz": 1e9}
_VOLT_SCALE = {"mV": 1e-3, "V": 1.0}


def parse_time(token: str) -> float:
    m = _TIME_RE.match(token)
    if not m:
        raise ValueError(f"expected a time with unit (ns/us/ms/s), got {token!r}")
    return float(m.group(1)) * _TIME_SCALE[m.group(2)]


def parse_time_expr(token: str) -> float:
    """Sum of unit terms, left to right: ``250us+270ns+880.15us``."""
    total = None
    for part in token.split("+"):
        value = parse_time(part)
        total = value if total is None else total + value
    return total


def parse_frequency(token: str) -> float:
    m = _FREQ_RE.match(token)
    if not m:
        raise ValueError(f"expected a frequency with unit (Hz/kHz/MHz/GHz), got {token!r}")
    return float(m.group(1)) * _FREQ_SCALE[m.group(2)]


def parse_volts(token: str) -> float:
    m = _VOLT_RE.match(token)
    if not m:
        raise ValueError(f"expected a voltage with unit (mV/V), got {token!r}")
    return float(m.group(1)) * _VOLT_SCALE[m.group(2)]


def parse_power(token: str) -> float:
    if token == "-inf":
        return float("-inf")
    m = _POWER_RE.match(token)
    if not m:
        raise ValueError(f"expected a power in dBm, got {token!r}")
    return float(m.group(1))


@dataclass(frozen=True)
class DeviceSpec:
    """One peripheral board definition from a device line or pin map."""

    name: str
    kind: str
    connector: int
    io: int
    sclk: int
    update: int
    reset: int
    refclock: float = 0.0
    multiplier: int = 1
    ramp_rate_clock: int = 24
    f_ini: float = 0.0
    channel: int = 0
    sclk_period: int = 4

    @property
    def pins(self) -> SpiPins:
        return SpiPins(
            DigitalAddress(self.connector, self.io),
            DigitalAddress(self.connector, self.sclk),
            DigitalAddress(self.connector, self.update),
            DigitalAddress(self.connector, self.reset),
        )

    @property
    def sysclk(self) -> float:
        return self.refclock * self.multiplier

    def make(self, out):
        common = dict(
            out=out,
            connector=self.connector,
            io_pin=self.io,
            sclk_pin=self.sclk,
            reset_pin=self.reset,
            update_pin=self.update,
            sclk_period_ticks=self.sclk_period,
        )
        if self.kind == "ad9854":
            return AD9854(refclock=self.refclock, multiplier=self.multiplier,
                          ramp_rate_clock=self.ramp_rate_clock, f_ini=self.f_ini,
                          **common)
        if self.kind == "ad9959":
            return AD9959(refclock=self.refclock, multiplier=self.multiplier,
                          f_ini=self.f_ini, channel=self.channel, **common)
        if self.kind == "ad5372":
            return AD5372(**common)
        raise ValueError(f"unknown device kind {self.kind!r}")


_DEFAULT_MULTIPLIER = {"ad9854": 6, "ad9959": 10, "ad5372": 1}


def _kv(tokens, line_no):
    out = {}
    for token in tokens:
        if "=" not in token:
            raise SequenceFileError(line_no, f"expected key=value, got {token!r}")
        key, value = token.split("=", 1)
        if key in out:
            raise SequenceFileError(line_no, f"duplicate argument {key!r}")
        out[key] = value
    return out


def _parse_device(tokens, line_no) -> DeviceSpec:
    if not tokens:
        raise SequenceFileError(line_no, "device line needs a name")
    name, args = tokens[0], _kv(tokens[1:], line_no)
    try:
        kind = args.pop("kind")
        if kind not in ("ad9959", "ad9854", "ad5372"):
            raise ValueError(f"unknown device kind {kind!r}")
        spec = dict(
            name=name,
            kind=kind,
            connector=int(args.pop("connector")),
            io=int(args.pop("io")),
            sclk=int(args.pop("sclk")),
            update=int(args.pop("update")),
            reset=int(args.pop("reset")),
            multiplier=int(args.pop("multiplier", _DEFAULT_MULTIPLIER[kind])),
            sclk_period=int(args.pop("sclk-period", 4)),
        )
        if kind in ("ad9854", "ad9959"):
            spec["refclock"] = parse_frequency(args.pop("refclock"))
            if "f_ini" in args:
                spec["f_ini"] = parse_frequency(args.pop("f_ini"))
        if kind == "ad9854":
            spec["ramp_rate_clock"] = int(args.pop("rmprateclk", 24))
        if kind == "ad9959":
            spec["channel"] = int(args.pop("channel", 0))
        if args:
            raise ValueError(f"unknown arguments: {', '.join(sorted(args))}")
        return DeviceSpec(**spec)
    except SequenceFileError:
        raise
    except KeyError as exc:
        raise SequenceFileError(line_no, f"device line missing {exc.args[0]}") from None
    except ValueError as exc:
        raise SequenceFileError(line_no, str(exc)) from None


@dataclass(frozen=True)
class ParsedSequence:
    devices: dict
    defaults: tuple   # ("digital", connector, channel, state) | ("analog", board, channel, volts)
    steps: tuple      # (mode, time_seconds, step_tokens, line_no)


def parse_sequence_text(text: str) -> ParsedSequence:
    devices = {}
    defaults = []
    steps = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        keyword = tokens[0]
        try:
            if keyword == "device":
                spec = _parse_device(tokens[1:], line_no)
                if spec.name in devices:
                    raise SequenceFileError(line_no, f"device {spec.name!r} defined twice")
                devices[spec.name] = spec
            elif keyword == "default":
                if len(tokens) != 5:
                    raise ValueError("default takes: digital|analog A B VALUE")
                if tokens[1] == "digital":
                    state = int(tokens[4])
                    if state not in (0, 1):
                        raise ValueError("digital default state must be 0 or 1")
                    defaults.append(("digital", int(tokens[2]), int(tokens[3]), state))
                elif tokens[1] == "analog":
                    defaults.append(("analog", int(tokens[2]), int(tokens[3]),
                                     parse_volts(tokens[4])))
                else:
                    raise ValueError(f"unknown default kind {tokens[1]!r}")
            elif keyword in ("abs", "rel"):
                if len(tokens) < 3:
                    raise ValueError(f"{keyword} takes a time and a step")
                steps.append((keyword, parse_time_expr(tokens[1]), tuple(tokens[2:]), line_no))
            else:
                raise ValueError(f"unknown directive {keyword!r}")
        except SequenceFileError:
            raise
        except ValueError as exc:
            raise SequenceFileError(line_no, str(exc)) from None
    if not steps:
        raise SequenceFileError(len(text.splitlines()) or 1, "sequence file has no steps")
    return ParsedSequence(devices, tuple(defaults), tuple(steps))


def load_sequence_file(path) -> ParsedSequence:
    with open(path, "r") as f:
        return parse_sequence_text(f.read())


def load_pinmap(path) -> dict:
    """Pin-map file: device lines (and comments) only."""
    devices = {}
    with open(path, "r") as f:
        for line_no, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            tokens = line.split()
            if tokens[0] == "device":
                tokens = tokens[1:]
            spec = _parse_device(tokens, line_no)
            if spec.name in devices:
                raise SequenceFileError(line_no, f"device {spec.name!r} defined twice")
            devices[spec.name] = spec
    return devices


def _dds_arb(device, t, frequency_list, power_list, n_step, total_time):
    kwargs = dict(frequency_list=frequency_list, power_list=power_list,
                  n_step=n_step, total_time=total_time)
    if hasattr(device, "channel"):
        return device.arb(t, channel=device.channel, **kwargs)
    return device.arb(t, chirp=False, **kwargs)


def _make_step(out, devices, tokens, line_no):
    kind = tokens[0]
    rest = tokens[1:]

    def need_device(args):
        name = args.pop("device")
        if name not in devices:
            raise ValueError(f"device {name!r} is not defined")
        return devices[name]

    try:
        if kind == "digital":
            connector, channel, state = int(rest[0]), int(rest[1]), int(rest[2])
            return lambda t: out.digital_out(t, connector, channel, state)
        if kind == "analog":
            board, channel = int(rest[0]), int(rest[1])
            volts = parse_volts(rest[2])
            return lambda t: out.analog_out(t, board, channel, volts)
        args = _kv(rest, line_no)
        if kind == "ramp-linear":
            ramp = AnalogRamp(out, parse_volts(args.pop("from")), parse_volts(args.pop("to")),
                              parse_time(args.pop("over")),
                              board=int(args.pop("board")), channel=int(args.pop("channel")))
            step = ramp.linear
        elif kind == "ramp-exp-down":
            ramp = AnalogRamp(out, parse_volts(args.pop("from")), parse_volts(args.pop("to")),
                              parse_time(args.pop("over")), tau=parse_time(args.pop("tau")),
                              board=int(args.pop("board")), channel=int(args.pop("channel")))
            step = ramp.exponential_down
        elif kind == "pulse-train":
            train = PulseTrain(out, int(args.pop("connector")), int(args.pop("channel")),
                               int(args.pop("n")), parse_time(args.pop("width")))
            step = train.play
        elif kind == "pulse-schedule":
            times = [parse_time(t) for t in args.pop("times").split(",")]
            lengths = [parse_time(t) for t in args.pop("lengths").split(",")]
            sched = PulseSchedule(out, int(args.pop("connector")), int(args.pop("channel")),
                                  times, lengths)
            step = sched.play
        elif kind == "dds-sweep":
            device = need_device(args)
            sweep = DDSSweep(out, device, parse_frequency(args.pop("from")),
                             parse_frequency(args.pop("to")), parse_time(args.pop("over")),
                             int(args.pop("steps")), parse_power(args.pop("power")))
            step = sweep.play
        elif kind == "dds-init":
            device = need_device(args)
            step = device.ini
        elif kind == "dds-off":
            device = need_device(args)
            step = lambda t: _dds_arb(device, t, [0.0], [float("-inf")], 1, 1 * ms)
        elif kind == "dac-set":
            device = need_device(args)
            channel = int(args.pop("channel"))
            volts = parse_volts(args.pop("value"))
            step = lambda t: device.set(t, channel, volts)
        else:
            raise ValueError(f"unknown step kind {kind!r}")
        if args:
            raise ValueError(f"unknown arguments: {', '.join(sorted(args))}")
        return step
    except SequenceFileError:
        raise
    except KeyError as exc:
        raise SequenceFileError(line_no, f"{kind} step missing {exc.args[0]}") from None
    except (ValueError, IndexError) as exc:
        raise SequenceFileError(line_no, str(exc)) from None


def build_queue(parsed: ParsedSequence, extra_devices=None) -> SequenceBuilder:
    """Execute a parsed sequence file into a transition queue.

    ``extra_devices`` (from a pin-map file) are available to steps;
    inline definitions win on name clashes.
    """
    out = SequenceBuilder()
    for entry in parsed.defaults:
        if entry[0] == "digital":
            _, connector, channel, state = entry
            bit = 1 << channel
            out.defaults.set_digital(connector, bit, bit, state << channel)
        else:
            _, board, channel, volts = entry
            out.defaults.set_analog(board, channel, volts_to_code(volts))
    specs = dict(extra_devices or {})
    specs.update(parsed.devices)
    devices = {name: spec.make(out) for name, spec in specs.items()}
    ctx = Sequence(out)
    for mode, t, tokens, line_no in parsed.steps:
        step = _make_step(out, devices, tokens, line_no)
        if mode == "abs":
            ctx.abs(t, step)
        else:
            ctx.rel(t, step)
    return out
