"""Deterministic experiment sequencing platform.

Build timed digital/analog sequences in Python or from sequence files,
compile them into per-engine instruction streams, execute them on a
cycle-accurate simulator of the timing hardware, and drive the whole
thing over a network control service.
"""

from .compiler import (
    AnalogProgram,
    CompiledSequence,
    ConflictPolicy,
    EngineProgram,
    check_analog_rate,
    compile_queue,
    normalize_origin,
    quantize_analog,
)
from .engine import Trace, TraceEvent, jitter_analysis, replay_check, run
from .sequence import (
    AnalogRamp,
    DDSSweep,
    DefaultStates,
    PulseSchedule,
    PulseTrain,
    Sequence,
    SequenceBuilder,
    null_step,
    pulse_schedule,
    pulse_train,
)
from .timeline import (
    AnalogAddress,
    AnalogCode,
    AnalogSet,
    DigitalAddress,
    DigitalSet,
    LatchState,
    Transition,
    apply_masked,
    code_to_volts,
    seconds_to_ticks,
    ticks_to_seconds,
    volts_to_code,
)

__version__ = "0.1.0"

__all__ = [
    "AnalogAddress", "AnalogCode", "AnalogProgram", "AnalogRamp", "AnalogSet",
    "CompiledSequence", "ConflictPolicy", "DDSSweep", "DefaultStates",
    "DigitalAddress", "DigitalSet", "EngineProgram", "LatchState",
    "PulseSchedule", "PulseTrain", "Sequence", "SequenceBuilder", "Trace",
    "TraceEvent", "Transition", "apply_masked", "check_analog_rate",
    "code_to_volts", "compile_queue", "jitter_analysis", "normalize_origin",
    "null_step", "pulse_schedule", "pulse_train", "quantize_analog",
    "replay_check", "run", "seconds_to_ticks", "ticks_to_seconds",
    "volts_to_code",
]
