"""Exception hierarchy shared across the package."""


class SeqwareError(Exception):
    """Base class for all errors raised by this package."""


class NegativeTimeError(SeqwareError, ValueError):
    pass


class TickOverflowError(SeqwareError, OverflowError):
    pass


class VoltageOutOfRangeError(SeqwareError, ValueError):
    pass


class AddressOutOfRangeError(SeqwareError, ValueError):
    pass


class FrequencyOutOfRangeError(SeqwareError, ValueError):
    pass


class ListLengthMismatchError(SeqwareError, ValueError):
    pass


class EmptyStepListError(SeqwareError, ValueError):
    pass


class ZeroRampTimeError(SeqwareError, ValueError):
    pass


class EmptyQueueError(SeqwareError, ValueError):
    pass


class ConflictError(SeqwareError, ValueError):
    """Two same-tick writes to one line disagree on its final state."""


class FifoUnderrunError(SeqwareError, RuntimeError):
    pass


class AnalogBufferUnderrunError(SeqwareError, RuntimeError):
    pass


class LineNotFoundError(SeqwareError, KeyError):
    pass


class FramingError(SeqwareError, ValueError):
    """Serial bitstream cannot be parsed into whole frames."""


class UnknownRegisterError(SeqwareError, KeyError):
    pass


class SpiScheduleError(SeqwareError, ValueError):
    """Serial frames cannot be placed without colliding on the shared pins."""


class ProtocolStateError(SeqwareError, RuntimeError):
    """A wire command arrived in a session state that does not allow it."""


class BusyError(SeqwareError, RuntimeError):
    """Another session currently owns the output hardware."""


class DiscoveryTimeoutError(SeqwareError, TimeoutError):
    pass


class SequenceFileError(SeqwareError, ValueError):
    """Parse or semantic error in a sequence file, carrying a line number."""

    def __init__(self, line_no, message):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no
        self.message = message
