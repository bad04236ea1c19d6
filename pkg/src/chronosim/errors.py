"""Exception hierarchy shared by every chronosim module."""


class ChronosimError(Exception):
    """Base class for all errors raised by this package."""


class TimeRangeError(ChronosimError, OverflowError):
    """A time value fell outside the representable or encodable range."""


class MalformedSampleError(ChronosimError, ValueError):
    """An exchange sample violates same-clock monotonicity."""


class NotReadyError(ChronosimError, RuntimeError):
    """The SPoT state has not been seeded by a first sample yet."""


class PacketDecodeError(ChronosimError, ValueError):
    """Bytes could not be decoded as an SNTP packet."""


class NoResponseError(ChronosimError, TimeoutError):
    """The time server did not answer before the timeout expired."""


class BogusReplyError(ChronosimError, ValueError):
    """The server reply failed a sanity check."""


class EmptySeriesError(ChronosimError, ValueError):
    """Statistics were requested over no data."""
