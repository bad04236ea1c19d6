"""Integer-nanosecond time values, the NTP timestamp codec and drifting clocks.

All arithmetic is done on signed integer nanoseconds.  Whenever a real number
has to be turned back into nanoseconds it is rounded to nearest with ties
away from zero (see :func:`round_half_away`); halving a :class:`Duration`
rounds toward zero.  Both rules are fixed so that independent ports agree
bit for bit.
"""

from __future__ import annotations

import math
import struct
import time
from dataclasses import dataclass, field
from typing import Protocol

from chronosim.errors import TimeRangeError

NANOS_PER_SECOND = 1_000_000_000
NANOS_PER_MILLI = 1_000_000
NANOS_PER_MICRO = 1_000

INT64_MIN = -(2**63)
INT64_MAX = 2**63 - 1

# Seconds between 1900-01-01 (NTP era 0) and 1970-01-01 (Unix epoch):
# 70 years with 17 leap days = 25,567 days.
NTP_UNIX_DELTA_SECONDS = 25_567 * 86_400
NTP_UNIX_DELTA_NANOS = NTP_UNIX_DELTA_SECONDS * NANOS_PER_SECOND
FRACTION_SCALE = 2**32

_NTP_STRUCT = struct.Struct("!II")


def round_half_away(x: float) -> int:
    """Round to the nearest integer, ties away from zero."""
    ax = abs(x)
    whole = math.floor(ax)
    if ax - whole >= 0.5:
        whole += 1
    return int(whole) if x >= 0 else -int(whole)


def _check_int64(nanos: int) -> int:
    if not INT64_MIN <= nanos <= INT64_MAX:
        raise TimeRangeError(f"{nanos} ns is outside the signed 64-bit range")
    return nanos


@dataclass(frozen=True, order=True, slots=True)
class Duration:
    """A signed interval in integer nanoseconds."""

    nanos: int = 0

    @classmethod
    def from_seconds(cls, seconds: float) -> Duration:
        return cls(round_half_away(seconds * NANOS_PER_SECOND))

    @classmethod
    def from_millis(cls, millis: float) -> Duration:
        return cls(round_half_away(millis * NANOS_PER_MILLI))

    @classmethod
    def from_micros(cls, micros: float) -> Duration:
        return cls(round_half_away(micros * NANOS_PER_MICRO))

    def to_seconds(self) -> float:
        return self.nanos / NANOS_PER_SECOND

    def to_millis(self) -> float:
        return self.nanos / NANOS_PER_MILLI

    def half(self) -> Duration:
        """Half of this duration, rounded toward zero on odd nanoseconds."""
        q = abs(self.nanos) // 2
        return Duration(q if self.nanos >= 0 else -q)

    def scale(self, factor: float) -> Duration:
        """Multiply by a real factor, rounding ties away from zero."""
        return Duration(round_half_away(self.nanos * factor))

    def __add__(self, other: Duration) -> Duration:
        if isinstance(other, Duration):
            return Duration(self.nanos + other.nanos)
        return NotImplemented

    def __sub__(self, other: Duration) -> Duration:
        if isinstance(other, Duration):
            return Duration(self.nanos - other.nanos)
        return NotImplemented

    def __neg__(self) -> Duration:
        return Duration(-self.nanos)

    def __abs__(self) -> Duration:
        return Duration(abs(self.nanos))

    def __mul__(self, factor: int | float) -> Duration:
        if isinstance(factor, int):
            return Duration(self.nanos * factor)
        if isinstance(factor, float):
            return self.scale(factor)
        return NotImplemented

    __rmul__ = __mul__

    def __truediv__(self, other: Duration) -> float:
        if isinstance(other, Duration):
            return self.nanos / other.nanos
        return NotImplemented

    def __bool__(self) -> bool:
        return self.nanos != 0

    def __repr__(self) -> str:
        return f"Duration({self.nanos}ns)"


ZERO = Duration(0)


@dataclass(frozen=True, order=True, slots=True)
class Instant:
    """A point on a timeline, as integer nanoseconds since its epoch.

    Simulated timelines start at ``Instant(0)``; live mode uses the Unix epoch.
    """

    nanos: int = 0

    @classmethod
    def from_seconds(cls, seconds: float) -> Instant:
        return cls(round_half_away(seconds * NANOS_PER_SECOND))

    def to_seconds(self) -> float:
        return self.nanos / NANOS_PER_SECOND

    def __add__(self, other: Duration) -> Instant:
        if isinstance(other, Duration):
            return Instant(self.nanos + other.nanos)
        return NotImplemented

    def __sub__(self, other):
        if isinstance(other, Instant):
            return Duration(self.nanos - other.nanos)
        if isinstance(other, Duration):
            return Instant(self.nanos - other.nanos)
        return NotImplemented

    def __repr__(self) -> str:
        return f"Instant({self.nanos}ns)"


EPOCH = Instant(0)


@dataclass(frozen=True, slots=True)
class NtpTimestamp:
    """64-bit NTP era-0 timestamp: seconds since 1900 plus 2**-32 s fractions."""

    seconds: int
    fraction: int

    def __post_init__(self) -> None:
        if not 0 <= self.seconds < 2**32 or not 0 <= self.fraction < 2**32:
            raise TimeRangeError(f"NTP fields out of range: {self.seconds}.{self.fraction}")

    def to_bytes(self) -> bytes:
        return _NTP_STRUCT.pack(self.seconds, self.fraction)

    @classmethod
    def from_bytes(cls, data: bytes) -> NtpTimestamp:
        seconds, fraction = _NTP_STRUCT.unpack(data)
        return cls(seconds, fraction)

    def is_zero(self) -> bool:
        return self.seconds == 0 and self.fraction == 0


NTP_ZERO = NtpTimestamp(0, 0)


def ntp_encode(t: Instant) -> NtpTimestamp:
    """Encode a Unix-epoch instant as an NTP era-0 timestamp.

    The fraction is rounded to the nearest 2**-32 s unit.  Raises
    :class:`TimeRangeError` outside 1900-01-01 .. 2036-02-07.
    """
    ntp_nanos = t.nanos + NTP_UNIX_DELTA_NANOS
    if ntp_nanos < 0:
        raise TimeRangeError(f"{t!r} precedes NTP era 0")
    seconds, rem = divmod(ntp_nanos, NANOS_PER_SECOND)
    fraction = ((rem << 32) + NANOS_PER_SECOND // 2) // NANOS_PER_SECOND
    if fraction == FRACTION_SCALE:
        seconds, fraction = seconds + 1, 0
    if seconds >= 2**32:
        raise TimeRangeError(f"{t!r} is past the end of NTP era 0")
    return NtpTimestamp(seconds, fraction)


def ntp_decode(nt: NtpTimestamp) -> Instant:
    """Decode an NTP era-0 timestamp to a Unix-epoch instant (nearest ns)."""
    frac_nanos = (nt.fraction * NANOS_PER_SECOND + FRACTION_SCALE // 2) >> 32
    return Instant(nt.seconds * NANOS_PER_SECOND + frac_nanos - NTP_UNIX_DELTA_NANOS)


@dataclass(frozen=True, slots=True)
class VirtualClock:
    """A device clock that is off by ``base_offset`` at ``t0`` and runs at a
    rate error of ``skew_ppm`` parts per million."""

    base_offset: Duration = field(default_factory=Duration)
    skew_ppm: float = 0.0
    t0: Instant = field(default_factory=Instant)

    def read(self, true_time: Instant) -> Instant:
        elapsed = true_time.nanos - self.t0.nanos
        drift = round_half_away(self.skew_ppm * elapsed / 1e6) if self.skew_ppm else 0
        return Instant(_check_int64(true_time.nanos + self.base_offset.nanos + drift))

    def true_offset(self, true_time: Instant) -> Duration:
        """How far this clock is ahead of true time at ``true_time``."""
        return self.read(true_time) - true_time


def clock_read(clock: VirtualClock, true_time: Instant) -> Instant:
    return clock.read(true_time)


def true_offset(clock: VirtualClock, true_time: Instant) -> Duration:
    return clock.true_offset(true_time)


class ClockSource(Protocol):
    """Anything that can be asked for the current time."""

    def now(self) -> Instant: ...


class SystemClock:
    """Live clock source: the monotonic counter pinned to the Unix epoch once.

    Successive readings never go backwards even if the wall clock is stepped.
    """

    def __init__(self) -> None:
        self._epoch_shift = time.time_ns() - time.monotonic_ns()

    def now(self) -> Instant:
        return Instant(time.monotonic_ns() + self._epoch_shift)


class OffsetClock:
    """Wrap another clock source and shift its readings by a fixed amount."""

    def __init__(self, source: ClockSource, offset: Duration) -> None:
        self.source = source
        self.offset = offset

    def now(self) -> Instant:
        return self.source.now() + self.offset
