"""Four-timestamp exchange records and the quantities derived from them.

Sign convention: ``offset`` is the amount to add to the client clock to
match the server, i.e. ``server - client``.  A client running 5 ms fast
measures an offset of -5 ms.
"""

from __future__ import annotations

from dataclasses import dataclass

from chronosim.errors import MalformedSampleError
from chronosim.timebase import Duration, Instant


@dataclass(frozen=True, slots=True)
class ExchangeSample:
    """One request/response exchange.

    ``t1``/``t4`` are read from the client clock, ``t2``/``t3`` from the
    server clock.  Timestamps of different clocks are not comparable, so only
    ``t4 >= t1`` and ``t3 >= t2`` are required.
    """

    t1: Instant
    t2: Instant
    t3: Instant
    t4: Instant

    def check(self) -> None:
        if self.t4 < self.t1:
            raise MalformedSampleError(f"receipt {self.t4!r} precedes originate {self.t1!r}")
        if self.t3 < self.t2:
            raise MalformedSampleError(f"transmit {self.t3!r} precedes receive {self.t2!r}")

    def client_midpoint(self) -> Instant:
        """Client-clock instant halfway between originate and receipt."""
        return self.t1 + (self.t4 - self.t1).half()


@dataclass(frozen=True, slots=True)
class SyncMeasurement:
    total_delay: Duration
    remote_processing: Duration
    travel_time: Duration
    rtt: Duration
    offset: Duration


def compute_measurement(sample: ExchangeSample) -> SyncMeasurement:
    """Delay, RTT and offset of one exchange.

    With ``a = t2 - t1`` and ``b = t3 - t4``: ``rtt = a - b`` and
    ``offset = (a + b) / 2``; the one-way travel time is half of total delay
    minus remote processing.  Halving rounds toward zero.
    """
    sample.check()
    a = sample.t2 - sample.t1
    b = sample.t3 - sample.t4
    total = sample.t4 - sample.t1
    processing = sample.t3 - sample.t2
    return SyncMeasurement(
        total_delay=total,
        remote_processing=processing,
        travel_time=(total - processing).half(),
        rtt=a - b,
        offset=(a + b).half(),
    )
