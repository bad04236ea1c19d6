"""Seeded discrete-event simulation of a client polling a reference server.

Delays follow a spike model: every one-way trip pays a base delay plus a
small half-normal jitter, and with probability ``spike_probability`` an
exchange additionally gets one half-normal spike of scale ``sigma`` in a
single direction picked by a fair coin.  Each exchange consumes exactly the
same RNG draws whatever happens, so the k-th exchange of two runs with the
same seed sees the same delays even when the protocols poll at different
times.

Randomness comes from NumPy's PCG64 generator.  ``SeedSequence(seed)`` is
spawned into two children: the first draws the default client clock, the
second drives the network.
"""

from __future__ import annotations

import enum
import heapq
import itertools
from dataclasses import dataclass, field
from typing import Callable, Iterator

import numpy as np

from chronosim.exchange import ExchangeSample, compute_measurement
from chronosim.sntp.client import DEFAULT_POLL_INTERVAL, SntpClient, SntpClientState
from chronosim.spot import (
    DEFAULT_CONFIG,
    DeviceType,
    SpotClient,
    SpotClientState,
    SpotConfig,
    SpotRegistration,
    SpotServer,
)
from chronosim.timebase import ZERO, Duration, Instant, VirtualClock, round_half_away


class NoiseLevel(enum.Enum):
    LOW = "low"
    MEDIUM = "medium"
    HIGH = "high"
    CUSTOM = "custom"


LEVEL_SIGMA = {
    NoiseLevel.LOW: Duration.from_millis(50),
    NoiseLevel.MEDIUM: Duration.from_millis(150),
    NoiseLevel.HIGH: Duration.from_millis(250),
}
STANDARD_LEVELS = (NoiseLevel.LOW, NoiseLevel.MEDIUM, NoiseLevel.HIGH)


class Direction(enum.Enum):
    FORWARD = "forward"  # client -> server
    REVERSE = "reverse"  # server -> client


class Protocol(enum.Enum):
    SNTP = "sntp"
    SPOT = "spot"


@dataclass(frozen=True)
class NoiseModel:
    level: NoiseLevel = NoiseLevel.HIGH
    sigma: Duration = LEVEL_SIGMA[NoiseLevel.HIGH]
    base_one_way_delay: Duration = Duration.from_millis(20)
    spike_probability: float = 0.3
    symmetric_jitter_sigma: Duration = Duration.from_millis(1)

    def __post_init__(self) -> None:
        if self.sigma < ZERO or self.symmetric_jitter_sigma < ZERO or self.base_one_way_delay < ZERO:
            raise ValueError("noise magnitudes must be non-negative")
        if not 0.0 <= self.spike_probability <= 1.0:
            raise ValueError("spike probability must be in [0, 1]")
        if self.level is not NoiseLevel.CUSTOM and self.sigma != LEVEL_SIGMA[self.level]:
            raise ValueError(f"{self.level.value} noise has sigma {LEVEL_SIGMA[self.level].to_millis()} ms")

    @classmethod
    def for_level(cls, level: NoiseLevel | str, **overrides) -> NoiseModel:
        level = NoiseLevel(level)
        if level is NoiseLevel.CUSTOM:
            return cls(level=level, **overrides)
        return cls(level=level, sigma=LEVEL_SIGMA[level], **overrides)

    @classmethod
    def noiseless(cls, base_one_way_delay: Duration = Duration.from_millis(20)) -> NoiseModel:
        return cls(
            level=NoiseLevel.CUSTOM,
            sigma=ZERO,
            base_one_way_delay=base_one_way_delay,
            spike_probability=0.0,
            symmetric_jitter_sigma=ZERO,
        )


def make_rngs(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    """(clock RNG, network RNG) for a seed."""
    clock_seq, net_seq = np.random.SeedSequence(seed).spawn(2)
    return np.random.Generator(np.random.PCG64(clock_seq)), np.random.Generator(np.random.PCG64(net_seq))


def default_client_clock(seed: int) -> VirtualClock:
    """Clock drawn for a seed: offset ~ N(0, 50 ms), skew ~ U(-100, 100) ppm."""
    rng, _ = make_rngs(seed)
    offset = Duration(round_half_away(float(rng.normal(0.0, 50e6))))
    skew = float(rng.uniform(-100.0, 100.0))
    return VirtualClock(base_offset=offset, skew_ppm=skew)


def sample_one_way_delay(
    noise: NoiseModel,
    rng: np.random.Generator,
    direction: Direction,
    spike_direction: Direction | None,
) -> Duration:
    """One trip's delay; always draws two normals so the stream stays aligned."""
    jitter = abs(float(rng.standard_normal())) * noise.symmetric_jitter_sigma.nanos
    spike = abs(float(rng.standard_normal())) * noise.sigma.nanos
    nanos = noise.base_one_way_delay.nanos + round_half_away(jitter)
    if spike_direction is direction:
        nanos += round_half_away(spike)
    return Duration(nanos)


def draw_spike_direction(noise: NoiseModel, rng: np.random.Generator) -> Direction | None:
    spiked = float(rng.random()) < noise.spike_probability
    forward = float(rng.random()) < 0.5
    if not spiked:
        return None
    return Direction.FORWARD if forward else Direction.REVERSE


DEFAULT_PROCESSING = Duration.from_millis(1)


def exchange_once(
    client_clock: VirtualClock,
    ref_clock: VirtualClock,
    noise: NoiseModel,
    rng: np.random.Generator,
    true_now: Instant,
    processing: Duration = DEFAULT_PROCESSING,
) -> tuple[ExchangeSample, Instant]:
    """Simulate one request/response starting at ``true_now``.

    Returns the sample and the true instant at which the reply arrives.
    """
    spike_direction = draw_spike_direction(noise, rng)
    d_fwd = sample_one_way_delay(noise, rng, Direction.FORWARD, spike_direction)
    d_rev = sample_one_way_delay(noise, rng, Direction.REVERSE, spike_direction)
    arrive = true_now + d_fwd
    depart = arrive + processing
    done = depart + d_rev
    sample = ExchangeSample(
        t1=client_clock.read(true_now),
        t2=ref_clock.read(arrive),
        t3=ref_clock.read(depart),
        t4=client_clock.read(done),
    )
    return sample, done


@dataclass(frozen=True)
class SimConfig:
    """One simulation run.

    ``client_clock=None`` draws the clock from the seed with
    :func:`default_client_clock`.
    """

    seed: int = 0
    duration: Duration = Duration.from_seconds(3 * 3600)
    client_clock: VirtualClock | None = None
    noise: NoiseModel = field(default_factory=NoiseModel)
    protocol: Protocol = Protocol.SPOT
    spot_registration: SpotRegistration | None = None
    sntp_poll_interval: Duration = DEFAULT_POLL_INTERVAL
    processing: Duration = DEFAULT_PROCESSING
    spot_config: SpotConfig = DEFAULT_CONFIG

    def __post_init__(self) -> None:
        if self.duration <= ZERO:
            raise ValueError("duration must be positive")
        if self.sntp_poll_interval <= ZERO:
            raise ValueError("SNTP poll interval must be positive")

    def resolved_clock(self) -> VirtualClock:
        return self.client_clock if self.client_clock is not None else default_client_clock(self.seed)


@dataclass(frozen=True, slots=True)
class TraceRow:
    """State of the client right after one exchange completed.

    ``measured_offset``/``corrected_offset`` use the exchange convention
    (correction to add to the client).  ``estimate_after`` and
    ``true_offset`` are both expressed as the client's clock error
    (client minus true time), so their difference is the residual error.
    ``estimate_rate`` is how fast the held estimate changes per unit of
    client time from the exchange's client midpoint on; 0 for SNTP.
    """

    true_time: Instant
    sample: ExchangeSample
    measured_offset: Duration
    corrected_offset: Duration
    rtt: Duration
    estimate_after: Duration
    estimate_rate: float
    true_offset: Duration

    @property
    def anchor(self) -> Instant:
        return self.sample.client_midpoint()

    def estimate_at(self, local_time: Instant) -> Duration:
        if not self.estimate_rate:
            return self.estimate_after
        return self.estimate_after + (local_time - self.anchor).scale(self.estimate_rate)


@dataclass(frozen=True)
class SimTrace:
    rows: tuple[TraceRow, ...]
    clock: VirtualClock
    end_time: Instant
    final_state: SpotClientState | SntpClientState | None = None

    def __len__(self) -> int:
        return len(self.rows)

    def __iter__(self) -> Iterator[TraceRow]:
        return iter(self.rows)


class _SntpEngine:
    def __init__(self, config: SimConfig) -> None:
        self.client = SntpClient(config.sntp_poll_interval)

    @property
    def state(self) -> SntpClientState:
        return self.client.state

    @property
    def interval(self) -> Duration:
        return self.client.polling_interval

    def step(self, sample: ExchangeSample) -> tuple[Duration, float]:
        return self.client.step(sample), 0.0


class _SpotEngine:
    """Runs SPoT on the device (thick) or on the server (thin)."""

    def __init__(self, config: SimConfig, server: SpotServer) -> None:
        reg = config.spot_registration or SpotRegistration()
        self._server = server
        if reg.device_type is DeviceType.THIN:
            self._id = server.register_client(reg)
            self._client = None
        else:
            server.register_client(reg)
            self._client = SpotClient(reg, config.spot_config)

    @property
    def state(self) -> SpotClientState:
        if self._client is not None:
            return self._client.state
        return self._server.thin_state(self._id)

    @property
    def interval(self) -> Duration:
        return self.state.polling_interval

    def step(self, sample: ExchangeSample) -> tuple[Duration, float]:
        if self._client is not None:
            estimate = self._client.step(sample)
        else:
            estimate = self._server.thin_step(self._id, sample)
        return estimate, self.state.clock_skew


class EventLoop:
    """Minimal time-ordered callback scheduler on the true timeline."""

    def __init__(self) -> None:
        self._queue: list[tuple[int, int, Callable[[Instant], None]]] = []
        self._seq = itertools.count()

    def schedule(self, at: Instant, callback: Callable[[Instant], None]) -> None:
        heapq.heappush(self._queue, (at.nanos, next(self._seq), callback))

    def run(self, until: Instant) -> None:
        while self._queue and self._queue[0][0] < until.nanos:
            at, _, callback = heapq.heappop(self._queue)
            callback(Instant(at))


def run_simulation(config: SimConfig) -> SimTrace:
    """Simulate ``config.duration`` of polling and record every exchange.

    Polls are scheduled on the true timeline, ``interval`` after the start of
    the previous poll (or when its reply arrives, if that is later).
    """
    clock = config.resolved_clock()
    server = SpotServer(config=config.spot_config)
    ref_clock = server.reference_clock
    _, net_rng = make_rngs(config.seed)
    engine = _SntpEngine(config) if config.protocol is Protocol.SNTP else _SpotEngine(config, server)

    rows: list[TraceRow] = []
    loop = EventLoop()

    def poll(start: Instant) -> None:
        sample, done = exchange_once(clock, ref_clock, config.noise, net_rng, start, config.processing)
        m = compute_measurement(sample)
        correction, rate = engine.step(sample)
        rows.append(
            TraceRow(
                true_time=done,
                sample=sample,
                measured_offset=m.offset,
                corrected_offset=correction,
                rtt=m.rtt,
                estimate_after=-correction,
                estimate_rate=-rate if rate else 0.0,
                true_offset=clock.true_offset(done),
            )
        )
        loop.schedule(max(start + engine.interval, done + Duration(1)), poll)

    loop.schedule(Instant(0), poll)
    end = Instant(0) + config.duration
    loop.run(end)
    return SimTrace(rows=tuple(rows), clock=clock, end_time=end, final_state=engine.state)
