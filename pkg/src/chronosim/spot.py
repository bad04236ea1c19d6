"""SPoT: asymmetry-aware offset filtering and rate synchronization.

The client keeps an offset model ``oldOffset + clockSkew * (now - last)``.
Each new exchange is compared against that prediction; samples that land
more than one error margin away are treated as one-directional delay spikes
and corrected by half the RTT excess over the smallest RTT seen.  Samples
that pass unmodified are used to re-estimate the skew, and the spread of
prediction errors over an observation window steers the polling interval
up or down (AIMD or MIMD).

Offsets follow the convention of :mod:`chronosim.exchange` (the correction
to add to the client clock).  ``now`` is always a client-clock instant.
"""

from __future__ import annotations

import enum
import itertools
import threading
from dataclasses import dataclass, field, fields, replace
from types import MappingProxyType
from typing import Mapping, NewType

from chronosim.errors import NotReadyError
from chronosim.exchange import ExchangeSample, compute_measurement
from chronosim.timebase import ZERO, Duration, Instant, VirtualClock

ClientId = NewType("ClientId", int)


class PollingStyle(enum.Enum):
    AIMD = "aimd"
    MIMD = "mimd"


class DeviceType(enum.Enum):
    THICK = "thick"
    THIN = "thin"


DEFAULT_ERROR_MARGIN = Duration.from_millis(10)


@dataclass(frozen=True)
class SpotRegistration:
    device_type: DeviceType = DeviceType.THICK
    polling_style: PollingStyle = PollingStyle.AIMD
    error_margin: Duration = DEFAULT_ERROR_MARGIN

    def __post_init__(self) -> None:
        if self.error_margin <= ZERO:
            raise ValueError(f"error margin must be positive, got {self.error_margin!r}")


@dataclass(frozen=True)
class SpotConfig:
    """Tunables the algorithm leaves open.

    ``min_rtt_window`` switches from a lifetime RTT minimum to the minimum of
    the last N samples.
    """

    poll_min: Duration = Duration.from_seconds(1)
    poll_max: Duration = Duration.from_seconds(1024)
    initial_interval: Duration = Duration.from_seconds(64)
    aimd_step: Duration = Duration.from_seconds(10)
    observation_polls: int = 5
    min_samples: int = 5
    min_rtt_window: int | None = None

    def __post_init__(self) -> None:
        if not ZERO < self.poll_min <= self.initial_interval <= self.poll_max:
            raise ValueError("need 0 < poll_min <= initial_interval <= poll_max")
        if self.min_rtt_window is not None and self.min_rtt_window < 1:
            raise ValueError("min_rtt_window must be >= 1")


DEFAULT_CONFIG = SpotConfig()


def increase_interval(interval: Duration, style: PollingStyle, config: SpotConfig = DEFAULT_CONFIG) -> Duration:
    if style is PollingStyle.AIMD:
        grown = interval + config.aimd_step
    else:
        grown = interval * 2
    return min(grown, config.poll_max)


def decrease_interval(interval: Duration, style: PollingStyle, config: SpotConfig = DEFAULT_CONFIG) -> Duration:
    # both styles back off multiplicatively
    return max(interval.half(), config.poll_min)


@dataclass(frozen=True)
class SpotClientState:
    """Everything both SPoT routines read or write for one client.

    The mean absolute prediction error of the current observation window is
    kept as an exact sum over ``num_samples`` so it does not depend on the
    order the samples arrived in.
    """

    error_margin: Duration
    polling_style: PollingStyle
    polling_interval: Duration
    old_offset: Duration = ZERO
    clock_skew: float = 0.0
    last_measurement_time: Instant = field(default_factory=Instant)
    min_rtt: Duration = ZERO
    num_samples: int = 0
    abs_error_sum: Duration = ZERO
    observation_deadline: Instant = field(default_factory=Instant)
    clock_sync_offset: Duration = ZERO
    clock_sync_time: Instant = field(default_factory=Instant)
    initialized: bool = False
    recent_rtts: tuple[Duration, ...] = ()

    @classmethod
    def fresh(cls, registration: SpotRegistration, config: SpotConfig = DEFAULT_CONFIG) -> SpotClientState:
        return cls(
            error_margin=registration.error_margin,
            polling_style=registration.polling_style,
            polling_interval=config.initial_interval,
        )

    @property
    def mean_absolute_error(self) -> float:
        """Mean absolute prediction error of the current window, in ns."""
        if self.num_samples == 0:
            return 0.0
        return self.abs_error_sum.nanos / self.num_samples

    def to_text(self) -> str:
        """Serialize as ``key=value`` lines, one per field."""
        lines = []
        for f in fields(self):
            lines.append(f"{f.name}={_format_value(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> SpotClientState:
        raw: dict[str, str] = {}
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ValueError(f"not a key=value line: {line!r}")
            raw[key.strip()] = value.strip()
        kwargs = {}
        for f in fields(cls):
            if f.name not in raw:
                raise ValueError(f"missing field {f.name!r}")
            kwargs[f.name] = _parse_value(f.name, raw[f.name])
        return cls(**kwargs)


_DURATION_FIELDS = {"error_margin", "polling_interval", "old_offset", "min_rtt", "abs_error_sum", "clock_sync_offset"}
_INSTANT_FIELDS = {"last_measurement_time", "observation_deadline", "clock_sync_time"}


def _format_value(value) -> str:
    if isinstance(value, (Duration, Instant)):
        return str(value.nanos)
    if isinstance(value, PollingStyle):
        return value.value
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ",".join(str(d.nanos) for d in value)
    return str(value)


def _parse_value(name: str, text: str):
    if name in _DURATION_FIELDS:
        return Duration(int(text))
    if name in _INSTANT_FIELDS:
        return Instant(int(text))
    if name == "polling_style":
        return PollingStyle(text)
    if name == "initialized":
        if text not in ("true", "false"):
            raise ValueError(f"bad boolean {text!r}")
        return text == "true"
    if name == "clock_skew":
        return float(text)
    if name == "num_samples":
        return int(text)
    if name == "recent_rtts":
        return tuple(Duration(int(x)) for x in text.split(",")) if text else ()
    raise ValueError(f"unknown field {name!r}")


def estimate_offset(state: SpotClientState, now: Instant) -> Duration:
    """Offset predicted for ``now`` from the last offset and the skew."""
    if not state.initialized:
        raise NotReadyError("no offset has been measured yet")
    return state.old_offset + (now - state.last_measurement_time).scale(state.clock_skew)


def fold_min_rtt(state: SpotClientState, rtt: Duration, config: SpotConfig = DEFAULT_CONFIG) -> SpotClientState:
    """Account for a new RTT sample in the minimum-RTT baseline."""
    if config.min_rtt_window is None:
        return replace(state, min_rtt=min(state.min_rtt, rtt))
    recent = (state.recent_rtts + (rtt,))[-config.min_rtt_window :]
    return replace(state, min_rtt=min(recent), recent_rtts=recent)


def filter_offset(state: SpotClientState, measured_offset: Duration, measured_rtt: Duration, now: Instant) -> Duration:
    """Correct ``measured_offset`` for one-directional delay.

    ``state.min_rtt`` must already include ``measured_rtt``.
    """
    estimated = estimate_offset(state, now)
    asymmetric_delay = measured_rtt - state.min_rtt
    if measured_offset > estimated + state.error_margin:
        # forward (client -> server) spike inflates the offset
        return measured_offset - asymmetric_delay.half()
    if measured_offset < estimated - state.error_margin:
        # reverse spike deflates it
        return measured_offset + asymmetric_delay.half()
    return measured_offset


def _restart_window(state: SpotClientState, interval: Duration, now: Instant, config: SpotConfig) -> SpotClientState:
    return replace(
        state,
        polling_interval=interval,
        observation_deadline=now + interval * config.observation_polls,
        num_samples=0,
        abs_error_sum=ZERO,
    )


def update_rate_sync(
    state: SpotClientState,
    measured_offset: Duration,
    corrected_offset: Duration,
    now: Instant,
    config: SpotConfig = DEFAULT_CONFIG,
) -> SpotClientState:
    """Polling-interval adaptation and skew re-estimation for one sample."""
    estimated = estimate_offset(state, now)
    if now < state.observation_deadline or state.num_samples < config.min_samples:
        state = replace(
            state,
            abs_error_sum=state.abs_error_sum + abs(estimated - corrected_offset),
            num_samples=state.num_samples + 1,
        )
    elif state.abs_error_sum.nanos < 2 * state.error_margin.nanos * state.num_samples:
        # stable: mean absolute error below twice the margin
        interval = increase_interval(state.polling_interval, state.polling_style, config)
        state = _restart_window(state, interval, now, config)
    else:
        interval = decrease_interval(state.polling_interval, state.polling_style, config)
        state = _restart_window(state, interval, now, config)

    if corrected_offset == measured_offset:
        span = (state.clock_sync_time - now).nanos
        skew = state.clock_skew
        if span != 0:
            skew = (state.clock_sync_offset - corrected_offset).nanos / span
        state = replace(state, clock_skew=skew, clock_sync_offset=corrected_offset, clock_sync_time=now)

    return replace(state, old_offset=corrected_offset, last_measurement_time=now)


def initialize_state(
    state: SpotClientState, measured_offset: Duration, measured_rtt: Duration, now: Instant, config: SpotConfig = DEFAULT_CONFIG
) -> SpotClientState:
    """Seed the model from the very first exchange; nothing is filtered."""
    return replace(
        state,
        old_offset=measured_offset,
        clock_skew=0.0,
        last_measurement_time=now,
        min_rtt=measured_rtt,
        recent_rtts=(measured_rtt,) if config.min_rtt_window is not None else (),
        num_samples=0,
        abs_error_sum=ZERO,
        observation_deadline=now + state.polling_interval * config.observation_polls,
        clock_sync_offset=measured_offset,
        clock_sync_time=now,
        initialized=True,
    )


def spot_poll_step(
    state: SpotClientState,
    sample: ExchangeSample,
    config: SpotConfig = DEFAULT_CONFIG,
    now: Instant | None = None,
) -> tuple[SpotClientState, Duration]:
    """Run one complete SPoT update for a finished exchange.

    ``now`` defaults to the client-clock midpoint of the exchange, the
    instant the measured offset actually describes.  Returns the new state
    and the offset it now holds; the next poll is due ``polling_interval``
    later.
    """
    m = compute_measurement(sample)
    if now is None:
        now = sample.client_midpoint()
    if not state.initialized:
        state = initialize_state(state, m.offset, m.rtt, now, config)
        return state, state.old_offset
    state = fold_min_rtt(state, m.rtt, config)
    corrected = filter_offset(state, m.offset, m.rtt, now)
    state = update_rate_sync(state, m.offset, corrected, now, config)
    return state, state.old_offset


class SpotClient:
    """Holds one client's registration, tunables and evolving state."""

    def __init__(self, registration: SpotRegistration | None = None, config: SpotConfig = DEFAULT_CONFIG) -> None:
        self.registration = registration or SpotRegistration()
        self.config = config
        self.state = SpotClientState.fresh(self.registration, config)

    @property
    def polling_interval(self) -> Duration:
        return self.state.polling_interval

    def step(self, sample: ExchangeSample) -> Duration:
        self.state, estimate = spot_poll_step(self.state, sample, self.config)
        return estimate

    def estimate_at(self, now: Instant) -> Duration:
        return estimate_offset(self.state, now)


class SpotServer:
    """Reference time source plus the client registry.

    Registrations are serialized by a lock; :meth:`registry` hands out a
    read-only snapshot.  Thin clients have their SPoT state kept (and the
    algorithm run) here rather than on the device.
    """

    def __init__(self, reference_clock: VirtualClock | None = None, config: SpotConfig = DEFAULT_CONFIG) -> None:
        self.reference_clock = reference_clock or VirtualClock()
        self.config = config
        self._lock = threading.Lock()
        self._ids = itertools.count(1)
        self._registry: dict[ClientId, SpotRegistration] = {}
        self._snapshot: Mapping[ClientId, SpotRegistration] = MappingProxyType({})
        self._thin_states: dict[ClientId, SpotClientState] = {}

    def register_client(self, registration: SpotRegistration) -> ClientId:
        with self._lock:
            client_id = ClientId(next(self._ids))
            self._registry[client_id] = registration
            self._snapshot = MappingProxyType(dict(self._registry))
            if registration.device_type is DeviceType.THIN:
                self._thin_states[client_id] = SpotClientState.fresh(registration, self.config)
        return client_id

    def registry(self) -> Mapping[ClientId, SpotRegistration]:
        return self._snapshot

    def thin_state(self, client_id: ClientId) -> SpotClientState:
        return self._thin_states[client_id]

    def thin_step(self, client_id: ClientId, sample: ExchangeSample) -> Duration:
        """Run the SPoT update server-side for a thin client."""
        state, estimate = spot_poll_step(self._thin_states[client_id], sample, self.config)
        self._thin_states[client_id] = state
        return estimate


def register_client(server: SpotServer, registration: SpotRegistration) -> ClientId:
    return server.register_client(registration)
