"""The simple SNTP client: every measured offset is applied as-is."""

from __future__ import annotations

from dataclasses import dataclass, replace

from chronosim.exchange import ExchangeSample, compute_measurement
from chronosim.timebase import ZERO, Duration

DEFAULT_POLL_INTERVAL = Duration.from_seconds(64)


@dataclass(frozen=True)
class SntpClientState:
    polling_interval: Duration = DEFAULT_POLL_INTERVAL
    last_offset: Duration = ZERO
    last_delay: Duration = ZERO
    initialized: bool = False


def sntp_poll_step(state: SntpClientState, sample: ExchangeSample) -> tuple[SntpClientState, Duration]:
    """Step the client's offset to whatever this exchange measured.

    The path is assumed symmetric; there is no filtering and no rate model.
    """
    m = compute_measurement(sample)
    state = replace(state, last_offset=m.offset, last_delay=m.rtt, initialized=True)
    return state, m.offset


class SntpClient:
    def __init__(self, polling_interval: Duration = DEFAULT_POLL_INTERVAL) -> None:
        self.state = SntpClientState(polling_interval=polling_interval)

    @property
    def polling_interval(self) -> Duration:
        return self.state.polling_interval

    def step(self, sample: ExchangeSample) -> Duration:
        self.state, offset = sntp_poll_step(self.state, sample)
        return offset
