import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from chronosim.exchange import compute_measurement
from chronosim.experiment import offset_error_series
from chronosim.netsim import (
    LEVEL_SIGMA,
    Direction,
    NoiseLevel,
    NoiseModel,
    Protocol,
    SimConfig,
    default_client_clock,
    draw_spike_direction,
    exchange_once,
    make_rngs,
    run_simulation,
    sample_one_way_delay,
)
from chronosim.spot import DeviceType, SpotRegistration
from chronosim.timebase import Duration, Instant, VirtualClock

MS = 10**6
SEC = 10**9


def test_level_sigmas():
    assert {k.value: v.nanos // MS for k, v in LEVEL_SIGMA.items()} == {"low": 50, "medium": 150, "high": 250}
    assert NoiseModel.for_level("medium").sigma == Duration(150 * MS)
    with pytest.raises(ValueError):
        NoiseModel(level=NoiseLevel.LOW, sigma=Duration(1))
    with pytest.raises(ValueError):
        NoiseModel.for_level("custom", sigma=Duration(-1))
    with pytest.raises(ValueError):
        NoiseModel(spike_probability=1.5)


def test_noiseless_delay_is_base():
    noise = NoiseModel.noiseless(Duration(20 * MS))
    rng = np.random.Generator(np.random.PCG64(0))
    for direction in Direction:
        assert sample_one_way_delay(noise, rng, direction, Direction.FORWARD) == Duration(20 * MS)


def test_spike_is_one_sided():
    noise = NoiseModel.for_level("high", symmetric_jitter_sigma=Duration(0))
    rng = np.random.Generator(np.random.PCG64(1))
    assert sample_one_way_delay(noise, rng, Direction.REVERSE, Direction.FORWARD) == noise.base_one_way_delay
    assert sample_one_way_delay(noise, rng, Direction.FORWARD, Direction.FORWARD) > noise.base_one_way_delay


def test_delay_sequence_deterministic():
    noise = NoiseModel.for_level("high")

    def seq(seed):
        _, rng = make_rngs(seed)
        out = []
        for _ in range(200):
            spike = draw_spike_direction(noise, rng)
            out.append((sample_one_way_delay(noise, rng, Direction.FORWARD, spike),
                        sample_one_way_delay(noise, rng, Direction.REVERSE, spike)))
        return out

    assert seq(42) == seq(42)
    assert seq(42) != seq(43)


@settings(max_examples=30)
@given(st.integers(min_value=0, max_value=2**64 - 1), st.sampled_from(["low", "medium", "high"]))
def test_delays_nonnegative(seed, level):
    noise = NoiseModel.for_level(level, base_one_way_delay=Duration(0))
    _, rng = make_rngs(seed)
    for _ in range(100):
        spike = draw_spike_direction(noise, rng)
        for d in Direction:
            assert sample_one_way_delay(noise, rng, d, spike).nanos >= 0


def test_spike_direction_fair_and_rate():
    noise = NoiseModel.for_level("high")
    _, rng = make_rngs(7)
    draws = [draw_spike_direction(noise, rng) for _ in range(20000)]
    spiked = [d for d in draws if d is not None]
    # 4-sigma binomial bands
    assert abs(len(spiked) / 20000 - 0.3) < 4 * (0.3 * 0.7 / 20000) ** 0.5
    fwd = sum(d is Direction.FORWARD for d in spiked)
    assert abs(fwd / len(spiked) - 0.5) < 4 * (0.25 / len(spiked)) ** 0.5


def test_exchange_once_symmetric_zero_offsets():
    noise = NoiseModel.noiseless(Duration(15 * MS))
    _, rng = make_rngs(0)
    sample, done = exchange_once(VirtualClock(), VirtualClock(), noise, rng, Instant(0), processing=Duration(0))
    m = compute_measurement(sample)
    assert m.offset == Duration(0)
    assert m.rtt == Duration(30 * MS)
    assert done == Instant(30 * MS)


def test_sign_convention_client_fast_measures_negative():
    theta = Duration(8 * MS)
    noise = NoiseModel.noiseless()
    _, rng = make_rngs(0)
    sample, _ = exchange_once(VirtualClock(base_offset=theta), VirtualClock(), noise, rng, Instant(SEC))
    assert compute_measurement(sample).offset == -theta


def test_forward_spike_biases_by_half():
    theta = Duration(8 * MS)
    noise = NoiseModel.for_level("high", spike_probability=1.0, symmetric_jitter_sigma=Duration(0))
    _, rng = make_rngs(3)
    clock = VirtualClock(base_offset=theta)
    seen = set()
    for _ in range(50):
        sample, _ = exchange_once(clock, VirtualClock(), noise, rng, Instant(SEC))
        m = compute_measurement(sample)
        spike = m.rtt - Duration(2 * noise.base_one_way_delay.nanos)
        # sign of the bias tells the direction
        direction = 1 if m.offset > -theta else -1
        seen.add(direction)
        assert abs((m.offset + theta).nanos - direction * spike.nanos / 2) <= 1
    assert seen == {1, -1}


def noiseless_config(**kw):
    defaults = dict(seed=1, duration=Duration(3600 * SEC), noise=NoiseModel.noiseless())
    defaults.update(kw)
    return SimConfig(**defaults)


def test_sntp_noiseless_constant_offset():
    cfg = noiseless_config(protocol=Protocol.SNTP, client_clock=VirtualClock(base_offset=Duration(5 * MS)))
    trace = run_simulation(cfg)
    assert len(trace) == 57  # polls at 0, 64, ..., 3584 s
    for row in trace:
        assert row.estimate_after == Duration(5 * MS)
        assert row.true_offset == Duration(5 * MS)


def test_spot_noiseless_skew_prediction():
    cfg = noiseless_config(protocol=Protocol.SPOT, client_clock=VirtualClock(skew_ppm=100.0))
    trace = run_simulation(cfg)
    series = offset_error_series(trace)
    warm = (trace.rows[2].true_time - trace.rows[0].true_time).nanos // SEC + 1
    assert max(series[warm:]).nanos < 1000


def test_simulation_determinism():
    cfg = SimConfig(seed=1, duration=Duration(1800 * SEC))
    assert run_simulation(cfg) == run_simulation(cfg)
    other = SimConfig(seed=2, duration=Duration(1800 * SEC))
    assert run_simulation(cfg).rows != run_simulation(other).rows


@pytest.mark.parametrize("protocol", list(Protocol))
def test_trace_invariants(protocol):
    cfg = SimConfig(seed=11, duration=Duration(2 * 3600 * SEC), noise=NoiseModel.for_level("high"), protocol=protocol)
    trace = run_simulation(cfg)
    times = [r.true_time for r in trace]
    assert all(a < b for a, b in zip(times, times[1:]))
    for row in trace:
        assert row.true_offset == trace.clock.true_offset(row.true_time)
        m = compute_measurement(row.sample)
        assert row.measured_offset == m.offset and row.rtt == m.rtt
        assert row.estimate_after == -row.corrected_offset
        if protocol is Protocol.SNTP:
            assert row.corrected_offset == row.measured_offset


def test_paired_delays_across_protocols():
    """The k-th exchange of SNTP and SPoT runs sees identical delays."""
    base = dict(seed=5, duration=Duration(3600 * SEC), client_clock=VirtualClock())
    sntp = run_simulation(SimConfig(protocol=Protocol.SNTP, **base))
    spot = run_simulation(SimConfig(protocol=Protocol.SPOT, **base))
    n = min(len(sntp), len(spot))
    assert n > 10
    for a, b in zip(sntp.rows[:n], spot.rows[:n]):
        assert compute_measurement(a.sample).rtt == compute_measurement(b.sample).rtt
        assert a.measured_offset == b.measured_offset
    assert sntp.clock == spot.clock


def test_default_clock_draw():
    clocks = [default_client_clock(s) for s in range(200)]
    assert default_client_clock(3) == default_client_clock(3)
    skews = [c.skew_ppm for c in clocks]
    assert all(-100 <= s <= 100 for s in skews)
    offsets = np.array([c.base_offset.nanos for c in clocks]) / MS
    assert 35 < offsets.std() < 65


def test_thin_and_thick_traces_identical():
    def run(device):
        reg = SpotRegistration(device_type=device)
        return run_simulation(SimConfig(seed=9, duration=Duration(3600 * SEC), spot_registration=reg))

    assert run(DeviceType.THICK).rows == run(DeviceType.THIN).rows


def test_config_validation():
    with pytest.raises(ValueError):
        SimConfig(duration=Duration(0))
