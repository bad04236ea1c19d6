"""Sweep the spike scale and print median offset-error stddev for both protocols.

    python3 scripts/sweep_spike_sigma.py --sigmas-ms 0,25,50,100,200,400 --seeds 5
"""

from __future__ import annotations

import argparse
import statistics

from chronosim.experiment import compute_stats, offset_error_series
from chronosim.netsim import NoiseLevel, NoiseModel, Protocol, SimConfig, run_simulation
from chronosim.timebase import Duration


def median_stddev_ms(protocol: Protocol, sigma: Duration, seeds: int) -> float:
    noise = NoiseModel(level=NoiseLevel.CUSTOM, sigma=sigma)
    values = []
    for seed in range(seeds):
        trace = run_simulation(SimConfig(seed=seed, noise=noise, protocol=protocol))
        values.append(compute_stats(offset_error_series(trace)).stddev_ms)
    return statistics.median(values)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sigmas-ms", default="0,25,50,100,150,250,400")
    ap.add_argument("--seeds", type=int, default=5)
    args = ap.parse_args()

    print(f"{'sigma_ms':>9} {'sntp_ms':>9} {'spot_ms':>9} {'ratio':>7}")
    for ms in (float(x) for x in args.sigmas_ms.split(",")):
        sigma = Duration.from_millis(ms)
        sntp = median_stddev_ms(Protocol.SNTP, sigma, args.seeds)
        spot = median_stddev_ms(Protocol.SPOT, sigma, args.seeds)
        print(f"{ms:9.1f} {sntp:9.3f} {spot:9.3f} {sntp / max(spot, 1e-3):7.1f}")


if __name__ == "__main__":
    main()
