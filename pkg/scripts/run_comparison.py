"""Reproduce the SNTP vs SPoT offset-error table over the standard noise levels.

    python3 scripts/run_comparison.py --seeds 10 --out report.csv
"""

from __future__ import annotations

import argparse
import time

from chronosim.experiment import compare_protocols, format_table, write_report_csv
from chronosim.netsim import STANDARD_LEVELS, SimConfig


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", default=None, help="optional report CSV path")
    args = ap.parse_args()

    started = time.perf_counter()
    report = compare_protocols(STANDARD_LEVELS, range(args.seeds), SimConfig(), jobs=args.jobs)
    print(format_table(report))
    print(f"\n{args.seeds} seeds per cell, {time.perf_counter() - started:.1f}s")
    if args.out:
        write_report_csv(report, args.out)


if __name__ == "__main__":
    main()
