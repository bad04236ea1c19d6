"""Offset-error statistics, the SNTP vs SPoT comparison grid and CSV I/O.

Trace CSV columns::

    trueTime_ns, t1, t2, t3, t4, measured_offset_ns, corrected_offset_ns,
    estimate_ns, true_offset_ns, rtt_ns, estimate_rate

All integers are nanoseconds.  ``measured_offset_ns``/``corrected_offset_ns``
are corrections (server minus client); ``estimate_ns``/``true_offset_ns``
are clock errors (client minus true time).  ``estimate_rate`` is the held
estimate's slope per unit of client time (SPoT's skew model, 0 for SNTP).

Report CSV columns::

    protocol, level, seed, min_ms, max_ms, mean_ms, stddev_ms

Rows are ordered by protocol (sntp, spot), level (low, medium, high), seed.
"""

from __future__ import annotations

import csv
import logging
import math
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

from chronosim.errors import ChronosimError, EmptySeriesError
from chronosim.exchange import ExchangeSample
from chronosim.netsim import (
    STANDARD_LEVELS,
    NoiseLevel,
    NoiseModel,
    Protocol,
    SimConfig,
    SimTrace,
    TraceRow,
    run_simulation,
)
from chronosim.timebase import NANOS_PER_MILLI, Duration, Instant, VirtualClock

log = logging.getLogger(__name__)

ONE_SECOND = Duration.from_seconds(1)
RATIO_FLOOR = Duration.from_micros(1)

TRACE_COLUMNS = [
    "trueTime_ns", "t1", "t2", "t3", "t4",
    "measured_offset_ns", "corrected_offset_ns", "estimate_ns", "true_offset_ns", "rtt_ns",
    "estimate_rate",
]
REPORT_COLUMNS = ["protocol", "level", "seed", "min_ms", "max_ms", "mean_ms", "stddev_ms"]


class ExperimentIOError(ChronosimError, OSError):
    pass


def offset_error_series(trace: SimTrace, grid_step: Duration = ONE_SECOND) -> list[Duration]:
    """Absolute estimate error on a regular grid of true time.

    The grid starts at the first recorded exchange and stops before
    ``trace.end_time``.  Between exchanges the most recent estimate is held
    (and, for SPoT, extrapolated with its skew model).
    """
    if not trace.rows:
        raise EmptySeriesError("trace has no rows")
    if grid_step.nanos <= 0:
        raise ValueError("grid step must be positive")
    rows = trace.rows
    clock = trace.clock
    out: list[Duration] = []
    idx = 0
    t = rows[0].true_time.nanos
    end = trace.end_time.nanos
    step = grid_step.nanos
    while t < end:
        while idx + 1 < len(rows) and rows[idx + 1].true_time.nanos <= t:
            idx += 1
        now = Instant(t)
        truth = clock.true_offset(now)
        estimate = rows[idx].estimate_at(now + truth)
        out.append(abs(estimate - truth))
        t += step
    return out


@dataclass(frozen=True)
class OffsetErrorStats:
    """Summary of an error series; ``stddev`` is the population deviation."""

    count: int
    min_ns: int
    max_ns: int
    mean_ns: float
    stddev_ns: float

    @property
    def min_ms(self) -> float:
        return self.min_ns / NANOS_PER_MILLI

    @property
    def max_ms(self) -> float:
        return self.max_ns / NANOS_PER_MILLI

    @property
    def mean_ms(self) -> float:
        return self.mean_ns / NANOS_PER_MILLI

    @property
    def stddev_ms(self) -> float:
        return self.stddev_ns / NANOS_PER_MILLI


def _nanos(x: Duration | int) -> int:
    return x.nanos if isinstance(x, Duration) else int(x)


def compute_stats(series: Iterable[Duration | int]) -> OffsetErrorStats:
    """Exact min/max/mean/stddev of a nanosecond series.

    Sums are taken over Python integers, so the only rounding is the final
    conversion of the mean and the variance to float (then ``math.sqrt``).
    """
    values = [_nanos(x) for x in series]
    n = len(values)
    if n == 0:
        raise EmptySeriesError("cannot summarize an empty series")
    total = sum(values)
    total_sq = sum(v * v for v in values)
    variance = (n * total_sq - total * total) / (n * n)
    return OffsetErrorStats(
        count=n,
        min_ns=min(values),
        max_ns=max(values),
        mean_ns=total / n,
        stddev_ns=math.sqrt(variance),
    )


@dataclass(frozen=True)
class ReportRow:
    protocol: Protocol
    level: NoiseLevel
    seed: int
    min_ms: float
    max_ms: float
    mean_ms: float
    stddev_ms: float

    @classmethod
    def from_stats(cls, protocol: Protocol, level: NoiseLevel, seed: int, stats: OffsetErrorStats) -> ReportRow:
        return cls(protocol, level, seed, stats.min_ms, stats.max_ms, stats.mean_ms, stats.stddev_ms)


@dataclass(frozen=True)
class ComparisonReport:
    """Per-cell statistics plus per-level medians and SNTP/SPoT ratios."""

    rows: tuple[ReportRow, ...] = ()
    median_stddev_ms: dict[tuple[Protocol, NoiseLevel], float] = field(default_factory=dict)
    median_max_ms: dict[tuple[Protocol, NoiseLevel], float] = field(default_factory=dict)
    accuracy_ratio: dict[NoiseLevel, float] = field(default_factory=dict)

    @classmethod
    def from_rows(cls, rows: Sequence[ReportRow]) -> ComparisonReport:
        rows = tuple(sorted(rows, key=_row_key))
        cells: dict[tuple[Protocol, NoiseLevel], list[ReportRow]] = {}
        for row in rows:
            cells.setdefault((row.protocol, row.level), []).append(row)
        med_std = {k: statistics.median(r.stddev_ms for r in v) for k, v in cells.items()}
        med_max = {k: statistics.median(r.max_ms for r in v) for k, v in cells.items()}
        ratios = {}
        for level in sorted({lvl for _, lvl in cells}, key=_level_rank):
            sntp = med_std.get((Protocol.SNTP, level))
            spot = med_std.get((Protocol.SPOT, level))
            if sntp is not None and spot is not None:
                ratios[level] = accuracy_ratio(sntp, spot)
        return cls(rows=rows, median_stddev_ms=med_std, median_max_ms=med_max, accuracy_ratio=ratios)


def accuracy_ratio(sntp_stddev_ms: float, spot_stddev_ms: float) -> float:
    """SNTP/SPoT stddev ratio; 1 when both are below 1 us, else the
    denominator is floored at 1 us."""
    floor = RATIO_FLOOR.to_millis()
    if sntp_stddev_ms < floor and spot_stddev_ms < floor:
        return 1.0
    return sntp_stddev_ms / max(spot_stddev_ms, floor)


_PROTOCOL_ORDER = {Protocol.SNTP: 0, Protocol.SPOT: 1}
_LEVEL_ORDER = {NoiseLevel.LOW: 0, NoiseLevel.MEDIUM: 1, NoiseLevel.HIGH: 2, NoiseLevel.CUSTOM: 3}


def _level_rank(level: NoiseLevel) -> int:
    return _LEVEL_ORDER[level]


def _row_key(row: ReportRow) -> tuple[int, int, int]:
    return (_PROTOCOL_ORDER[row.protocol], _LEVEL_ORDER[row.level], row.seed)


def cell_config(base: SimConfig, protocol: Protocol, level: NoiseLevel, seed: int) -> SimConfig:
    """The config for one grid cell: only protocol, noise level and seed vary."""
    noise = base.noise
    if level is not NoiseLevel.CUSTOM:
        noise = NoiseModel.for_level(
            level,
            base_one_way_delay=noise.base_one_way_delay,
            spike_probability=noise.spike_probability,
            symmetric_jitter_sigma=noise.symmetric_jitter_sigma,
        )
    return replace(base, protocol=protocol, noise=noise, seed=seed)


def run_cell(args: tuple[SimConfig, Duration]) -> ReportRow:
    config, grid_step = args
    trace = run_simulation(config)
    stats = compute_stats(offset_error_series(trace, grid_step))
    return ReportRow.from_stats(config.protocol, config.noise.level, config.seed, stats)


def compare_protocols(
    levels: Sequence[NoiseLevel] = STANDARD_LEVELS,
    seeds: Sequence[int] = tuple(range(10)),
    base_config: SimConfig | None = None,
    grid_step: Duration = ONE_SECOND,
    jobs: int = 1,
) -> ComparisonReport:
    """Run both protocols over every (level, seed) cell with paired seeds.

    A cell's client clock and delay stream depend only on its seed, so SNTP
    and SPoT face identical conditions.
    """
    if not seeds:
        raise ValueError("need at least one seed")
    base = base_config or SimConfig()
    cells = [
        (cell_config(base, protocol, level, seed), grid_step)
        for protocol in (Protocol.SNTP, Protocol.SPOT)
        for level in levels
        for seed in seeds
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(run_cell, cells))
    else:
        rows = [run_cell(c) for c in cells]
    return ComparisonReport.from_rows(rows)


def format_table(report: ComparisonReport) -> str:
    """Median stddev (ms) per protocol (rows) and noise level (columns),
    plus an SNTP/SPoT ratio row."""
    levels = sorted({lvl for _, lvl in report.median_stddev_ms}, key=_level_rank)
    headers = [f"{lvl.value.capitalize()} Noise" for lvl in levels]
    width = max([14] + [len(h) + 2 for h in headers])
    lines = ["Protocol".ljust(12) + "".join(h.rjust(width) for h in headers)]
    for protocol, label in ((Protocol.SPOT, "SPoT"), (Protocol.SNTP, "SNTP")):
        cells = []
        for lvl in levels:
            value = report.median_stddev_ms.get((protocol, lvl))
            cells.append(("-" if value is None else f"{value:.1f}").rjust(width))
        lines.append(label.ljust(12) + "".join(cells))
    ratio_cells = [
        (f"{report.accuracy_ratio[lvl]:.1f}x" if lvl in report.accuracy_ratio else "-").rjust(width)
        for lvl in levels
    ]
    lines.append("SNTP/SPoT".ljust(12) + "".join(ratio_cells))
    return "\n".join(lines)


def _open_for_write(path: Path):
    try:
        return open(path, "w", newline="", encoding="utf-8")
    except OSError as exc:
        raise ExperimentIOError(f"cannot write {path}: {exc.strerror or exc}") from exc


def _open_for_read(path: Path):
    try:
        return open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise ExperimentIOError(f"cannot read {path}: {exc.strerror or exc}") from exc


def write_report_csv(report: ComparisonReport, path: str | Path) -> None:
    path = Path(path)
    with _open_for_write(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in report.rows:
            w.writerow([
                r.protocol.value, r.level.value, r.seed,
                repr(r.min_ms), repr(r.max_ms), repr(r.mean_ms), repr(r.stddev_ms),
            ])


def read_report_csv(path: str | Path) -> ComparisonReport:
    path = Path(path)
    with _open_for_read(path) as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != REPORT_COLUMNS:
            raise ExperimentIOError(f"{path}: unexpected header {reader.fieldnames}")
        rows = [
            ReportRow(
                protocol=Protocol(rec["protocol"]),
                level=NoiseLevel(rec["level"]),
                seed=int(rec["seed"]),
                min_ms=float(rec["min_ms"]),
                max_ms=float(rec["max_ms"]),
                mean_ms=float(rec["mean_ms"]),
                stddev_ms=float(rec["stddev_ms"]),
            )
            for rec in reader
        ]
    return ComparisonReport.from_rows(rows)


def write_trace_csv(trace: SimTrace, path: str | Path) -> None:
    path = Path(path)
    with _open_for_write(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for r in trace.rows:
            s = r.sample
            w.writerow([
                r.true_time.nanos, s.t1.nanos, s.t2.nanos, s.t3.nanos, s.t4.nanos,
                r.measured_offset.nanos, r.corrected_offset.nanos, r.estimate_after.nanos,
                r.true_offset.nanos, r.rtt.nanos, repr(r.estimate_rate),
            ])


def read_trace_csv(path: str | Path) -> SimTrace:
    """Load a trace written by :func:`write_trace_csv`.

    The CSV does not carry the clock parameters; the (linear) client clock is
    refitted from the first and last rows' true offsets, which reproduces
    them to within a couple of nanoseconds, and the run is taken to end at
    the last row.
    """
    path = Path(path)
    with _open_for_read(path) as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != TRACE_COLUMNS:
            raise ExperimentIOError(f"{path}: unexpected header {reader.fieldnames}")
        rows = []
        for rec in reader:
            sample = ExchangeSample(*(Instant(int(rec[k])) for k in ("t1", "t2", "t3", "t4")))
            rows.append(
                TraceRow(
                    true_time=Instant(int(rec["trueTime_ns"])),
                    sample=sample,
                    measured_offset=Duration(int(rec["measured_offset_ns"])),
                    corrected_offset=Duration(int(rec["corrected_offset_ns"])),
                    rtt=Duration(int(rec["rtt_ns"])),
                    estimate_after=Duration(int(rec["estimate_ns"])),
                    estimate_rate=float(rec["estimate_rate"]),
                    true_offset=Duration(int(rec["true_offset_ns"])),
                )
            )
    if not rows:
        return SimTrace(rows=(), clock=VirtualClock(), end_time=Instant(0))
    first, last = rows[0], rows[-1]
    span = (last.true_time - first.true_time).nanos
    skew_ppm = (last.true_offset - first.true_offset).nanos / span * 1e6 if span else 0.0
    clock = VirtualClock(base_offset=first.true_offset, skew_ppm=skew_ppm, t0=first.true_time)
    return SimTrace(rows=tuple(rows), clock=clock, end_time=last.true_time + Duration(1))


def write_csv(obj: ComparisonReport | SimTrace, path: str | Path) -> None:
    if isinstance(obj, SimTrace):
        write_trace_csv(obj, path)
    elif isinstance(obj, ComparisonReport):
        write_report_csv(obj, path)
    else:
        raise TypeError(f"cannot write {type(obj).__name__} as CSV")
