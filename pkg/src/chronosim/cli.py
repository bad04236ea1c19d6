"""``chronosim`` command line.

Exit status: 0 on success, 1 on usage errors, 2 on runtime errors.
"""

from __future__ import annotations

import argparse
import logging
import os
import re
import sys
import time
from dataclasses import replace
from pathlib import Path
from typing import Sequence

from chronosim.errors import ChronosimError
from chronosim.exchange import compute_measurement
from chronosim.experiment import (
    compare_protocols,
    compute_stats,
    format_table,
    offset_error_series,
    read_trace_csv,
    write_report_csv,
    write_trace_csv,
)
from chronosim.netsim import NoiseLevel, NoiseModel, Protocol, SimConfig, run_simulation
from chronosim.sntp.client import DEFAULT_POLL_INTERVAL
from chronosim.sntp.live import NTP_PORT, live_poll, serve
from chronosim.spot import DEFAULT_ERROR_MARGIN, DeviceType, PollingStyle, SpotClientState, SpotRegistration
from chronosim.timebase import Duration, VirtualClock, round_half_away

log = logging.getLogger("chronosim")

SEED_ENV = "CHRONOSIM_SEED"

_UNITS = {"ns": 1, "us": 1_000, "ms": 1_000_000, "s": 10**9, "m": 60 * 10**9, "h": 3600 * 10**9}
_DURATION_RE = re.compile(r"^\s*(-?\d+(?:\.\d*)?|-?\.\d+)\s*(ns|us|ms|s|m|h)?\s*$")


def parse_duration(text: str) -> Duration:
    """``"3h"``, ``"90m"``, ``"64s"``, ``"10ms"``; a bare number is seconds."""
    m = _DURATION_RE.match(text)
    if not m:
        raise argparse.ArgumentTypeError(f"not a duration: {text!r} (use e.g. 64s, 10ms, 3h)")
    value, unit = m.groups()
    scale = _UNITS[unit or "s"]
    if "." in value:
        return Duration(round_half_away(float(value) * scale))
    return Duration(int(value) * scale)


def _positive_duration(text: str) -> Duration:
    d = parse_duration(text)
    if d.nanos <= 0:
        raise argparse.ArgumentTypeError(f"duration must be positive: {text!r}")
    return d


def _positive_int(text: str) -> int:
    try:
        n = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if n < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1: {text!r}")
    return n


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise SystemExit(f"chronosim: {SEED_ENV}={raw!r} is not an integer") from None


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:
        self.print_help(sys.stderr)
        self.exit(1, f"\n{self.prog}: error: {message}\n")


def _fmt_duration(d: Duration) -> str:
    for unit in ("h", "m", "s", "ms", "us"):
        if d.nanos % _UNITS[unit] == 0:
            return f"{d.nanos // _UNITS[unit]}{unit}"
    return f"{d.nanos}ns"


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = _Parser(prog="chronosim", description="SNTP vs SPoT clock synchronization experiments.", formatter_class=fmt)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    seed = _default_seed()

    def sim_options(p: argparse.ArgumentParser) -> None:
        p.add_argument("--duration", type=_positive_duration, default="3h",
                       metavar="DUR", help="simulated time per run (s/m/h suffixes)")
        p.add_argument("--device", choices=[d.value for d in DeviceType], default="thick", help="SPoT device type")
        p.add_argument("--polling", choices=[s.value for s in PollingStyle], default="aimd", help="SPoT polling style")
        p.add_argument("--error-margin", type=_positive_duration, default=_fmt_duration(DEFAULT_ERROR_MARGIN), metavar="DUR",
                       help="SPoT error margin")
        p.add_argument("--poll-interval", type=_positive_duration, default=_fmt_duration(DEFAULT_POLL_INTERVAL), metavar="DUR",
                       help="fixed SNTP polling interval")
        p.add_argument("--spike-probability", type=float, default=0.3, help="chance an exchange gets a one-way spike")
        p.add_argument("--base-delay", type=parse_duration, default="20ms", metavar="DUR",
                       help="one-way base delay")
        p.add_argument("--jitter", type=parse_duration, default="1ms", metavar="DUR",
                       help="sigma of the symmetric jitter floor")

    p = sub.add_parser("simulate", help="run one simulation and write its trace CSV", formatter_class=fmt)
    p.add_argument("--protocol", choices=[x.value for x in Protocol], default="spot", help="protocol to simulate")
    p.add_argument("--noise", choices=[lvl.value for lvl in NoiseLevel if lvl is not NoiseLevel.CUSTOM],
                   default="high", help="noise level")
    p.add_argument("--seed", type=int, default=seed, help=f"RNG seed (falls back to ${SEED_ENV})")
    p.add_argument("--clock-offset", type=parse_duration, default=None, metavar="DUR",
                   help="client clock offset; drawn from the seed when omitted")
    p.add_argument("--clock-skew-ppm", type=float, default=None,
                   help="client clock skew in ppm; drawn from the seed when omitted")
    sim_options(p)
    p.add_argument("--out", type=Path, default=Path("trace.csv"), help="trace CSV path")
    p.add_argument("--state-out", type=Path, default=None, help="also write the final SPoT state snapshot here")

    p = sub.add_parser("compare", help="run the SNTP vs SPoT grid and write a report CSV", formatter_class=fmt)
    p.add_argument("--seeds", type=_positive_int, default=10, help="number of seeds per cell")
    p.add_argument("--first-seed", type=int, default=seed, help=f"first seed (falls back to ${SEED_ENV})")
    p.add_argument("--levels", default="low,medium,high", help="comma-separated noise levels")
    p.add_argument("--jobs", type=_positive_int, default=1, help="worker processes")
    p.add_argument("--grid", type=_positive_duration, default="1s", metavar="DUR",
                   help="error sampling grid")
    sim_options(p)
    p.add_argument("--out", type=Path, default=Path("report.csv"), help="report CSV path")

    p = sub.add_parser("stats", help="offset-error statistics of a trace CSV", formatter_class=fmt)
    p.add_argument("trace", type=Path, help="trace CSV written by simulate")
    p.add_argument("--grid", type=_positive_duration, default="1s", metavar="DUR",
                   help="error sampling grid")
    p.add_argument("--state", type=Path, default=None, help="SPoT state snapshot to print alongside")

    p = sub.add_parser("live-poll", help="poll an SNTP/NTP server over UDP", formatter_class=fmt)
    p.add_argument("host", help="server host name or address")
    p.add_argument("--port", type=int, default=NTP_PORT, help="server UDP port")
    p.add_argument("--count", type=_positive_int, default=1, help="number of polls")
    p.add_argument("--interval", type=parse_duration, default="1s", metavar="DUR",
                   help="pause between polls")
    p.add_argument("--timeout", type=_positive_duration, default="2s", metavar="DUR",
                   help="reply timeout per poll")

    p = sub.add_parser("serve", help="run an SNTP responder until interrupted", formatter_class=fmt)
    p.add_argument("--bind", default="0.0.0.0", help="address to bind")
    p.add_argument("--port", type=int, default=NTP_PORT, help="UDP port (123 needs privileges)")
    p.add_argument("--stratum", type=int, default=1, choices=range(0, 16), metavar="N", help="stratum to advertise")
    return parser


def _noise(args: argparse.Namespace, level: str) -> NoiseModel:
    return NoiseModel.for_level(
        level,
        base_one_way_delay=args.base_delay,
        spike_probability=args.spike_probability,
        symmetric_jitter_sigma=args.jitter,
    )


def _base_config(args: argparse.Namespace, level: str, seed: int) -> SimConfig:
    return SimConfig(
        seed=seed,
        duration=args.duration,
        noise=_noise(args, level),
        spot_registration=SpotRegistration(
            device_type=DeviceType(args.device),
            polling_style=PollingStyle(args.polling),
            error_margin=args.error_margin,
        ),
        sntp_poll_interval=args.poll_interval,
    )


def cmd_simulate(args: argparse.Namespace) -> int:
    config = _base_config(args, args.noise, args.seed)
    clock = None
    if args.clock_offset is not None or args.clock_skew_ppm is not None:
        drawn = config.resolved_clock()
        clock = VirtualClock(
            base_offset=args.clock_offset if args.clock_offset is not None else drawn.base_offset,
            skew_ppm=args.clock_skew_ppm if args.clock_skew_ppm is not None else drawn.skew_ppm,
        )
    config = replace(config, protocol=Protocol(args.protocol), client_clock=clock)
    trace = run_simulation(config)
    write_trace_csv(trace, args.out)
    if args.state_out is not None:
        if not isinstance(trace.final_state, SpotClientState):
            raise ChronosimError("--state-out is only available for --protocol spot")
        args.state_out.write_text(trace.final_state.to_text(), encoding="utf-8")
    stats = compute_stats(offset_error_series(trace))
    print(f"{len(trace)} exchanges written to {args.out}; offset error stddev {stats.stddev_ms:.3f} ms")
    return 0


def cmd_compare(args: argparse.Namespace) -> int:
    try:
        levels = [NoiseLevel(x.strip()) for x in args.levels.split(",") if x.strip()]
    except ValueError as exc:
        raise _UsageError(str(exc)) from None
    if not levels or NoiseLevel.CUSTOM in levels:
        raise _UsageError("--levels takes a list of low, medium, high")
    base = _base_config(args, "high", args.first_seed)
    seeds = list(range(args.first_seed, args.first_seed + args.seeds))
    started = time.perf_counter()
    report = compare_protocols(levels, seeds, base, grid_step=args.grid, jobs=args.jobs)
    log.info("compare finished in %.1f s", time.perf_counter() - started)
    write_report_csv(report, args.out)
    print(f"Median offset-error stddev (ms) over {args.seeds} seeds, {_fmt_duration(args.duration)} each")
    print(format_table(report))
    return 0


def cmd_stats(args: argparse.Namespace) -> int:
    trace = read_trace_csv(args.trace)
    stats = compute_stats(offset_error_series(trace, args.grid))
    print(f"samples  {stats.count}")
    print(f"min_ms   {stats.min_ms:.6f}")
    print(f"max_ms   {stats.max_ms:.6f}")
    print(f"mean_ms  {stats.mean_ms:.6f}")
    print(f"stddev_ms {stats.stddev_ms:.6f}")
    if args.state is not None:
        state = SpotClientState.from_text(args.state.read_text(encoding="utf-8"))
        print()
        print(state.to_text(), end="")
    return 0


def cmd_live_poll(args: argparse.Namespace) -> int:
    remote = f"{args.host}:{args.port}"
    print(f"{'remote':<24}{'offset':>12}{'delay':>12}")
    for i in range(args.count):
        if i:
            time.sleep(args.interval.to_seconds())
        sample = live_poll(args.host, args.port, timeout=args.timeout.to_seconds())
        m = compute_measurement(sample)
        print(f"{remote:<24}{m.offset.to_millis():>12.3f}{m.rtt.to_millis():>12.3f}", flush=True)
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    server = serve((args.bind, args.port), stratum=args.stratum)
    host, port = server.address
    print(f"serving SNTP on {host}:{port} (stratum {args.stratum}); Ctrl-C to stop", flush=True)
    try:
        while True:
            time.sleep(3600)
    except KeyboardInterrupt:
        pass
    finally:
        server.close()
    return 0


class _UsageError(Exception):
    pass


COMMANDS = {
    "simulate": cmd_simulate,
    "compare": cmd_compare,
    "stats": cmd_stats,
    "live-poll": cmd_live_poll,
    "serve": cmd_serve,
}


def parse_and_dispatch(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) if isinstance(exc.code, int) else 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except _UsageError as exc:
        print(f"chronosim {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except (ChronosimError, OSError, ValueError) as exc:
        print(f"chronosim {args.command}: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(parse_and_dispatch())


if __name__ == "__main__":
    main()
