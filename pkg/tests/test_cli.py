import re

import pytest

from chronosim.cli import build_parser, parse_and_dispatch, parse_duration
from chronosim.sntp import serve
from chronosim.spot import SpotClientState
from chronosim.timebase import Duration


@pytest.mark.parametrize(
    "text, nanos",
    [("3h", 3 * 3600 * 10**9), ("90m", 5400 * 10**9), ("64s", 64 * 10**9), ("10ms", 10**7),
     ("250us", 250_000), ("7ns", 7), ("1.5", 1_500_000_000), ("2.5ms", 2_500_000)],
)
def test_parse_duration(text, nanos):
    assert parse_duration(text) == Duration(nanos)


def test_parse_duration_rejects_garbage():
    import argparse

    with pytest.raises(argparse.ArgumentTypeError):
        parse_duration("soon")


@pytest.mark.parametrize("command", [None, "simulate", "compare", "stats", "live-poll", "serve"])
def test_help_lists_every_flag_with_default(command, capsys):
    argv = ([command] if command else []) + ["--help"]
    assert parse_and_dispatch(argv) == 0
    out = capsys.readouterr().out
    parser = build_parser()
    sub = parser if command is None else parser._subparsers._group_actions[0].choices[command]
    for action in sub._actions:
        if action.option_strings and action.dest != "help":
            assert action.option_strings[-1] in out
    if command:
        opts = [a for a in sub._actions if a.option_strings and a.dest != "help"]
        assert out.count("(default:") >= len(opts)


def test_unknown_flag_is_usage_error(capsys):
    assert parse_and_dispatch(["simulate", "--frobnicate"]) == 1
    err = capsys.readouterr().err
    assert "usage:" in err and "--frobnicate" in err


def test_missing_command_is_usage_error(capsys):
    assert parse_and_dispatch([]) == 1


def test_runtime_error_exit_code(tmp_path, capsys):
    assert parse_and_dispatch(["stats", str(tmp_path / "missing.csv")]) == 2
    assert "missing.csv" in capsys.readouterr().err


def test_simulate_is_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    argv = ["simulate", "--protocol", "spot", "--noise", "high", "--seed", "42", "--duration", "1h"]
    assert parse_and_dispatch(argv + ["--out", str(a)]) == 0
    assert parse_and_dispatch(argv + ["--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_seed_env_fallback(tmp_path, monkeypatch, capsys):
    argv = ["simulate", "--duration", "20m"]
    monkeypatch.setenv("CHRONOSIM_SEED", "42")
    assert parse_and_dispatch(argv + ["--out", str(tmp_path / "env.csv")]) == 0
    monkeypatch.delenv("CHRONOSIM_SEED")
    assert parse_and_dispatch(argv + ["--seed", "42", "--out", str(tmp_path / "flag.csv")]) == 0
    assert parse_and_dispatch(argv + ["--seed", "43", "--out", str(tmp_path / "other.csv")]) == 0
    env, flag, other = ((tmp_path / f).read_bytes() for f in ("env.csv", "flag.csv", "other.csv"))
    assert env == flag != other


def test_simulate_then_stats(tmp_path, capsys):
    trace, state = tmp_path / "t.csv", tmp_path / "s.txt"
    assert parse_and_dispatch([
        "simulate", "--duration", "30m", "--seed", "3", "--out", str(trace), "--state-out", str(state),
    ]) == 0
    snapshot = SpotClientState.from_text(state.read_text())
    assert snapshot.initialized
    capsys.readouterr()
    assert parse_and_dispatch(["stats", str(trace), "--state", str(state)]) == 0
    out = capsys.readouterr().out
    assert re.search(r"stddev_ms\s+\d+\.\d+", out)
    assert "clock_skew=" in out


def test_state_out_requires_spot(tmp_path, capsys):
    argv = ["simulate", "--protocol", "sntp", "--duration", "10m", "--out", str(tmp_path / "t.csv"),
            "--state-out", str(tmp_path / "s.txt")]
    assert parse_and_dispatch(argv) == 2


def test_simulate_clock_override(tmp_path, capsys):
    out = tmp_path / "t.csv"
    argv = ["simulate", "--protocol", "sntp", "--duration", "5m", "--noise", "low", "--spike-probability", "0",
            "--jitter", "0", "--clock-offset", "5ms", "--clock-skew-ppm", "0", "--out", str(out)]
    assert parse_and_dispatch(argv) == 0
    rows = out.read_text().splitlines()[1:]
    assert {r.split(",")[7] for r in rows} == {"5000000"}


def test_compare_prints_table(tmp_path, capsys):
    out = tmp_path / "report.csv"
    assert parse_and_dispatch(["compare", "--seeds", "2", "--duration", "30m", "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert "Low Noise" in text and "Medium Noise" in text and "High Noise" in text
    assert re.search(r"^SPoT\s", text, re.M) and re.search(r"^SNTP\s", text, re.M)
    assert len(out.read_text().splitlines()) == 1 + 2 * 3 * 2


def test_compare_rejects_bad_levels(tmp_path, capsys):
    assert parse_and_dispatch(["compare", "--levels", "loud", "--out", str(tmp_path / "r.csv")]) == 1


def test_live_poll_against_own_server(capsys):
    with serve(("127.0.0.1", 0)) as srv:
        host, port = srv.address
        assert parse_and_dispatch(["live-poll", host, "--port", str(port), "--count", "3", "--interval", "0"]) == 0
    lines = capsys.readouterr().out.splitlines()
    data = [line for line in lines[1:] if line.strip()]
    assert len(data) == 3
    for line in data:
        remote, offset_ms, delay_ms = line.split()
        assert remote == f"{host}:{port}"
        assert abs(float(offset_ms)) < 5.0 and float(delay_ms) >= 0.0


def test_live_poll_unreachable(capsys):
    import socket

    with socket.socket(socket.AF_INET, socket.SOCK_DGRAM) as s:
        s.bind(("127.0.0.1", 0))
        port = s.getsockname()[1]
    assert parse_and_dispatch(["live-poll", "127.0.0.1", "--port", str(port), "--timeout", "300ms"]) == 2
