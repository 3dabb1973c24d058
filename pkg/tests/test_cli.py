"""Tests for the command line interface."""

from __future__ import annotations

from pathlib import Path
from typing import Iterator

import pandas as pd
import pytest
from click.testing import CliRunner, Result
from loguru import logger

from xroffload import __version__
from xroffload.cli import main
from xroffload.decorator import EXIT_CONFIG, EXIT_NUMERIC

SCENARIO = """
horizon = 3600.0
dt = 0.1

[[devices]]
id = "glass"
tdp_w = 0.6
battery_j = 7560.0
request_power_w = 0.6
request_duration_s = 65.0
idle_power_w = {idle}

[devices.thermal]
stages = [{{ r_th_c_per_w = 2.0, theta_s = 30.0 }}, {{ r_th_c_per_w = 74.0, theta_s = 300.0 }}]

[poisson.rate]
glass = {rate}
"""


@pytest.fixture(autouse=True)
def _reset_logging() -> Iterator[None]:
    yield
    logger.remove()
    logger.disable("xroffload")


def _invoke(*args: str) -> Result:
    return CliRunner().invoke(main, list(args))


def _scenario(tmp_path: Path, rate: float = 1 / 360, idle: float = 0.0) -> str:
    path = tmp_path / "custom.scenario"
    path.write_text(SCENARIO.format(rate=rate, idle=idle))
    return str(path)


def test_version() -> None:
    result = _invoke("--version")
    assert result.exit_code == 0
    assert __version__ in result.output


def test_solve_alpha_tiny_rate(tmp_path: Path) -> None:
    result = _invoke("solve-alpha", "--config", _scenario(tmp_path, rate=1e-7), "--out", str(tmp_path), "--mc-runs", "50")
    assert result.exit_code == 0, result.output
    frame = pd.read_csv(tmp_path / "alpha.csv")
    assert frame["alpha"].tolist() == [1.0]
    assert frame["binding"].tolist() == ["none"]


def test_solve_alpha_glass(tmp_path: Path) -> None:
    result = _invoke("solve-alpha", "--config", "glass.scenario", "--out", str(tmp_path), "--mc-runs", "200")
    assert result.exit_code == 0, result.output
    row = pd.read_csv(tmp_path / "alpha.csv").iloc[0]
    assert row["device"] == "glass"
    assert row["binding"] == "temperature"
    assert 0.0 < row["alpha"] < 1.0


def test_alpha_decreases_with_omega(tmp_path: Path) -> None:
    alphas = []
    for omega in ("0.8", "0.9", "0.95", "0.99"):
        out = tmp_path / omega
        result = _invoke("solve-alpha", "--config", "glass.scenario", "--out", str(out), "--mc-runs", "200", "--omega", omega)
        assert result.exit_code == 0, result.output
        alphas.append(float(pd.read_csv(out / "alpha.csv")["alpha"].iloc[0]))
    assert all(b <= a for a, b in zip(alphas, alphas[1:]))


def test_solve_alpha_paper_mode(tmp_path: Path) -> None:
    result = _invoke("solve-alpha", "--config", "glass.scenario", "--out", str(tmp_path), "--mode", "paper")
    assert result.exit_code == 0, result.output
    assert pd.read_csv(tmp_path / "alpha.csv")["alpha"].iloc[0] == pytest.approx(0.0355, abs=5e-4)


def test_simulate_always_offload(tmp_path: Path) -> None:
    result = _invoke("simulate", "--config", "glass.scenario", "--strategy", "always_offload", "--out", str(tmp_path))
    assert result.exit_code == 0, result.output
    trace = pd.read_csv(tmp_path / "always_offload_glass.csv")
    assert list(trace.columns) == ["time_s", "power_w", "temp_c", "battery_j", "cost"]
    assert len(trace) == 3601
    assert (trace["temp_c"] == 25.0).all()
    assert (trace["power_w"] == 0.0).all()
    assert trace["cost"].iloc[-1] == 10.0


def test_simulate_is_reproducible(tmp_path: Path) -> None:
    for out in ("a", "b"):
        result = _invoke("simulate", "--config", "glass.scenario", "--strategy", "sota", "--out", str(tmp_path / out))
        assert result.exit_code == 0, result.output
    for name in ("sota_glass.csv", "summary.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    summary = pd.read_csv(tmp_path / "a" / "summary.csv")
    assert 0.02 <= summary["temp_violation_fraction"].iloc[0] <= 0.08


def test_simulate_tao(tmp_path: Path) -> None:
    result = _invoke("simulate", "--config", "glass.scenario", "--strategy", "tao", "--mc-runs", "200", "--out", str(tmp_path), "--dt-out", "10")
    assert result.exit_code == 0, result.output
    trace = pd.read_csv(tmp_path / "tao_glass.csv")
    assert len(trace) == 361


def test_compare_identical_strategies(tmp_path: Path) -> None:
    result = _invoke("compare", "--config", "glass.scenario", "--strategy", "always_offload,always_offload", "--runs", "3", "--out", str(tmp_path))
    assert result.exit_code == 0, result.output
    deltas = pd.read_csv(tmp_path / "cost_deltas.csv")
    assert (deltas["cost_reduction_pct"] == 0.0).all()
    compare = pd.read_csv(tmp_path / "compare.csv")
    assert compare["runs"].tolist() == [3, 3]
    assert len(pd.read_csv(tmp_path / "ensemble_always_offload.csv")) == 3


def test_compare_needs_two_strategies(tmp_path: Path) -> None:
    result = _invoke("compare", "--config", "glass.scenario", "--strategy", "sota", "--out", str(tmp_path))
    assert result.exit_code == EXIT_CONFIG


def test_missing_config_exits_2(tmp_path: Path) -> None:
    result = _invoke("simulate", "--config", str(tmp_path / "missing.scenario"), "--out", str(tmp_path))
    assert result.exit_code == EXIT_CONFIG


def test_unknown_strategy_exits_2(tmp_path: Path) -> None:
    result = _invoke("simulate", "--config", "glass.scenario", "--strategy", "greedy", "--out", str(tmp_path))
    assert result.exit_code == EXIT_CONFIG


def test_infeasible_device_exits_3(tmp_path: Path) -> None:
    """An idle draw above the TDP cannot be fixed by offloading."""
    result = _invoke("solve-alpha", "--config", _scenario(tmp_path, idle=1.0), "--out", str(tmp_path), "--mc-runs", "20")
    assert result.exit_code == EXIT_NUMERIC


def test_replicate_without_plots(tmp_path: Path) -> None:
    result = _invoke("replicate", "--out", str(tmp_path), "--mc-runs", "200", "--plots", "off")
    assert result.exit_code == 0, result.output
    for name in (
        "impulse_responses.csv",
        "temperature_glass.csv",
        "temperature_hololens.csv",
        "battery.csv",
        "cost.csv",
        "temperature_histogram.csv",
        "arrivals.csv",
        "summary.csv",
        "alpha.csv",
    ):
        assert (tmp_path / name).is_file(), name
    assert not list(tmp_path.glob("*.svg"))
    temperature = pd.read_csv(tmp_path / "temperature_glass.csv")
    assert list(temperature.columns) == ["time_s", "tao", "sota", "limit_c"]
    assert len(temperature) == 3601
    arrivals = pd.read_csv(tmp_path / "arrivals.csv")
    assert len(arrivals) == 20
    assert arrivals["sota"].sum() == 20


@pytest.mark.slow
def test_replicate_is_byte_identical(tmp_path: Path) -> None:
    for out in ("a", "b"):
        result = _invoke("replicate", "--out", str(tmp_path / out), "--mc-runs", "200")
        assert result.exit_code == 0, result.output
    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert "temperature_glass.svg" in files
    assert "temperature_histogram.svg" in files
    for name in files:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name
