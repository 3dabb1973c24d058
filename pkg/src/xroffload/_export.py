"""CSV and SVG artifacts.

Every plot is rendered from its sibling CSV file only, so any other tool can
redraw it from the same data. CSVs use fixed float formatting and `\\n` line
endings; SVGs pin the hash salt and drop the date so that re-renders of the
same data are byte-identical.
"""

from __future__ import annotations

from pathlib import Path
from typing import Iterable, Sequence

import matplotlib as mpl

mpl.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402
from loguru import logger  # noqa: E402

from xroffload._chance import AlphaSolution  # noqa: E402
from xroffload._model import Scenario  # noqa: E402
from xroffload._series import grid_size  # noqa: E402
from xroffload._sim import (  # noqa: E402
    DeviceRun,
    EnsembleSummary,
    RunResult,
    empirical_temperature_distribution,
)
from xroffload._thermal import tabulate  # noqa: E402

FLOAT_FORMAT = "%.6f"

_STYLE = {
    "svg.hashsalt": "xroffload",
    "svg.fonttype": "path",
    "figure.figsize": (7.0, 3.6),
    "axes.grid": True,
    "grid.alpha": 0.3,
    "legend.fontsize": 8,
    "legend.frameon": False,
    "axes.spines.top": False,
    "axes.spines.right": False,
}
_COLORS = {"tao": "tab:blue", "sota": "tab:gray", "always_offload": "tab:green",
           "always_local": "tab:orange", "oracle": "tab:purple"}  # fmt: skip
_LINESTYLES = ("-", "--", ":", "-.")


def write_csv(frame: pd.DataFrame, path: Path, float_format: str = FLOAT_FORMAT) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=float_format, lineterminator="\n")
    logger.debug("wrote {} ({} rows)", path, len(frame))
    return path


def trace_frame(device_run: DeviceRun, dt_out: float) -> pd.DataFrame:
    """Traces of one device downsampled to `dt_out`."""
    power = device_run.power.downsample(dt_out)
    return pd.DataFrame(
        {
            "time_s": power.times,
            "power_w": power.samples,
            "temp_c": device_run.temperature.downsample(dt_out).samples,
            "battery_j": device_run.battery.downsample(dt_out).samples,
            "cost": device_run.cost.downsample(dt_out).samples,
        }
    )


def summary_frame(results: Iterable[RunResult]) -> pd.DataFrame:
    """One row per strategy and device; metrics come from the fine grid."""
    rows = []
    for result in results:
        for d in result.devices:
            m = d.metrics
            rows.append(
                {
                    "strategy": result.strategy.name,
                    "device": d.device,
                    "seed": result.seed,
                    "n_local": m.n_local,
                    "n_offloaded": m.n_offloaded,
                    "total_cost": m.total_cost,
                    "max_temp_c": m.max_temp_c,
                    "temp_violation_fraction": m.temp_violation_fraction,
                    "final_battery_j": m.final_battery_j,
                    "max_power_w": m.max_power_w,
                    "tdp_violated": m.tdp_violated,
                    "battery_violated": m.battery_violated,
                }
            )
    return pd.DataFrame(rows)


def alpha_frame(solutions: Sequence[AlphaSolution]) -> pd.DataFrame:
    return pd.DataFrame(
        [
            {
                "device": s.device,
                "alpha": s.alpha,
                "binding": s.binding,
                "slack": s.slack_at_alpha,
                "power_margin": s.margins.get("power", np.nan),
                "battery_margin": s.margins.get("battery", np.nan),
                "temperature_margin": s.margins.get("temperature", np.nan),
            }
            for s in solutions
        ]
    )


def write_run(result: RunResult, out: Path, dt_out: float) -> list[Path]:
    """Per-device trace CSVs `<strategy>_<device>.csv` of one run."""
    name = result.strategy.name
    return [
        write_csv(trace_frame(d, dt_out), out / f"{name}_{d.device}.csv") for d in result.devices
    ]


def compare_frame(ensembles: Sequence[EnsembleSummary]) -> pd.DataFrame:
    return pd.DataFrame([e.aggregates() for e in ensembles])


def cost_delta_frame(ensembles: Sequence[EnsembleSummary]) -> pd.DataFrame:
    """Cost reduction of each strategy relative to each baseline, in percent."""
    rows = []
    for e in ensembles:
        for base in ensembles:
            reference = base.mean_total_cost
            if reference > 0:
                delta = 100.0 * (reference - e.mean_total_cost) / reference
            else:
                delta = 0.0 if e.mean_total_cost == 0 else -np.inf
            rows.append({"strategy": e.strategy, "baseline": base.strategy, "cost_reduction_pct": delta})
    return pd.DataFrame(rows)


def _new() -> tuple[plt.Figure, plt.Axes]:
    with mpl.rc_context(_STYLE):
        return plt.subplots()


def _save(fig: plt.Figure, path: Path) -> Path:
    with mpl.rc_context(_STYLE):
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    logger.debug("rendered {}", path)
    return path


def _arrivals(ax: plt.Axes, arrivals: pd.DataFrame, device: str | None = None) -> None:
    rows = arrivals if device is None else arrivals[arrivals["device"] == device]
    times = np.unique(rows["arrival_s"].to_numpy())
    ax.plot(times, np.zeros_like(times), "k^", transform=ax.get_xaxis_transform(),
            markersize=6, clip_on=False, label="arrivals")  # fmt: skip


def _split(column: str) -> tuple[str | None, str]:
    """`(strategy, device)` of a column such as `always_offload_glass`."""
    for name in _COLORS:
        if column == name:
            return name, ""
        if column.startswith(f"{name}_"):
            return name, column[len(name) + 1 :]
    return None, column


def _color(column: str) -> str | None:
    strategy, _ = _split(column)
    return _COLORS[strategy] if strategy else None


def plot_lines(
    csv: Path, ylabel: str, svg: Path, arrivals: Path | None = None, device: str | None = None
) -> Path:
    """Line plot of every column of a `time_s`-indexed CSV.

    A `limit_c` column is drawn as a dotted red threshold.
    """
    frame = pd.read_csv(csv)
    fig, ax = _new()
    t = frame["time_s"]
    devices: list[str] = []
    for column in frame.columns.drop("time_s"):
        if column == "limit_c":
            ax.plot(t, frame[column], ":", color="tab:red", label="limit")
            continue
        _, device = _split(column)
        if device not in devices:
            devices.append(device)
        style = _LINESTYLES[devices.index(device) % len(_LINESTYLES)]
        ax.plot(t, frame[column], style, color=_color(column), label=column)
    if arrivals is not None:
        _arrivals(ax, pd.read_csv(arrivals), device)
    ax.set_xlabel("time [s]")
    ax.set_ylabel(ylabel)
    ax.legend(loc="best")
    return _save(fig, svg)


def plot_histogram(csv: Path, svg: Path) -> Path:
    frame = pd.read_csv(csv)
    fig, ax = _new()
    for (strategy, device), group in frame.groupby(["strategy", "device"], sort=False):
        width = group["bin_hi_c"] - group["bin_lo_c"]
        ax.bar(group["bin_lo_c"], group["mass"], width=width, align="edge", alpha=0.5,
               color=_color(str(strategy)), label=f"{strategy} {device}")  # fmt: skip
    limit = float(frame["limit_c"].iloc[0])
    ax.axvline(limit, linestyle=":", color="tab:red", label="limit")
    ax.set_xlabel("temperature [°C]")
    ax.set_ylabel("fraction of time")
    ax.legend(loc="best")
    return _save(fig, svg)


def impulse_frame(scenario: Scenario, dt_out: float) -> pd.DataFrame:
    """Impulse responses of every device on a shared `dt_out` grid."""
    kernels = {d.id: tabulate(d.thermal, dt_out).samples for d in scenario.devices}
    n = max(k.size for k in kernels.values() if k is not None)
    columns: dict[str, np.ndarray] = {"time_s": dt_out * np.arange(n)}
    for device, samples in kernels.items():
        assert samples is not None
        columns[device] = np.pad(samples, (0, n - samples.size))
    return pd.DataFrame(columns)


def _timeline(results: Sequence[RunResult], dt_out: float, pick: str) -> pd.DataFrame:
    first = results[0]
    n = grid_size(first.scenario.horizon_s, dt_out)
    columns: dict[str, np.ndarray] = {"time_s": dt_out * np.arange(n)}
    for result in results:
        for d in result.devices:
            series = getattr(d, pick).downsample(dt_out)
            columns[f"{result.strategy.name}_{d.device}"] = series.samples
    return pd.DataFrame(columns)


def replicate_artifacts(
    results: Sequence[RunResult],
    solutions: Sequence[AlphaSolution],
    out: Path,
    dt_out: float,
    plots: bool = True,
    n_bins: int = 40,
) -> list[Path]:
    """Write the full replication set: CSVs, and SVGs rendered from them.

    Args:
        results: One fixed-seed run per strategy on the same scenario.
        solutions: Solved local-service probabilities.
        out: Output directory.
        dt_out: Step of the exported traces.
        plots: Render SVGs next to the CSVs.
        n_bins: Temperature histogram bins.
    """
    if not results:
        raise ValueError("replication needs at least one run")
    out.mkdir(parents=True, exist_ok=True)
    scenario = results[0].scenario
    written = [write_csv(impulse_frame(scenario, dt_out), out / "impulse_responses.csv", "%.9g")]

    temperature: list[Path] = []
    for spec in scenario.devices:
        n = grid_size(scenario.horizon_s, dt_out)
        columns: dict[str, np.ndarray] = {"time_s": dt_out * np.arange(n)}
        for result in results:
            columns[result.strategy.name] = result[spec.id].temperature.downsample(dt_out).samples
        columns["limit_c"] = np.full(n, scenario.temp_limit_c)
        temperature.append(write_csv(pd.DataFrame(columns), out / f"temperature_{spec.id}.csv"))
    written += temperature

    battery = write_csv(_timeline(results, dt_out, "battery"), out / "battery.csv")
    cost = write_csv(_timeline(results, dt_out, "cost"), out / "cost.csv")

    histogram_rows = []
    for result in results:
        for spec in scenario.devices:
            hist = empirical_temperature_distribution(result, spec.id, n_bins)
            for lo, hi, mass in zip(hist.edges[:-1], hist.edges[1:], hist.mass):
                histogram_rows.append(
                    {"strategy": result.strategy.name, "device": spec.id, "bin_lo_c": lo,
                     "bin_hi_c": hi, "mass": mass, "exceedance": hist.exceedance,
                     "limit_c": hist.limit_c}  # fmt: skip
                )
    histogram = write_csv(pd.DataFrame(histogram_rows), out / "temperature_histogram.csv")

    arrival_rows = []
    for spec in scenario.devices:
        for req in results[0].scenario.requests_for(spec.id):
            row: dict[str, object] = {"device": spec.id, "request": req.id, "arrival_s": req.arrival_s}
            for result in results:
                row[result.strategy.name] = int(result.decisions[req.id])
            arrival_rows.append(row)
    arrivals = write_csv(pd.DataFrame(arrival_rows), out / "arrivals.csv")

    written += [battery, cost, histogram, arrivals]
    written.append(write_csv(summary_frame(results), out / "summary.csv"))
    written.append(write_csv(alpha_frame(solutions), out / "alpha.csv"))

    if plots:
        written.append(
            plot_lines(out / "impulse_responses.csv", "h(t) [°C/J]", out / "impulse_responses.svg")
        )
        for spec, path in zip(scenario.devices, temperature):
            svg = path.with_suffix(".svg")
            written.append(plot_lines(path, "temperature [°C]", svg, arrivals, spec.id))
        written.append(plot_lines(battery, "battery [J]", battery.with_suffix(".svg"), arrivals))
        written.append(plot_lines(cost, "cumulative cost", cost.with_suffix(".svg"), arrivals))
        written.append(plot_histogram(histogram, histogram.with_suffix(".svg")))
    logger.info("replication artifacts written to {}", out)
    return written
