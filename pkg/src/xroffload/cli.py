"""Command line interface.

```
xroffload solve-alpha --config glass.scenario --omega 0.95
xroffload simulate    --config replication.scenario --strategy tao,sota --out out/
xroffload compare     --config replication.scenario --strategy tao,sota,always_offload --runs 200
xroffload replicate   --out figures/
```

`--config` takes a scenario file, an experiment file or the name of a bundled
scenario. Flags override values from the file. Exit codes: 0 on success, 2 on
configuration errors, 3 on numeric failures.
"""

from __future__ import annotations

import sys
from pathlib import Path
from typing import Any, Callable, Mapping

import click
from environs import Env
from loguru import logger

from xroffload import __version__
from xroffload._chance import AlphaSolution, solve_all
from xroffload._config import ExperimentConfig, load_experiment
from xroffload._console import header, info, success, table, warning
from xroffload._export import (
    alpha_frame,
    compare_frame,
    cost_delta_frame,
    replicate_artifacts,
    summary_frame,
    write_csv,
    write_run,
)
from xroffload._sim import EnsembleSummary, RunResult, Strategy, monte_carlo, run
from xroffload.decorator import exit_codes
from xroffload.errors import ScenarioError

env = Env()
env.read_env()


def configure_logging(verbose: bool = False) -> None:
    """Send package logs to stderr at `XROFFLOAD_LOG_LEVEL` (DEBUG with `--verbose`)."""
    level = "DEBUG" if verbose else env.str("XROFFLOAD_LOG_LEVEL", "WARNING").upper()
    logger.remove()
    logger.add(sys.stderr, level=level, format="<dim>{time:HH:mm:ss}</> {level: <7} {message}")
    logger.enable("xroffload")


def _tao_alpha(config: ExperimentConfig) -> tuple[dict[str, float], list[AlphaSolution]]:
    if config.alpha is not None:
        return dict(config.alpha), []
    solutions = solve_all(config.scenario, config.policy)
    return {s.device: s.alpha for s in solutions}, solutions


def _strategies(config: ExperimentConfig) -> list[Strategy]:
    alpha: Mapping[str, float] | None = None
    if "tao" in config.strategies:
        alpha, _ = _tao_alpha(config)
    return [config.strategy(kind, alpha) for kind in config.strategies]


def cmd_solve_alpha(config: ExperimentConfig) -> list[AlphaSolution]:
    """Solve the local-service probability of every device; writes `alpha.csv`."""
    solutions = solve_all(config.scenario, config.policy)
    frame = alpha_frame(solutions)
    table(frame, title=f"alpha at omega={config.policy.omega} ({config.policy.mode})")
    write_csv(frame, config.out / "alpha.csv")
    return solutions


def cmd_simulate(config: ExperimentConfig) -> list[RunResult]:
    """One run per strategy; writes per-device trace CSVs and `summary.csv`."""
    results = []
    for strategy in _strategies(config):
        result = run(config.scenario, strategy, config.seed)
        write_run(result, config.out, config.dt_out)
        results.append(result)
    frame = summary_frame(results)
    table(frame.drop(columns=["seed", "tdp_violated", "battery_violated"]), title="summary")
    write_csv(frame, config.out / "summary.csv")
    return results


def cmd_compare(config: ExperimentConfig) -> list[EnsembleSummary]:
    """Monte Carlo ensembles of at least two strategies with pairwise cost deltas."""
    if len(config.strategies) < 2:
        raise ScenarioError("compare needs at least two strategies", field="strategies")
    ensembles = []
    for strategy in _strategies(config):
        ensemble = monte_carlo(config.scenario, strategy, config.runs, config.seed, config.workers)
        write_csv(ensemble.to_frame(), config.out / f"ensemble_{strategy.name}.csv")
        ensembles.append(ensemble)
    frame = compare_frame(ensembles)
    deltas = cost_delta_frame(ensembles)
    table(frame, title=f"{config.runs} runs per strategy")
    table(deltas[deltas["strategy"] != deltas["baseline"]], title="cost reduction [%]")
    write_csv(frame, config.out / "compare.csv")
    write_csv(deltas, config.out / "cost_deltas.csv")
    for e in ensembles:
        if e.temp_violation_run_fraction > 0:
            warning(
                f"{e.strategy} exceeds {config.scenario.temp_limit_c} °C in "
                f"{e.temp_violation_run_fraction:.1%} of the runs"
            )
    return ensembles


def cmd_replicate(config: ExperimentConfig) -> list[Path]:
    """Fixed-seed runs of every strategy plus the full CSV and SVG artifact set."""
    alpha, solutions = _tao_alpha(config)
    if not solutions:
        solutions = solve_all(config.scenario, config.policy)
    strategies = [config.strategy(kind, alpha) for kind in config.strategies]
    results = [run(config.scenario, s, config.seed) for s in strategies]
    paths = replicate_artifacts(results, solutions, config.out, config.dt_out, config.plots)
    table(summary_frame(results).drop(columns=["seed"]), title="replication")
    return paths


def _experiment_options(command: Callable[..., Any]) -> Callable[..., Any]:
    options = [
        click.option("--config", "config_path", default=None, help="Scenario or experiment file, or a bundled name."),
        click.option("--out", type=click.Path(file_okay=False, path_type=Path), default=None, help="Output directory."),
        click.option("--seed", type=click.IntRange(min=0), default=None, help="Base seed of the runs."),
        click.option("--runs", type=click.IntRange(min=1), default=None, help="Ensemble size."),
        click.option("--omega", type=click.FloatRange(0, 1, min_open=True, max_open=True), default=None, help="Confidence level."),
        click.option("--mode", type=click.Choice(["paper", "busy-server", "busy_server"]), default=None, help="Load model of the chance constraints."),
        click.option("--mc-runs", type=click.IntRange(min=1), default=None, help="Monte Carlo runs of the thermal constraint."),
        click.option("--strategy", "strategies", default=None, help="Comma separated strategies."),
        click.option("--plots", type=click.Choice(["on", "off"]), default=None, help="Render SVG plots."),
        click.option("--dt-out", type=click.FloatRange(min=0, min_open=True), default=None, help="Step of exported traces [s]."),
        click.option("--workers", type=click.IntRange(min=1), default=None, help="Process pool size for ensembles."),
    ]  # fmt: skip
    for option in reversed(options):
        command = option(command)
    return command


def _config(default: str | None, config_path: str | None, **flags: Any) -> ExperimentConfig:
    path = config_path or default
    if path is None:
        raise click.UsageError("--config is required")
    config = load_experiment(path)
    strategies = flags.pop("strategies")
    plots = flags.pop("plots")
    mode = flags.pop("mode")
    return config.override(
        strategies=tuple(s.strip() for s in strategies.split(",") if s.strip()) if strategies else None,
        plots=None if plots is None else plots == "on",
        mode=mode.replace("-", "_") if mode else None,
        **flags,
    )


def _command(name: str, default_config: str | None = None) -> Callable[[Callable[[ExperimentConfig], Any]], Any]:
    def register(body: Callable[[ExperimentConfig], Any]) -> Any:
        @main.command(name, help=body.__doc__)
        @_experiment_options
        @exit_codes
        def command(config_path: str | None, **flags: Any) -> None:
            config = _config(default_config, config_path, **flags)
            header(f"{name}: {config.scenario.name}")
            info(f"writing to {config.out}")
            body(config)
            success(f"{name} done")

        return command

    return register


@click.group()
@click.version_option(__version__, prog_name="xroffload")
@click.option("--verbose", "-v", is_flag=True, help="Debug logging on stderr.")
def main(verbose: bool) -> None:
    """Thermal-, power- and battery-aware offloading for XR wearables."""
    configure_logging(verbose)


_command("solve-alpha")(cmd_solve_alpha)
_command("simulate")(cmd_simulate)
_command("compare")(cmd_compare)
_command("replicate", default_config="replication.toml")(cmd_replicate)


if __name__ == "__main__":
    main()
