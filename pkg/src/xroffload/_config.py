"""Scenario and experiment files.

Both are TOML documents. A scenario file describes the horizon, the devices
with their thermal models, and the request source; an experiment file adds an
`[experiment]` table with strategies, policy, seeds and output settings and
either points at a scenario file or carries the scenario sections inline.
See `docs/scenario-format.md` for the schema.

Bundled scenarios (`glass.scenario`, `hololens.scenario`,
`replication.scenario`, `replication.toml`) are found by name.
"""

from __future__ import annotations

import dataclasses
from collections.abc import Mapping
from dataclasses import dataclass, field
from importlib import resources
from os import PathLike
from pathlib import Path
from typing import Any, Iterable, Self

import toml
from loguru import logger

from xroffload._chance import ConfidencePolicy
from xroffload._model import (
    DEFAULT_DT_S,
    DEFAULT_TEMP_LIMIT_C,
    DeviceSpec,
    PoissonSource,
    Request,
    Scenario,
)
from xroffload._sim import STRATEGY_KINDS, Strategy, StrategyKind
from xroffload._thermal import ImpulseResponse, ThermalStage, load_impulse_csv
from xroffload.errors import ScenarioError

BUNDLED = ("glass.scenario", "hololens.scenario", "replication.scenario", "replication.toml")


def bundled_scenario(name: str) -> Path:
    """Path of a scenario file shipped with the package."""
    path = Path(str(resources.files("xroffload") / "scenarios" / name))
    if not path.is_file():
        raise ScenarioError(f"no bundled scenario named {name!r}, choose from {BUNDLED}")
    return path


def resolve_path(name: str | PathLike[str], base: Path | None = None) -> Path:
    """Resolve a file argument: as given, relative to `base`, then bundled."""
    path = Path(name)
    candidates = [path] if path.is_absolute() or base is None else [base / path, path]
    for candidate in candidates:
        if candidate.is_file():
            return candidate
    if path.name in BUNDLED and path.name == str(name):
        return bundled_scenario(path.name)
    raise ScenarioError("file not found", source=str(name))


def _read_toml(path: Path) -> dict[str, Any]:
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError(f"cannot read file: {exc.strerror}", source=str(path)) from exc
    try:
        return toml.loads(text)
    except toml.TomlDecodeError as exc:
        raise ScenarioError(exc.msg, source=str(path), line=exc.lineno) from exc


class _Table:
    """Typed access to one TOML table with field paths in error messages."""

    def __init__(self, data: Mapping[str, Any], path: str, source: str | None):
        if not isinstance(data, Mapping):
            raise ScenarioError("expected a table", source=source, field=path or None)
        self.data = data
        self.path = path
        self.source = source

    def _field(self, key: str) -> str:
        return f"{self.path}.{key}" if self.path else key

    def error(self, message: str, key: str | None = None) -> ScenarioError:
        return ScenarioError(message, source=self.source, field=self._field(key) if key else self.path)

    def __contains__(self, key: str) -> bool:
        return key in self.data

    def number(self, key: str, default: float | None = None, *, positive: bool = False) -> float:
        if key not in self.data:
            if default is None:
                raise self.error("missing required field", key)
            return default
        value = self.data[key]
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise self.error(f"expected a number, got {value!r}", key)
        if positive and not value > 0:
            raise self.error(f"must be positive, got {value}", key)
        return float(value)

    def integer(self, key: str, default: int) -> int:
        value = self.data.get(key, default)
        if isinstance(value, bool) or not isinstance(value, int) or value < 0:
            raise self.error(f"expected a non-negative integer, got {value!r}", key)
        return value

    def string(self, key: str, default: str | None = None) -> str:
        if key not in self.data:
            if default is None:
                raise self.error("missing required field", key)
            return default
        value = self.data[key]
        if not isinstance(value, str):
            raise self.error(f"expected a string, got {value!r}", key)
        return value

    def boolean(self, key: str, default: bool) -> bool:
        value = self.data.get(key, default)
        if not isinstance(value, bool):
            raise self.error(f"expected true or false, got {value!r}", key)
        return value

    def table(self, key: str) -> _Table:
        return _Table(self.data.get(key, {}), self._field(key), self.source)

    def tables(self, key: str) -> list[_Table]:
        items = self.data.get(key, [])
        if not isinstance(items, list):
            raise self.error("expected an array of tables", key)
        return [_Table(item, f"{self._field(key)}[{i}]", self.source) for i, item in enumerate(items)]


def _thermal(table: _Table, base: Path | None) -> ImpulseResponse:
    kind = table.string("kind", "parametric")
    if kind == "tabulated":
        csv = Path(table.string("csv"))
        if not csv.is_absolute() and base is not None:
            csv = base / csv
        return load_impulse_csv(csv)
    if kind != "parametric":
        raise table.error(f"unknown thermal kind {kind!r}", "kind")
    stages = table.tables("stages")
    if not stages:
        raise table.error("a parametric thermal model needs at least one stage", "stages")
    parsed = [
        ThermalStage(s.number("r_th_c_per_w", positive=True), s.number("theta_s", positive=True))
        for s in stages
    ]
    horizon = table.number("truncation_horizon_s") if "truncation_horizon_s" in table else None
    try:
        return ImpulseResponse.parametric(parsed, horizon)
    except ValueError as exc:
        raise table.error(str(exc), "truncation_horizon_s") from exc


def _device(table: _Table, base: Path | None) -> DeviceSpec:
    tdp = table.number("tdp_w", positive=True)
    power = table.number("request_power_w", positive=True)
    if power > tdp:
        raise table.error(f"request power {power} W exceeds TDP {tdp} W", "request_power_w")
    try:
        return DeviceSpec(
            id=table.string("id"),
            tdp_watts=tdp,
            battery_joules=table.number("battery_j", positive=True),
            request_power_watts=power,
            request_duration_s=table.number("request_duration_s", positive=True),
            thermal=_thermal(table.table("thermal"), base),
            ambient_temp_c=table.number("ambient_c", 25.0),
            idle_power_watts=table.number("idle_power_w", 0.0),
        )
    except ValueError as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise table.error(str(exc)) from exc


def _requests(tables: Iterable[_Table], devices: Mapping[str, DeviceSpec]) -> list[Request]:
    requests = []
    counts = dict.fromkeys(devices, 0)
    for table in tables:
        device_id = table.string("device")
        if device_id not in devices:
            raise table.error(f"unknown device {device_id!r}", "device")
        spec = devices[device_id]
        i = counts[device_id]
        counts[device_id] += 1
        try:
            requests.append(
                Request(
                    id=table.string("id", f"{device_id}-{i:04d}"),
                    device=device_id,
                    arrival_s=table.number("arrival_s"),
                    duration_s=table.number("duration_s", spec.request_duration_s),
                    power_watts=table.number("power_w", spec.request_power_watts),
                )
            )
        except ValueError as exc:
            if isinstance(exc, ScenarioError):
                raise
            raise table.error(str(exc)) from exc
    return requests


def parse_scenario(
    data: Mapping[str, Any], source: str | None = None, base: Path | None = None
) -> Scenario:
    """Build a `Scenario` from a parsed TOML document.

    Args:
        data: Parsed document.
        source: File name used in error messages.
        base: Directory that relative impulse-response paths refer to.

    Raises:
        ScenarioError: On any schema or consistency problem.
    """
    root = _Table(data, "", source)
    devices = [_device(t, base) for t in root.tables("devices")]
    by_id = {d.id: d for d in devices}

    requests = _requests(root.tables("requests"), by_id) if "requests" in root else None
    poisson = None
    if "poisson" in root:
        rates = root.table("poisson").table("rate")
        parsed = {k: rates.number(k) for k in rates.data}
        for device_id, rate in parsed.items():
            if rate < 0:
                raise rates.error(f"rate must be non-negative, got {rate}", device_id)
        poisson = PoissonSource(parsed)

    try:
        scenario = Scenario(
            horizon_s=root.number("horizon", positive=True),
            devices=tuple(devices),
            requests=tuple(requests) if requests is not None else None,
            poisson=poisson,
            temp_limit_c=root.table("limits").number("temp_c", DEFAULT_TEMP_LIMIT_C),
            offload_unit_cost=root.table("cost").number("offload_unit", 1.0, positive=True),
            dt_s=root.number("dt", DEFAULT_DT_S, positive=True),
            name=root.string("name", Path(source).stem if source else "scenario"),
        )
    except ScenarioError as exc:
        if exc.source is None:
            exc.source = source
        raise
    logger.debug(
        "loaded scenario {}: {} devices, {} requests, dt={}",
        scenario.name,
        len(scenario.devices),
        len(scenario.requests) if scenario.requests is not None else "poisson",
        scenario.dt_s,
    )
    return scenario


def load_scenario(path: str | PathLike[str]) -> Scenario:
    """Read a scenario file, or a bundled scenario by name."""
    resolved = resolve_path(path)
    return parse_scenario(_read_toml(resolved), source=str(resolved), base=resolved.parent)


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    """Everything a CLI command needs.

    Attributes:
        scenario: The scenario to play.
        source: File the configuration came from.
        strategies: Strategies to run, in order.
        policy: Confidence policy for the chance solver.
        out: Output directory.
        plots: Whether to render SVG plots next to the CSVs.
        seed: Base seed of simulations.
        runs: Ensemble size of `compare`.
        dt_out: Step of exported traces.
        guard: TDP guard of the `tao` strategy.
        alpha: Fixed `tao` probabilities; solved from the policy when `None`.
        workers: Process pool size for ensembles.
    """

    scenario: Scenario
    source: Path | None = None
    strategies: tuple[StrategyKind, ...] = ("tao", "sota")
    policy: ConfidencePolicy = field(default_factory=ConfidencePolicy)
    out: Path = Path("out")
    plots: bool = True
    seed: int = 0
    runs: int = 100
    dt_out: float = 1.0
    guard: bool = False
    alpha: Mapping[str, float] | None = None
    workers: int | None = None

    def __post_init__(self) -> None:
        for name in self.strategies:
            if name not in STRATEGY_KINDS:
                raise ScenarioError(
                    f"unknown strategy {name!r}, choose from {', '.join(STRATEGY_KINDS)}",
                    source=str(self.source) if self.source else None,
                    field="experiment.strategies",
                )
        if self.runs < 1:
            raise ScenarioError("runs must be at least 1", field="experiment.runs")
        if not self.dt_out > 0:
            raise ScenarioError("dt_out must be positive", field="experiment.dt_out")

    def override(self, **changes: Any) -> Self:
        """Copy with every change that is not `None` applied."""
        policy_keys = {"omega", "mode", "mc_runs", "mc_seed"}
        policy_changes = {k: changes.pop(k) for k in list(changes) if k in policy_keys}
        policy_changes = {k: v for k, v in policy_changes.items() if v is not None}
        updates = {k: v for k, v in changes.items() if v is not None}
        if policy_changes:
            try:
                updates["policy"] = dataclasses.replace(self.policy, **policy_changes)
            except ValueError as exc:
                raise ScenarioError(str(exc), field="experiment.policy") from exc
        return dataclasses.replace(self, **updates)

    def strategy(self, kind: StrategyKind, alpha: Mapping[str, float] | None = None) -> Strategy:
        """Strategy instance; `tao` needs `alpha` unless fixed in the config."""
        if kind != "tao":
            return Strategy(kind)
        alpha = self.alpha if self.alpha is not None else alpha
        if alpha is None:
            raise ValueError("tao needs alpha, solve it first")
        return Strategy.tao(alpha, guard=self.guard, rng_seed=self.policy.mc_seed)


def load_experiment(path: str | PathLike[str]) -> ExperimentConfig:
    """Read an experiment file; a bare scenario file yields the defaults."""
    resolved = resolve_path(path)
    data = _read_toml(resolved)
    source = str(resolved)
    if "experiment" not in data:
        return ExperimentConfig(parse_scenario(data, source, resolved.parent), source=resolved)

    exp = _Table(data["experiment"], "experiment", source)
    if "scenario" in exp:
        scenario_path = resolve_path(exp.string("scenario"), resolved.parent)
        scenario = parse_scenario(
            _read_toml(scenario_path), str(scenario_path), scenario_path.parent
        )
    else:
        inline = {k: v for k, v in data.items() if k != "experiment"}
        scenario = parse_scenario(inline, source, resolved.parent)

    strategies = exp.data.get("strategies", ["tao", "sota"])
    if not isinstance(strategies, list) or not all(isinstance(s, str) for s in strategies):
        raise exp.error("expected a list of strategy names", "strategies")

    pol = exp.table("policy")
    try:
        policy = ConfidencePolicy(
            omega=pol.number("omega", 0.95),
            mode=pol.string("mode", "busy_server").replace("-", "_"),  # type: ignore[arg-type]
            mc_runs=pol.integer("mc_runs", 1000),
            mc_seed=pol.integer("mc_seed", 0),
        )
    except ValueError as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise pol.error(str(exc)) from exc

    tao = exp.table("tao")
    alpha = None
    if "alpha" in tao:
        fixed = tao.table("alpha")
        alpha = {k: fixed.number(k) for k in fixed.data}

    out = Path(exp.string("out", "out"))
    workers = exp.integer("workers", 0) or None

    return ExperimentConfig(
        scenario=scenario,
        source=resolved,
        strategies=tuple(strategies),  # type: ignore[arg-type]
        policy=policy,
        out=out,
        plots=exp.boolean("plots", True),
        seed=exp.integer("seed", 0),
        runs=exp.integer("runs", 100),
        dt_out=exp.number("dt_out", 1.0, positive=True),
        guard=tao.boolean("guard", False),
        alpha=alpha,
        workers=workers,
    )
