"""Seeded simulator: play a scenario through an offloading strategy.

Requests are decided in arrival order. Power, battery and temperature traces
are then computed offline from the final decision vector; no strategy reads
the temperature, so computing it after the fact changes nothing.

Example:
    ```python
    from xroffload import Strategy, load_scenario, run

    scenario = load_scenario("replication.scenario")
    result = run(scenario, Strategy.sota(), seed=0)
    print(result["glass"].metrics.temp_violation_fraction)
    ```
"""

from __future__ import annotations

import math
from collections.abc import Mapping
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Literal, Self, TypeAlias

import numpy as np
import pandas as pd
from loguru import logger
from numpy.typing import NDArray

from xroffload._model import (
    DecisionVector,
    DeviceTraces,
    Request,
    Scenario,
    arrival_order,
    device_traces,
    oracle_optimize,
    pulse_bounds,
    pulse_energy,
)
from xroffload._series import FEASIBILITY_SLACK, TimeSeries, snap

StrategyKind: TypeAlias = Literal["tao", "sota", "always_offload", "always_local", "oracle"]
"""Available offloading strategies."""

STRATEGY_KINDS: tuple[StrategyKind, ...] = ("tao", "sota", "always_offload", "always_local", "oracle")


@dataclass(frozen=True)
class Strategy:
    """Offloading strategy.

    Attributes:
        kind: Which strategy to play.
        alpha: Local-service probability per device (`tao` only).
        guard: Offload a `tao` request whenever serving it would exceed the TDP.
        rng_seed: Seed of the `tao` coin flips, combined with the run seed.
    """

    kind: StrategyKind
    alpha: Mapping[str, float] = field(default_factory=dict)
    guard: bool = False
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in STRATEGY_KINDS:
            raise ValueError(f"unknown strategy {self.kind!r}, choose from {STRATEGY_KINDS}")
        for device, a in self.alpha.items():
            if not 0 <= a <= 1:
                raise ValueError(f"alpha for {device!r} must lie in [0, 1], got {a}")
        if self.rng_seed < 0:
            raise ValueError("rng_seed must be non-negative")

    @classmethod
    def tao(cls, alpha: Mapping[str, float], guard: bool = False, rng_seed: int = 0) -> Self:
        return cls("tao", dict(alpha), guard, rng_seed)

    @classmethod
    def sota(cls) -> Self:
        return cls("sota")

    @classmethod
    def always_offload(cls) -> Self:
        return cls("always_offload")

    @classmethod
    def always_local(cls) -> Self:
        return cls("always_local")

    @classmethod
    def oracle(cls) -> Self:
        return cls("oracle")

    @property
    def name(self) -> str:
        return self.kind


def poisson_arrivals(rate_per_s: float, horizon_s: float, rng: np.random.Generator) -> NDArray[np.float64]:
    """Arrival times of a Poisson process on `[0, horizon_s]`."""
    if rate_per_s < 0:
        raise ValueError(f"rate must be non-negative, got {rate_per_s}")
    if rate_per_s == 0:
        return np.empty(0)
    mean = rate_per_s * horizon_s
    chunk = max(16, int(mean + 5 * math.sqrt(mean)) + 1)
    times: list[NDArray[np.float64]] = []
    last = 0.0
    while True:
        block = last + np.cumsum(rng.exponential(1.0 / rate_per_s, size=chunk))
        inside = block[block <= horizon_s]
        times.append(inside)
        if inside.size < block.size:
            break
        last = float(block[-1])
    return np.concatenate(times)


def generate_requests(scenario: Scenario, seed: int) -> list[Request]:
    """Requests played by a run.

    Explicit request lists pass through unchanged. Otherwise every device draws
    Poisson arrivals with its own stream derived from `seed`; duration and power
    come from the device.
    """
    if scenario.requests is not None:
        return list(scenario.requests)
    requests: list[Request] = []
    for index, spec in enumerate(scenario.devices):
        rng = np.random.default_rng((seed, index))
        arrivals = poisson_arrivals(scenario.rate_for(spec.id), scenario.horizon_s, rng)
        requests += [spec.request(f"{spec.id}-{k:04d}", float(a)) for k, a in enumerate(arrivals)]
    return arrival_order(requests)


def _decide_online(scenario: Scenario, strategy: Strategy, seed: int) -> DecisionVector:
    assert scenario.requests is not None
    n = scenario.n_samples
    dt = scenario.dt_s
    power = {d.id: np.full(n, d.idle_power_watts) for d in scenario.devices}
    # idle draw over the grid span [0, (n - 1) dt], as the battery trace integrates it
    energy = {d.id: d.idle_power_watts * dt * (n - 1) for d in scenario.devices}
    rng = np.random.default_rng((strategy.rng_seed, seed))
    flags: dict[str, bool] = {}
    for req in scenario.requests:
        spec = scenario.device(req.device)
        start, end = pulse_bounds(req, dt, n)
        needed = pulse_energy(req, dt, n)
        # earlier pulses started before this one, so their load only drops after `start`
        fits_tdp = power[req.device][start] + req.power_watts <= spec.tdp_watts + FEASIBILITY_SLACK
        if strategy.kind == "tao":
            if req.device not in strategy.alpha:
                raise ValueError(f"tao strategy has no alpha for device {req.device!r}")
            local = bool(rng.random() < strategy.alpha[req.device])
            if local and strategy.guard and not fits_tdp:
                local = False
        else:
            local = fits_tdp and spec.battery_joules - energy[req.device] - needed >= -FEASIBILITY_SLACK
        if local:
            power[req.device][start : end + 1] += req.power_watts
            energy[req.device] += needed
        flags[req.id] = local
    return DecisionVector(flags)


def decide(scenario: Scenario, strategy: Strategy, seed: int) -> DecisionVector:
    """Decision vector of a strategy on a scenario with explicit requests."""
    if scenario.requests is None:
        raise ValueError("decisions need explicit requests, generate them first")
    match strategy.kind:
        case "always_offload":
            return DecisionVector.all_offload(scenario.requests)
        case "always_local":
            return DecisionVector.all_local(scenario.requests)
        case "oracle":
            return oracle_optimize(scenario)[0]
        case _:
            return _decide_online(scenario, strategy, seed)


@dataclass(frozen=True)
class DeviceMetrics:
    """Summary metrics of one device in one run."""

    max_temp_c: float
    temp_violation_fraction: float
    final_battery_j: float
    n_local: int
    n_offloaded: int
    total_cost: float
    max_power_w: float
    tdp_violated: bool
    battery_violated: bool

    @property
    def temp_violated(self) -> bool:
        return self.temp_violation_fraction > 0


@dataclass(frozen=True, eq=False)
class DeviceRun:
    """Traces, cumulative cost and metrics of one device."""

    device: str
    traces: DeviceTraces
    cost: TimeSeries
    metrics: DeviceMetrics
    arrivals: tuple[tuple[float, bool], ...]

    @property
    def power(self) -> TimeSeries:
        return self.traces.power

    @property
    def battery(self) -> TimeSeries:
        return self.traces.battery

    @property
    def temperature(self) -> TimeSeries:
        return self.traces.temperature


def violation_fraction(temperature: TimeSeries, limit_c: float) -> float:
    """Share of grid samples above the limit."""
    return float(np.mean(temperature.samples > limit_c + FEASIBILITY_SLACK))


def _device_run(scenario: Scenario, device: str, decisions: DecisionVector) -> DeviceRun:
    spec = scenario.device(device)
    requests = scenario.requests_for(device)
    traces = device_traces(scenario, device, decisions)
    offloaded = [r for r in requests if not decisions[r.id]]
    steps = np.zeros(scenario.n_samples)
    last = scenario.n_samples - 1
    np.add.at(steps, [min(snap(r.arrival_s, scenario.dt_s), last) for r in offloaded], scenario.offload_unit_cost)
    cost = TimeSeries(0.0, scenario.dt_s, np.cumsum(steps))
    n_local = len(requests) - len(offloaded)
    metrics = DeviceMetrics(
        max_temp_c=float(traces.temperature.samples.max()),
        temp_violation_fraction=violation_fraction(traces.temperature, scenario.temp_limit_c),
        final_battery_j=float(traces.battery.samples[-1]),
        n_local=n_local,
        n_offloaded=len(offloaded),
        total_cost=scenario.offload_unit_cost * len(offloaded),
        max_power_w=float(traces.power.samples.max()),
        tdp_violated=traces.power.first_time_above(spec.tdp_watts) is not None,
        battery_violated=traces.battery.first_time_below(0.0) is not None,
    )
    arrivals = tuple((r.arrival_s, decisions[r.id]) for r in requests)
    return DeviceRun(device, traces, cost, metrics, arrivals)


@dataclass(frozen=True, eq=False)
class RunResult:
    """One simulated run.

    Attributes:
        scenario: The scenario as played, with its explicit requests.
        strategy: Strategy used.
        seed: Run seed.
        decisions: Decision per request.
        devices: Per-device traces and metrics, in scenario order.
    """

    scenario: Scenario
    strategy: Strategy
    seed: int
    decisions: DecisionVector
    devices: tuple[DeviceRun, ...]

    def __getitem__(self, device: str) -> DeviceRun:
        for d in self.devices:
            if d.device == device:
                return d
        raise KeyError(device)

    @property
    def n_local(self) -> int:
        return sum(d.metrics.n_local for d in self.devices)

    @property
    def total_cost(self) -> float:
        return sum(d.metrics.total_cost for d in self.devices)


def run(scenario: Scenario, strategy: Strategy, seed: int = 0) -> RunResult:
    """Simulate one run; deterministic in `(scenario, strategy, seed)`.

    Raises:
        InstanceTooLargeError: `oracle` on more requests than it can enumerate.
    """
    if seed < 0:
        raise ValueError("seed must be non-negative")
    played = scenario.with_requests(generate_requests(scenario, seed))
    decisions = decide(played, strategy, seed)
    devices = tuple(_device_run(played, d.id, decisions) for d in played.devices)
    logger.debug(
        "{} run seed={}: {} local, {} offloaded",
        strategy.name,
        seed,
        decisions.n_local,
        decisions.n_offloaded,
    )
    return RunResult(played, strategy, seed, decisions, devices)


@dataclass(frozen=True)
class RunSummary:
    """Metrics of one ensemble run, aggregated over devices."""

    run: int
    seed: int
    n_local: int
    n_offloaded: int
    total_cost: float
    max_temp_c: float
    temp_violation_fraction: float
    final_battery_j: float
    temp_violated: bool
    tdp_violated: bool
    battery_violated: bool

    @classmethod
    def of(cls, index: int, result: RunResult) -> Self:
        metrics = [d.metrics for d in result.devices]
        return cls(
            run=index,
            seed=result.seed,
            n_local=sum(m.n_local for m in metrics),
            n_offloaded=sum(m.n_offloaded for m in metrics),
            total_cost=sum(m.total_cost for m in metrics),
            max_temp_c=max(m.max_temp_c for m in metrics),
            temp_violation_fraction=max(m.temp_violation_fraction for m in metrics),
            final_battery_j=min(m.final_battery_j for m in metrics),
            temp_violated=any(m.temp_violated for m in metrics),
            tdp_violated=any(m.tdp_violated for m in metrics),
            battery_violated=any(m.battery_violated for m in metrics),
        )


@dataclass(frozen=True)
class EnsembleSummary:
    """Per-run summaries in run order plus aggregates."""

    strategy: str
    runs: tuple[RunSummary, ...]

    def _mean(self, name: str) -> float:
        return float(np.mean([getattr(r, name) for r in self.runs]))

    @property
    def mean_max_temp_c(self) -> float:
        return self._mean("max_temp_c")

    @property
    def max_max_temp_c(self) -> float:
        return max(r.max_temp_c for r in self.runs)

    @property
    def temp_violation_run_fraction(self) -> float:
        return self._mean("temp_violated")

    @property
    def tdp_violation_run_fraction(self) -> float:
        return self._mean("tdp_violated")

    @property
    def battery_violation_run_fraction(self) -> float:
        return self._mean("battery_violated")

    @property
    def mean_temp_violation_fraction(self) -> float:
        return self._mean("temp_violation_fraction")

    @property
    def mean_total_cost(self) -> float:
        return self._mean("total_cost")

    @property
    def mean_final_battery_j(self) -> float:
        return self._mean("final_battery_j")

    @property
    def mean_n_local(self) -> float:
        return self._mean("n_local")

    def aggregates(self) -> dict[str, float | str | int]:
        return {
            "strategy": self.strategy,
            "runs": len(self.runs),
            "mean_n_local": self.mean_n_local,
            "mean_total_cost": self.mean_total_cost,
            "mean_max_temp_c": self.mean_max_temp_c,
            "max_max_temp_c": self.max_max_temp_c,
            "mean_temp_violation_fraction": self.mean_temp_violation_fraction,
            "temp_violation_run_fraction": self.temp_violation_run_fraction,
            "tdp_violation_run_fraction": self.tdp_violation_run_fraction,
            "battery_violation_run_fraction": self.battery_violation_run_fraction,
            "mean_final_battery_j": self.mean_final_battery_j,
        }

    def to_frame(self) -> pd.DataFrame:
        """One row per run."""
        return pd.DataFrame([vars(r) for r in self.runs])


def _summarize(args: tuple[Scenario, Strategy, int, int]) -> RunSummary:
    scenario, strategy, index, seed = args
    return RunSummary.of(index, run(scenario, strategy, seed))


def monte_carlo(
    scenario: Scenario,
    strategy: Strategy,
    n_runs: int,
    base_seed: int = 0,
    workers: int | None = None,
) -> EnsembleSummary:
    """Play `n_runs` runs with seeds `base_seed + i`.

    Args:
        workers: Fan out over a process pool of this size; results keep run order.
    """
    if n_runs < 1:
        raise ValueError("n_runs must be at least 1")
    jobs = [(scenario, strategy, i, base_seed + i) for i in range(n_runs)]
    logger.debug("{}: {} runs from seed {} (workers={})", strategy.name, n_runs, base_seed, workers)
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            summaries = list(pool.map(_summarize, jobs, chunksize=max(1, n_runs // (4 * workers))))
    else:
        summaries = [_summarize(job) for job in jobs]
    return EnsembleSummary(strategy.name, tuple(summaries))


@dataclass(frozen=True)
class TemperatureHistogram:
    """Normalized temperature histogram of one device.

    Attributes:
        edges: Bin edges in °C, `len(mass) + 1` values.
        mass: Fraction of grid samples per bin, sums to one.
        exceedance: Fraction of samples above the temperature limit.
        limit_c: The temperature limit.
    """

    edges: NDArray[np.float64]
    mass: NDArray[np.float64]
    exceedance: float
    limit_c: float

    @property
    def centers(self) -> NDArray[np.float64]:
        return 0.5 * (self.edges[:-1] + self.edges[1:])


def empirical_temperature_distribution(
    result: RunResult, device: str, n_bins: int = 50
) -> TemperatureHistogram:
    """Histogram of a device temperature over `[ambient, max observed]`."""
    if n_bins < 1:
        raise ValueError("n_bins must be at least 1")
    samples = result[device].temperature.samples
    if samples.size == 0:
        raise ValueError(f"empty temperature trace for {device!r}")
    ambient = result.scenario.device(device).ambient_temp_c
    top = max(float(samples.max()), ambient)
    # convolution round-off can dip a hair below ambient
    counts, edges = np.histogram(np.clip(samples, ambient, top), bins=n_bins, range=(ambient, top))
    return TemperatureHistogram(
        edges=edges,
        mass=counts / samples.size,
        exceedance=violation_fraction(result[device].temperature, result.scenario.temp_limit_c),
        limit_c=result.scenario.temp_limit_c,
    )
