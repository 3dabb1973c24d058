"""Domain types and the deterministic power, battery and thermal engine.

A `Scenario` bundles the horizon, the devices and the request source. Given a
full `DecisionVector` (local or offloaded for every request) the engine builds
the per-device power trace as a superposition of rectangular pulses, integrates
the battery and convolves the temperature, then checks the three constraints:
power never above TDP, battery never depleted, temperature never above the limit.

Example:
    ```python
    from xroffload import DecisionVector, check_feasibility, load_scenario

    scenario = load_scenario("glass.scenario")
    decisions = DecisionVector.all_local(scenario.requests)
    report = check_feasibility(scenario, decisions)
    print(report.feasible, report["glass"].max_temp_c)
    ```
"""

from __future__ import annotations

import dataclasses
from collections.abc import Iterator, Mapping
from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations
from typing import Iterable, Self

import numpy as np
from loguru import logger
from numpy.typing import NDArray
from scipy.integrate import cumulative_trapezoid, trapezoid
from scipy.signal import fftconvolve

from xroffload._series import FEASIBILITY_SLACK, TimeSeries, grid_size, snap
from xroffload._thermal import ImpulseResponse, convolve_temperature, tabulate
from xroffload.errors import InstanceTooLargeError, ScenarioError

ORACLE_MAX_REQUESTS = 20
"""Largest instance the exhaustive oracle accepts."""

DEFAULT_TEMP_LIMIT_C = 43.0
DEFAULT_DT_S = 0.1


@dataclass(frozen=True)
class DeviceSpec:
    """Static parameters of a wearable.

    Attributes:
        id: Device identifier.
        tdp_watts: Instantaneous power cap.
        battery_joules: Initial battery charge.
        request_power_watts: Power increment of one locally served request.
        request_duration_s: Default local processing time of a request.
        thermal: Thermal impulse response of the device.
        ambient_temp_c: Baseline temperature.
        idle_power_watts: Constant baseline consumption.
    """

    id: str
    tdp_watts: float
    battery_joules: float
    request_power_watts: float
    request_duration_s: float
    thermal: ImpulseResponse
    ambient_temp_c: float = 25.0
    idle_power_watts: float = 0.0

    def __post_init__(self) -> None:
        for name in ("tdp_watts", "battery_joules", "request_power_watts", "request_duration_s"):
            if not getattr(self, name) > 0:
                raise ValueError(f"device {self.id!r}: {name} must be positive")
        if self.idle_power_watts < 0:
            raise ValueError(f"device {self.id!r}: idle_power_watts must be non-negative")
        if self.request_power_watts > self.tdp_watts:
            logger.warning(
                "device {}: request power {} W exceeds TDP {} W, no request fits locally",
                self.id,
                self.request_power_watts,
                self.tdp_watts,
            )

    @property
    def request_energy_joules(self) -> float:
        return self.request_power_watts * self.request_duration_s

    def request(self, id: str, arrival_s: float) -> Request:
        """A request on this device with the default duration and power."""
        return Request(id, self.id, arrival_s, self.request_duration_s, self.request_power_watts)


@dataclass(frozen=True)
class Request:
    """One processing demand.

    Attributes:
        id: Request identifier, unique within a scenario.
        device: Owning device id.
        arrival_s: Arrival time.
        duration_s: Local processing time.
        power_watts: Power increment while served locally.
    """

    id: str
    device: str
    arrival_s: float
    duration_s: float
    power_watts: float

    def __post_init__(self) -> None:
        if self.arrival_s < 0:
            raise ValueError(f"request {self.id!r}: arrival must be non-negative")
        if not self.duration_s > 0:
            raise ValueError(f"request {self.id!r}: duration must be positive")
        if not self.power_watts > 0:
            raise ValueError(f"request {self.id!r}: power must be positive")


def arrival_order(requests: Iterable[Request]) -> list[Request]:
    """Requests sorted by arrival time, ties broken by id."""
    return sorted(requests, key=lambda r: (r.arrival_s, r.id))


class DecisionVector(Mapping[str, bool]):
    """Immutable map request id -> local flag (`True` = served locally)."""

    __slots__ = ("_flags",)

    def __init__(self, flags: Mapping[str, bool] | Iterable[tuple[str, bool]] = ()):
        self._flags: dict[str, bool] = {k: bool(v) for k, v in dict(flags).items()}

    @classmethod
    def all_offload(cls, requests: Iterable[Request]) -> Self:
        return cls((r.id, False) for r in requests)

    @classmethod
    def all_local(cls, requests: Iterable[Request]) -> Self:
        return cls((r.id, True) for r in requests)

    @classmethod
    def from_local(cls, requests: Iterable[Request], local_ids: Iterable[str]) -> Self:
        local = set(local_ids)
        return cls((r.id, r.id in local) for r in requests)

    def __getitem__(self, key: str) -> bool:
        return self._flags[key]

    def __iter__(self) -> Iterator[str]:
        return iter(self._flags)

    def __len__(self) -> int:
        return len(self._flags)

    def __repr__(self) -> str:
        return f"DecisionVector({self._flags!r})"

    @property
    def n_local(self) -> int:
        return sum(self._flags.values())

    @property
    def n_offloaded(self) -> int:
        return len(self._flags) - self.n_local

    def merged(self, other: Mapping[str, bool]) -> DecisionVector:
        return DecisionVector({**self._flags, **other})

    def require_cover(self, requests: Iterable[Request]) -> None:
        """Raise `ValueError` unless every request has a decision."""
        missing = [r.id for r in requests if r.id not in self._flags]
        if missing:
            raise ValueError(f"decision vector incomplete, missing {missing[:5]}")


@dataclass(frozen=True)
class PoissonSource:
    """Poisson request source: rate in requests per second for each device."""

    rates: Mapping[str, float]

    def __post_init__(self) -> None:
        for device, rate in self.rates.items():
            if not rate >= 0:
                raise ValueError(f"poisson rate for {device!r} must be non-negative, got {rate}")

    def __hash__(self) -> int:
        return hash(tuple(sorted(self.rates.items())))

    def rate(self, device: str) -> float:
        return float(self.rates.get(device, 0.0))


@dataclass(frozen=True, eq=False)
class Scenario:
    """Everything an experiment needs apart from the strategy.

    A scenario carries an explicit request list, Poisson rates, or both. A
    simulation plays the explicit list when present; rates feed the chance
    solver and request generation.

    Attributes:
        horizon_s: Length of the time horizon.
        devices: Devices, unique ids.
        requests: Explicit requests, if any.
        poisson: Poisson rates, if any.
        temp_limit_c: Temperature limit applied to every device.
        offload_unit_cost: Cost charged per offloaded request.
        dt_s: Trace discretization step.
        name: Label used in logs and output files.
    """

    horizon_s: float
    devices: tuple[DeviceSpec, ...]
    requests: tuple[Request, ...] | None = None
    poisson: PoissonSource | None = None
    temp_limit_c: float = DEFAULT_TEMP_LIMIT_C
    offload_unit_cost: float = 1.0
    dt_s: float = DEFAULT_DT_S
    name: str = "scenario"

    def __post_init__(self) -> None:
        object.__setattr__(self, "devices", tuple(self.devices))
        if self.requests is not None:
            object.__setattr__(self, "requests", tuple(arrival_order(self.requests)))
        if not self.horizon_s > 0:
            raise ScenarioError("horizon must be positive", field="horizon")
        if not self.dt_s > 0:
            raise ScenarioError("dt must be positive", field="dt")
        if not self.offload_unit_cost > 0:
            raise ScenarioError("offload unit cost must be positive", field="cost.offload_unit")
        if not self.devices:
            raise ScenarioError("scenario needs at least one device", field="devices")
        ids = [d.id for d in self.devices]
        if len(set(ids)) != len(ids):
            raise ScenarioError(f"duplicate device ids in {ids}", field="devices")
        if self.requests is None and self.poisson is None:
            raise ScenarioError("scenario needs requests or poisson rates")

        ambient = max(d.ambient_temp_c for d in self.devices)
        if not self.temp_limit_c > ambient:
            raise ScenarioError(
                f"temperature limit {self.temp_limit_c} must exceed ambient {ambient}",
                field="limits.temp_c",
            )
        durations = [d.request_duration_s for d in self.devices]
        durations += [r.duration_s for r in self.requests or ()]
        if self.dt_s > min(durations) / 10 * (1 + 1e-9):
            raise ScenarioError(
                f"dt {self.dt_s} s is coarser than a tenth of the shortest request "
                f"duration {min(durations)} s",
                field="dt",
            )

        if self.requests is not None:
            seen: set[str] = set()
            for i, req in enumerate(self.requests):
                if req.device not in ids:
                    raise ScenarioError(
                        f"unknown device {req.device!r}", field=f"requests[{i}].device"
                    )
                if req.arrival_s > self.horizon_s:
                    raise ScenarioError(
                        f"arrival {req.arrival_s} s is beyond the horizon {self.horizon_s} s",
                        field=f"requests[{i}].arrival_s",
                    )
                if req.id in seen:
                    raise ScenarioError(f"duplicate request id {req.id!r}", field=f"requests[{i}].id")
                seen.add(req.id)
        if self.poisson is not None:
            for device in self.poisson.rates:
                if device not in ids:
                    raise ScenarioError(f"unknown device {device!r}", field=f"poisson.rate.{device}")

    @property
    def device_ids(self) -> tuple[str, ...]:
        return tuple(d.id for d in self.devices)

    @property
    def n_samples(self) -> int:
        return grid_size(self.horizon_s, self.dt_s)

    @property
    def has_requests(self) -> bool:
        return self.requests is not None

    def device(self, device_id: str) -> DeviceSpec:
        for d in self.devices:
            if d.id == device_id:
                return d
        raise ValueError(f"unknown device id {device_id!r}")

    def requests_for(self, device_id: str) -> list[Request]:
        """Explicit requests of one device in arrival order."""
        self.device(device_id)
        return [r for r in self.requests or () if r.device == device_id]

    def rate_for(self, device_id: str) -> float:
        """Poisson rate of a device, or the empirical rate of its explicit requests."""
        self.device(device_id)
        if self.poisson is not None:
            return self.poisson.rate(device_id)
        return len(self.requests_for(device_id)) / self.horizon_s

    def with_requests(self, requests: Iterable[Request]) -> Scenario:
        return dataclasses.replace(self, requests=tuple(requests))

    def with_poisson(self, rates: Mapping[str, float]) -> Scenario:
        return dataclasses.replace(self, poisson=PoissonSource(dict(rates)))

    def with_dt(self, dt_s: float) -> Scenario:
        return dataclasses.replace(self, dt_s=dt_s)

    def with_limit(self, temp_limit_c: float) -> Scenario:
        return dataclasses.replace(self, temp_limit_c=temp_limit_c)


@lru_cache(maxsize=64)
def device_kernel(thermal: ImpulseResponse, dt_s: float) -> ImpulseResponse:
    """Tabulated kernel of a device at a given step (cached)."""
    return tabulate(thermal, dt_s)


def pulse_bounds(req: Request, dt_s: float, n: int) -> tuple[int, int]:
    """First and last grid index of a request pulse, clipped to `n` samples."""
    start = min(snap(req.arrival_s, dt_s), n - 1)
    end = min(snap(req.arrival_s + req.duration_s, dt_s), n - 1)
    return start, end


def pulse_energy(req: Request, dt_s: float, n: int) -> float:
    """Energy the battery trace charges for one local request.

    Trapezoidal integral of the snapped pulse, ramps to the neighbouring
    zero samples included.
    """
    pulse = np.zeros(n)
    start, end = pulse_bounds(req, dt_s, n)
    pulse[start : end + 1] = req.power_watts
    return float(trapezoid(pulse, dx=dt_s))


def build_power_trace(scenario: Scenario, device: str, decisions: Mapping[str, bool]) -> TimeSeries:
    """Power of one device: idle baseline plus a pulse per locally served request.

    Pulse edges are snapped to the grid and both endpoints are included.

    Raises:
        ValueError: Unknown device or a decision missing for one of its requests.
    """
    spec = scenario.device(device)
    requests = scenario.requests_for(device)
    DecisionVector(decisions).require_cover(requests)
    n = scenario.n_samples
    samples = np.full(n, spec.idle_power_watts, dtype=float)
    for req in requests:
        if decisions[req.id]:
            start, end = pulse_bounds(req, scenario.dt_s, n)
            samples[start : end + 1] += req.power_watts
    return TimeSeries(0.0, scenario.dt_s, samples)


def integrate_battery(power: TimeSeries, initial_joules: float) -> TimeSeries:
    """Battery level `initial - integral(power)` with the trapezoidal rule.

    Negative levels are kept; feasibility is checked separately.
    """
    if not initial_joules > 0:
        raise ValueError(f"initial battery must be positive, got {initial_joules}")
    used = cumulative_trapezoid(power.samples, dx=power.dt_s, initial=0.0)
    return TimeSeries(power.t0_s, power.dt_s, initial_joules - used)


@dataclass(frozen=True, eq=False)
class DeviceTraces:
    """Power (W), battery (J) and absolute temperature (°C) of one device."""

    device: str
    power: TimeSeries
    battery: TimeSeries
    temperature: TimeSeries


def device_traces(scenario: Scenario, device: str, decisions: Mapping[str, bool]) -> DeviceTraces:
    spec = scenario.device(device)
    power = build_power_trace(scenario, device, decisions)
    battery = integrate_battery(power, spec.battery_joules)
    kernel = device_kernel(spec.thermal, scenario.dt_s)
    temperature = convolve_temperature(power, kernel, spec.ambient_temp_c)
    return DeviceTraces(device, power, battery, temperature)


@dataclass(frozen=True)
class DeviceFeasibility:
    """Constraint summary of one device.

    The `*_violation_s` fields hold the first violating grid time, or `None`.
    """

    device: str
    max_power_w: float
    tdp_w: float
    final_battery_j: float
    max_temp_c: float
    temp_limit_c: float
    tdp_violation_s: float | None
    battery_violation_s: float | None
    temp_violation_s: float | None

    @classmethod
    def from_traces(cls, spec: DeviceSpec, traces: DeviceTraces, temp_limit_c: float) -> Self:
        return cls(
            device=spec.id,
            max_power_w=float(traces.power.samples.max()),
            tdp_w=spec.tdp_watts,
            final_battery_j=float(traces.battery.samples[-1]),
            max_temp_c=float(traces.temperature.samples.max()),
            temp_limit_c=temp_limit_c,
            tdp_violation_s=traces.power.first_time_above(spec.tdp_watts),
            battery_violation_s=traces.battery.first_time_below(0.0),
            temp_violation_s=traces.temperature.first_time_above(temp_limit_c),
        )

    @property
    def power_ok(self) -> bool:
        return self.tdp_violation_s is None

    @property
    def battery_ok(self) -> bool:
        return self.battery_violation_s is None

    @property
    def thermal_ok(self) -> bool:
        return self.temp_violation_s is None

    @property
    def feasible(self) -> bool:
        return self.power_ok and self.battery_ok and self.thermal_ok


@dataclass(frozen=True)
class FeasibilityReport:
    devices: tuple[DeviceFeasibility, ...]

    @property
    def feasible(self) -> bool:
        return all(d.feasible for d in self.devices)

    def __getitem__(self, device_id: str) -> DeviceFeasibility:
        for d in self.devices:
            if d.device == device_id:
                return d
        raise KeyError(device_id)


def check_feasibility(scenario: Scenario, decisions: Mapping[str, bool]) -> FeasibilityReport:
    """Evaluate the TDP, battery and temperature constraints of every device."""
    if scenario.requests is None:
        raise ValueError("feasibility needs explicit requests, generate them first")
    DecisionVector(decisions).require_cover(scenario.requests)
    reports = []
    for spec in scenario.devices:
        traces = device_traces(scenario, spec.id, decisions)
        reports.append(DeviceFeasibility.from_traces(spec, traces, scenario.temp_limit_c))
    return FeasibilityReport(tuple(reports))


class _DeviceSearch:
    """Per-request contributions of one device, combined by superposition."""

    def __init__(self, scenario: Scenario, spec: DeviceSpec):
        self.spec = spec
        self.requests = scenario.requests_for(spec.id)
        self.limit = scenario.temp_limit_c
        n = scenario.n_samples
        dt = scenario.dt_s
        kernel = device_kernel(spec.thermal, dt)
        assert kernel.samples is not None

        self.base_power = np.full(n, spec.idle_power_watts)
        self.base_energy = float(trapezoid(self.base_power, dx=dt))
        self.base_rise = (
            fftconvolve(self.base_power, kernel.samples)[:n] * dt
            if spec.idle_power_watts > 0
            else np.zeros(n)
        )
        self.pulses: list[NDArray[np.float64]] = []
        self.energies: list[float] = []
        self.rises: list[NDArray[np.float64]] = []
        for req in self.requests:
            pulse = np.zeros(n)
            start, end = pulse_bounds(req, dt, n)
            pulse[start : end + 1] = req.power_watts
            self.pulses.append(pulse)
            self.energies.append(pulse_energy(req, dt, n))
            self.rises.append(fftconvolve(pulse, kernel.samples)[:n] * dt)

    def feasible(self, local: tuple[int, ...]) -> bool:
        power = self.base_power + sum((self.pulses[i] for i in local), np.zeros_like(self.base_power))
        if power.max() > self.spec.tdp_watts + FEASIBILITY_SLACK:
            return False
        energy = self.base_energy + sum(self.energies[i] for i in local)
        if self.spec.battery_joules - energy < -FEASIBILITY_SLACK:
            return False
        rise = self.base_rise + sum((self.rises[i] for i in local), np.zeros_like(self.base_rise))
        return bool(self.spec.ambient_temp_c + rise.max() <= self.limit + FEASIBILITY_SLACK)

    def best(self) -> tuple[int, ...] | None:
        m = len(self.requests)
        for k in range(m, -1, -1):
            # reversed combinations visit 0/1 vectors in ascending lexicographic order
            for local in reversed(list(combinations(range(m), k))):
                if self.feasible(local):
                    return local
        return None


def oracle_optimize(scenario: Scenario) -> tuple[DecisionVector, int]:
    """Exhaustive search for the feasible decision vector with most local requests.

    Ties go to the lexicographically smallest vector with requests in arrival
    order, so later requests are preferred for local service. Devices do not
    interact, so each device is searched on its own and the per-device optima
    are combined.

    Returns:
        The decision vector and its number of locally served requests.

    Raises:
        InstanceTooLargeError: More than `ORACLE_MAX_REQUESTS` requests.
        ValueError: The scenario has no explicit requests.
    """
    if scenario.requests is None:
        raise ValueError("the oracle needs explicit requests, generate them first")
    if len(scenario.requests) > ORACLE_MAX_REQUESTS:
        raise InstanceTooLargeError(
            f"{len(scenario.requests)} requests exceed the oracle bound of {ORACLE_MAX_REQUESTS}",
            field="requests",
        )
    local_ids: list[str] = []
    for spec in scenario.devices:
        search = _DeviceSearch(scenario, spec)
        logger.debug(
            "oracle: device {} with {} requests ({} vectors)",
            spec.id,
            len(search.requests),
            2 ** len(search.requests),
        )
        best = search.best()
        if best is None:
            logger.warning("oracle: even all-offload is infeasible on {}", spec.id)
            continue
        local_ids += [search.requests[i].id for i in best]
    decisions = DecisionVector.from_local(scenario.requests, local_ids)
    return decisions, decisions.n_local

