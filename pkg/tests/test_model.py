"""Tests for the deterministic engine: power traces, battery, feasibility and the oracle."""

from __future__ import annotations

import dataclasses
from itertools import product
from typing import Callable

import numpy as np
import pytest

from xroffload import (
    DecisionVector,
    DeviceSpec,
    ImpulseResponse,
    InstanceTooLargeError,
    Scenario,
    ScenarioError,
    Strategy,
    ThermalStage,
    TimeSeries,
    build_power_trace,
    check_feasibility,
    integrate_battery,
    oracle_optimize,
    run,
)
from xroffload._model import _DeviceSearch, device_traces

from .conftest import DeviceFactory, local_ids


def test_power_trace_single_pulse(make_device: DeviceFactory, make_scenario: Callable[..., Scenario]) -> None:
    """A local 2 W request at 10 s for 35 s occupies samples 10..45 inclusive."""
    scenario = make_scenario([make_device()], [("dev", 10.0)])
    trace = build_power_trace(scenario, "dev", DecisionVector.all_local(scenario.requests or ()))
    expected = np.zeros(401)
    expected[10:46] = 2.0
    np.testing.assert_array_equal(trace.samples, expected)

    offloaded = build_power_trace(scenario, "dev", DecisionVector.all_offload(scenario.requests or ()))
    assert not offloaded.samples.any()


def test_power_trace_overlap(make_device: DeviceFactory, make_scenario: Callable[..., Scenario]) -> None:
    """Overlapping Glass-like pulses add up to 1.2 W while both are served."""
    glass = make_device("g", tdp_watts=0.6, request_power_watts=0.6, request_duration_s=65.0)
    scenario = make_scenario([glass], [("g", 0.0), ("g", 30.0)])
    trace = build_power_trace(scenario, "g", DecisionVector.all_local(scenario.requests or ()))
    np.testing.assert_allclose(trace.samples[30:66], 1.2)
    np.testing.assert_allclose(trace.samples[:30], 0.6)
    np.testing.assert_allclose(trace.samples[66:96], 0.6)
    assert trace.samples[96] == 0.0


def test_power_trace_requires_full_decisions(
    make_device: DeviceFactory, make_scenario: Callable[..., Scenario]
) -> None:
    scenario = make_scenario([make_device()], [("dev", 10.0), ("dev", 100.0)])
    with pytest.raises(ValueError, match="incomplete"):
        build_power_trace(scenario, "dev", {"dev-00": True})


def test_power_trace_idle_baseline(make_device: DeviceFactory, make_scenario: Callable[..., Scenario]) -> None:
    scenario = make_scenario([make_device(idle_power_watts=0.25)], [("dev", 10.0)])
    trace = build_power_trace(scenario, "dev", DecisionVector.all_offload(scenario.requests or ()))
    np.testing.assert_array_equal(trace.samples, 0.25)


def test_battery_constant_draw() -> None:
    battery = integrate_battery(TimeSeries.spanning(3600.0, 1.0, fill=2.0), 10_000.0)
    assert battery.samples[0] == 10_000.0
    assert battery.samples[-1] == pytest.approx(2800.0)


def test_battery_pulse() -> None:
    """A 36-sample 2 W pulse at dt = 1 s drains 70 J by the trapezoidal rule."""
    battery = integrate_battery(TimeSeries.of(np.full(36, 2.0), 1.0), 100.0)
    assert battery.samples[-1] == pytest.approx(30.0)
    assert np.all(np.diff(battery.samples) <= 0)


def test_battery_keeps_negative_levels() -> None:
    battery = integrate_battery(TimeSeries.spanning(100.0, 1.0, fill=2.0), 50.0)
    assert battery.samples[-1] == pytest.approx(-150.0)
    assert battery.first_time_below(0.0) == 26.0


def test_all_offload_feasible(replication: Scenario) -> None:
    report = check_feasibility(replication, DecisionVector.all_offload(replication.requests or ()))
    assert report.feasible
    for device in replication.device_ids:
        assert report[device].max_temp_c == 25.0
        assert report[device].max_power_w == 0.0


def test_power_above_tdp_reported(make_device: DeviceFactory, make_scenario: Callable[..., Scenario]) -> None:
    """A 3 W request on a 2 W device violates the TDP from its arrival on."""
    device = make_device()
    scenario = make_scenario([device], [])
    scenario = scenario.with_requests([dataclasses.replace(device.request("hot", 10.0), power_watts=3.0)])
    report = check_feasibility(scenario, {"hot": True})
    assert not report.feasible
    assert report["dev"].tdp_violation_s == 10.0
    assert report["dev"].battery_ok


def test_three_stacked_glass_requests_overheat(glass: Scenario) -> None:
    """The first three Glass requests served locally cross 43 °C."""
    local = local_ids(glass.requests, {30.0, 130.0, 230.0})
    report = check_feasibility(glass, DecisionVector.from_local(glass.requests or (), local))
    result = report["glass"]
    assert result.power_ok and result.battery_ok
    assert not result.thermal_ok
    assert result.max_temp_c == pytest.approx(45.42, abs=0.01)


def test_convolution_matches_recursive_filter(glass: Scenario) -> None:
    """The engine agrees with an independent first-order recursion per stage."""
    local = local_ids(glass.requests, {30.0, 130.0, 230.0})
    decisions = DecisionVector.from_local(glass.requests or (), local)
    traces = device_traces(glass, "glass", decisions)
    power = traces.power.samples
    dt = glass.dt_s
    rise = np.zeros_like(power)
    for stage in glass.device("glass").thermal.stages:
        decay = np.exp(-dt / stage.theta_s)
        gain = dt * stage.r_th_c_per_w / stage.theta_s
        state = 0.0
        for i, p in enumerate(power[:6000]):
            state = state * decay + gain * p
            rise[i] += state
    np.testing.assert_allclose(traces.temperature.samples[:6000], 25.0 + rise[:6000], atol=1e-6)


def test_monotone_in_local_set(glass: Scenario) -> None:
    """Serving one more request locally never lowers power or temperature."""
    requests = glass.requests or ()
    base = DecisionVector.from_local(requests, local_ids(requests, {30.0, 800.0}))
    more = base.merged({local_ids(requests, {130.0})[0]: True})
    a = device_traces(glass, "glass", base)
    b = device_traces(glass, "glass", more)
    assert np.all(b.power.samples >= a.power.samples)
    assert np.all(b.temperature.samples >= a.temperature.samples - 1e-12)
    assert np.all(b.battery.samples <= a.battery.samples + 1e-12)


def test_superposition(glass: Scenario) -> None:
    """Temperature rise of two disjoint local sets adds up."""
    requests = glass.requests or ()
    first = DecisionVector.from_local(requests, local_ids(requests, {30.0, 1600.0}))
    second = DecisionVector.from_local(requests, local_ids(requests, {130.0, 2500.0}))
    both = DecisionVector.from_local(requests, local_ids(requests, {30.0, 130.0, 1600.0, 2500.0}))
    rise = [device_traces(glass, "glass", d).temperature.samples - 25.0 for d in (first, second, both)]
    np.testing.assert_allclose(rise[2], rise[0] + rise[1], atol=1e-9)


def test_feasibility_needs_requests(glass: Scenario) -> None:
    poisson_only = dataclasses.replace(glass, requests=None)
    with pytest.raises(ValueError, match="explicit requests"):
        check_feasibility(poisson_only, {})


def test_oracle_single_request_fits(make_device: DeviceFactory, make_scenario: Callable[..., Scenario]) -> None:
    scenario = make_scenario([make_device()], [("dev", 10.0)])
    decisions, objective = oracle_optimize(scenario)
    assert objective == 1
    assert decisions["dev-00"]


def test_oracle_single_request_too_hot(make_device: DeviceFactory, make_scenario: Callable[..., Scenario]) -> None:
    """R = 100 °C/W lifts one 2 W pulse by about 59 °C, so it must be offloaded."""
    hot = make_device(thermal=ImpulseResponse.parametric([ThermalStage(100.0, 100.0)]))
    scenario = make_scenario([hot], [("dev", 10.0)])
    decisions, objective = oracle_optimize(scenario)
    assert objective == 0
    assert not decisions["dev-00"]


def test_oracle_prefers_later_requests(make_device: DeviceFactory, make_scenario: Callable[..., Scenario]) -> None:
    """Two overlapping requests where only one fits: the later one is kept."""
    scenario = make_scenario([make_device()], [("dev", 10.0), ("dev", 20.0)])
    decisions, objective = oracle_optimize(scenario)
    assert objective == 1
    assert not decisions["dev-00"]
    assert decisions["dev-01"]


def test_oracle_replication(replication: Scenario) -> None:
    decisions, objective = oracle_optimize(replication)
    assert objective == 18
    offloaded = sorted(r.arrival_s for r in replication.requests or () if not decisions[r.id])
    assert offloaded == [30.0, 1600.0]
    assert all(decisions[r.id] for r in replication.requests_for("hololens"))
    assert check_feasibility(replication, decisions).feasible


def test_oracle_too_large(make_device: DeviceFactory, make_scenario: Callable[..., Scenario]) -> None:
    arrivals = [("dev", 15.0 * i) for i in range(21)]
    scenario = make_scenario([make_device()], arrivals)
    with pytest.raises(InstanceTooLargeError):
        oracle_optimize(scenario)


def _brute_force(scenario: Scenario) -> tuple[tuple[bool, ...], int]:
    requests = scenario.requests or ()
    best: tuple[int, tuple[bool, ...]] | None = None
    # product() runs in ascending lexicographic order with False < True
    for flags in product((False, True), repeat=len(requests)):
        decisions = DecisionVector(zip((r.id for r in requests), flags))
        if not check_feasibility(scenario, decisions).feasible:
            continue
        if best is None or sum(flags) > best[0]:
            best = (sum(flags), flags)
    assert best is not None
    return best[1], best[0]


def _random_scenario(rng: np.random.Generator, max_requests: int = 6) -> Scenario:
    device = DeviceSpec(
        id="dev",
        tdp_watts=float(rng.choice([1.0, 2.0, 3.0])),
        battery_joules=float(rng.uniform(50.0, 400.0)),
        request_power_watts=1.0,
        request_duration_s=float(rng.uniform(10.0, 40.0)),
        thermal=ImpulseResponse.parametric(
            [ThermalStage(float(rng.uniform(1.0, 20.0)), float(rng.uniform(10.0, 50.0)))]
        ),
    )
    count = int(rng.integers(1, max_requests + 1))
    arrivals = np.sort(rng.uniform(0.0, 350.0, count))
    requests = [device.request(f"r{i}", float(a)) for i, a in enumerate(arrivals)]
    return Scenario(400.0, (device,), tuple(requests), dt_s=1.0, temp_limit_c=float(rng.uniform(30.0, 45.0)))


def test_oracle_matches_brute_force() -> None:
    """Random single-device instances: same objective and the same tie-break."""
    rng = np.random.default_rng(2024)
    for _ in range(40):
        scenario = _random_scenario(rng)
        decisions, objective = oracle_optimize(scenario)
        flags, expected = _brute_force(scenario)
        assert objective == expected
        assert tuple(decisions[r.id] for r in scenario.requests or ()) == flags


@pytest.mark.slow
def test_oracle_bounds_every_strategy() -> None:
    """Up to 12 requests: the oracle matches enumeration, agrees with the engine on every
    strategy's vector and serves at least as many requests as any feasible one."""
    strategies = [
        Strategy.always_offload(),
        Strategy.always_local(),
        Strategy.sota(),
        Strategy.tao({"dev": 0.5}),
        Strategy.tao({"dev": 0.8}, guard=True),
    ]
    rng = np.random.default_rng(31)
    for index in range(200):
        scenario = _random_scenario(rng, max_requests=12)
        decisions, objective = oracle_optimize(scenario)
        flags, expected = _brute_force(scenario)
        assert objective == expected
        assert tuple(decisions[r.id] for r in scenario.requests or ()) == flags

        search = _DeviceSearch(scenario, scenario.devices[0])
        for strategy in strategies:
            chosen = run(scenario, strategy, seed=index).decisions
            local = tuple(i for i, r in enumerate(search.requests) if chosen[r.id])
            feasible = check_feasibility(scenario, chosen).feasible
            assert search.feasible(local) == feasible, (index, strategy.name)
            if feasible:
                assert objective >= chosen.n_local, (index, strategy.name)


@pytest.mark.slow
def test_oracle_matches_brute_force_on_glass(glass: Scenario) -> None:
    decisions, objective = oracle_optimize(glass)
    flags, expected = _brute_force(glass)
    assert objective == expected == 8
    assert tuple(decisions[r.id] for r in glass.requests or ()) == flags


def test_scenario_rejects_coarse_dt(make_device: DeviceFactory, make_scenario: Callable[..., Scenario]) -> None:
    with pytest.raises(ScenarioError) as info:
        make_scenario([make_device()], [("dev", 10.0)], dt_s=5.0)
    assert info.value.field == "dt"


def test_scenario_rejects_low_limit(make_device: DeviceFactory, make_scenario: Callable[..., Scenario]) -> None:
    with pytest.raises(ScenarioError) as info:
        make_scenario([make_device()], [], temp_limit_c=25.0)
    assert info.value.field == "limits.temp_c"


def test_scenario_rejects_unknown_device(make_device: DeviceFactory) -> None:
    device = make_device()
    stray = make_device("other").request("x", 1.0)
    with pytest.raises(ScenarioError) as info:
        Scenario(100.0, (device,), (stray,), dt_s=1.0)
    assert info.value.field == "requests[0].device"


def test_scenario_rejects_late_arrival(make_device: DeviceFactory, make_scenario: Callable[..., Scenario]) -> None:
    with pytest.raises(ScenarioError, match="beyond the horizon"):
        make_scenario([make_device()], [("dev", 500.0)])


def test_scenario_sorts_requests(make_device: DeviceFactory, make_scenario: Callable[..., Scenario]) -> None:
    scenario = make_scenario([make_device()], [("dev", 200.0), ("dev", 10.0)])
    assert [r.arrival_s for r in scenario.requests or ()] == [10.0, 200.0]
    assert scenario.rate_for("dev") == pytest.approx(2 / 400.0)


def test_device_spec_validation(single_stage: ImpulseResponse) -> None:
    with pytest.raises(ValueError, match="tdp_watts"):
        DeviceSpec("d", 0.0, 100.0, 1.0, 10.0, single_stage)
    with pytest.raises(ValueError, match="idle_power_watts"):
        DeviceSpec("d", 2.0, 100.0, 1.0, 10.0, single_stage, idle_power_watts=-1.0)
