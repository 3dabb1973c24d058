"""Tests for the Poisson kernels, the constraint evaluators and the alpha solver."""

from __future__ import annotations

import math

import numpy as np
import pytest

from xroffload import (
    ConfidencePolicy,
    DeviceSpec,
    ImpulseResponse,
    NumericError,
    PoissonLoad,
    Scenario,
    ThermalStage,
    battery_feasible,
    poisson_cdf,
    poisson_pmf,
    poisson_quantile,
    power_feasible,
    power_sufficiency,
    solve_alpha,
    solve_all,
    thermal_feasible,
)
from xroffload._chance import critical_rates

from .conftest import DeviceFactory

BUSY = ConfidencePolicy(omega=0.95, mc_runs=300)
PAPER = ConfidencePolicy(omega=0.95, mode="paper")
HOUR = 3600.0


def _all_feasible(device: DeviceSpec, rate: float, alpha: float, policy: ConfidencePolicy) -> bool:
    load = PoissonLoad(rate, alpha)
    return bool(
        power_feasible(device, load, policy, HOUR)
        and battery_feasible(device, load, policy, HOUR)
        and thermal_feasible(device, load, policy, horizon=HOUR, temp_limit_c=43.0, dt_s=0.1)
    )


def test_pmf_values() -> None:
    assert poisson_pmf(0, 0.0) == 1.0
    assert poisson_pmf(3, 0.0) == 0.0
    assert poisson_pmf(3, 2.0) == pytest.approx(math.exp(-2) * 8 / 6, rel=1e-12)
    np.testing.assert_allclose(poisson_pmf(np.arange(3), 1.0), math.exp(-1) * np.array([1, 1, 0.5]))


def test_cdf_and_quantile_values() -> None:
    assert poisson_cdf(0, 0.0) == 1.0
    assert poisson_cdf(1, 1.0) == pytest.approx(2 * math.exp(-1), rel=1e-12)
    assert poisson_quantile(0.95, 100.0) == 117
    assert poisson_quantile(0.95, 0.0) == 0


def test_invalid_arguments() -> None:
    with pytest.raises(ValueError):
        poisson_pmf(-1, 1.0)
    with pytest.raises(ValueError):
        poisson_cdf(1.5, 1.0)
    with pytest.raises(ValueError):
        poisson_cdf(1, -0.1)
    with pytest.raises(ValueError):
        poisson_quantile(1.0, 1.0)


def test_kernels_match_direct_summation() -> None:
    """pmf and cdf agree with the recursion p(k) = p(k-1) * m / k."""
    rng = np.random.default_rng(3)
    for _ in range(10_000):
        mean = float(rng.uniform(0.0, 50.0))
        k = int(rng.integers(0, 201))
        terms = np.cumprod(np.concatenate([[math.exp(-mean)], mean / np.arange(1, k + 1)]))
        assert poisson_pmf(k, mean) == pytest.approx(terms[-1], abs=1e-10)
        assert poisson_cdf(k, mean) == pytest.approx(terms.sum(), abs=1e-10)


def test_cdf_monotone() -> None:
    rng = np.random.default_rng(5)
    for _ in range(200):
        mean = float(rng.uniform(0.0, 80.0))
        values = np.asarray(poisson_cdf(np.arange(200), mean))
        assert np.all(np.diff(values) >= -1e-15)
        assert values[-1] <= 1.0 + 1e-15
        assert values[0] >= -1e-15


def test_quantile_is_adjoint_of_cdf() -> None:
    rng = np.random.default_rng(9)
    for _ in range(2000):
        omega = float(rng.uniform(0.01, 0.999))
        mean = float(rng.uniform(0.0, 200.0))
        k = poisson_quantile(omega, mean)
        assert poisson_cdf(k, mean) >= omega
        assert k == 0 or poisson_cdf(k - 1, mean) < omega


def test_power_busy_server_matches_grid_scan(make_device: DeviceFactory) -> None:
    """At omega = 0.99 the busy-server power cap binds below alpha = 1."""
    device = make_device()
    policy = ConfidencePolicy(omega=0.99)
    solution = solve_alpha(device, 0.01, policy, HOUR, constraints=["power"])
    grid = np.arange(0.0, 1.0 + 1e-12, 1e-4)
    scan = grid[np.asarray(poisson_cdf(1, 0.35 * grid)) >= 0.99].max()
    assert abs(solution.alpha - scan) <= 1e-4
    assert solution.binding == "power"

    relaxed = solve_alpha(device, 0.01, BUSY, HOUR, constraints=["power"])
    assert relaxed.alpha == 1.0
    assert relaxed.binding == "none"


def test_power_above_tdp_blocks_local_service(make_device: DeviceFactory) -> None:
    device = make_device(request_power_watts=3.0)
    assert not power_feasible(device, PoissonLoad(0.01, 0.5), BUSY, HOUR)
    assert power_feasible(device, PoissonLoad(0.01, 0.0), BUSY, HOUR)


def test_power_paper_counts_all_arrivals(make_device: DeviceFactory) -> None:
    device = make_device()
    load = PoissonLoad(0.01, 0.1)
    margin = power_feasible(device, load, PAPER, 100.0).margin
    assert margin == pytest.approx(poisson_cdf(1, 0.1) - 0.95)


def test_battery_busy_server(make_device: DeviceFactory) -> None:
    """Quantile 117 of Poisson(100) fits into floor(10000 / 70) = 142 requests."""
    device = make_device()
    margin = battery_feasible(device, PoissonLoad(100 / HOUR, 1.0), BUSY, HOUR)
    assert margin.feasible
    assert margin.margin == pytest.approx(poisson_cdf(142, 100.0) - 0.95)


def test_battery_paper_threshold(make_device: DeviceFactory) -> None:
    """The expected level b0 - pi * rate * alpha * T^2 / 2 hits zero at 10000 / 129600."""
    device = make_device()
    solution = solve_alpha(device, 0.01, PAPER, HOUR, constraints=["battery"])
    assert solution.alpha == pytest.approx(10_000 / 129_600, abs=1e-5)
    assert solution.binding == "battery"


def test_thermal_paper_headroom() -> None:
    """18 °C of headroom over 5.7354 °C per pulse leaves room for three requests."""
    device = DeviceSpec(
        "d", 0.6, 7560.0, 0.6, 65.0, ImpulseResponse.parametric([ThermalStage(20.0, 100.0)])
    )
    load = PoissonLoad(0.01, 0.05)
    margin = thermal_feasible(device, load, PAPER, horizon=HOUR, temp_limit_c=43.0, dt_s=0.1)
    assert margin.margin == pytest.approx(poisson_cdf(3, 1.8) - 0.95)


def test_thermal_monte_carlo_is_reproducible(glass: Scenario) -> None:
    device = glass.device("glass")
    load = PoissonLoad(1 / 360, 0.3)
    kwargs = {"horizon": HOUR, "temp_limit_c": 43.0, "dt_s": 0.1}
    critical_rates.cache_clear()
    first = thermal_feasible(device, load, BUSY, **kwargs)
    critical_rates.cache_clear()
    second = thermal_feasible(device, load, BUSY, **kwargs)
    assert first == second


def test_thermal_monte_carlo_needs_runs(glass: Scenario) -> None:
    policy = ConfidencePolicy(mc_runs=0)
    with pytest.raises(ValueError, match="at least one run"):
        thermal_feasible(
            glass.device("glass"), PoissonLoad(0.01, 0.5), policy, horizon=HOUR, temp_limit_c=43.0, dt_s=0.1
        )


def test_power_sufficiency() -> None:
    assert power_sufficiency(PoissonLoad(1 / HOUR, 1.0), HOUR, HOUR) == pytest.approx(0.654254, abs=1e-6)
    assert power_sufficiency(PoissonLoad(1 / HOUR, 0.0), HOUR, HOUR) == pytest.approx(1.0)
    assert power_sufficiency(PoissonLoad(5 / HOUR, 1.0), 0.0, HOUR) == pytest.approx(math.exp(-5))
    with pytest.raises(ValueError):
        power_sufficiency(PoissonLoad(1 / HOUR, 1.0), 2 * HOUR, HOUR)


def test_tiny_rate_serves_everything_locally(glass: Scenario) -> None:
    solution = solve_alpha(glass.device("glass"), 1e-7, BUSY, HOUR)
    assert solution.alpha == 1.0
    assert solution.binding == "none"


def test_glass_is_temperature_bound(glass: Scenario) -> None:
    device = glass.device("glass")
    power_only = solve_alpha(device, 1 / 360, BUSY, HOUR, constraints=["power"])
    full = solve_alpha(device, 1 / 360, BUSY, HOUR)
    assert full.binding == "temperature"
    assert full.alpha < power_only.alpha
    assert 0.1 < full.alpha < 0.35
    assert full.slack_at_alpha >= 0


def test_solution_is_sandwiched(glass: Scenario) -> None:
    """alpha* is feasible and alpha* + 1e-5 is not."""
    device = glass.device("glass")
    solution = solve_alpha(device, 1 / 360, BUSY, HOUR)
    assert _all_feasible(device, 1 / 360, solution.alpha, BUSY)
    assert not _all_feasible(device, 1 / 360, min(1.0, solution.alpha + 1e-5), BUSY)


def test_alpha_monotone_in_omega(glass: Scenario) -> None:
    device = glass.device("glass")
    alphas = [
        solve_alpha(device, 1 / 360, ConfidencePolicy(omega=w, mc_runs=300), HOUR).alpha
        for w in (0.8, 0.9, 0.95, 0.99)
    ]
    assert all(b <= a for a, b in zip(alphas, alphas[1:]))


def test_alpha_monotone_in_rate(glass: Scenario) -> None:
    device = glass.device("glass")
    alphas = [solve_alpha(device, rate, BUSY, HOUR).alpha for rate in (1 / 720, 1 / 360, 1 / 180)]
    assert all(b <= a + 1e-6 for a, b in zip(alphas, alphas[1:]))


def test_alpha_monotone_in_request_power(glass: Scenario) -> None:
    base = glass.device("glass")
    alphas = []
    for power in (0.4, 0.5, 0.6):
        device = DeviceSpec(
            base.id, base.tdp_watts, base.battery_joules, power, base.request_duration_s, base.thermal
        )
        alphas.append(solve_alpha(device, 1 / 360, BUSY, HOUR).alpha)
    assert all(b <= a + 1e-6 for a, b in zip(alphas, alphas[1:]))


def test_paper_mode_on_glass(glass: Scenario) -> None:
    """Power and temperature both allow a single pulse: cdf(1, 10 alpha) = 0.95."""
    solution = solve_alpha(glass.device("glass"), 1 / 360, PAPER, HOUR)
    assert solution.alpha == pytest.approx(0.03554, abs=2e-4)
    assert solution.binding in ("power", "temperature")


def test_infeasible_at_zero_raises(make_device: DeviceFactory) -> None:
    device = make_device(idle_power_watts=3.0)
    with pytest.raises(NumericError) as info:
        solve_alpha(device, 0.01, BUSY, HOUR)
    assert info.value.constraint in ("power", "battery", "temperature")


def test_unknown_constraint_rejected(make_device: DeviceFactory) -> None:
    with pytest.raises(ValueError, match="unknown constraints"):
        solve_alpha(make_device(), 0.01, BUSY, HOUR, constraints=["humidity"])  # type: ignore[list-item]


def test_solve_all_replication(replication: Scenario) -> None:
    solutions = {s.device: s for s in solve_all(replication, BUSY)}
    assert solutions["hololens"].alpha == 1.0
    assert solutions["hololens"].binding == "none"
    assert solutions["glass"].binding == "temperature"
