"""Chance-constrained stationary offloading policy.

Every device serves an arriving request locally with a fixed probability
`alpha`. Local requests then form a thinned Poisson process with rate
`rate * alpha`, and each of the three constraints (power, battery and
temperature) must hold with probability at least `omega`. Feasibility is
monotone in `alpha`, so the largest admissible `alpha` per device is found by
bisection.

Two load models are available:

* `paper`: every local request counts towards the load for the rest of the
  horizon (`N(t) ~ Poisson(rate * alpha * t)`). Closed forms throughout.
* `busy_server`: requests occupy the device only while they are served, which
  matches the simulator. Power uses the stationary occupancy
  `Poisson(rate * alpha * duration)`, battery the total energy of
  `Poisson(rate * alpha * T)` requests, temperature a seeded Monte Carlo
  ensemble driven through the thermal convolution.

Example:
    ```python
    from xroffload import ConfidencePolicy, load_scenario, solve_all

    scenario = load_scenario("glass.scenario")
    for sol in solve_all(scenario, ConfidencePolicy(omega=0.95)):
        print(sol.device, sol.alpha, sol.binding)
    ```
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Literal, TypeAlias

import numpy as np
from loguru import logger
from numpy.typing import ArrayLike, NDArray
from scipy import stats
from scipy.signal import fftconvolve
from scipy.special import gammaln, pdtr, xlogy

from xroffload._model import DeviceSpec, Scenario, device_kernel
from xroffload._series import FEASIBILITY_SLACK, grid_size, snap
from xroffload._thermal import ImpulseResponse, peak_pulse_rise
from xroffload.errors import NumericError

LoadMode: TypeAlias = Literal["paper", "busy_server"]
"""Load model used by the constraint evaluators."""

Constraint: TypeAlias = Literal["power", "battery", "temperature"]
"""Constraint names, also used as binding labels."""

Binding: TypeAlias = Literal["power", "battery", "temperature", "none"]

ALL_CONSTRAINTS: tuple[Constraint, ...] = ("power", "battery", "temperature")
ALPHA_TOLERANCE = 1e-6
DEFAULT_MC_RUNS = 1000
_TAIL_SIGMAS = 20.0


@dataclass(frozen=True)
class ConfidencePolicy:
    """Confidence level and evaluation settings.

    Attributes:
        omega: Required probability that a constraint holds, in (0, 1).
        mode: `busy_server` (default) or `paper`.
        mc_runs: Monte Carlo runs of the busy-server thermal constraint.
        mc_seed: Seed of the Monte Carlo ensemble.
    """

    omega: float = 0.95
    mode: LoadMode = "busy_server"
    mc_runs: int = DEFAULT_MC_RUNS
    mc_seed: int = 0

    def __post_init__(self) -> None:
        if not 0 < self.omega < 1:
            raise ValueError(f"omega must lie in (0, 1), got {self.omega}")
        if self.mode not in ("paper", "busy_server"):
            raise ValueError(f"unknown load mode {self.mode!r}")
        if self.mc_seed < 0:
            raise ValueError("mc_seed must be non-negative")


@dataclass(frozen=True)
class PoissonLoad:
    """Local-service load of one device: arrival rate thinned by `alpha`."""

    rate_per_s: float
    alpha: float

    def __post_init__(self) -> None:
        if not self.rate_per_s >= 0:
            raise ValueError(f"rate must be non-negative, got {self.rate_per_s}")
        if not 0 <= self.alpha <= 1:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")

    @property
    def local_rate(self) -> float:
        return self.rate_per_s * self.alpha

    def count_mean(self, t_s: float) -> float:
        """Mean number of local requests that arrived by `t_s`."""
        return self.local_rate * t_s

    def busy_mean(self, duration_s: float) -> float:
        """Mean number of local requests in service at any time."""
        return self.local_rate * duration_s


@dataclass(frozen=True)
class Margin:
    """Outcome of one constraint evaluation; feasible iff `margin >= 0`."""

    constraint: Constraint
    margin: float

    @property
    def feasible(self) -> bool:
        return self.margin >= 0

    def __bool__(self) -> bool:
        return self.feasible


@dataclass(frozen=True)
class AlphaSolution:
    """Largest admissible local-service probability of a device.

    Attributes:
        device: Device id.
        alpha: Admissible probability, feasible by construction.
        binding: Constraint that stops `alpha` from growing, `none` if `alpha == 1`.
        slack_at_alpha: Smallest margin at `alpha`.
        margins: Margin of every evaluated constraint at `alpha`.
    """

    device: str
    alpha: float
    binding: Binding
    slack_at_alpha: float
    margins: dict[Constraint, float] = field(default_factory=dict)


def _check_counts(k: ArrayLike, mean: ArrayLike) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    k_arr = np.asarray(k, dtype=float)
    m_arr = np.asarray(mean, dtype=float)
    if np.any(k_arr < 0) or np.any(k_arr != np.floor(k_arr)):
        raise ValueError("k must be a non-negative integer")
    if np.any(m_arr < 0) or not np.all(np.isfinite(m_arr)):
        raise ValueError("mean must be finite and non-negative")
    return k_arr, m_arr


def _scalar(value: NDArray[np.float64]) -> float | NDArray[np.float64]:
    return float(value) if value.ndim == 0 else value


def poisson_pmf(k: ArrayLike, mean: ArrayLike) -> float | NDArray[np.float64]:
    """`P(N = k)` for `N ~ Poisson(mean)`, evaluated in log space."""
    k_arr, m_arr = _check_counts(k, mean)
    with np.errstate(divide="ignore"):
        log_pmf = xlogy(k_arr, m_arr) - m_arr - gammaln(k_arr + 1)
    return _scalar(np.exp(log_pmf))


def poisson_cdf(k: ArrayLike, mean: ArrayLike) -> float | NDArray[np.float64]:
    """`P(N <= k)` for `N ~ Poisson(mean)`."""
    k_arr, m_arr = _check_counts(k, mean)
    return _scalar(np.asarray(pdtr(k_arr, m_arr), dtype=float))


def poisson_quantile(omega: float, mean: float) -> int:
    """Smallest `k` with `poisson_cdf(k, mean) >= omega`."""
    if not 0 < omega < 1:
        raise ValueError(f"omega must lie in (0, 1), got {omega}")
    _check_counts(0, mean)
    if mean == 0:
        return 0
    k = max(int(stats.poisson.ppf(omega, mean)), 0)
    # align with poisson_cdf exactly so that the quantile is its adjoint
    while poisson_cdf(k, mean) < omega:
        k += 1
    while k > 0 and poisson_cdf(k - 1, mean) >= omega:
        k -= 1
    return k


def _fits(capacity: float) -> int:
    """Number of whole units that fit into `capacity`, -1 if none do."""
    if capacity < -FEASIBILITY_SLACK:
        return -1
    return int(math.floor(capacity + 1e-9))


def _cdf_or_zero(k: int, mean: float) -> float:
    return 0.0 if k < 0 else float(poisson_cdf(k, mean))


def power_feasible(
    device: DeviceSpec, load: PoissonLoad, policy: ConfidencePolicy, t: float
) -> Margin:
    """`P(idle + pi * N <= TDP) >= omega`.

    `N` is the number of local requests counted up to `t` in `paper` mode and
    the number in service in `busy_server` mode.
    """
    fits = _fits((device.tdp_watts - device.idle_power_watts) / device.request_power_watts)
    if policy.mode == "paper":
        mean = load.count_mean(t)
    else:
        mean = load.busy_mean(device.request_duration_s)
    return Margin("power", _cdf_or_zero(fits, mean) - policy.omega)


def battery_feasible(
    device: DeviceSpec, load: PoissonLoad, policy: ConfidencePolicy, horizon: float
) -> Margin:
    """The battery must not deplete before the horizon.

    Both modes require that the `omega`-quantile of the request count over the
    horizon does not exceed the number of requests the battery can afford. The
    `paper` mode additionally requires the expected level at the horizon,
    `b0 - pi * rate * alpha * T^2 / 2`, to stay positive; its margin is the
    smaller of the two, the expectation term normalized by `b0`.
    """
    if not horizon > 0:
        raise ValueError(f"horizon must be positive, got {horizon}")
    budget = device.battery_joules - device.idle_power_watts * horizon
    affordable = _fits(budget / device.request_energy_joules)
    margin = _cdf_or_zero(affordable, load.count_mean(horizon)) - policy.omega
    if policy.mode == "paper":
        expected = budget - device.request_power_watts * load.local_rate * horizon**2 / 2
        margin = min(margin, expected / device.battery_joules)
    return Margin("battery", margin)


def _headroom(device: DeviceSpec, temp_limit_c: float) -> float:
    return temp_limit_c - device.ambient_temp_c - device.idle_power_watts * device.thermal.total_resistance


@dataclass(frozen=True, eq=False)
class CriticalRates:
    """Per-run thresholds of the busy-server thermal Monte Carlo.

    Run `i` stays below the limit for every local rate up to `rates[i]`. All
    runs share one unit-intensity Poisson process on `[0, T] x [0, inf)`:
    keeping the points with second coordinate below `rate * alpha` yields a
    Poisson stream of rate `rate * alpha`, so one ensemble answers every
    `alpha` and larger rates only ever add arrivals.
    """

    rates: NDArray[np.float64]

    def safe_fraction(self, local_rate: float) -> float:
        return float(np.mean(local_rate <= self.rates))


@lru_cache(maxsize=32)
def critical_rates(
    thermal: ImpulseResponse,
    request_power_w: float,
    request_duration_s: float,
    headroom_c: float,
    horizon_s: float,
    dt_s: float,
    rate_cap: float,
    runs: int,
    seed: int,
) -> CriticalRates:
    """Build the Monte Carlo ensemble for local rates up to `rate_cap`."""
    if runs <= 0:
        raise ValueError("Monte Carlo needs at least one run")
    kernel = device_kernel(thermal, dt_s)
    assert kernel.samples is not None
    pulse = np.full(snap(request_duration_s, dt_s) + 1, request_power_w)
    rise_one = fftconvolve(pulse, kernel.samples) * dt_s
    n = grid_size(horizon_s, dt_s)
    limit = headroom_c + FEASIBILITY_SLACK
    rates = np.full(runs, np.inf)
    logger.debug(
        "thermal ensemble: {} runs, rate cap {:.4g}/s, {} samples", runs, rate_cap, n
    )
    for run in range(runs):
        rng = np.random.default_rng((seed, run))
        rise = np.zeros(n)
        peak = 0.0
        v = 0.0
        while True:
            v += rng.exponential(1.0 / horizon_s)
            t = rng.uniform(0.0, horizon_s)
            if v > rate_cap:
                break
            start = min(snap(t, dt_s), n - 1)
            stop = min(start + rise_one.size, n)
            rise[start:stop] += rise_one[: stop - start]
            peak = max(peak, float(rise[start:stop].max()))
            if peak > limit:
                rates[run] = v
                break
    # an arrival exactly at the critical rate already violates
    return CriticalRates(np.nextafter(rates, -np.inf))


def thermal_feasible(
    device: DeviceSpec,
    load: PoissonLoad,
    policy: ConfidencePolicy,
    *,
    horizon: float,
    temp_limit_c: float,
    dt_s: float,
) -> Margin:
    """The device temperature must stay below `temp_limit_c` over the horizon.

    In `paper` mode each local request is charged with the peak rise of a
    single pulse and at most `floor(headroom / peak)` of them may accumulate.
    In `busy_server` mode the margin is the Monte Carlo fraction of runs that
    never cross the limit, minus `omega`.

    Raises:
        ValueError: If the Monte Carlo budget is zero.
    """
    headroom = _headroom(device, temp_limit_c)
    if policy.mode == "paper":
        one = peak_pulse_rise(
            device.thermal, device.request_power_watts, device.request_duration_s, dt_s
        )
        fits = _fits(headroom / one) if headroom >= 0 else -1
        return Margin("temperature", _cdf_or_zero(fits, load.count_mean(horizon)) - policy.omega)

    if policy.mc_runs <= 0:
        raise ValueError("Monte Carlo needs at least one run")
    if headroom < 0:
        return Margin("temperature", -policy.omega)
    if load.local_rate == 0:
        return Margin("temperature", 1.0 - policy.omega)
    ensemble = critical_rates(
        device.thermal,
        device.request_power_watts,
        device.request_duration_s,
        headroom,
        horizon,
        dt_s,
        load.rate_per_s,
        policy.mc_runs,
        policy.mc_seed,
    )
    return Margin("temperature", ensemble.safe_fraction(load.local_rate) - policy.omega)


def power_sufficiency(load: PoissonLoad, t: float, horizon: float) -> float:
    """`P(N(t) >= N(T))` for independent Poisson counts with means `rate*alpha*t` and `rate*alpha*T`.

    The two counts are treated as independent, so the result is not a property
    of a single counting process; it is not used by `solve_alpha`.
    """
    if not 0 <= t <= horizon:
        raise ValueError(f"need 0 <= t <= horizon, got t={t}, horizon={horizon}")
    m_t = load.count_mean(t)
    m_T = load.count_mean(horizon)
    top = int(math.ceil(m_T + _TAIL_SIGMAS * math.sqrt(m_T) + _TAIL_SIGMAS))
    i = np.arange(top + 1)
    p_T = np.asarray(poisson_pmf(i, m_T))
    # P(N(t) >= i) = 1 - P(N(t) <= i - 1)
    at_least = np.ones_like(p_T)
    at_least[1:] = stats.poisson.sf(i[1:] - 1, m_t) if m_t > 0 else 0.0
    return float(np.sum(p_T * at_least))


def _evaluate(
    device: DeviceSpec,
    rate: float,
    alpha: float,
    policy: ConfidencePolicy,
    horizon: float,
    temp_limit_c: float,
    dt_s: float,
    constraints: tuple[Constraint, ...],
) -> list[Margin]:
    load = PoissonLoad(rate, alpha)
    margins = []
    for name in constraints:
        if name == "power":
            margins.append(power_feasible(device, load, policy, horizon))
        elif name == "battery":
            margins.append(battery_feasible(device, load, policy, horizon))
        else:
            margins.append(
                thermal_feasible(
                    device, load, policy, horizon=horizon, temp_limit_c=temp_limit_c, dt_s=dt_s
                )
            )
    return margins


def solve_alpha(
    device: DeviceSpec,
    rate: float,
    policy: ConfidencePolicy,
    horizon: float,
    *,
    temp_limit_c: float = 43.0,
    dt_s: float = 0.1,
    constraints: Iterable[Constraint] = ALL_CONSTRAINTS,
) -> AlphaSolution:
    """Largest `alpha` in [0, 1] meeting every enabled constraint with confidence `omega`.

    Bisection to `ALPHA_TOLERANCE`; the returned `alpha` is always feasible. The
    binding constraint is the one with the smallest margin at `alpha` among
    those that fail just above it.

    Raises:
        NumericError: If even `alpha = 0` is infeasible.
    """
    enabled = tuple(dict.fromkeys(constraints))
    unknown = set(enabled) - set(ALL_CONSTRAINTS)
    if unknown:
        raise ValueError(f"unknown constraints {sorted(unknown)}")
    if rate < 0:
        raise ValueError(f"rate must be non-negative, got {rate}")

    def evaluate(alpha: float) -> list[Margin]:
        return _evaluate(device, rate, alpha, policy, horizon, temp_limit_c, dt_s, enabled)

    at_zero = evaluate(0.0)
    failing = [m for m in at_zero if not m.feasible]
    if failing:
        worst = min(failing, key=lambda m: m.margin)
        raise NumericError(
            f"device {device.id}: infeasible even with every request offloaded "
            f"({worst.constraint} margin {worst.margin:.4g})",
            constraint=worst.constraint,
        )

    at_one = evaluate(1.0)
    if all(at_one):
        return _solution(device.id, 1.0, "none", at_one)

    lo, hi = 0.0, 1.0
    steps = 0
    while hi - lo > ALPHA_TOLERANCE:
        mid = 0.5 * (lo + hi)
        if all(evaluate(mid)):
            lo = mid
        else:
            hi = mid
        steps += 1
    logger.debug("device {}: alpha in [{:.7f}, {:.7f}] after {} steps", device.id, lo, hi, steps)

    at_lo = evaluate(lo)
    failing_names = {m.constraint for m in evaluate(hi) if not m.feasible}
    candidates = [m for m in at_lo if m.constraint in failing_names]
    binding = min(candidates, key=lambda m: m.margin).constraint
    return _solution(device.id, lo, binding, at_lo)


def _solution(device: str, alpha: float, binding: Binding, margins: list[Margin]) -> AlphaSolution:
    return AlphaSolution(
        device=device,
        alpha=alpha,
        binding=binding,
        slack_at_alpha=min((m.margin for m in margins), default=math.inf),
        margins={m.constraint: m.margin for m in margins},
    )


def solve_all(
    scenario: Scenario,
    policy: ConfidencePolicy,
    constraints: Iterable[Constraint] = ALL_CONSTRAINTS,
) -> list[AlphaSolution]:
    """Solve every device of a scenario; devices are independent."""
    constraints = tuple(constraints)
    return [
        solve_alpha(
            spec,
            scenario.rate_for(spec.id),
            policy,
            scenario.horizon_s,
            temp_limit_c=scenario.temp_limit_c,
            dt_s=scenario.dt_s,
            constraints=constraints,
        )
        for spec in scenario.devices
    ]
