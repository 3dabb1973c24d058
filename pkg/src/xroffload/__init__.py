"""xroffload - thermal-, power- and battery-aware edge offloading for XR wearables.

This package models a wearable's power, battery and temperature under a given
set of offloading decisions, solves a stationary stochastic offloading policy
whose constraints hold with a chosen confidence, and simulates it against
baselines.

Example:
    ```python
    from xroffload import ConfidencePolicy, Strategy, load_scenario, run, solve_all

    scenario = load_scenario("replication.scenario")
    alpha = {s.device: s.alpha for s in solve_all(scenario, ConfidencePolicy(omega=0.95))}
    result = run(scenario, Strategy.tao(alpha), seed=0)
    print(result.total_cost, result["glass"].metrics.max_temp_c)
    ```
"""

from loguru import logger

from xroffload._chance import (
    AlphaSolution,  # noqa: F401
    ConfidencePolicy,  # noqa: F401
    Margin,  # noqa: F401
    PoissonLoad,  # noqa: F401
    battery_feasible,  # noqa: F401
    poisson_cdf,  # noqa: F401
    poisson_pmf,  # noqa: F401
    poisson_quantile,  # noqa: F401
    power_feasible,  # noqa: F401
    power_sufficiency,  # noqa: F401
    solve_alpha,  # noqa: F401
    solve_all,  # noqa: F401
    thermal_feasible,  # noqa: F401
)
from xroffload._config import (
    ExperimentConfig,  # noqa: F401
    bundled_scenario,  # noqa: F401
    load_experiment,  # noqa: F401
    load_scenario,  # noqa: F401
    parse_scenario,  # noqa: F401
)
from xroffload._model import (
    DecisionVector,  # noqa: F401
    DeviceSpec,  # noqa: F401
    FeasibilityReport,  # noqa: F401
    PoissonSource,  # noqa: F401
    Request,  # noqa: F401
    Scenario,  # noqa: F401
    build_power_trace,  # noqa: F401
    check_feasibility,  # noqa: F401
    integrate_battery,  # noqa: F401
    oracle_optimize,  # noqa: F401
)
from xroffload._series import TimeSeries  # noqa: F401
from xroffload._sim import (
    EnsembleSummary,  # noqa: F401
    RunResult,  # noqa: F401
    Strategy,  # noqa: F401
    TemperatureHistogram,  # noqa: F401
    empirical_temperature_distribution,  # noqa: F401
    generate_requests,  # noqa: F401
    monte_carlo,  # noqa: F401
    run,  # noqa: F401
)
from xroffload._thermal import (
    ImpulseResponse,  # noqa: F401
    ThermalStage,  # noqa: F401
    convolve_temperature,  # noqa: F401
    load_impulse_csv,  # noqa: F401
    peak_pulse_rise,  # noqa: F401
    pulse_response,  # noqa: F401
    pulse_response_closed_form,  # noqa: F401
    tabulate,  # noqa: F401
    write_impulse_csv,  # noqa: F401
)
from xroffload.errors import (
    InstanceTooLargeError,  # noqa: F401
    NumericError,  # noqa: F401
    ScenarioError,  # noqa: F401
    XROffloadError,  # noqa: F401
)

logger.disable("xroffload")

__version__ = "0.1.0"
__all__ = [
    "AlphaSolution",
    "ConfidencePolicy",
    "DecisionVector",
    "DeviceSpec",
    "EnsembleSummary",
    "ExperimentConfig",
    "FeasibilityReport",
    "ImpulseResponse",
    "InstanceTooLargeError",
    "Margin",
    "NumericError",
    "PoissonLoad",
    "PoissonSource",
    "Request",
    "RunResult",
    "Scenario",
    "ScenarioError",
    "Strategy",
    "TemperatureHistogram",
    "ThermalStage",
    "TimeSeries",
    "XROffloadError",
    "battery_feasible",
    "build_power_trace",
    "bundled_scenario",
    "check_feasibility",
    "convolve_temperature",
    "empirical_temperature_distribution",
    "generate_requests",
    "integrate_battery",
    "load_experiment",
    "load_impulse_csv",
    "load_scenario",
    "monte_carlo",
    "oracle_optimize",
    "parse_scenario",
    "peak_pulse_rise",
    "poisson_cdf",
    "poisson_pmf",
    "poisson_quantile",
    "power_feasible",
    "power_sufficiency",
    "pulse_response",
    "pulse_response_closed_form",
    "run",
    "solve_alpha",
    "solve_all",
    "tabulate",
    "thermal_feasible",
    "write_impulse_csv",
]
