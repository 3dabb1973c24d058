"""Linear time-invariant thermal model of a wearable.

The device temperature is the ambient temperature plus the convolution of the
dissipated power with an impulse response `h(t)` in °C/J. Impulse responses are
either tabulated (e.g. exported from a finite-element tool) or parametric, a
sum of first-order stages `h(t) = sum_i (R_i / theta_i) * exp(-t / theta_i)`.

Example:
    ```python
    from xroffload import ImpulseResponse, ThermalStage, TimeSeries, convolve_temperature

    resp = ImpulseResponse.parametric([ThermalStage(10.0, 100.0)])
    power = TimeSeries.spanning(horizon_s=1000.0, dt_s=0.1, fill=2.0)
    temp = convolve_temperature(power, resp.tabulate(0.1), ambient_c=25.0)
    ```
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from os import PathLike
from pathlib import Path
from typing import Iterable, Literal, Self, TypeAlias

import numpy as np
import pandas as pd
from loguru import logger
from numpy.typing import ArrayLike, NDArray
from scipy.signal import fftconvolve

from xroffload._series import TimeSeries, same_step, snap
from xroffload.errors import ScenarioError

ResponseKind: TypeAlias = Literal["tabulated", "parametric"]
"""How an impulse response is represented."""

IMPULSE_CSV_HEADER = ("time_s", "response_c_per_j")
"""Column names of an impulse-response CSV file."""

DECAY_FRACTION = 0.01
"""The last tabulated sample must not exceed this fraction of the peak."""

MIN_HORIZON_THETAS = 5.0
DEFAULT_HORIZON_THETAS = 7.0
_GRID_JITTER = 1e-3


@dataclass(frozen=True)
class ThermalStage:
    """One first-order stage of a parametric impulse response.

    Attributes:
        r_th_c_per_w: Thermal resistance contribution in °C/W.
        theta_s: Time constant in seconds.
    """

    r_th_c_per_w: float
    theta_s: float

    def __post_init__(self) -> None:
        if not self.r_th_c_per_w > 0:
            raise ValueError(f"stage resistance must be positive, got {self.r_th_c_per_w}")
        if not self.theta_s > 0:
            raise ValueError(f"stage time constant must be positive, got {self.theta_s}")


@dataclass(frozen=True, eq=False)
class ImpulseResponse:
    """Thermal impulse response `h(t)` of a device, in °C/J.

    Use `ImpulseResponse.parametric` or `ImpulseResponse.tabulated` to build one.

    Attributes:
        kind: `parametric` or `tabulated`.
        stages: First-order stages (parametric only).
        truncation_horizon_s: Length of the kernel once tabulated.
        dt_s: Sample step (tabulated only).
        samples: Read-only kernel samples `h(k * dt_s)` (tabulated only).
    """

    kind: ResponseKind
    stages: tuple[ThermalStage, ...] = ()
    truncation_horizon_s: float | None = None
    dt_s: float | None = None
    samples: NDArray[np.float64] | None = None

    @classmethod
    def parametric(
        cls,
        stages: Iterable[ThermalStage],
        truncation_horizon_s: float | None = None,
    ) -> Self:
        """Sum of first-order stages.

        Args:
            stages: At least one stage.
            truncation_horizon_s: Kernel length used when tabulating, defaults to
                seven times the slowest time constant.
        """
        stages = tuple(stages)
        if not stages:
            raise ValueError("a parametric impulse response needs at least one stage")
        horizon = truncation_horizon_s
        if horizon is None:
            horizon = DEFAULT_HORIZON_THETAS * max(s.theta_s for s in stages)
        if not horizon > 0:
            raise ValueError(f"truncation horizon must be positive, got {horizon}")
        return cls(kind="parametric", stages=stages, truncation_horizon_s=float(horizon))

    @classmethod
    def tabulated(cls, dt_s: float, samples: ArrayLike) -> Self:
        """Sampled kernel `h(k * dt_s)`.

        Raises:
            ValueError: If the samples are empty, negative or do not decay.
        """
        if not dt_s > 0:
            raise ValueError(f"dt must be positive, got {dt_s}")
        values = np.array(samples, dtype=float)
        if values.ndim != 1 or values.size == 0:
            raise ValueError("a tabulated impulse response needs a non-empty 1-D sample list")
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise ValueError("impulse response samples must be finite and non-negative")
        peak = float(values.max())
        if peak <= 0:
            raise ValueError("impulse response is identically zero")
        if values[-1] > DECAY_FRACTION * peak:
            raise ValueError(
                f"impulse response has not decayed: last sample {values[-1]:.4g} > "
                f"{DECAY_FRACTION:.0%} of peak {peak:.4g}; truncation horizon too short"
            )
        values.setflags(write=False)
        return cls(
            kind="tabulated",
            truncation_horizon_s=dt_s * (values.size - 1),
            dt_s=float(dt_s),
            samples=values,
        )

    @property
    def total_resistance(self) -> float:
        """Steady-state rise per watt (°C/W)."""
        if self.kind == "parametric":
            return sum(s.r_th_c_per_w for s in self.stages)
        assert self.samples is not None and self.dt_s is not None
        return float(self.dt_s * self.samples.sum())

    @property
    def max_theta_s(self) -> float | None:
        return max(s.theta_s for s in self.stages) if self.stages else None

    def evaluate(self, t_s: ArrayLike) -> NDArray[np.float64]:
        """Closed-form `h(t)` of a parametric response."""
        if self.kind != "parametric":
            raise ValueError("only parametric responses can be evaluated in closed form")
        t = np.asarray(t_s, dtype=float)
        return sum(
            (s.r_th_c_per_w / s.theta_s) * np.exp(-t / s.theta_s) for s in self.stages
        )  # type: ignore[return-value]

    def tabulate(self, dt_s: float) -> ImpulseResponse:
        """Shortcut for `tabulate(self, dt_s)`."""
        return tabulate(self, dt_s)


def tabulate(resp: ImpulseResponse, dt_s: float) -> ImpulseResponse:
    """Sample an impulse response on a grid with step `dt_s`.

    Parametric responses are evaluated at `k * dt_s` up to the truncation
    horizon; tabulated responses with a different step are resampled by linear
    interpolation.

    Raises:
        ValueError: If the truncation horizon is shorter than five of the slowest
            time constants, or the resampled kernel violates the decay rule.
    """
    if not dt_s > 0:
        raise ValueError(f"dt must be positive, got {dt_s}")
    if resp.kind == "parametric":
        assert resp.truncation_horizon_s is not None and resp.max_theta_s is not None
        if resp.truncation_horizon_s < MIN_HORIZON_THETAS * resp.max_theta_s * (1 - 1e-12):
            raise ValueError(
                f"truncation horizon {resp.truncation_horizon_s} s is shorter than "
                f"{MIN_HORIZON_THETAS:g} x theta_max = {MIN_HORIZON_THETAS * resp.max_theta_s} s"
            )
        n = int(math.floor(resp.truncation_horizon_s / dt_s + 1e-9)) + 1
        samples = resp.evaluate(dt_s * np.arange(n))
        logger.debug("tabulated {}-stage response: {} samples at dt={}", len(resp.stages), n, dt_s)
        return ImpulseResponse.tabulated(dt_s, samples)

    assert resp.samples is not None and resp.dt_s is not None
    if same_step(resp.dt_s, dt_s):
        return resp
    src_t = resp.dt_s * np.arange(resp.samples.size)
    n = int(math.floor(src_t[-1] / dt_s + 1e-9)) + 1
    samples = np.interp(dt_s * np.arange(n), src_t, resp.samples)
    logger.debug("resampled tabulated response from dt={} to dt={}", resp.dt_s, dt_s)
    return ImpulseResponse.tabulated(dt_s, samples)


def temperature_rise(power: TimeSeries, resp: ImpulseResponse) -> NDArray[np.float64]:
    """Causal discrete convolution `dt * sum_k p[k] h[n-k]` on the power grid."""
    if resp.kind != "tabulated":
        raise ValueError("convolution needs a tabulated response, call tabulate() first")
    assert resp.samples is not None and resp.dt_s is not None
    if not same_step(resp.dt_s, power.dt_s):
        raise ValueError(
            f"power step {power.dt_s} s does not match impulse-response step {resp.dt_s} s"
        )
    n = len(power)
    if not np.any(power.samples):
        return np.zeros(n)
    return fftconvolve(power.samples, resp.samples)[:n] * power.dt_s


def convolve_temperature(
    power: TimeSeries, resp: ImpulseResponse, ambient_c: float
) -> TimeSeries:
    """Absolute temperature trace `ambient + (p * h)` in °C.

    Args:
        power: Power trace in watts.
        resp: Tabulated impulse response sharing the power grid step.
        ambient_c: Baseline temperature.

    Raises:
        ValueError: On a step mismatch or a parametric response.
    """
    return TimeSeries(power.t0_s, power.dt_s, ambient_c + temperature_rise(power, resp))


def pulse_response_closed_form(
    a_watts: float, t_pulse_s: float, stage: ThermalStage, t_s: ArrayLike
) -> float | NDArray[np.float64]:
    """Rise of one first-order stage driven by a rectangular pulse.

    The pulse of amplitude `a_watts` over `[0, t_pulse_s]` is the superposition
    of the steps `A u(t)` and `-A u(t - t_pulse_s)`; with `B = A * R_th` the rise is
    `B (1 - exp(-t/theta))` during the pulse and
    `B [(1 - exp(-t/theta)) - (1 - exp(-(t - t_pulse)/theta))]` afterwards.
    """
    t = np.asarray(t_s, dtype=float)
    if np.any(t < 0):
        raise ValueError("pulse response is defined for t >= 0 only")
    b = a_watts * stage.r_th_c_per_w
    rise = b * (1.0 - np.exp(-t / stage.theta_s))
    after = t > t_pulse_s
    rise = rise - np.where(
        after, b * (1.0 - np.exp(-np.where(after, t - t_pulse_s, 0.0) / stage.theta_s)), 0.0
    )
    return float(rise) if rise.ndim == 0 else rise


def pulse_response(
    resp: ImpulseResponse, a_watts: float, t_pulse_s: float, t_s: ArrayLike
) -> float | NDArray[np.float64]:
    """Closed-form pulse response summed over all stages of a parametric response."""
    if resp.kind != "parametric":
        raise ValueError("closed-form pulse response needs a parametric response")
    total = sum(
        np.asarray(pulse_response_closed_form(a_watts, t_pulse_s, s, t_s)) for s in resp.stages
    )
    total = np.asarray(total, dtype=float)
    return float(total) if total.ndim == 0 else total


def peak_pulse_rise(
    resp: ImpulseResponse, a_watts: float, t_pulse_s: float, dt_s: float
) -> float:
    """Peak temperature rise caused by a single request pulse.

    Every stage rises monotonically during the pulse and decays afterwards, so a
    parametric response peaks at the pulse end. Tabulated responses are
    convolved numerically.
    """
    if resp.kind == "parametric":
        return float(pulse_response(resp, a_watts, t_pulse_s, t_pulse_s))
    kernel = tabulate(resp, dt_s)
    assert kernel.samples is not None
    pulse = np.full(snap(t_pulse_s, dt_s) + 1, a_watts)
    return float((fftconvolve(pulse, kernel.samples) * dt_s).max())


def load_impulse_csv(path: str | PathLike[str]) -> ImpulseResponse:
    """Read a tabulated impulse response from `time_s,response_c_per_j` CSV.

    Raises:
        ScenarioError: Missing header, non-numeric cells, a time column that does
            not start at zero or is not uniform within 0.1%, negative samples, or
            a kernel that does not decay.
    """
    path = Path(path)
    source = str(path)
    try:
        frame = pd.read_csv(
            path, encoding="utf-8-sig", skipinitialspace=True, float_precision="round_trip"
        )
    except FileNotFoundError:
        raise ScenarioError("impulse-response file not found", source=source) from None
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise ScenarioError(f"unreadable impulse-response CSV: {exc}", source=source) from exc

    columns = tuple(str(c).strip() for c in frame.columns)
    if columns != IMPULSE_CSV_HEADER:
        raise ScenarioError(
            f"expected header '{','.join(IMPULSE_CSV_HEADER)}', found '{','.join(columns)}'",
            source=source,
            line=1,
        )
    if len(frame) < 2:
        raise ScenarioError("impulse response needs at least two samples", source=source)

    numeric = frame.apply(pd.to_numeric, errors="coerce")
    bad = numeric.isna().any(axis=1).to_numpy()
    if bad.any():
        row = int(np.flatnonzero(bad)[0])
        raise ScenarioError("non-numeric value", source=source, line=row + 2)

    t = numeric["time_s"].to_numpy(dtype=float)
    h = numeric["response_c_per_j"].to_numpy(dtype=float)
    if abs(t[0]) > 1e-12:
        raise ScenarioError("time column must start at 0", source=source, line=2)
    steps = np.diff(t)
    if np.any(steps <= 0):
        row = int(np.flatnonzero(steps <= 0)[0])
        raise ScenarioError("time column must be strictly increasing", source=source, line=row + 3)
    dt = float((t[-1] - t[0]) / (len(t) - 1))
    jitter = np.abs(steps - dt) / dt
    if np.any(jitter > _GRID_JITTER):
        row = int(np.flatnonzero(jitter > _GRID_JITTER)[0])
        raise ScenarioError(
            f"time grid is not uniform (step {steps[row]:.6g} s vs {dt:.6g} s)",
            source=source,
            line=row + 3,
        )
    if np.any(h < 0):
        row = int(np.flatnonzero(h < 0)[0])
        raise ScenarioError("negative impulse-response sample", source=source, line=row + 2)
    try:
        resp = ImpulseResponse.tabulated(dt, h)
    except ValueError as exc:
        raise ScenarioError(str(exc), source=source) from exc
    logger.debug("loaded impulse response {} ({} samples, dt={})", source, len(h), dt)
    return resp


def write_impulse_csv(resp: ImpulseResponse, path: str | PathLike[str]) -> Path:
    """Write a tabulated response so that `load_impulse_csv` reads it back unchanged."""
    if resp.kind != "tabulated":
        raise ValueError("only tabulated responses can be written, call tabulate() first")
    assert resp.samples is not None and resp.dt_s is not None
    path = Path(path)
    frame = pd.DataFrame(
        {
            IMPULSE_CSV_HEADER[0]: resp.dt_s * np.arange(resp.samples.size),
            IMPULSE_CSV_HEADER[1]: resp.samples,
        }
    )
    frame.to_csv(path, index=False, float_format="%.17g", lineterminator="\n")
    return path
