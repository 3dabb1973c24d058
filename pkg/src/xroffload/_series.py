"""Uniform-grid time series shared by the power, battery and thermal engines."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

FEASIBILITY_SLACK = 1e-9
"""Absolute slack (native units) applied to every constraint check."""

_GRID_EPS = 1e-9


def grid_size(horizon_s: float, dt_s: float) -> int:
    """Number of samples of a grid spanning `[0, horizon_s]` with step `dt_s`."""
    if dt_s <= 0:
        raise ValueError(f"dt must be positive, got {dt_s}")
    return int(math.floor(horizon_s / dt_s + _GRID_EPS)) + 1


def snap(t_s: float, dt_s: float) -> int:
    """Index of the grid point nearest to `t_s` (halves round up)."""
    return int(math.floor(t_s / dt_s + 0.5))


def same_step(a: float, b: float) -> bool:
    return math.isclose(a, b, rel_tol=1e-9, abs_tol=0.0)


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """Samples on a uniform grid `t0_s + k * dt_s`.

    Attributes:
        t0_s: Time of the first sample.
        dt_s: Grid step, strictly positive.
        samples: Read-only float array.
    """

    t0_s: float
    dt_s: float
    samples: NDArray[np.float64]

    def __post_init__(self) -> None:
        if self.dt_s <= 0:
            raise ValueError(f"dt must be positive, got {self.dt_s}")
        samples = np.array(self.samples, dtype=float)
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    @classmethod
    def spanning(cls, horizon_s: float, dt_s: float, fill: float = 0.0) -> TimeSeries:
        """Constant series covering `[0, horizon_s]`."""
        return cls(0.0, dt_s, np.full(grid_size(horizon_s, dt_s), fill, dtype=float))

    @classmethod
    def of(cls, samples: ArrayLike, dt_s: float, t0_s: float = 0.0) -> TimeSeries:
        return cls(t0_s, dt_s, np.asarray(samples, dtype=float))

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def times(self) -> NDArray[np.float64]:
        return self.t0_s + self.dt_s * np.arange(len(self.samples))

    @property
    def end_s(self) -> float:
        return self.t0_s + self.dt_s * (len(self.samples) - 1)

    def first_time_above(self, limit: float) -> float | None:
        """Time of the first sample exceeding `limit` (plus slack), or `None`."""
        hits = np.flatnonzero(self.samples > limit + FEASIBILITY_SLACK)
        return float(self.times[hits[0]]) if hits.size else None

    def first_time_below(self, limit: float) -> float | None:
        """Time of the first sample below `limit` (minus slack), or `None`."""
        hits = np.flatnonzero(self.samples < limit - FEASIBILITY_SLACK)
        return float(self.times[hits[0]]) if hits.size else None

    def downsample(self, dt_out_s: float) -> TimeSeries:
        """Keep every n-th sample so that the step becomes `dt_out_s`.

        Raises:
            ValueError: If `dt_out_s` is not an integer multiple of the grid step.
        """
        ratio = dt_out_s / self.dt_s
        stride = int(round(ratio))
        if stride < 1 or not math.isclose(ratio, stride, rel_tol=1e-6):
            raise ValueError(
                f"output step {dt_out_s} s is not a multiple of the grid step {self.dt_s} s"
            )
        return TimeSeries(self.t0_s, self.dt_s * stride, self.samples[::stride])
