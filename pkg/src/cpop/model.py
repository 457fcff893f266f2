"""Input/result types for change-in-slope fitting and evaluation of fitted means."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class CpopError(ValueError):
    """Base class for user-facing input errors."""


class ValidationError(CpopError):
    pass


class InternalError(RuntimeError):
    """Raised when an internal invariant of the solver is violated."""


def _as_vector(values, name: str) -> np.ndarray:
    arr = np.array(values, dtype=float).reshape(-1)
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"non-finite values in {name}")
    return arr


@dataclass(frozen=True)
class DataSeries:
    """Ordered observations ``(x_i, y_i)`` with noise standard deviations ``sd_i``.

    A scalar ``sd`` is broadcast to every observation.
    """

    x: np.ndarray
    y: np.ndarray
    sd: np.ndarray

    def __init__(self, x, y, sd=1.0):
        y_arr = _as_vector(y, "y")
        x_arr = _as_vector(x, "x")
        if np.ndim(sd) == 0:
            sd_arr = np.full(y_arr.shape, float(sd))
            if not np.isfinite(float(sd)):
                raise ValidationError("invalid noise scale: sd must be finite")
        else:
            sd_arr = _as_vector(sd, "sd")
        if not (len(x_arr) == len(y_arr) == len(sd_arr)):
            raise ValidationError(
                f"shape error: x, y and sd have lengths "
                f"{len(x_arr)}, {len(y_arr)}, {len(sd_arr)}"
            )
        if len(y_arr) < 2:
            raise ValidationError("insufficient data: at least 2 observations required")
        if np.any(np.diff(x_arr) <= 0):
            raise ValidationError("unsorted data: x must be strictly increasing")
        if np.any(sd_arr <= 0):
            raise ValidationError("invalid noise scale: sd must be positive")
        for arr in (x_arr, y_arr, sd_arr):
            arr.setflags(write=False)
        object.__setattr__(self, "x", x_arr)
        object.__setattr__(self, "y", y_arr)
        object.__setattr__(self, "sd", sd_arr)

    @property
    def n(self) -> int:
        return len(self.y)

    @property
    def weights(self) -> np.ndarray:
        return 1.0 / self.sd**2

    @classmethod
    def from_y(cls, y, sd=1.0) -> "DataSeries":
        """Evenly spaced data at locations ``0, 1, ..., n-1``."""
        y = np.asarray(y, dtype=float)
        return cls(np.arange(len(y), dtype=float), y, sd)


@dataclass(frozen=True)
class Grid:
    """Strictly increasing candidate changepoint locations."""

    g: np.ndarray

    def __init__(self, g):
        arr = _as_vector(g, "grid")
        if len(arr) == 0:
            raise ValidationError("shape error: grid must not be empty")
        if np.any(np.diff(arr) <= 0):
            raise ValidationError("unsorted data: grid must be strictly increasing")
        arr.setflags(write=False)
        object.__setattr__(self, "g", arr)

    def __len__(self) -> int:
        return len(self.g)

    @classmethod
    def even(cls, series: DataSeries, size: int) -> "Grid":
        """``size`` evenly spaced points spanning ``[x_1, x_n]``."""
        if size < 2:
            raise ValidationError("shape error: an even grid needs at least 2 points")
        return cls(np.linspace(series.x[0], series.x[-1], int(size)))


@dataclass(frozen=True)
class SolverConfig:
    beta: float
    minseglen: float = 0.0
    prune_approx: bool = False

    def __post_init__(self):
        if not (np.isfinite(self.beta) and self.beta > 0):
            raise ValidationError("invalid penalty: beta must be positive")
        if not (np.isfinite(self.minseglen) and self.minseglen >= 0):
            raise ValidationError("invalid minseglen: must be nonnegative")


def default_beta(n: int) -> float:
    return 2.0 * float(np.log(n))


@dataclass(frozen=True)
class Problem:
    series: DataSeries
    grid: Grid
    config: SolverConfig


def augment_grid(series: DataSeries, grid: Grid | None) -> Grid:
    """Ensure the grid covers the data: prepend ``x_1`` / append ``x_n`` if needed."""
    if grid is None:
        return Grid(series.x)
    g = np.asarray(grid.g)
    if g[0] > series.x[0]:
        g = np.concatenate(([series.x[0]], g))
    if g[-1] < series.x[-1]:
        g = np.concatenate((g, [series.x[-1]]))
    return grid if g is grid.g else Grid(g)


def validate(series: DataSeries, grid: Grid | None, config: SolverConfig) -> Problem:
    if not isinstance(series, DataSeries):
        raise ValidationError("series must be a DataSeries")
    if grid is not None and not isinstance(grid, Grid):
        grid = Grid(grid)
    return Problem(series, augment_grid(series, grid), config)


@dataclass(frozen=True)
class Segmentation:
    """A fitted continuous piecewise-linear mean.

    ``knots`` is an ``(K + 2, 2)`` array of ``(location, value)`` rows; the first
    and last rows sit at the ends of the augmented grid and the interior rows are
    the changepoints.
    """

    changepoints: np.ndarray
    knots: np.ndarray
    cost: float
    rss: float
    beta: float = field(default=np.nan)

    @property
    def n_changepoints(self) -> int:
        return len(self.changepoints)

    @property
    def knot_locations(self) -> np.ndarray:
        return self.knots[:, 0]

    @property
    def knot_values(self) -> np.ndarray:
        return self.knots[:, 1]


def evaluate_fit(seg: Segmentation, xq) -> np.ndarray:
    """Evaluate the fitted mean at ``xq``.

    Linear interpolation between knots; outside the knot range the end segments
    are extended with their own slope.
    """
    xq = np.asarray(xq, dtype=float).reshape(-1)
    if xq.size == 0:
        return np.empty(0)
    loc = seg.knots[:, 0]
    val = seg.knots[:, 1]
    out = np.interp(xq, loc, val)
    if len(loc) >= 2:
        lo = xq < loc[0]
        if np.any(lo):
            slope = (val[1] - val[0]) / (loc[1] - loc[0])
            out[lo] = val[0] + slope * (xq[lo] - loc[0])
        hi = xq > loc[-1]
        if np.any(hi):
            slope = (val[-1] - val[-2]) / (loc[-1] - loc[-2])
            out[hi] = val[-1] + slope * (xq[hi] - loc[-1])
    return out


def residuals(seg: Segmentation, series: DataSeries) -> np.ndarray:
    """Unweighted residuals ``y_i - f(x_i)``."""
    return series.y - evaluate_fit(seg, series.x)


def weighted_rss(seg: Segmentation, series: DataSeries) -> float:
    r = residuals(seg, series)
    return float(np.sum(series.weights * r * r))
