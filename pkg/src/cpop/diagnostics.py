"""Post-fit summaries, model selection over a penalty path and noise-variance estimates."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import logsumexp

from .crops import CropsResult
from .model import DataSeries, ValidationError, residuals
from .solver import CpopResult


@dataclass(frozen=True)
class FittedSegmentRow:
    x0: float
    y0: float
    x1: float
    y1: float
    gradient: float
    intercept: float
    rss: float


def fitted_table(result: CpopResult, series: DataSeries) -> list[FittedSegmentRow]:
    """One row per fitted line segment, left to right.

    Data left of the first knot belong to the first segment; otherwise a point
    belongs to the segment whose right end is the first knot at or after it.
    """
    seg = getattr(result, "segmentation", result)
    knots = seg.knots
    r = residuals(seg, series)
    wr2 = series.weights * r * r
    nseg = len(knots) - 1
    which = np.searchsorted(knots[1:, 0], series.x, side="left")
    which = np.minimum(which, nseg - 1)
    rss = np.bincount(which, weights=wr2, minlength=nseg)
    rows = []
    for j in range(nseg):
        (x0, y0), (x1, y1) = knots[j], knots[j + 1]
        grad = (y1 - y0) / (x1 - x0)
        rows.append(FittedSegmentRow(x0, y0, x1, y1, grad, y0 - grad * x0, float(rss[j])))
    return rows


def bic_score(result: CpopResult, series: DataSeries) -> float:
    """``n log(mean r^2) + 2 K log n`` with unweighted residuals.

    A perfect fit scores ``-inf``.  Residuals are unweighted even for fits with
    unequal ``sd``, so scores of heteroscedastic fits are only indicative.
    """
    seg = getattr(result, "segmentation", result)
    r = residuals(seg, series)
    n = series.n
    ms = float(np.mean(r * r))
    if ms == 0.0:
        return -np.inf
    return n * np.log(ms) + 2.0 * seg.n_changepoints * np.log(n)


def select_bic(crops: CropsResult, series: DataSeries) -> tuple[int, list[float]]:
    """Index of the record with the smallest BIC (first on ties) and all scores."""
    scores = [bic_score(m, series) for m in crops.models]
    return int(np.argmin(scores)), scores


def elbow_table(crops: CropsResult) -> list[tuple[int, float]]:
    if not crops.records:
        raise ValidationError("empty penalty path")
    return sorted((rec.m, rec.Qm) for rec in crops.records)


def estimate_variance_ddiff(series) -> float:
    """Noise variance from second differences: ``mean((y_{i+1} - 2 y_i + y_{i-1})^2) / 6``.

    Assumes equal noise variance and a locally linear mean; spacing is ignored.
    """
    y = series.y if isinstance(series, DataSeries) else np.asarray(series, dtype=float)
    if len(y) < 3:
        raise ValidationError("insufficient data: need at least 3 observations")
    d2 = np.diff(y, n=2)
    return float(np.mean(d2 * d2) / 6.0)


@dataclass(frozen=True)
class LogLinearVariance:
    """``sigma^2(x) = exp(a + b x)``."""

    a: float
    b: float

    def __call__(self, x):
        return np.exp(self.a + self.b * np.asarray(x, dtype=float))

    def variance_at(self, x):
        return self(x)


def _profile_a(logr2, x, b):
    # log mean(r^2 exp(-b x)), stable for large |b x|
    return float(logsumexp(logr2 - b * x) - np.log(len(x)))


def loglinear_objective(a, b, r, x) -> float:
    """``n a + b sum(x) + sum(r^2 exp(-(a + b x)))``."""
    r, x = np.asarray(r, dtype=float), np.asarray(x, dtype=float)
    return float(len(x) * a + b * np.sum(x) + np.sum(r * r * np.exp(-(a + b * x))))


def fit_loglinear_variance(residuals_, x) -> LogLinearVariance:
    """Maximum-likelihood fit of ``log sigma^2(x) = a + b x`` to zero-mean residuals.

    For fixed ``b`` the best ``a`` is ``log(mean(r^2 exp(-b x)))``; the remaining
    one-dimensional problem in ``b`` is solved by bounded Brent search on
    ``[-10/range, 10/range]``, widened while the optimum sits on the boundary.
    """
    r = np.asarray(residuals_, dtype=float).reshape(-1)
    x = np.asarray(x, dtype=float).reshape(-1)
    if len(r) != len(x):
        raise ValidationError(f"shape error: {len(r)} residuals but {len(x)} locations")
    if len(x) < 3:
        raise ValidationError("insufficient data: need at least 3 residuals")
    if not (np.all(np.isfinite(r)) and np.all(np.isfinite(x))):
        raise ValidationError("non-finite values in residuals or x")
    if np.all(r == 0):
        raise ValidationError("degenerate residuals: all residuals are zero")

    n = len(x)
    centre = float(np.mean(x))
    xc = x - centre
    with np.errstate(divide="ignore"):
        logr2 = np.log(r * r)
    span = float(np.ptp(x))
    if span == 0:
        return LogLinearVariance(_profile_a(logr2, xc, 0.0), 0.0)

    def profile(b):
        # objective at the best a, up to the constant n; sum(xc) = 0
        return n * _profile_a(logr2, xc, b)

    half = 10.0 / span
    for _ in range(20):
        opt = minimize_scalar(profile, bounds=(-half, half), method="bounded",
                              options={"xatol": 1e-12 * half})
        b = float(opt.x)
        if abs(b) < half * (1 - 1e-6):
            break
        half *= 4.0
    a_centred = _profile_a(logr2, xc, b)
    return LogLinearVariance(a_centred - b * centre, b)
