"""Weighted prefix sums over grid points and closed-form segment costs.

Grid indices run ``0..N``.  Index ``k >= 1`` refers to grid point ``g_k`` and
covers the data with ``x_i <= g_k``; index ``0`` is the empty start state and is
anchored at ``g_1``.  A segment ``(k, l)`` covers the data with indices
``n_k < i <= n_l`` and fits the line through ``(loc_k, alpha')`` and
``(loc_l, alpha)``:

    C_kl(alpha', alpha) = A alpha^2 + B alpha alpha' + C alpha + D + E alpha' + F alpha'^2
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import DataSeries, Grid, ValidationError, augment_grid


@dataclass(frozen=True)
class PrefixStats:
    loc: np.ndarray
    counts: np.ndarray
    S: np.ndarray
    SX: np.ndarray
    SXX: np.ndarray
    SY: np.ndarray
    SYY: np.ndarray
    SXY: np.ndarray
    x: np.ndarray
    y: np.ndarray
    w: np.ndarray

    @property
    def size(self) -> int:
        """Number of grid points ``N``."""
        return len(self.loc) - 1


@dataclass(frozen=True)
class SegmentCostCoeffs:
    A: float
    B: float
    C: float
    D: float
    E: float
    F: float

    def __call__(self, alpha_prime, alpha):
        return (
            self.A * alpha * alpha
            + self.B * alpha * alpha_prime
            + self.C * alpha
            + self.D
            + self.E * alpha_prime
            + self.F * alpha_prime * alpha_prime
        )


def build_prefix_stats(series: DataSeries, grid: Grid, shift: float = 0.0) -> PrefixStats:
    """Prefix statistics of ``series`` at the (augmented) grid points.

    ``shift`` is subtracted from every location first; the segment costs are
    translation invariant and centring the locations reduces cancellation.
    """
    g = augment_grid(series, grid).g - shift
    x = series.x - shift
    y = series.y
    w = series.weights

    def prefix(v):
        return np.concatenate(([0.0], np.cumsum(v)))

    n_at = np.searchsorted(x, g, side="right")
    counts = np.concatenate(([0], n_at))
    cs = {
        "S": prefix(w),
        "SX": prefix(w * x),
        "SXX": prefix(w * x * x),
        "SY": prefix(w * y),
        "SYY": prefix(w * y * y),
        "SXY": prefix(w * x * y),
    }
    loc = np.concatenate(([g[0]], g))
    return PrefixStats(
        loc=loc,
        counts=counts,
        x=x,
        y=y,
        w=w,
        **{name: arr[counts] for name, arr in cs.items()},
    )


def segment_coeff_arrays(stats: PrefixStats, ks: np.ndarray, l: int):
    """Coefficients of ``C_{k,l}`` for an array of left indices ``ks``.

    Returns ``(A, B, C, D, E, F, det)`` where ``det = A F - B^2 / 4`` is computed
    from the weighted scatter of the segment's locations rather than by
    cancellation; the elimination step uses it for the curvature.
    """
    ks = np.asarray(ks, dtype=np.intp)
    m = len(ks)
    A, B, C, D, E, F, det = (np.zeros(m) for _ in range(7))

    count = stats.counts[l] - stats.counts[ks]
    gk = stats.loc[ks]
    gl = stats.loc[l]
    h = gl - gk

    zero_len = (h == 0) & (count > 0)
    if np.any(zero_len):
        # data at the anchor itself is fitted by alpha
        A[zero_len] = stats.S[l] - stats.S[ks[zero_len]]
        C[zero_len] = -2.0 * (stats.SY[l] - stats.SY[ks[zero_len]])
        D[zero_len] = stats.SYY[l] - stats.SYY[ks[zero_len]]

    single = (count == 1) & (h > 0)
    if np.any(single):
        i = stats.counts[l] - 1
        xi, yi, wi = stats.x[i], stats.y[i], stats.w[i]
        hs = h[single]
        u = (xi - gk[single]) / hs
        v = 0.0 if xi == gl else (gl - xi) / hs
        A[single] = wi * u * u
        F[single] = wi * v * v
        B[single] = 2.0 * wi * u * v
        C[single] = -2.0 * wi * yi * u
        E[single] = -2.0 * wi * yi * v
        D[single] = wi * yi * yi

    many = (count > 1) & (h > 0)
    if np.any(many):
        km = ks[many]
        g0 = gk[many]
        hm = h[many]
        dS = stats.S[l] - stats.S[km]
        dSX = stats.SX[l] - stats.SX[km]
        dSXX = stats.SXX[l] - stats.SXX[km]
        dSY = stats.SY[l] - stats.SY[km]
        dSYY = stats.SYY[l] - stats.SYY[km]
        dSXY = stats.SXY[l] - stats.SXY[km]
        # moments about the left anchor
        p1 = dSX - g0 * dS
        p2 = np.maximum(dSXX - 2.0 * g0 * dSX + g0 * g0 * dS, 0.0)
        q1 = dSXY - g0 * dSY
        h2 = hm * hm
        A[many] = p2 / h2
        F[many] = np.maximum(dS - 2.0 * p1 / hm + p2 / h2, 0.0)
        B[many] = 2.0 * (p1 / hm - p2 / h2)
        C[many] = -2.0 * q1 / hm
        E[many] = -2.0 * (dSY - q1 / hm)
        D[many] = np.maximum(dSYY, 0.0)
        det[many] = np.maximum(dS * p2 - p1 * p1, 0.0) / h2
    return A, B, C, D, E, F, det


def _check_segment(stats: PrefixStats, k: int, l: int) -> None:
    if not (0 <= k < l <= stats.size):
        raise ValidationError(f"invalid segment: need 0 <= k < l <= {stats.size}, got ({k}, {l})")


def segment_cost_coeffs(stats: PrefixStats, k: int, l: int) -> SegmentCostCoeffs:
    _check_segment(stats, k, l)
    A, B, C, D, E, F, _ = segment_coeff_arrays(stats, np.array([k]), l)
    return SegmentCostCoeffs(
        float(A[0]), float(B[0]), float(C[0]), float(D[0]), float(E[0]), float(F[0])
    )


def segment_cost_eval(
    series: DataSeries, grid: Grid, k: int, l: int, alpha_prime: float, alpha: float
) -> float:
    """Direct weighted sum of squares of ``C_{k,l}(alpha', alpha)``."""
    g = augment_grid(series, grid).g
    N = len(g)
    if not (0 <= k < l <= N):
        raise ValidationError(f"invalid segment: need 0 <= k < l <= {N}, got ({k}, {l})")
    loc = np.concatenate(([g[0]], g))
    n_at = np.concatenate(([0], np.searchsorted(series.x, g, side="right")))
    idx = slice(n_at[k], n_at[l])
    x, y, w = series.x[idx], series.y[idx], series.weights[idx]
    if x.size == 0:
        return 0.0
    h = loc[l] - loc[k]
    if h == 0:
        fit = np.full_like(x, alpha)
    else:
        fit = alpha_prime + (alpha - alpha_prime) * (x - loc[k]) / h
    return float(np.sum(w * (y - fit) ** 2))
