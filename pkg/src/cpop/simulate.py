"""Simulate data from a continuous piecewise-linear mean with slope changes.

Noise comes from ``numpy.random.default_rng(seed)``, i.e. the PCG64 bit
generator, so a given seed gives the same series on every platform.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import DataSeries, ValidationError


@dataclass(frozen=True)
class SlopeSpec:
    """Mean ``f(x) = sum_j s_j max(0, x - c_j)`` plus Gaussian noise of scale ``sd``.

    The slope is 0 left of ``c_1``; putting ``c_1`` at or before the first
    location just sets the initial slope.
    """

    changepoints: np.ndarray
    change_slope: np.ndarray
    sd: np.ndarray | float = 1.0

    def __post_init__(self):
        cps = np.array(self.changepoints, dtype=float).reshape(-1)
        slopes = np.array(self.change_slope, dtype=float).reshape(-1)
        if len(cps) != len(slopes):
            raise ValidationError(
                f"shape error: {len(cps)} changepoints but {len(slopes)} slope changes"
            )
        if np.any(np.diff(cps) < 0):
            raise ValidationError("unsorted data: changepoints must be nondecreasing")
        if not (np.all(np.isfinite(cps)) and np.all(np.isfinite(slopes))):
            raise ValidationError("non-finite values in spec")
        sd = np.array(self.sd, dtype=float)
        if not np.all(np.isfinite(sd)) or np.any(sd < 0):
            raise ValidationError("invalid noise scale: sd must be finite and nonnegative")
        object.__setattr__(self, "changepoints", cps)
        object.__setattr__(self, "change_slope", slopes)
        object.__setattr__(self, "sd", sd if sd.ndim else float(sd))


def mean_function(spec: SlopeSpec, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    hinge = np.maximum(0.0, x[..., None] - spec.changepoints)
    return hinge @ spec.change_slope


def simulate_y(spec: SlopeSpec, x, seed=None) -> np.ndarray:
    """Noisy responses at ``x``; ``sd = 0`` gives the mean exactly."""
    x = np.asarray(x, dtype=float).reshape(-1)
    sd = np.asarray(spec.sd, dtype=float)
    if sd.ndim and len(sd) != len(x):
        raise ValidationError(f"shape error: sd has length {len(sd)}, x has length {len(x)}")
    mu = mean_function(spec, x)
    eps = np.random.default_rng(seed).standard_normal(len(x))
    return np.where(sd == 0, mu, mu + sd * eps)


def simulate_series(spec: SlopeSpec, x, seed=None) -> DataSeries:
    """Simulated :class:`DataSeries` whose ``sd`` is the simulation's noise scale.

    Points simulated without noise carry unit ``sd`` in the returned series,
    since a fit needs positive weights.
    """
    y = simulate_y(spec, x, seed)
    sd = np.broadcast_to(np.asarray(spec.sd, dtype=float), y.shape)
    return DataSeries(x, y, np.where(sd > 0, sd, 1.0))
