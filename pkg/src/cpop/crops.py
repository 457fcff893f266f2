"""Optimal segmentations for every penalty in an interval (CROPS)."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .model import DataSeries, Grid, SolverConfig, ValidationError
from .solver import CpopResult, solve

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SegmentationRecord:
    beta: float
    Qm: float
    penalised_cost: float
    m: int
    changepoints: tuple[float, ...]


@dataclass(frozen=True)
class CropsResult:
    records: list[SegmentationRecord]
    models: list[CpopResult]
    solver_calls: int
    beta_min: float
    beta_max: float


def default_beta_range(n: int) -> tuple[float, float]:
    return 1.5 * float(np.log(n)), 2.5 * float(np.log(n))


def crops_run(
    series: DataSeries,
    grid: Grid | None = None,
    beta_min: float | None = None,
    beta_max: float | None = None,
    *,
    minseglen: float = 0.0,
    prune_approx: bool = False,
    pelt: bool = True,
) -> CropsResult:
    """Find every segmentation that is optimal for some penalty in ``[beta_min, beta_max]``.

    Solves at both ends; whenever the change counts differ by more than one,
    solves again at the penalty where the two end segmentations cost the same
    and recurses on both halves unless that solve returns one of the ends.

    Parameters
    ----------
    series, grid
        As for :func:`cpop.solver.solve`.
    beta_min, beta_max : float, optional
        Penalty range, by default ``1.5 log n`` and ``2.5 log n``.

    Returns
    -------
    CropsResult
        Records ordered by decreasing number of changepoints (increasing penalty).
    """
    lo_default, hi_default = default_beta_range(series.n)
    beta_min = lo_default if beta_min is None else float(beta_min)
    beta_max = hi_default if beta_max is None else float(beta_max)
    if not (np.isfinite(beta_min) and np.isfinite(beta_max)) or beta_min <= 0 or beta_min > beta_max:
        raise ValidationError(f"invalid penalty range: [{beta_min}, {beta_max}]")

    cache: dict[float, CpopResult] = {}

    def run(beta: float) -> CpopResult:
        if beta not in cache:
            cfg = SolverConfig(beta=beta, minseglen=minseglen, prune_approx=prune_approx)
            cache[beta] = solve(series, grid, cfg, pelt=pelt)
        return cache[beta]

    stack = [(beta_min, beta_max)]
    while stack:
        b0, b1 = stack.pop()
        r0, r1 = run(b0), run(b1)
        m0, m1 = r0.segmentation.n_changepoints, r1.segmentation.n_changepoints
        if m0 <= m1 + 1:
            continue
        cross = (r1.rss - r0.rss) / (m0 - m1)
        cross = min(max(cross, b0), b1)
        if cross in (b0, b1):
            continue
        mid = run(cross).segmentation.n_changepoints
        if mid in (m0, m1):
            continue
        stack.append((cross, b1))
        stack.append((b0, cross))

    seen: dict[tuple, float] = {}
    for beta in sorted(cache):
        key = tuple(cache[beta].changepoints.tolist())
        seen.setdefault(key, beta)
    models = sorted(
        (cache[beta] for beta in seen.values()),
        key=lambda r: (-r.segmentation.n_changepoints, r.beta),
    )
    records = [
        SegmentationRecord(
            beta=r.beta,
            Qm=r.rss,
            penalised_cost=r.rss + r.segmentation.n_changepoints * r.beta,
            m=r.segmentation.n_changepoints,
            changepoints=tuple(r.changepoints.tolist()),
        )
        for r in models
    ]
    logger.debug("crops on [%g, %g]: %d segmentations, %d solves", beta_min, beta_max, len(records), len(cache))
    return CropsResult(records, models, len(cache), beta_min, beta_max)
