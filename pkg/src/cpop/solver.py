"""Functional dynamic programme for the L0-penalised change-in-slope problem.

``F_l(alpha)`` is the least penalised cost of the data up to grid point ``g_l``
given the fitted mean equals ``alpha`` there.  It is stored as the lower
envelope of convex quadratics, each derived from one piece of an earlier
``F_k`` by minimising out the knot value at ``g_k``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .model import (
    DataSeries,
    Grid,
    InternalError,
    Segmentation,
    SolverConfig,
    default_beta,
    validate,
    weighted_rss,
)
from .quadratics import dominated_by_margin, eliminate_arrays, lower_envelope, piece_minima
from .stats import PrefixStats, build_prefix_stats, segment_coeff_arrays

logger = logging.getLogger(__name__)


@dataclass
class _Archive:
    """Every retained piece of every ``F_l``; row ``0`` is the start piece ``F_0``."""

    a: list = field(default_factory=list)
    b: list = field(default_factory=list)
    c: list = field(default_factory=list)
    origin: list = field(default_factory=list)
    parent: list = field(default_factory=list)
    r: list = field(default_factory=list)
    s: list = field(default_factory=list)
    size: int = 0

    def extend(self, a, b, c, origin, parent, r, s) -> np.ndarray:
        ids = np.arange(self.size, self.size + len(a))
        for store, vals in zip(
            (self.a, self.b, self.c, self.origin, self.parent, self.r, self.s),
            (a, b, c, origin, parent, r, s),
        ):
            store.append(np.asarray(vals))
        self.size += len(a)
        return ids

    def freeze(self):
        return {
            name: np.concatenate(getattr(self, name))
            for name in ("a", "b", "c", "origin", "parent", "r", "s")
        }


@dataclass
class SolverState:
    """Working state of the recursion after processing grid index ``l``.

    The pool holds the pieces of earlier ``F_k`` that may still start the
    final segment; PELT pruning removes entries from it.
    """

    stats: PrefixStats
    grid: np.ndarray
    config: SolverConfig
    pelt: bool
    l: int = 0
    archive: _Archive = field(default_factory=_Archive)
    pool_id: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    pool_k: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    pool_a: np.ndarray = field(default_factory=lambda: np.zeros(0))
    pool_b: np.ndarray = field(default_factory=lambda: np.zeros(0))
    pool_c: np.ndarray = field(default_factory=lambda: np.zeros(0))
    current: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    piece_counts: list = field(default_factory=list)
    candidate_counts: list = field(default_factory=list)

    @property
    def N(self) -> int:
        return self.stats.size


@dataclass(frozen=True)
class CpopResult:
    segmentation: Segmentation
    beta: float
    config: SolverConfig
    grid: Grid
    dp_cost: float
    piece_counts: np.ndarray
    candidate_counts: np.ndarray
    approximate: bool

    @property
    def changepoints(self) -> np.ndarray:
        return self.segmentation.changepoints

    @property
    def cost(self) -> float:
        return self.segmentation.cost

    @property
    def rss(self) -> float:
        return self.segmentation.rss


def _init_state(series: DataSeries, grid: Grid, config: SolverConfig, pelt: bool) -> SolverState:
    g = grid.g
    shift = 0.5 * (g[0] + g[-1])
    stats = build_prefix_stats(series, grid, shift=shift)
    state = SolverState(stats=stats, grid=np.asarray(g), config=config, pelt=pelt)
    beta = config.beta
    ids = state.archive.extend([-beta], [0.0], [0.0], [-1], [-1], [0.0], [0.0])
    state.pool_id = ids
    state.pool_k = np.array([0])
    state.pool_a = np.array([-beta])
    state.pool_b = np.array([0.0])
    state.pool_c = np.array([0.0])
    return state


def _admissible(state: SolverState, l: int) -> np.ndarray:
    minseg = state.config.minseglen
    if minseg <= 0 or l == state.N:
        return np.ones(len(state.pool_k), dtype=bool)
    k = state.pool_k
    # loc of k >= 1 is g_k (1-based); k == 0 is the start and always allowed
    gk = state.grid[np.maximum(k - 1, 0)]
    return (k == 0) | (state.grid[l - 1] - gk >= minseg)


def recursion_step(state: SolverState, l: int) -> SolverState:
    """Build ``F_l`` from the admissible pool and update the pool in place."""
    if l != state.l + 1:
        raise InternalError(f"recursion steps must be sequential: at {state.l}, asked {l}")
    cfg = state.config
    adm = np.flatnonzero(_admissible(state, l))
    if len(adm) == 0:  # pragma: no cover - the start piece is always admissible
        raise InternalError("no admissible predecessor")
    ks = state.pool_k[adm]
    A, B, C, D, E, F, det = segment_coeff_arrays(state.stats, ks, l)
    na, nb, nc, r, s = eliminate_arrays(
        state.pool_a[adm], state.pool_b[adm], state.pool_c[adm],
        A, B, C, D, E, F, cfg.beta, det=det,
    )
    parents = state.pool_id[adm]
    # parent ids grow with k, so they double as the tie-break rank
    order, breaks = lower_envelope(na, nb, nc, rank=parents)
    keep = np.unique(order)
    ids = state.archive.extend(na[keep], nb[keep], nc[keep], ks[keep], parents[keep], r[keep], s[keep])
    state.current = ids

    N = state.N
    use_pelt = state.pelt and (cfg.minseglen == 0 or cfg.prune_approx)
    if use_pelt and 2 <= l < N:
        o = np.asarray(order)
        vals, _ = piece_minima(na, nb, nc)
        # q >= F_l + beta everywhere requires min q >= min F_l + beta
        maybe = np.flatnonzero(vals > vals[o].min() + cfg.beta)
        gone = dominated_by_margin(
            na[maybe], nb[maybe], nc[maybe], na[o], nb[o], nc[o],
            np.asarray(breaks, dtype=float), cfg.beta,
        )
        dead = adm[maybe[gone]]
        if len(dead):
            alive = np.ones(len(state.pool_id), dtype=bool)
            alive[dead] = False
            for name in ("pool_id", "pool_k", "pool_a", "pool_b", "pool_c"):
                setattr(state, name, getattr(state, name)[alive])

    if 2 <= l < N:
        # F_1 is never a predecessor: a knot at g_1 is the start knot itself
        state.pool_id = np.concatenate((state.pool_id, ids))
        state.pool_k = np.concatenate((state.pool_k, np.full(len(ids), l)))
        state.pool_a = np.concatenate((state.pool_a, na[keep]))
        state.pool_b = np.concatenate((state.pool_b, nb[keep]))
        state.pool_c = np.concatenate((state.pool_c, nc[keep]))

    state.piece_counts.append(len(keep))
    state.candidate_counts.append(len(np.unique(state.pool_k)))
    state.l = l
    return state


def backtrack(state: SolverState, series: DataSeries) -> tuple[Segmentation, float]:
    """Recover knots from the minimiser of ``F_N``; returns the segmentation and DP cost."""
    if state.l != state.N:
        raise InternalError("backtrack before the recursion finished")
    arch = state.archive.freeze()
    cur = state.current
    val, arg = piece_minima(arch["a"][cur], arch["b"][cur], arch["c"][cur])
    best = int(np.lexsort((cur, val))[0])
    dp_cost = float(val[best])
    gid = int(cur[best])
    alpha = float(arg[best])

    g = state.grid
    knot_idx = [len(g) - 1]
    knot_val = [alpha]
    for _ in range(len(g) + 1):
        k = int(arch["origin"][gid])
        if k < 0:
            raise InternalError("broken provenance chain")
        alpha = float(arch["r"][gid] + arch["s"][gid] * alpha)
        knot_idx.append(max(k - 1, 0))
        knot_val.append(alpha)
        if k == 0:
            break
        gid = int(arch["parent"][gid])
    else:
        raise InternalError("broken provenance chain")

    knot_idx.reverse()
    knot_val.reverse()
    # + 0.0 turns -0.0 into 0.0
    knots = np.column_stack((g[knot_idx], np.asarray(knot_val) + 0.0))
    cps = knots[1:-1, 0].copy()
    beta = state.config.beta
    seg = Segmentation(changepoints=cps, knots=knots, cost=np.nan, rss=np.nan, beta=beta)
    rss = weighted_rss(seg, series)
    seg = Segmentation(
        changepoints=cps, knots=knots, cost=rss + len(cps) * beta, rss=rss, beta=beta
    )
    return seg, dp_cost


def solve(
    series: DataSeries,
    grid: Grid | None = None,
    config: SolverConfig | None = None,
    *,
    beta: float | None = None,
    minseglen: float = 0.0,
    prune_approx: bool = False,
    pelt: bool = True,
) -> CpopResult:
    """Exact minimiser of the penalised weighted RSS over continuous piecewise-linear fits.

    Parameters
    ----------
    series : DataSeries
        Observations.
    grid : Grid, optional
        Candidate changepoint locations; defaults to the data locations.  The
        grid is extended to cover ``[x_1, x_n]`` if necessary.
    config : SolverConfig, optional
        Penalty and constraints.  If omitted it is built from ``beta``
        (default ``2 log n``), ``minseglen`` and ``prune_approx``.
    pelt : bool
        Prune predecessors that can no longer be optimal.  Only used when
        ``minseglen == 0`` or ``prune_approx`` is set; turning it off gives the
        plain functional recursion (useful for testing).

    Returns
    -------
    CpopResult
    """
    if config is None:
        config = SolverConfig(
            beta=default_beta(series.n) if beta is None else beta,
            minseglen=minseglen,
            prune_approx=prune_approx,
        )
    problem = validate(series, grid, config)
    state = _init_state(problem.series, problem.grid, config, pelt)
    for l in range(1, state.N + 1):
        recursion_step(state, l)
    seg, dp_cost = backtrack(state, problem.series)
    logger.debug(
        "solved n=%d N=%d beta=%g: %d changepoints, cost %.6g",
        series.n, state.N, config.beta, seg.n_changepoints, seg.cost,
    )
    return CpopResult(
        segmentation=seg,
        beta=config.beta,
        config=config,
        grid=problem.grid,
        dp_cost=dp_cost,
        piece_counts=np.asarray(state.piece_counts),
        candidate_counts=np.asarray(state.candidate_counts),
        approximate=bool(config.minseglen > 0 and config.prune_approx),
    )
