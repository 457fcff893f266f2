"""Quadratics in one variable and their pointwise-minimum envelopes.

The solver works on struct-of-arrays representations (``a + b*x + c*x**2``
stored as three float arrays); the :class:`Quadratic` and :class:`Envelope`
classes wrap the same kernels for single-piece use.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .model import InternalError
from .stats import SegmentCostCoeffs


@dataclass(frozen=True)
class Quadratic:
    """``q(x) = a + b x + c x^2`` tagged with backtracking information.

    ``origin`` is the grid index of the previous knot and ``parent`` the id of
    the piece of that knot's cost function the quadratic was derived from.  The
    minimising previous-knot value is ``r + s * x``.
    """

    a: float
    b: float
    c: float
    origin: int = 0
    parent: int = -1
    r: float = 0.0
    s: float = 0.0

    def __call__(self, x):
        return self.a + self.b * x + self.c * x * x

    @property
    def tiekey(self) -> tuple[int, int]:
        return (self.origin, self.parent)


def eliminate_arrays(a, b, c, A, B, C, D, E, F, beta, det=None):
    """Minimise ``q(x') + C_kl(x', x) + beta`` over ``x'`` for arrays of pieces.

    Returns ``(a', b', c', r, s)`` with the minimiser ``x'* = r + s x``.  When
    ``F + c == 0`` the objective does not depend on ``x'`` and ``r = s = 0``.
    ``det``, if given, is ``A F - B^2 / 4`` computed without cancellation.
    """
    a, b, c = (np.asarray(v, dtype=float) for v in (a, b, c))
    shape = np.broadcast(a, A).shape
    den = np.broadcast_to(F + c, shape).astype(float)
    eb = np.broadcast_to(E + b, shape).astype(float)
    Bb = np.broadcast_to(B, shape).astype(float)

    flat = den == 0
    if np.any(flat & ((eb != 0) | (Bb != 0))):
        raise InternalError("unbounded elimination: F + c == 0 with a non-zero linear term")
    safe = np.where(flat, 1.0, den)
    r = np.where(flat, 0.0, -eb / (2.0 * safe))
    s = np.where(flat, 0.0, -Bb / (2.0 * safe))

    new_a = D + a + beta + 0.5 * eb * r
    new_b = C + eb * s
    if det is None:
        new_c = A + 0.5 * Bb * s
    else:
        new_c = np.where(flat, A, (det + A * c) / safe)
    new_c = np.maximum(new_c, 0.0)
    # bounded below by construction, so a flat curvature forces a flat slope
    new_b = np.where(new_c == 0.0, 0.0, new_b)
    return (
        np.broadcast_to(new_a, shape).copy(),
        np.broadcast_to(new_b, shape).copy(),
        new_c.astype(float).reshape(shape),
        r,
        s,
    )


def eliminate_alpha_prime(q: Quadratic, coeffs: SegmentCostCoeffs, beta: float) -> Quadratic:
    """Quadratic in the new knot value after minimising out the previous one."""
    if q.c < 0:
        raise InternalError("non-convex piece")
    na, nb, nc, r, s = eliminate_arrays(
        q.a, q.b, q.c,
        coeffs.A, coeffs.B, coeffs.C, coeffs.D, coeffs.E, coeffs.F,
        beta,
    )
    return Quadratic(float(na), float(nb), float(nc), q.origin, q.parent, float(r), float(s))


@njit(cache=True)
def _first_crossing(da, db, dc, x0):
    """Smallest ``t > x0`` where ``da + db t + dc t^2`` turns negative, else inf."""
    if dc == 0.0:
        if db < 0.0:
            t = -da / db
            if t > x0:
                return t
        return np.inf
    disc = db * db - 4.0 * dc * da
    if disc <= 0.0:
        return np.inf
    q = -0.5 * (db + np.copysign(np.sqrt(disc), db))
    r1 = q / dc
    r2 = da / q
    if dc > 0.0:
        t = min(r1, r2)
    else:
        t = max(r1, r2)
    if t > x0:
        return t
    return np.inf


@njit(cache=True)
def _precedes(i, j, t, b, c, rank):
    """Is piece ``i`` below piece ``j`` just right of ``t`` (given equal values at ``t``)?"""
    si = b[i] + 2.0 * c[i] * t
    sj = b[j] + 2.0 * c[j] * t
    if si != sj:
        return si < sj
    if c[i] != c[j]:
        return c[i] < c[j]
    return rank[i] < rank[j]


@njit(cache=True)
def _sweep(a, b, c, rank):
    m = len(a)
    cur = 0
    for j in range(1, m):
        # lowest at -inf: smallest curvature, then steepest, then lowest constant
        if c[j] != c[cur]:
            better = c[j] < c[cur]
        elif b[j] != b[cur]:
            better = b[j] > b[cur]
        elif a[j] != a[cur]:
            better = a[j] < a[cur]
        else:
            better = rank[j] < rank[cur]
        if better:
            cur = j
    cap = 4 * m + 8
    order = np.empty(cap, dtype=np.int64)
    breaks = np.empty(cap, dtype=np.float64)
    order[0] = cur
    count = 1
    x0 = -np.inf
    for _ in range(4 * m * m + 8):
        tmin = np.inf
        best = -1
        for j in range(m):
            if j == cur:
                continue
            t = _first_crossing(a[j] - a[cur], b[j] - b[cur], c[j] - c[cur], x0)
            if t < tmin:
                tmin = t
                best = j
            elif t == tmin and t < np.inf and _precedes(j, best, t, b, c, rank):
                best = j
        if best < 0:
            return order[:count], breaks[: count - 1], True
        x0 = tmin
        if _precedes(best, cur, tmin, b, c, rank):
            if count == cap:
                break
            order[count] = best
            breaks[count - 1] = tmin
            count += 1
            cur = best
    return order[:count], breaks[: max(count - 1, 0)], False


def lower_envelope(a, b, c, rank=None):
    """Exact lower envelope of convex quadratics over the whole real line.

    Sweeps from ``-inf`` to ``+inf`` switching to whichever piece is lowest just
    right of each crossing.  Returns ``(pieces, breaks)``: the indices of the
    pieces in left-to-right order and the ``len(pieces) - 1`` switch points.
    Exact ties go to the piece with the smaller ``rank``.
    """
    a, b, c = (np.ascontiguousarray(v, dtype=np.float64) for v in (a, b, c))
    m = len(a)
    if m == 0:
        return [], []
    rank = np.arange(m) if rank is None else np.ascontiguousarray(rank, dtype=np.int64)
    order, breaks, done = _sweep(a, b, c, rank)
    if not done:  # pragma: no cover - the sweep visits finitely many crossings
        raise InternalError("lower envelope sweep did not terminate")
    return order.tolist(), breaks.tolist()


@dataclass(frozen=True)
class Envelope:
    """Pointwise minimum of a set of quadratics.

    ``order`` lists indices into ``pieces`` from left to right with switch
    points ``breaks``; a piece may appear more than once.
    """

    pieces: tuple[Quadratic, ...]
    order: tuple[int, ...] = ()
    breaks: tuple[float, ...] = field(default=())

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        vals = np.array([[p(xi) for p in self.pieces] for xi in np.atleast_1d(x)])
        out = vals.min(axis=1)
        return out if x.ndim else float(out[0])

    def __len__(self) -> int:
        return len(self.pieces)


def _arrays(pieces):
    a = np.array([p.a for p in pieces], dtype=float)
    b = np.array([p.b for p in pieces], dtype=float)
    c = np.array([p.c for p in pieces], dtype=float)
    return a, b, c


def _ranks(keys) -> np.ndarray:
    order = sorted(range(len(keys)), key=lambda i: keys[i])
    rank = np.empty(len(keys), dtype=np.int64)
    rank[order] = np.arange(len(keys))
    return rank


def envelope_add_and_prune(env: Envelope | None, candidates) -> Envelope:
    """Merge ``candidates`` into ``env`` and drop pieces that are never minimal."""
    pieces = list(env.pieces if env is not None else ()) + list(candidates)
    if not pieces:
        return Envelope(())
    a, b, c = _arrays(pieces)
    if np.any(c < 0):
        raise InternalError("non-convex piece")
    order, breaks = lower_envelope(a, b, c, _ranks([p.tiekey for p in pieces]))
    keep = sorted(set(order))
    remap = {old: new for new, old in enumerate(keep)}
    return Envelope(
        tuple(pieces[i] for i in keep),
        tuple(remap[i] for i in order),
        tuple(breaks),
    )


def piece_minima(a, b, c):
    """Minimum value and minimiser of each piece (constant pieces report 0)."""
    a, b, c = (np.asarray(v, dtype=float) for v in (a, b, c))
    if np.any(c < 0):
        raise InternalError("non-convex piece")
    if np.any((c == 0) & (b != 0)):
        raise InternalError("unbounded piece: zero curvature with non-zero slope")
    curved = c > 0
    safe = np.where(curved, c, 1.0)
    arg = np.where(curved, -b / (2.0 * safe), 0.0)
    val = np.where(curved, a - b * b / (4.0 * safe), a)
    return val, arg


def envelope_min(env: Envelope):
    """Global minimum ``(value, argmin, index)`` of an envelope."""
    if not env.pieces:
        raise InternalError("empty envelope")
    a, b, c = _arrays(env.pieces)
    val, arg = piece_minima(a, b, c)
    rank = _ranks([p.tiekey for p in env.pieces])
    i = int(np.lexsort((rank, val))[0])
    return float(val[i]), float(arg[i]), i


@njit(cache=True)
def _interval_min(da, db, dc, lo, hi):
    best = np.inf
    if np.isfinite(lo):
        best = min(best, da + db * lo + dc * lo * lo)
    elif dc < 0.0 or (dc == 0.0 and db > 0.0):
        return -np.inf
    if np.isfinite(hi):
        best = min(best, da + db * hi + dc * hi * hi)
    elif dc < 0.0 or (dc == 0.0 and db < 0.0):
        return -np.inf
    if dc > 0.0:
        v = -db / (2.0 * dc)
        if lo <= v <= hi:
            best = min(best, da - db * db / (4.0 * dc))
    elif dc == 0.0 and db == 0.0:
        best = min(best, da)
    return best


@njit(cache=True)
def gap_to_envelope(a, b, c, ea, eb, ec, breaks):
    """``min_x (q(x) - E(x))`` for each piece ``q`` against envelope ``E``.

    ``ea, eb, ec`` are the envelope's pieces in left-to-right order and
    ``breaks`` the switch points between them.
    """
    m = len(a)
    h = len(ea)
    out = np.empty(m)
    for i in range(m):
        best = np.inf
        for j in range(h):
            lo = breaks[j - 1] if j > 0 else -np.inf
            hi = breaks[j] if j < h - 1 else np.inf
            best = min(best, _interval_min(a[i] - ea[j], b[i] - eb[j], c[i] - ec[j], lo, hi))
        out[i] = best
    return out


@njit(cache=True)
def dominated_by_margin(a, b, c, ea, eb, ec, breaks, margin):
    """Whether ``q(x) - E(x) > margin`` for all ``x``, per piece.

    Same as ``gap_to_envelope(...) > margin`` but stops at the first interval
    that fails.
    """
    m = len(a)
    h = len(ea)
    out = np.zeros(m, dtype=np.bool_)
    for i in range(m):
        ok = True
        for j in range(h):
            lo = breaks[j - 1] if j > 0 else -np.inf
            hi = breaks[j] if j < h - 1 else np.inf
            if _interval_min(a[i] - ea[j], b[i] - eb[j], c[i] - ec[j], lo, hi) <= margin:
                ok = False
                break
        out[i] = ok
    return out
