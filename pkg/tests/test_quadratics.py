import numpy as np
import pytest

from cpop import InternalError
from cpop.quadratics import (
    Envelope,
    Quadratic,
    eliminate_alpha_prime,
    envelope_add_and_prune,
    envelope_min,
    gap_to_envelope,
    lower_envelope,
    piece_minima,
)
from cpop.stats import SegmentCostCoeffs

from oracles import golden_min


def test_three_parabolas_all_survive():
    env = envelope_add_and_prune(
        None, [Quadratic(0, 0, 1), Quadratic(1, -4, 1), Quadratic(4, -8, 1)]
    )
    assert len(env) == 3
    assert env.order == (0, 1, 2)
    np.testing.assert_allclose(env.breaks, [0.25, 0.75])


def test_dominated_piece_is_dropped():
    env = envelope_add_and_prune(None, [Quadratic(0, 0, 1), Quadratic(5, 0, 1)])
    assert env.pieces == (Quadratic(0, 0, 1),)


def test_identical_pieces_keep_smaller_key():
    env = envelope_add_and_prune(
        None, [Quadratic(1, 2, 3, origin=4), Quadratic(1, 2, 3, origin=2)]
    )
    assert len(env) == 1 and env.pieces[0].origin == 2


def test_piece_can_reappear():
    # a wide flat piece under a narrow dip on both sides
    env = envelope_add_and_prune(None, [Quadratic(1, 0, 0.01), Quadratic(0, 0, 10)])
    assert env.order == (0, 1, 0)


def test_constant_pieces():
    order, breaks = lower_envelope([2.0, 3.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 1.0])
    assert order == [0, 2, 0]
    np.testing.assert_allclose(breaks, [-np.sqrt(2), np.sqrt(2)])


def test_envelope_min():
    env = envelope_add_and_prune(None, [Quadratic(0, 0, 1), Quadratic(-1, -4, 1)])
    val, arg, idx = envelope_min(env)
    assert (val, arg) == pytest.approx((-5.0, 2.0))
    assert env.pieces[idx] == Quadratic(-1, -4, 1)


def test_piece_minima_errors():
    with pytest.raises(InternalError, match="non-convex"):
        piece_minima([0.0], [0.0], [-1.0])
    with pytest.raises(InternalError, match="unbounded"):
        piece_minima([0.0], [1.0], [0.0])


def test_random_envelopes_match_pointwise_min():
    rng = np.random.default_rng(5)
    for _ in range(200):
        m = int(rng.integers(1, 12))
        a, b = rng.normal(0, 3, m), rng.normal(0, 3, m)
        c = rng.exponential(1.0, m) * (rng.uniform(size=m) > 0.2)
        b[c == 0] = 0.0
        order, breaks = lower_envelope(a, b, c)
        assert np.all(np.diff(breaks) >= 0)
        xs = rng.uniform(-20, 20, 200)
        full = (a[None] + b[None] * xs[:, None] + c[None] * xs[:, None] ** 2).min(axis=1)
        seg = np.searchsorted(np.asarray(breaks), xs)
        idx = np.asarray(order)[seg]
        env = a[idx] + b[idx] * xs + c[idx] * xs**2
        np.testing.assert_allclose(env, full, rtol=1e-10, atol=1e-9)
        gaps = gap_to_envelope(a, b, c, a[order], b[order], c[order], np.asarray(breaks, dtype=float))
        assert np.all(gaps >= -1e-9)
        assert np.all(gaps[np.unique(order)] <= 1e-9)


def test_envelope_call():
    env = Envelope((Quadratic(0, 0, 1), Quadratic(1, 0, 0)))
    np.testing.assert_allclose(env(np.array([0.0, 2.0])), [0.0, 1.0])
    assert env(0.5) == 0.25


def _case(rng):
    q = Quadratic(rng.normal(0, 3), rng.normal(0, 3), rng.exponential(1.0))
    # positive semi-definite segment cost from a few random points on [0, 1]
    u = rng.uniform(0, 1, int(rng.integers(1, 6)))
    w = rng.uniform(0.2, 3, len(u))
    yv = rng.normal(0, 3, len(u))
    co = SegmentCostCoeffs(
        A=np.sum(w * u * u),
        B=2 * np.sum(w * u * (1 - u)),
        C=-2 * np.sum(w * yv * u),
        D=np.sum(w * yv * yv),
        E=-2 * np.sum(w * yv * (1 - u)),
        F=np.sum(w * (1 - u) ** 2),
    )
    return q, co, float(rng.uniform(0.1, 10))


def test_elimination_matches_numerical_minimisation():
    rng = np.random.default_rng(11)
    for _ in range(100):
        q, co, beta = _case(rng)
        e = eliminate_alpha_prime(q, co, beta)
        for alpha in rng.normal(0, 5, 4):
            def f(ap):
                return q(ap) + co(ap, alpha) + beta
            _, fmin = golden_min(f, -1e3, 1e3)
            assert e(alpha) == pytest.approx(fmin, rel=1e-8, abs=1e-8)


def test_degenerate_elimination():
    # flat predecessor and empty segment: nothing depends on alpha'
    zero = SegmentCostCoeffs(0, 0, 0, 0, 0, 0)
    e = eliminate_alpha_prime(Quadratic(3.0, 0.0, 0.0), zero, 2.0)
    assert (e.a, e.b, e.c, e.r, e.s) == (5.0, 0.0, 0.0, 0.0, 0.0)
    with pytest.raises(InternalError, match="unbounded"):
        eliminate_alpha_prime(Quadratic(0.0, 0.0, 0.0), SegmentCostCoeffs(0, 0, 0, 0, 1.0, 0), 1.0)
