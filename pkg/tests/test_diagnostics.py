import numpy as np
import pytest

from cpop import (
    DataSeries,
    Segmentation,
    ValidationError,
    bic_score,
    crops_run,
    elbow_table,
    estimate_variance_ddiff,
    fit_loglinear_variance,
    fitted_table,
    solve,
)
from cpop.diagnostics import loglinear_objective

from instances import random_series


def _seg(knots):
    knots = np.asarray(knots, dtype=float)
    return Segmentation(knots[1:-1, 0], knots, np.nan, np.nan)


def test_fitted_table_on_a_line():
    s = DataSeries([0.0, 1.0, 2.0], [0.0, 1.0, 2.0])
    rows = fitted_table(solve(s, beta=1.0), s)
    assert len(rows) == 1
    r = rows[0]
    assert (r.x0, r.x1) == (0.0, 2.0)
    assert (r.y0, r.y1, r.gradient, r.intercept) == pytest.approx((0.0, 2.0, 1.0, 0.0), abs=1e-12)
    assert r.rss == pytest.approx(0.0, abs=1e-20)


def test_fitted_table_hinge():
    x = np.arange(11.0)
    s = DataSeries(x, np.maximum(0.0, x - 5))
    rows = fitted_table(solve(s, beta=0.1), s)
    assert len(rows) == 2
    assert all(r.rss < 1e-20 for r in rows)


def test_fitted_table_identities():
    rng = np.random.default_rng(0)
    for _ in range(10):
        s = random_series(rng, 50, n_changes=3)
        res = solve(s, beta=2.0)
        rows = fitted_table(res, s)
        knots = res.segmentation.knots
        assert len(rows) == len(knots) - 1
        for r, (k0, k1) in zip(rows, zip(knots[:-1], knots[1:])):
            assert (r.x0, r.y0, r.x1, r.y1) == (k0[0], k0[1], k1[0], k1[1])
            scale = max(1.0, abs(r.gradient * r.x1), abs(r.intercept))
            assert abs(r.gradient * r.x1 + r.intercept - r.y1) <= 1e-12 * scale
            assert r.gradient == (r.y1 - r.y0) / (r.x1 - r.x0)
        assert sum(r.rss for r in rows) == pytest.approx(res.rss, rel=1e-9)


def test_segment_membership():
    # the point at the knot goes left; everything left of the first knot goes to segment 1
    s = DataSeries([0.0, 1.0, 2.0, 3.0], [1.0, 0.0, 3.0, 0.0])
    rows = fitted_table(_seg([(0, 0), (1, 0), (3, 0)]), s)
    assert [r.rss for r in rows] == [1.0, 9.0]


def test_bic_examples():
    n = 100
    y = np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
    s = DataSeries.from_y(y)
    flat = _seg([(0, 0), (n - 1, 0)])
    assert bic_score(flat, s) == pytest.approx(0.0, abs=1e-12)
    kinked = _seg([(0, 0), (50, 0), (n - 1, 0)])
    assert bic_score(kinked, s) == pytest.approx(2 * np.log(100), abs=1e-12)
    assert bic_score(_seg([(0, 0), (n - 1, 0)]), DataSeries.from_y(np.zeros(n))) == -np.inf


def test_bic_shift_invariance():
    rng = np.random.default_rng(1)
    s = random_series(rng, 40)
    res = solve(s, beta=3.0)
    shifted = Segmentation(res.changepoints, res.segmentation.knots + [0.0, 4.0], 0, 0)
    assert bic_score(shifted, DataSeries(s.x, s.y + 4.0, s.sd)) == pytest.approx(bic_score(res, s), rel=1e-9)


def test_elbow_table():
    rng = np.random.default_rng(2)
    s = random_series(rng, 40, n_changes=3)
    path = crops_run(s, None, 0.5, 40.0)
    table = elbow_table(path)
    assert [m for m, _ in table] == sorted(r.m for r in path.records)
    qs = [q for _, q in table]
    assert all(a > b for a, b in zip(qs, qs[1:]))
    assert dict(table) == {r.m: r.Qm for r in path.records}
    one = crops_run(s, None, 3.0, 3.0)
    assert len(elbow_table(one)) == 1


def test_ddiff_examples():
    assert estimate_variance_ddiff(DataSeries.from_y(np.zeros(5))) == 0.0
    assert estimate_variance_ddiff(np.array([0.0, 1.0, 0.0])) == pytest.approx(4 / 6)
    with pytest.raises(ValidationError, match="insufficient data"):
        estimate_variance_ddiff(np.array([1.0, 2.0]))


def test_loglinear_closed_form_a():
    rng = np.random.default_rng(3)
    r = rng.normal(size=200)
    x = np.zeros(200)
    fit = fit_loglinear_variance(r, x)
    assert fit.b == 0.0
    assert fit.a == pytest.approx(np.log(np.mean(r * r)), abs=1e-12)


def test_loglinear_optimum_conditions():
    rng = np.random.default_rng(4)
    x = np.sort(rng.uniform(-2, 3, 500))
    r = rng.normal(size=500) * np.exp(0.5 * (0.3 - 0.7 * x))
    fit = fit_loglinear_variance(r, x)
    n = len(x)
    # scale-free gradient check by central differences
    h = 1e-5
    ga = (loglinear_objective(fit.a + h, fit.b, r, x) - loglinear_objective(fit.a - h, fit.b, r, x)) / (2 * h)
    gb = (loglinear_objective(fit.a, fit.b + h, r, x) - loglinear_objective(fit.a, fit.b - h, r, x)) / (2 * h)
    assert abs(ga) / n < 1e-6 and abs(gb) / n < 1e-6
    assert fit.a == pytest.approx(np.log(np.mean(r * r * np.exp(-fit.b * x))), abs=1e-6)
    np.testing.assert_allclose(fit(x), np.exp(fit.a + fit.b * x))


def test_loglinear_errors():
    with pytest.raises(ValidationError, match="degenerate residuals"):
        fit_loglinear_variance(np.zeros(5), np.arange(5.0))
    with pytest.raises(ValidationError, match="shape error"):
        fit_loglinear_variance(np.ones(5), np.arange(4.0))
    with pytest.raises(ValidationError, match="insufficient"):
        fit_loglinear_variance(np.ones(2), np.arange(2.0))


def test_loglinear_steep_trend_widens_search():
    x = np.linspace(0, 1, 50)
    r = np.sqrt(np.exp(2.0 + 40.0 * x))
    fit = fit_loglinear_variance(r, x)
    assert fit.b == pytest.approx(40.0, abs=1e-4)


def test_bic_selects_three_changes_in_most_replicates():
    from cpop import select_bic, simulate_series, SlopeSpec

    spec = SlopeSpec([0, 25, 50, 100], [0.2, -0.3, 0.2, -0.1], sd=1.5)
    x = np.arange(1.0, 201.0)
    hits = 0
    for seed in range(100):
        sim = simulate_series(spec, x, seed)
        s = DataSeries(sim.x, sim.y, 1.0)
        path = crops_run(s, None, 5.0, 50.0)
        best, _ = select_bic(path, s)
        hits += path.records[best].m == 3
    assert hits >= 80, hits
