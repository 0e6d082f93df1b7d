import warnings

import numpy as np
import pytest
from scipy import stats

from vine_empirica import experiments, inference
from vine_empirica.estimator import fit
from vine_empirica.exceptions import InvalidInputError
from vine_empirica.families import GaussianCopula, GumbelCopula
from vine_empirica.models import ParametricVineModel, schedule_models
from vine_empirica.ranks import PairSample
from vine_empirica.vine import dvine


def covariance_oracle(cop_cdf, C1, C2, u, v):
    """Variance of a(u,v) - C1 a(u,1) - C2 a(1,v) for a Brownian bridge ``a`` on a copula.

    Uses cov(a(p), a(q)) = C(p ^ q) - C(p) C(q) directly.
    """
    pts = [(u, v), (u, 1.0), (1.0, v)]
    w = [1.0, -C1, -C2]
    total = 0.0
    for p, wp in zip(pts, w):
        for q, wq in zip(pts, w):
            meet = (min(p[0], q[0]), min(p[1], q[1]))
            total += wp * wq * (cop_cdf(*meet) - cop_cdf(*p) * cop_cdf(*q))
    return total


def uniform_pairs(n, seed, h=None):
    rng = np.random.default_rng(seed)
    grid = np.arange(1, n + 1) / (n + 1)
    return PairSample(rng.permutation(grid), rng.permutation(grid), h or 0.5 * n ** (-1 / 3))


# ----------------------------------------------------------------------
# asymptotic variance

def test_printed_form_collapses_to_product_value():
    rng = np.random.default_rng(0)
    u, v = rng.random(1000), rng.random(1000)
    got = inference.asymptotic_variance(u * v, v, u, u, v, form="printed")
    np.testing.assert_allclose(got, u * v * (1 - u * v), atol=1e-12)
    assert inference.asymptotic_variance(0.25, 0.5, 0.5, 0.5, 0.5, "printed") == \
        pytest.approx(0.1875)


def test_corrected_form_matches_covariance_oracle():
    rng = np.random.default_rng(1)
    cop = GaussianCopula(0.5)
    for _ in range(50):
        u, v = rng.uniform(0.02, 0.98, 2)
        C1, C2 = cop.h(v, u), cop.h(u, v)
        ref = covariance_oracle(cop.cdf, C1, C2, u, v)
        assert inference.true_variance(cop, (u, v)) == pytest.approx(ref, abs=1e-12)
    # independence: uv(1 - u)(1 - v)
    u, v = rng.random(1000), rng.random(1000)
    np.testing.assert_allclose(inference.asymptotic_variance(u * v, v, u, u, v),
                               u * v * (1 - u) * (1 - v), atol=1e-12)


def test_comonotone_and_boundary_examples():
    assert inference.asymptotic_variance(0.2, 0.0, 1.0, 0.4, 0.2, "printed") == \
        pytest.approx(0.16)
    ref = covariance_oracle(lambda a, b: min(a, b), 0.0, 1.0, 0.4, 0.2)
    assert inference.asymptotic_variance(0.2, 0.0, 1.0, 0.4, 0.2) == pytest.approx(ref,
                                                                                   abs=1e-15)
    for v in (0.1, 0.6):
        for form in inference.VARIANCE_FORMS:
            assert inference.asymptotic_variance(0.0, 0.3, 0.0, 0.0, v, form) == 0.0
        # at u = 1 the copula is v and C2 = 1; only the corrected form vanishes
        assert inference.asymptotic_variance(v, 0.3, 1.0, 1.0, v) == \
            pytest.approx(0.0, abs=1e-15)
        assert inference.asymptotic_variance(v, 0.3, 1.0, 1.0, v, "printed") == \
            pytest.approx(v * (1 - v))


def test_negative_variance_clamped_with_warning():
    with pytest.warns(UserWarning, match="clamped"):
        out = inference.asymptotic_variance(0.5, 1.0, 0.0, 0.2, 0.5)
    assert out == 0.0
    with pytest.raises(InvalidInputError):
        inference.asymptotic_variance(0.25, 0.5, 0.5, 0.5, 0.5, "other")


# ----------------------------------------------------------------------
# multiplier bootstrap

def test_constant_multipliers_give_zero_replicates():
    pairs = uniform_pairs(200, 3)
    xi = np.full((7, 200), 2.5)
    ens = inference.multiplier_resample(pairs, points=[(0.4, 0.2), (0.5, 0.5)], B=7,
                                        multipliers=xi)
    np.testing.assert_allclose(ens.values, 0.0, atol=1e-13)


def test_ensemble_mean_and_variance_on_independent_data():
    n, B = 1000, 1000
    pairs = uniform_pairs(n, 4)
    point = (0.4, 0.2)
    ens = inference.multiplier_resample(pairs, points=[point], B=B, seed=5)
    sd = ens.sd()[0]
    assert abs(ens.values.mean()) < 3 * sd / np.sqrt(B)
    plug = inference._pair_plugin_variance(pairs, point)
    assert ens.variance()[0] == pytest.approx(plug, rel=0.15)
    assert ens.variance()[0] == pytest.approx(0.4 * 0.2 * 0.6 * 0.8, rel=0.15)


def test_multiplier_replicates_match_loop_definition():
    pairs = uniform_pairs(60, 6, h=0.2)
    point = (0.3, 0.6)
    xi = np.random.default_rng(7).standard_normal((4, 60))
    ens = inference.multiplier_resample(pairs, points=[point], B=4, multipliers=xi)
    C1 = inference.ranks.partial_derivative_estimate(pairs, point, axis="first")
    C2 = inference.ranks.partial_derivative_estimate(pairs, point, axis="second")
    for b in range(4):
        xc = xi[b] - xi[b].mean()
        a = lambda s, t: sum(xc[k] for k in range(60)
                             if pairs.u[k] <= s and pairs.v[k] <= t) / np.sqrt(60)
        ref = a(*point) - C1 * a(point[0], 1.0) - C2 * a(1.0, point[1])
        assert ens.values[b, 0] == pytest.approx(ref, abs=1e-12)


def test_resample_is_reproducible_and_batch_independent():
    pairs = uniform_pairs(300, 8)
    a = inference.multiplier_resample(pairs, points=[(0.5, 0.5)], B=50, seed=11)
    b = inference.multiplier_resample(pairs, points=[(0.5, 0.5)], B=50, seed=11)
    np.testing.assert_array_equal(a.values, b.values)
    # the first 20 replicates do not depend on B
    c = inference.multiplier_resample(pairs, points=[(0.5, 0.5)], B=20, seed=11)
    np.testing.assert_array_equal(a.values[:20], c.values)
    with pytest.raises(InvalidInputError):
        inference.multiplier_resample(pairs, B=0)


# ----------------------------------------------------------------------
# confidence intervals

@pytest.fixture(scope="module")
def fitted4():
    model = schedule_models("dvine", "gaussian", rho=0.5, d=4)
    return fit(model.sample(1000, 21), model.vine)


def test_percentile_intervals_are_nested(fitted4):
    ens = inference.multiplier_resample(fitted4, "14|23", [(0.4, 0.2)], B=400, seed=1)
    prev = None
    for alpha in (0.5, 0.2, 0.1, 0.05, 0.01):
        ci = inference.confidence_interval(fitted4, "14|23", (0.4, 0.2), alpha, ensemble=ens)
        assert ci.lower <= ci.estimate <= ci.upper or ci.length < 0.05
        if prev is not None:
            assert ci.lower <= prev.lower and ci.upper >= prev.upper
        prev = ci


def test_interval_collapses_as_alpha_tends_to_one(fitted4):
    for method in ("symmetric-normal", "plug-in"):
        ci = inference.confidence_interval(fitted4, "14|23", (0.4, 0.2), 1 - 1e-9, B=200,
                                           method=method, seed=2)
        assert ci.length < 1e-6
        assert ci.lower == pytest.approx(ci.estimate, abs=1e-6)


def test_percentile_and_symmetric_widths_agree(fitted4):
    ens = inference.multiplier_resample(fitted4, "14|23", [(0.4, 0.2)], B=1000, seed=3)
    p = inference.confidence_interval(fitted4, "14|23", (0.4, 0.2), 0.1, ensemble=ens)
    s = inference.confidence_interval(fitted4, "14|23", (0.4, 0.2), 0.1,
                                      method="symmetric-normal", ensemble=ens)
    assert p.length == pytest.approx(s.length, rel=0.10)
    assert p.level == 0.9 and s.method == "symmetric-normal"


def test_degenerate_ensemble_warns():
    pairs = uniform_pairs(50, 1)
    ens = inference.multiplier_resample(pairs, points=[(0.4, 0.2)], B=5,
                                        multipliers=np.ones((5, 50)))
    with pytest.warns(UserWarning, match="zero-width"):
        ci = inference.confidence_interval(pairs, None, (0.4, 0.2), 0.1, ensemble=ens)
    assert ci.length == 0.0


def test_interval_validation(fitted4):
    with pytest.raises(InvalidInputError):
        inference.confidence_interval(fitted4, "14|23", (0.4, 0.2), 1.5, B=10, seed=0)
    with pytest.raises(InvalidInputError):
        inference.confidence_interval(fitted4, "14|23", (0.4, 0.2), 0.1, B=10, seed=0,
                                      method="bca")


# ----------------------------------------------------------------------
# Spearman's rho

def test_spearman_examples():
    u = np.arange(1, 41) / 41
    assert inference.spearman_rho(PairSample(u, u.copy(), 0.1)) == pytest.approx(1.0)
    model = ParametricVineModel(dvine([1, 2]), {"1,2": GaussianCopula(0.5)})
    fitted = fit(model.sample(100000, 2), model.vine)
    assert inference.spearman_rho(fitted, "1,2") == pytest.approx(6 / np.pi * np.arcsin(0.25),
                                                                  abs=0.01)


def test_spearman_functional_close_to_rank_form(fitted4):
    for est in fitted4.edges():
        rank_form = inference.spearman_rho(est.pairs)
        integral = inference.spearman_plugin(est.pairs, grid=512)
        assert integral == pytest.approx(rank_form, abs=2 / (fitted4.n + 1) + 2 / 512)


def test_spearman_resample_integration_rules_agree(fitted4):
    mid = inference.spearman_variance(fitted4, "14|23", B=200, seed=4, grid=32)
    mc = inference.spearman_variance(fitted4, "14|23", B=200, seed=4, grid=32,
                                     integration="mc")
    assert mc == pytest.approx(mid, rel=0.1)
    ci = inference.spearman_ci(fitted4, "14|23", 0.1, B=200, seed=4, grid=32)
    assert ci.lower < ci.estimate < ci.upper
    with pytest.raises(InvalidInputError):
        inference.spearman_ci(fitted4, "14|23", method="plug-in")
    with pytest.raises(InvalidInputError):
        inference.spearman_resample(fitted4, "14|23", B=5, integration="simpson")


def test_spearman_variance_matches_independence_value():
    # under independence the limit of sqrt(n) rho_hat has variance 1
    pairs = uniform_pairs(500, 9)
    var = inference.spearman_variance(pairs, B=600, seed=10, grid=32)
    assert var == pytest.approx(1.0, rel=0.15)


# ----------------------------------------------------------------------
# independence test

def test_independence_statistic_non_negative_and_comonotone_extreme():
    n = 60
    grid = np.arange(1, n + 1) / (n + 1)
    como = inference.independence_statistic(PairSample(grid, grid.copy(), 0.2))
    rng = np.random.default_rng(0)
    for _ in range(200):
        stat = inference.independence_statistic(PairSample(grid, rng.permutation(grid), 0.2))
        assert 0 <= stat <= como
    res = inference.independence_test(PairSample(grid, grid.copy(), 0.2), replicates=500)
    assert res.p_value < 0.01
    assert set(res.critical_values) == set(inference.LEVELS)
    assert res.reject(0.05)


def test_independence_null_is_cached_and_validated():
    a = inference.independence_null(80, 200, 3)
    assert a is inference.independence_null(80, 200, 3)
    assert not a.flags.writeable
    with pytest.raises(InvalidInputError):
        inference.independence_test(uniform_pairs(80, 1), replicates=50)


def test_independence_pvalues_are_uniform():
    n = 200
    null = inference.independence_null(n, 2000, 0)
    ps = []
    for r in range(500):
        stat = inference.independence_statistic(uniform_pairs(n, [r, 77]))
        ps.append((1 + np.sum(null >= stat)) / (len(null) + 1))
    assert stats.kstest(ps, "uniform").pvalue > 0.01


# ----------------------------------------------------------------------
# goodness of fit

def test_gof_statistic_self_test_is_zero():
    pairs = uniform_pairs(100, 2)

    class Empirical:
        def cdf(self, u, v):
            return inference.ranks.dominance_fraction(pairs.u, pairs.v)

    assert inference.gof_statistic(pairs, Empirical()) == 0.0


def test_gof_detects_wrong_family_and_accepts_right_one():
    cop = GumbelCopula(2.0)
    model = ParametricVineModel(dvine([1, 2]), {"1,2": cop})
    fitted = fit(model.sample(800, 3), model.vine)
    right = inference.gof_test(fitted, "1,2", "gumbel", replicates=100, seed=1)
    wrong = inference.gof_test(fitted, "1,2", "gaussian", replicates=100, seed=1)
    assert right.p_value > 0.05
    assert wrong.p_value < 0.05
    assert 0 <= right.p_value <= 1 and right.replicates == 100


def test_gof_pipeline_equals_pair_bootstrap_on_ground_edges():
    model = schedule_models("dvine", "gaussian", d=3)
    fitted = fit(model.sample(300, 3), model.vine)
    a = inference.gof_test(fitted, "1,2", "gaussian", replicates=30, seed=2)
    b = inference.gof_test(fitted, "1,2", "gaussian", replicates=30, seed=2, bootstrap="pair")
    assert a == b
    c = inference.gof_test(fitted, "13|2", "gaussian", replicates=30, seed=2)
    assert c.statistic == b.statistic or c.p_value != b.p_value
    with pytest.raises(InvalidInputError):
        inference.gof_test(fitted, "1,2", "independence")
    with pytest.raises(InvalidInputError):
        inference.gof_test(fitted, "1,2", "gaussian", bootstrap="wild")


def test_ancestor_vine_reproduces_edge_pairs():
    model = schedule_models("rvine", "gaussian")
    u = model.sample(400, 5)
    fitted = fit(u, model.vine)
    for edge in model.vine.edges():
        sub, cols, back = inference.ancestor_vine(model.vine, edge)
        sub_fit = fit(u[:, cols], sub)
        top = sub.tree(sub.d - 1)[0]
        assert back[top.key] == edge.key
        np.testing.assert_array_equal(sub_fit.estimate(top).pairs.u,
                                      fitted.estimate(edge).pairs.u)


# ----------------------------------------------------------------------
# expansion

def test_expansion_is_exact_with_true_ranks():
    # with pseudo-observations equal to the true values the two sides differ
    # only through the rank transform
    cop = GaussianCopula(0.4)
    n = 2000
    xy = cop.sample(n, 6)
    r = stats.rankdata(xy, axis=0) / (n + 1)
    pairs = PairSample(r[:, 0], r[:, 1], 0.05)
    resid = abs(inference.process_value(pairs, cop, (0.3, 0.7))
                - inference.expansion_value(xy[:, 0], xy[:, 1], cop, (0.3, 0.7)))
    assert resid < 0.15
    with pytest.raises(InvalidInputError):
        inference.expansion_residual(pairs, None, (0.3, 0.7), None, cop)


def test_expansion_residual_shrinks_with_n():
    rows = experiments.fig2(scale=0.1, ns=(100, 3000), levels=(2,), d=4)
    assert rows[1]["mean_residual"] < rows[0]["mean_residual"]
    assert all(np.isfinite(r["mean_residual"]) for r in rows)


# ----------------------------------------------------------------------
# determinism across threads

def test_studies_do_not_depend_on_threads():
    a = experiments.table3(scale=0.02, null_reps=200, n=300, threads=1)
    b = experiments.table3(scale=0.02, null_reps=200, n=300, threads=3)
    assert a == b
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        c = experiments.table2(scale=0.01, n=300, B=20, threads=1)
        d = experiments.table2(scale=0.01, n=300, B=20, threads=2)
    assert c == d
