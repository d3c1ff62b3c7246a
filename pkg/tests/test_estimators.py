import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from idratio.distributions import GrideParams, gride_exact_sample, pareto_sample
from idratio.errors import DegenerateRatioError, EstimationFailedError
from idratio.estimators import (
    RECORD_FIELDS,
    GrideLikelihood,
    IdEstimate,
    cride_bayes,
    cride_mle,
    erlang_diagnostic,
    gride_mle,
    gride_posterior,
    twonn_bayes,
    twonn_ls,
    twonn_mle,
)
from idratio.geometry import ConsecutiveRatios, PointCloud, RatioSample, consecutive_ratios, generic_ratios, knn_table
from idratio.scale import pivot_table
from idratio.synthgen import consecutive_fixture, gaussian_orthonoise, pareto_ratio_fixture, spiral3d


@pytest.fixture(scope="module")
def pivot_neighbors():
    return pivot_table(10_000, 10, d=2, rho=1.0, seed=0)


@pytest.fixture(scope="module")
def gaussian_table():
    return knn_table(gaussian_orthonoise(10_000, 2, 0, seed=1), 16)


# ------------------------------------------------------------------ IdEstimate

class TestIdEstimate:
    def test_interval_must_contain_estimate(self):
        with pytest.raises(ValueError):
            IdEstimate(2.0, 2.1, 3.0, 0.95, "x", 10)

    @pytest.mark.parametrize("level", [0.0, 1.0])
    def test_level_range(self, level):
        with pytest.raises(ValueError):
            IdEstimate(2.0, 1.0, 3.0, level, "x", 10)

    def test_record_order(self):
        rec = IdEstimate(2.0, 1.0, 3.0, 0.9, "x", 10, n1=1, n2=2).to_record()
        assert tuple(rec) == RECORD_FIELDS
        assert rec["L"] is None


# ------------------------------------------------------------------ TWO-NN

class TestTwonnLS:
    def test_exact_quantiles(self):
        n = 1000
        F = np.arange(1, n + 1) / (n + 1)
        mu = (1 - F) ** (-1 / 3)
        assert twonn_ls(mu, trim_fraction=0.0).d_hat == pytest.approx(3.0, abs=1e-2)

    def test_rank_deficient(self):
        est = twonn_ls(np.full(50, 2.0), trim_fraction=0.0)
        assert math.isfinite(est.d_hat)
        assert "rank-deficient" in est.method

    def test_spiral(self):
        mu = generic_ratios(knn_table(spiral3d(5000, seed=1), 2), 1, 2)
        assert 2.7 <= twonn_ls(mu).d_hat <= 3.3

    def test_all_trimmed(self):
        with pytest.raises(ValueError):
            twonn_ls(pareto_sample(2.0, 20, 0), trim_fraction=0.9)

    def test_trim_recorded(self):
        est = twonn_ls(pareto_sample(2.0, 500, 0))
        assert est.trim_fraction == 0.1
        assert est.n_eff == 450


class TestTwonnMLE:
    def test_arithmetic(self):
        est = twonn_mle(np.full(3, math.e))
        assert est.d_hat == pytest.approx(2 / 3)

    def test_pareto_sample(self):
        assert 1.94 <= twonn_mle(pareto_sample(2.0, 10**4, seed=7)).d_hat <= 2.06

    def test_interval_is_inverse_gamma(self):
        est = twonn_mle(pareto_sample(2.0, 50, seed=1), level=0.9)
        ig = stats.invgamma(50, scale=49)
        assert est.interval_low == pytest.approx(est.d_hat / ig.ppf(0.95), rel=1e-10)
        assert est.interval_high == pytest.approx(est.d_hat / ig.ppf(0.05), rel=1e-10)

    def test_rejects_other_orders(self):
        with pytest.raises(ValueError):
            twonn_mle(RatioSample([2.0, 3.0], 2, 4))


class TestTwonnBayes:
    def test_arithmetic(self):
        res = twonn_bayes(np.full(3, math.e), 1, 1)
        assert (res.posterior.shape, res.posterior.rate) == (4, pytest.approx(4.0))
        assert res.mean == pytest.approx(1.0)

    def test_vague_prior_matches_mle(self):
        mu = pareto_sample(2.0, 10**4, seed=2)
        assert twonn_bayes(mu, 1e-3, 1e-3).mean == pytest.approx(twonn_mle(mu).d_hat, rel=0.01)

    def test_interval_contains_mean(self):
        res = twonn_bayes(pareto_sample(3.0, 40, seed=3))
        assert res.credible_low < res.mean < res.credible_high


# ------------------------------------------------------------------ Cride

class TestCride:
    @pytest.mark.property
    def test_l2_equals_twonn(self, pivot_neighbors):
        a = cride_mle(consecutive_ratios(pivot_neighbors, 2))
        b = twonn_mle(generic_ratios(pivot_neighbors, 1, 2))
        assert a.d_hat == pytest.approx(b.d_hat, rel=1e-12)
        assert a.interval_low == pytest.approx(b.interval_low, rel=1e-12)

    def test_arithmetic(self):
        est = cride_mle(ConsecutiveRatios([[math.e, math.e]]))
        assert est.d_hat == pytest.approx(1 / 3)
        assert est.n_eff == 2

    def test_pivot_data(self, pivot_neighbors):
        assert 1.9 <= cride_mle(consecutive_ratios(pivot_neighbors, 10)).d_hat <= 2.1

    def test_variance_formula(self):
        # independent columns, so the model variance d^2 / (n(L-1) - 2) applies exactly
        est = np.array([cride_mle(consecutive_fixture(1000, 10, 2.0, seed=s)).d_hat for s in range(500)])
        model_var = 4.0 / (1000 * 9 - 2)
        # sample variance of 500 draws has relative sd about sqrt(2/499)
        assert est.var(ddof=1) == pytest.approx(model_var, rel=4 * math.sqrt(2 / 499))

    def test_bayes_arithmetic(self):
        res = cride_bayes(ConsecutiveRatios([[math.e, math.e]]), 1, 1)
        assert (res.posterior.shape, res.posterior.rate) == (3, pytest.approx(4.0))

    def test_bayes_l2_equals_twonn(self, pivot_neighbors):
        a = cride_bayes(consecutive_ratios(pivot_neighbors, 2))
        b = twonn_bayes(generic_ratios(pivot_neighbors, 1, 2))
        assert a.posterior.shape == b.posterior.shape
        assert a.posterior.rate == pytest.approx(b.posterior.rate, rel=1e-12)
        assert a.credible_high == pytest.approx(b.credible_high, rel=1e-12)

    def test_bayes_variance_shrinks_with_l(self, pivot_neighbors):
        v = [cride_bayes(consecutive_ratios(pivot_neighbors, L)).posterior.var for L in (2, 5, 10)]
        assert v[0] > v[1] > v[2]


class TestErlang:
    def test_l2_single_term(self):
        r = consecutive_fixture(100, 2, 2.0, seed=0)
        np.testing.assert_allclose(erlang_diagnostic(r, 2.0).statistics, np.log(r.values[:, 0]))

    def test_exact_ratios_pass(self):
        assert erlang_diagnostic(consecutive_fixture(10**4, 5, 2.0, seed=1), 2.0).pvalue > 0.01

    def test_wrong_d_fails(self):
        assert erlang_diagnostic(consecutive_fixture(10**4, 5, 2.0, seed=1), 3.0).pvalue < 0.01


# ------------------------------------------------------------------ Gride

class TestGrideMLE:
    @pytest.mark.property
    def test_reduces_to_twonn(self):
        mu = pareto_ratio_fixture(5000, 3.0, seed=4)
        n = len(mu)
        assert gride_mle(mu).d_hat * (n - 1) / n == pytest.approx(twonn_mle(mu).d_hat, rel=1e-6)

    def test_exact_sample(self):
        x = gride_exact_sample(GrideParams(2.0, 20, 40), 10**4, seed=9)
        assert 1.97 <= gride_mle(RatioSample(x, 20, 40)).d_hat <= 2.03

    def test_bootstrap_concentrates(self, gaussian_table):
        sd = [
            gride_mle(generic_ratios(gaussian_table, n1, 2 * n1), uncertainty="bootstrap",
                      bootstrap_reps=100, seed=0, d_max=30).std_error
            for n1 in (1, 8)
        ]
        assert sd[1] < sd[0]

    def test_bootstrap_reproducible(self):
        mu = RatioSample(gride_exact_sample(GrideParams(2.0, 2, 4), 500, 1), 2, 4)
        a = gride_mle(mu, uncertainty="bootstrap", bootstrap_reps=30, seed=5)
        b = gride_mle(mu, uncertainty="bootstrap", bootstrap_reps=30, seed=5)
        assert a == b
        assert a.seed == 5

    def test_fisher_interval(self):
        mu = RatioSample(gride_exact_sample(GrideParams(3.0, 4, 8), 2000, 2), 4, 8)
        est = gride_mle(mu, level=0.9)
        z = stats.norm.ppf(0.95)
        assert est.interval_high - est.d_hat == pytest.approx(z * est.std_error, rel=1e-12)

    def test_degenerate(self):
        with pytest.raises(DegenerateRatioError):
            gride_mle(RatioSample(np.full(10, 1 + 1e-14), 1, 2))

    def test_bracketing_failure(self):
        mu = RatioSample(gride_exact_sample(GrideParams(5.0, 2, 4), 1000, 3), 2, 4)
        with pytest.raises(EstimationFailedError) as info:
            gride_mle(mu, d_max=2.0)
        assert info.value.diagnostics["d_max"] == 2.0

    def test_unknown_uncertainty(self):
        with pytest.raises(ValueError):
            gride_mle(pareto_ratio_fixture(100, 2.0), uncertainty="jackknife")

    @pytest.mark.property
    @settings(max_examples=30, deadline=None)
    @given(
        d=st.floats(0.5, 20),
        n1=st.integers(1, 64),
        gap=st.integers(1, 64),
        seed=st.integers(0, 2**32 - 1),
    )
    def test_likelihood_unimodal(self, d, n1, gap, seed):
        x = gride_exact_sample(GrideParams(d, n1, n1 + gap), 300, seed)
        lik = GrideLikelihood(RatioSample(x, n1, n1 + gap))
        grid = np.exp(np.linspace(np.log(1e-3), np.log(1e3), 400))
        score = np.array([lik.derivative(g) for g in grid])
        changes = np.count_nonzero(np.diff(np.sign(score)) != 0)
        assert changes == 1
        d_hat = gride_mle(RatioSample(x, n1, n1 + gap), d_max=1e3).d_hat
        assert abs(lik.derivative(d_hat)) * d_hat < 1e-4 * lik.n


class TestGridePosterior:
    def test_conjugate_case(self):
        mu = pareto_ratio_fixture(300, 2.0, seed=6)
        post = gride_posterior(mu, 1.0, 1.0, grid_size=4000)
        exact = stats.gamma(1 + len(mu), scale=1 / (1 + mu.log_values.sum()))
        tv = 0.5 * np.trapezoid(np.abs(post.density - exact.pdf(post.grid)), post.grid)
        assert tv < 1e-3

    def test_width_shrinks(self, gaussian_table):
        w = [gride_posterior(generic_ratios(gaussian_table, n1, 2 * n1), d_max=30).width for n1 in (1, 2, 4, 8)]
        assert all(a > b for a, b in zip(w, w[1:]))

    def test_mode_near_mle(self):
        x = gride_exact_sample(GrideParams(2.0, 4, 8), 10**4, seed=3)
        mu = RatioSample(x, 4, 8)
        post = gride_posterior(mu, 1.0, 1e-6, grid_size=4000)
        step = np.max(np.diff(post.grid))
        assert abs(post.mode - gride_mle(mu).d_hat) <= step

    def test_normalized_and_interval(self):
        post = gride_posterior(pareto_ratio_fixture(200, 3.0, seed=1), level=0.9)
        assert np.trapezoid(post.density, post.grid) == pytest.approx(1.0, abs=1e-10)
        assert post.credible_low < post.mean < post.credible_high

    def test_grid_size(self):
        with pytest.raises(ValueError):
            gride_posterior(pareto_ratio_fixture(200, 3.0), grid_size=50)


# ------------------------------------------------------------------ invariants

@pytest.mark.property
@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), c=st.floats(1e-3, 1e3))
def test_scale_invariance(seed, c):
    cloud = PointCloud(np.random.default_rng(seed).standard_normal((150, 3)))
    base, scaled = knn_table(cloud, 8), knn_table(cloud.scaled(c), 8)

    def all_estimates(t):
        mu = generic_ratios(t, 1, 2)
        return [
            twonn_ls(mu).d_hat,
            twonn_mle(mu).d_hat,
            twonn_bayes(mu).mean,
            cride_mle(consecutive_ratios(t, 5)).d_hat,
            cride_bayes(consecutive_ratios(t, 5)).mean,
            gride_mle(generic_ratios(t, 4, 8), d_max=30).d_hat,
        ]

    np.testing.assert_allclose(all_estimates(scaled), all_estimates(base), rtol=1e-10)


@pytest.mark.property
def test_unbiased_at_desk_scale():
    d, n, reps = 4.0, 100, 2000
    tw = np.array([twonn_mle(pareto_ratio_fixture(n, d, seed=s)).d_hat for s in range(reps)])
    cr = np.array([cride_mle(consecutive_fixture(n, 3, d, seed=s)).d_hat for s in range(reps)])
    for est in (tw, cr):
        assert abs(est.mean() - d) < 3 * est.std(ddof=1) / math.sqrt(reps)


@pytest.mark.property
@pytest.mark.parametrize("level", [0.8, 0.95])
def test_interval_coverage(level):
    d, reps = 2.0, 2000
    tw = [twonn_mle(pareto_ratio_fixture(100, d, seed=s), level) for s in range(reps)]
    cr = [cride_mle(consecutive_fixture(100, 5, d, seed=10**6 + s), level) for s in range(reps)]
    for ests in (tw, cr):
        cover = np.mean([e.interval_low <= d <= e.interval_high for e in ests])
        assert level - 0.02 <= cover <= level + 0.02
