import math

import numpy as np
import pytest
from scipy import stats as sp_stats

from eblab import core, gprior, metrics, stats
from eblab.errors import DomainError, ModelError
from eblab.posterior import PointMass, ScaledStudentCF
from oracles import gprior_log_marginal_quadrature


def _summary(n, k, r2, tss=1.0):
    fn = (r2 / k) / ((1 - r2) / (n - 1 - k))
    return gprior.OlsSummary(0.0, np.zeros(k), tss * (1 - r2), tss, r2, fn, n, k)


@pytest.mark.parametrize("n,k,r2,expected", [(23, 2, 0.5, 9.0), (12, 1, 0.1, 1 / 9), (30, 3, 0.0, 0.0)])
def test_g_hat_examples_with_grid_oracle(n, k, r2, expected):
    s = _summary(n, k, r2)
    assert gprior.g_hat(s) == pytest.approx(expected, abs=1e-12)
    grid = np.arange(0, 50, 1e-4)
    vals = [gprior.log_marginal_r2(n, k, 1.0, r2, g) for g in grid]
    assert abs(grid[int(np.argmax(vals))] - expected) <= 1e-3


def test_fn_identity():
    d = gprior.simulate_regression(40, 3, 1.0, [0.5, 0.0, -0.2], 1.0, rng=stats.RngStream(1, 0))
    s = gprior.ols(d)
    assert s.Fn == pytest.approx((s.R2 / 3) / ((1 - s.R2) / 36), rel=1e-12)
    assert abs(np.sum(d.Xc, axis=0)).max() < 1e-12


def test_simulation_examples():
    gen = stats.RngStream(2, 0).generator()
    r2 = [gprior.ols(gprior.simulate_regression(20, 3, 0.0, 0.0, 1.0, rng=gen)).R2 for _ in range(10000)]
    mean, se = np.mean(r2), np.std(r2) / math.sqrt(len(r2))
    assert abs(mean - 3 / 19) <= 3 * se
    d = gprior.simulate_regression(50, 2, 0.0, [1.0, -1.0], 1e-12, rng=gen)
    assert gprior.ols(d).R2 > 1 - 1e-9
    Z = np.random.default_rng(0).standard_normal((30, 2))
    Q, _ = np.linalg.qr(Z - Z.mean(axis=0))
    d = gprior.simulate_regression(30, 2, 0.0, 0.0, 1.0, design="fixed_matrix", rng=gen, matrix=Q)
    assert np.allclose(d.Xc.T @ d.Xc, 30 * np.eye(2), atol=1e-10)


def test_simulation_rejects_bad_inputs():
    with pytest.raises(DomainError):
        gprior.simulate_regression(3, 2, 0, 0, 1)
    with pytest.raises(ModelError):
        gprior.simulate_regression(10, 2, 0, 0, 1, design="fixed_matrix", matrix=np.ones((10, 2)))


def test_f_statistic_is_exactly_f_distributed():
    gen = stats.RngStream(3, 0).generator()
    f = np.sort([gprior.ols(gprior.simulate_regression(20, 3, 0.5, 0.0, 2.0, rng=gen)).Fn for _ in range(10000)])
    cdf = np.array([stats.f_cdf(x, 3, 16) for x in f])
    ecdf_hi = np.arange(1, f.size + 1) / f.size
    ecdf_lo = np.arange(f.size) / f.size
    assert max(np.max(ecdf_hi - cdf), np.max(cdf - ecdf_lo)) <= 0.02


@pytest.mark.parametrize("g", [0.5, 4.0, 30.0])
def test_log_marginal_against_quadrature(g):
    d = gprior.simulate_regression(10, 1, 0.3, [0.8], 1.0, rng=stats.RngStream(4, 0))
    assert gprior.log_marginal_g(d, g) == pytest.approx(gprior_log_marginal_quadrature(d.y, d.Xc, g), abs=1e-6)


def test_null_model_marginal_against_quadrature():
    y = np.random.default_rng(5).normal(1, 2, 12)
    tss = float(np.sum((y - y.mean()) ** 2))
    assert gprior.log_marginal_r2(12, 0, tss, 0.0, 1.0) == pytest.approx(
        gprior_log_marginal_quadrature(y, None, 1.0), abs=1e-6)


def test_posterior_limits():
    d = gprior.simulate_regression(40, 2, 0.0, [1.0, 0.5], 1.0, rng=stats.RngStream(6, 0))
    p0 = gprior.posterior_beta_given_g(d, 0.0)
    assert isinstance(p0, PointMass) and np.array_equal(p0.value, np.zeros(2))
    p = gprior.posterior_beta_given_g(d, 1e12)
    np.testing.assert_allclose(p.location, gprior.ols(d).beta_hat, atol=1e-9)


def _gibbs(d, g, draws, gen):
    """Gibbs over (alpha, beta, sigma^2) under the same prior: the slope-posterior oracle."""
    y, Xc = d.y, d.Xc
    n, k = d.n, d.k
    xtx = Xc.T @ Xc
    inv = np.linalg.inv(xtx)
    bhat = inv @ Xc.T @ (y - y.mean())
    shrink = g / (1 + g)
    chol = np.linalg.cholesky(shrink * inv)
    s2 = 1.0
    out = np.empty((draws, k))
    for t in range(draws):
        alpha = y.mean() + math.sqrt(s2 / n) * gen.standard_normal()
        beta = shrink * bhat + math.sqrt(s2) * chol @ gen.standard_normal(k)
        r = y - alpha - Xc @ beta
        rate = 0.5 * (r @ r + beta @ xtx @ beta / g)
        s2 = rate / gen.gamma(0.5 * (n + k))
        out[t] = beta
    return out


def _batch_se(x, batches=50):
    m = x[: x.size // batches * batches].reshape(batches, -1).mean(axis=1)
    return float(m.std(ddof=1) / math.sqrt(batches))


def test_student_posterior_matches_gibbs_oracle():
    d = gprior.simulate_regression(30, 1, 0.5, [0.4], 1.0, rng=stats.RngStream(7, 0))
    g = 3.0
    draws = _gibbs(d, g, 100_000, np.random.default_rng(11))[:, 0]
    post = gprior.posterior_beta_given_g(d, g)
    assert isinstance(post, ScaledStudentCF)
    marg = post.marginal(0)
    assert abs(draws.mean() - marg.location[0]) <= 3 * _batch_se(draws)
    for p in (0.1, 0.5, 0.9):
        q = sp_stats.t.ppf(p, marg.df, marg.location[0], math.sqrt(marg.scale[0, 0]))
        ind = (draws <= q).astype(float)
        assert abs(ind.mean() - p) <= 3 * _batch_se(ind)


def test_degeneracy_probability_examples():
    exact = gprior.exact_degeneracy_probability(200, 2)
    assert exact == pytest.approx(1 - (1 + 2 / 197) ** -98.5, abs=1e-12)
    assert exact == pytest.approx(0.6302, abs=1e-4)
    assert stats.chisq_cdf(2.0, 2) == pytest.approx(1 - math.exp(-1), abs=1e-12)
    p, se = gprior.degeneracy_probability_mc(200, 2, 0.0, 1.0, 2000, stats.RngStream(8, 0))
    assert abs(p - exact) <= 3 * se
    p, _ = gprior.degeneracy_probability_mc(500, 2, [0.6, 0.8], 1.0, 1000, stats.RngStream(8, 1))
    assert 1 - p >= 0.99
    with pytest.raises(DomainError):
        gprior.degeneracy_probability_mc(50, 2, 0.0, 1.0, 10, stats.RngStream(8, 2))


def test_zero_g_hat_never_merges():
    gen = stats.RngStream(9, 0).generator()
    seen = 0
    for _ in range(50):
        d = gprior.simulate_regression(60, 2, 0.0, 0.0, 1.0, rng=gen)
        eb = gprior.eb_gprior(d)
        if eb.lambda_hat[0] > 0:
            continue
        seen += 1
        assert eb.degenerate
        for g in (0.5, 1.0, 60.0):
            assert metrics.tv_distance(eb.posterior, gprior.posterior_beta_given_g(d, g)).value == 1.0
    assert seen > 0


def test_g_hat_agrees_with_generic_driver():
    gen = stats.RngStream(10, 0).generator()
    for _ in range(10):
        d = gprior.simulate_regression(40, 2, 0.0, [0.3, 0.0], 1.0, rng=gen)
        r = core.marginal_mle(gprior.GPriorFamily(), d, [(0.0, 200.0)])
        assert abs(r.lambda_hat[0] - gprior.g_hat(gprior.ols(d))) <= 1e-3
