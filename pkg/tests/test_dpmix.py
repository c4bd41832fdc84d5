import math

import numpy as np
import pytest

from eblab import dpmix, stats
from eblab.errors import CapacityError, DomainError


SPEC_I = dpmix.DpMixSpec(kind="location_scale_I", mu_bounds=(-10, 10), sigma_bounds=(0.2, 3.0))
SPEC_II = dpmix.DpMixSpec(kind="location_II", base_var=4.0, sigma_bounds=(0.3, 3.0))


def test_liu_lhs_examples():
    assert dpmix.liu_lhs(1.0, 3) == pytest.approx(1 + 1 / 2 + 1 / 3, abs=1e-15)
    assert dpmix.liu_lhs(1e-12, 50) == pytest.approx(1.0, abs=1e-9)
    assert dpmix.liu_lhs(1e12, 50) == pytest.approx(50.0, abs=1e-8)
    with pytest.raises(DomainError):
        dpmix.liu_lhs(0.0, 5)


def test_liu_lhs_strictly_increasing():
    gen = np.random.default_rng(0)
    for _ in range(1000):
        a, b = np.sort(np.exp(gen.uniform(-6, 6, 2)))
        if a == b:
            continue
        n = int(gen.integers(2, 500))
        assert dpmix.liu_lhs(a, n) < dpmix.liu_lhs(b, n)


def test_solve_liu_against_bisection_oracle():
    lam = dpmix.solve_liu(2.0, 50)
    lo, hi = 1e-6, 1e3
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if dpmix.liu_lhs(mid, 50) < 2.0 else (lo, mid)
    assert lam == pytest.approx(0.5 * (lo + hi), rel=1e-9)


@pytest.mark.parametrize("spec", [SPEC_I, SPEC_II])
@pytest.mark.parametrize("n,lam", [(50, 1.0), (200, 0.5)])
def test_constant_likelihood_matches_crp_prior_mean(spec, n, lam):
    x = np.random.default_rng(1).normal(0, 1, n)
    r = dpmix.crp_gibbs(x, lam, spec, 4000, 200, stats.RngStream(2, n), constant_likelihood=True)
    assert abs(r.E_Kn - dpmix.liu_lhs(lam, n)) <= 3 * r.std_error


def test_single_observation():
    r = dpmix.crp_gibbs([0.3], 1.0, SPEC_II, 300, 100, stats.RngStream(3, 0))
    assert np.all(r.Kn_samples == 1)
    res = dpmix.liu_solver([0.3], SPEC_I, rng=stats.RngStream(3, 1))
    assert res.degenerate and res.warning


def test_gibbs_preconditions():
    with pytest.raises(DomainError):
        dpmix.crp_gibbs([0.0, 1.0], 1.0, SPEC_II, 200, 50, 0)
    with pytest.raises(DomainError):
        dpmix.crp_gibbs([0.0, 1.0], 1.0, SPEC_II, 200, 200, 0)


def test_two_component_modal_cluster_count():
    gen = stats.RngStream(4, 0).generator()
    x = dpmix.sample_mixture([0.5, 0.5], [-5, 5], [1, 1], 200, gen)
    r = dpmix.crp_gibbs(x, 1.0, SPEC_I, 1500, 300, gen)
    vals, counts = np.unique(r.Kn_samples, return_counts=True)
    assert vals[np.argmax(counts)] in (2, 3)
    assert abs(r.predictive.mass - 1.0) <= 1e-12
    assert abs(r.predictive_raw_mass - 1.0) <= 1e-3


def test_predictive_grid_mass_kind_II():
    x = np.random.default_rng(5).normal(1.0, 1.0, 100)
    spec = dpmix.DpMixSpec(kind="location_II", base_mean=float(x.mean()), base_var=4.0, sigma_bounds=(0.3, 3.0))
    r = dpmix.crp_gibbs(x, 1.0, spec, 600, 200, stats.RngStream(5, 0))
    assert abs(r.predictive_raw_mass - 1.0) <= 1e-3
    assert r.predictive.cdf(float(np.median(x))) == pytest.approx(0.5, abs=0.1)


def test_exchangeability():
    gen = np.random.default_rng(6)
    x = np.concatenate([gen.normal(-2, 1, 40), gen.normal(2, 1, 40)])
    a = dpmix.crp_gibbs(x, 1.0, SPEC_II, 3000, 300, stats.RngStream(6, 0))
    b = dpmix.crp_gibbs(gen.permutation(x), 1.0, SPEC_II, 3000, 300, stats.RngStream(6, 0))
    assert abs(a.E_Kn - b.E_Kn) <= 3 * math.hypot(a.std_error, b.std_error)


def test_liu_solver_constant_estimator_stops_immediately():
    n = 80
    res = dpmix.liu_solver(np.zeros(n), SPEC_I, rng=0,
                           estimator=lambda lam: (dpmix.liu_lhs(lam, n), 0.05))
    assert len(res.trace) == 2 and res.residual <= 3 * res.residual_se


def test_liu_solver_fixed_target():
    n = 50
    res = dpmix.liu_solver(np.zeros(n), SPEC_I, rng=0, estimator=lambda lam: (2.0, 0.0))
    assert res.lambda_hat == pytest.approx(dpmix.solve_liu(2.0, n), rel=0.01)


def test_liu_solver_edge_is_degenerate():
    res = dpmix.liu_solver(np.zeros(20), SPEC_I, (0.1, 10.0), rng=0, estimator=lambda lam: (1.0, 0.0))
    assert res.degenerate and res.lambda_hat == 0.1
    res = dpmix.liu_solver(np.zeros(20), SPEC_I, (0.1, 10.0), rng=0, estimator=lambda lam: (19.0, 0.1))
    assert res.degenerate and res.lambda_hat == 10.0


def test_plug_in_mean():
    r = dpmix.eb_plug_in_mean(np.full(30, 2.5), SPEC_II, iters=300, burnin=100, rng=0)
    assert r.lambda_hat[0] == 2.5
    with pytest.raises(DomainError):
        dpmix.eb_plug_in_mean(np.zeros(5), SPEC_I)


def test_plug_in_mean_sampling_law():
    # the hyperparameter estimate is the sample mean: check the CLT law directly
    gen = stats.RngStream(7, 0).generator()
    w, m, s = [0.3, 0.7], [-1.0, 2.0], [0.5, 1.0]
    mean = float(np.dot(w, m))
    var = float(np.dot(w, np.square(s) + np.square(m))) - mean ** 2
    n = 100
    lam = np.sort([dpmix.sample_mixture(w, m, s, n, gen).mean() for _ in range(10000)])
    cdf = np.array([stats.normal_cdf((v - mean) / math.sqrt(var / n)) for v in lam])
    ks = max(np.max(np.arange(1, 10001) / 10000 - cdf), np.max(cdf - np.arange(10000) / 10000))
    assert ks < 0.05


def test_stick_breaking_truncation():
    lam = 2.0
    N = dpmix.truncation_for(lam, 1e-6)
    assert (lam / (lam + 1)) ** N < 1e-6
    gen = stats.RngStream(8, 0).generator()
    left = []
    for _ in range(2000):
        w, rest = dpmix.stick_breaking(lam, N, gen)
        assert abs(w.sum() - 1.0) <= 1e-5 and np.all(w >= 0)
        left.append(rest)
    assert np.mean(left) <= 1e-5
    gen = stats.RngStream(8, 1).generator()
    rest = [dpmix.stick_breaking(1.0, 5, gen)[1] for _ in range(20000)]
    assert abs(np.mean(rest) - 0.5 ** 5) <= 3 * np.std(rest) / math.sqrt(len(rest))
    with pytest.raises(CapacityError):
        dpmix.truncation_for(100.0, 1e-6, max_level=100)


def test_spec_invariants():
    with pytest.raises(DomainError):
        dpmix.DpMixSpec(sigma_bounds=(2.0, 1.0))
    with pytest.raises(DomainError):
        dpmix.DpMixSpec(truncation_level=5)
    with pytest.raises(DomainError):
        dpmix.DpMixSpec(kind="other")


def test_autocorrelation_time():
    gen = np.random.default_rng(9)
    assert dpmix.integrated_autocorr_time(gen.normal(size=20000)) == pytest.approx(1.0, abs=0.15)
    phi = 0.8
    x = np.empty(50000)
    x[0] = 0
    e = gen.normal(size=x.size)
    for t in range(1, x.size):
        x[t] = phi * x[t - 1] + e[t]
    assert dpmix.integrated_autocorr_time(x) == pytest.approx((1 + phi) / (1 - phi), rel=0.2)
