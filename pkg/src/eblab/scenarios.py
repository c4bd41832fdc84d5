"""Scenario families: truth schemas, per-replication cells and templates.

A cell simulates one dataset of size n under the truth, runs the EB
procedure and returns a :class:`CellOutcome` with the requested metric
values, family-specific auxiliary values and per-replication events.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

from . import bahadur, dpmix, gaussian, gprior, io, metrics, modelselect
from .core import CellOutcome, mass_outside_ball
from .errors import CapacityError, ConfigError
from .posterior import DensityGrid

DISTANCE_METRICS = ("TV", "L1", "Hellinger", "KL", "Kolmogorov")
ALL_METRICS = DISTANCE_METRICS + ("consistency_mass", "lambda_hat_error", "degeneracy_freq")


@dataclass(frozen=True)
class Family:
    name: str
    description: str
    required: tuple
    defaults: dict
    supported: tuple
    cell: Callable
    template: dict


def _distances(p, q, requested, gen):
    out = {}
    for m in requested:
        if m in DISTANCE_METRICS:
            out[m] = metrics.DISTANCES[m](p, q, rng=gen).value
    return out


def _common(requested, values, degenerate):
    if "degeneracy_freq" in requested:
        values["degeneracy_freq"] = float(degenerate)
    return values


# ---------------------------------------------------------------------------
# Gaussian location model
# ---------------------------------------------------------------------------

def _gauss_data(truth, n, gen):
    return gaussian.simulate(truth["theta0"], truth["sigma2"], n, gen)


def _cell_case1(n, gen, truth, requested, eps):
    x = _gauss_data(truth, n, gen)
    s2, tau2 = truth["sigma2"], truth["tau2"]
    lam_fixed = truth["lambda_fixed"] if truth["lambda_fixed"] is not None else truth["theta0"] + 1.0
    lam0 = truth["lambda0"] if truth["lambda0"] is not None else truth["theta0"]
    eb = gaussian.eb_case1(x, tau2, s2)
    fixed = gaussian.posterior_fixed(x, lam_fixed, tau2, s2)
    values = _distances(eb.posterior, fixed, requested, gen)
    if "consistency_mass" in requested:
        values["consistency_mass"] = mass_outside_ball(eb.posterior, truth["theta0"], eps)
    if "lambda_hat_error" in requested:
        values["lambda_hat_error"] = abs(eb.lambda_hat[0] - truth["theta0"])
    values["marginal_ratio_excess"] = math.expm1(eb.log_marginal_at_hat - gaussian.log_marginal(x, lam0, tau2, s2))
    _common(requested, values, eb.degenerate)
    tv = metrics.tv_distance(eb.posterior, fixed).value
    return CellOutcome(values, {"degenerate": eb.degenerate, "tv_one": tv == 1.0})


def _cell_case2(n, gen, truth, requested, eps):
    x = _gauss_data(truth, n, gen)
    s2, m = truth["sigma2"], truth["m"]
    eb = gaussian.eb_case2(x, m, s2)
    fixed = gaussian.posterior_fixed(x, m, truth["tau2_fixed"], s2)
    values = _distances(eb.posterior, fixed, requested, gen)
    if "consistency_mass" in requested:
        values["consistency_mass"] = mass_outside_ball(eb.posterior, truth["theta0"], eps)
    if "lambda_hat_error" in requested:
        # the prior density at theta0 is maximized over tau2 at (theta0 - m)^2
        values["lambda_hat_error"] = abs(eb.lambda_hat[0] - (truth["theta0"] - m) ** 2)
    values["tau2_hat"] = eb.lambda_hat[0]
    _common(requested, values, eb.degenerate)
    tv = metrics.tv_distance(eb.posterior, fixed).value
    return CellOutcome(values, {"degenerate": eb.degenerate, "tv_one": tv == 1.0})


def _cell_case3(n, gen, truth, requested, eps):
    x = _gauss_data(truth, n, gen)
    s2 = truth["sigma2"]
    eb = gaussian.eb_case3(x, s2)
    fixed = gaussian.posterior_fixed(x, truth["m_fixed"], truth["tau2_fixed"], s2)
    values = _distances(eb.posterior, fixed, requested, gen)
    if "consistency_mass" in requested:
        values["consistency_mass"] = mass_outside_ball(eb.posterior, truth["theta0"], eps)
    if "lambda_hat_error" in requested:
        values["lambda_hat_error"] = abs(eb.lambda_hat[0] - truth["theta0"])
    _common(requested, values, eb.degenerate)
    tv = metrics.tv_distance(eb.posterior, fixed).value
    return CellOutcome(values, {"degenerate": eb.degenerate, "tv_one": tv == 1.0})


# ---------------------------------------------------------------------------
# g-prior regression and variable selection
# ---------------------------------------------------------------------------

@lru_cache(maxsize=8)
def _design_matrix(path):
    return io.read_design_csv(path)


def _regression(truth, n, k, beta0, gen):
    if truth.get("design_csv"):
        mat = _design_matrix(truth["design_csv"])
        if mat.shape[0] < n or mat.shape[1] != k:
            raise ConfigError(f"design_csv must have at least {n} rows and {k} columns", key="truth.design_csv")
        return gprior.simulate_regression(n, k, truth["alpha0"], beta0, truth["sigma0_2"],
                                          "fixed_matrix", gen, mat[:n])
    return gprior.simulate_regression(n, k, truth["alpha0"], beta0, truth["sigma0_2"], rng=gen)


def _resolve_g(g, n):
    return float(n) if g == "n" else float(g)


def _cell_gprior(n, gen, truth, requested, eps):
    k = int(truth["k"])
    data = _regression(truth, n, k, truth["beta0"], gen)
    eb = gprior.eb_gprior(data)
    gs = [_resolve_g(g, n) for g in truth["g_fixed"]]
    fixed = [gprior.posterior_beta_given_g(data, g) for g in gs]
    values = _distances(eb.posterior, fixed[0], requested, gen)
    if "consistency_mass" in requested:
        b0 = np.asarray(truth["beta0"], dtype=float)
        if eb.lambda_hat[0] == 0:
            values["consistency_mass"] = mass_outside_ball(eb.posterior, b0, eps)
        else:
            values["consistency_mass"] = mass_outside_ball(eb.posterior.marginal(0), float(b0[0]), eps)
    values["g_hat"] = eb.lambda_hat[0]
    _common(requested, values, eb.degenerate)
    tv_one = all(metrics.tv_distance(eb.posterior, f).value == 1.0 for f in fixed)
    return CellOutcome(values, {"degenerate": eb.degenerate, "tv_one": tv_one})


def _cell_modelselect(n, gen, truth, requested, eps):
    m, k0 = int(truth["m"]), int(truth["k0"])
    beta0 = np.zeros(m)
    beta0[:k0] = truth["signal"]
    data = _regression(truth, n, m, beta0, gen)
    post = modelselect.eb_model_posterior(data, _resolve_g(truth["g"], n))
    values = {"p_hat": post.p_hat}
    if "lambda_hat_error" in requested:
        values["lambda_hat_error"] = abs(post.p_hat - k0 / m)
    if "degeneracy_freq" in requested:
        values["degeneracy_freq"] = float(post.degenerate)
    return CellOutcome(values, {"degenerate": post.degenerate, "p_hat_zero": post.p_hat == 0.0})


# ---------------------------------------------------------------------------
# DP mixtures
# ---------------------------------------------------------------------------

def _mixture(truth):
    return truth["weights"], truth["means"], truth["sds"]


def _cell_dpmix_I(n, gen, truth, requested, eps):
    w, mu, sd = _mixture(truth)
    x = dpmix.sample_mixture(w, mu, sd, n, gen)
    spec = dpmix.DpMixSpec("location_scale_I", truth["precision_start"], truth["base_mean"],
                           truth["base_var"], tuple(truth["mu_bounds"]), tuple(truth["sigma_bounds"]))
    res = dpmix.liu_solver(x, spec, tuple(truth["lambda_bracket"]), truth["outer_iters"],
                           truth["gibbs_iters"], gen)
    values = {"lambda_hat": res.lambda_hat, "liu_residual": res.residual, "liu_residual_se": res.residual_se}
    if "degeneracy_freq" in requested:
        values["degeneracy_freq"] = float(res.degenerate)
    return CellOutcome(values, {"degenerate": res.degenerate,
                                "residual_within_3se": res.residual < 3 * res.residual_se})


def _cell_dpmix_II(n, gen, truth, requested, eps):
    w, mu, sd = _mixture(truth)
    x = dpmix.sample_mixture(w, mu, sd, n, gen)
    spec = dpmix.DpMixSpec("location_II", truth["precision"], 0.0, truth["base_var"],
                           sigma_bounds=tuple(truth["sigma_bounds"]))
    eb = dpmix.eb_plug_in_mean(x, spec, truth["gibbs_iters"], truth["burnin"], gen)
    pred = eb.posterior
    true_grid = DensityGrid.normalized(pred.x, dpmix.mixture_pdf(pred.x, w, mu, sd))
    values = _distances(pred, true_grid, requested, gen)
    if "lambda_hat_error" in requested:
        values["lambda_hat_error"] = abs(eb.lambda_hat[0] - float(np.dot(w, mu)))
    if "degeneracy_freq" in requested:
        values["degeneracy_freq"] = float(eb.degenerate)
    return CellOutcome(values, {"degenerate": eb.degenerate})


# ---------------------------------------------------------------------------
# Bahadur family
# ---------------------------------------------------------------------------

@lru_cache(maxsize=8)
def _bahadur_family(C, K):
    return bahadur.build_family(C, K)


def _cell_bahadur(n, gen, truth, requested, eps):
    fam = _bahadur_family(float(truth["C"]), int(truth["K"]))
    th0 = int(truth["theta0"])
    x = bahadur.sample_p_theta(fam, th0, n, gen)
    bayes = bahadur.bayes_posterior(fam, np.full(fam.K, 1.0 / fam.K), x)
    eb = bahadur.eb_gaussian_cdf_prior(fam, x)
    theta_hat = int(eb.posterior.value)
    values = _distances(eb.posterior, bayes, requested, gen)
    if "consistency_mass" in requested:
        values["consistency_mass"] = mass_outside_ball(eb.posterior, th0, eps)
    if "lambda_hat_error" in requested:
        values["lambda_hat_error"] = abs(theta_hat - th0)
    values["eb_mass_theta0"] = float(theta_hat == th0)
    values["bayes_mass_theta0"] = bayes.mass_at(th0)
    values["bayes_log_mass_off_theta0"] = bayes.log_mass_off(th0)
    # 1 - mass at theta0 without cancellation; the mass itself rounds to 1 quickly
    values["bayes_mass_off_theta0"] = math.exp(bayes.log_mass_off(th0))
    _common(requested, values, eb.degenerate)
    grid = bahadur.marginal_grid(fam, x)
    sup = float(np.max(bahadur.loglik_all(fam, x)))
    dominance = bool(np.all(grid <= sup + 1e-12 * max(1.0, abs(sup))))
    return CellOutcome(values, {"degenerate": eb.degenerate, "dominance_ok": dominance,
                                "mle_above_truth": theta_hat > th0})


# ---------------------------------------------------------------------------
# registry
# ---------------------------------------------------------------------------

def _tpl(name, family, truth, n_grid, reps, metrics_, epsilon=None):
    d = {"name": name, "family": family, "truth": truth, "n_grid": n_grid, "reps": reps,
         "metrics": metrics_, "seed": 20240601, "output_dir": "runs"}
    if epsilon is not None:
        d["epsilon"] = epsilon
    return d


_MIX2 = {"weights": [0.5, 0.5], "means": [-5.0, 5.0], "sds": [1.0, 1.0]}

FAMILIES = {
    "gaussian_case1": Family(
        "gaussian_case1", "Gaussian location, estimated prior mean; merging with a fixed-mean posterior",
        ("theta0",), {"sigma2": 1.0, "tau2": 1.0, "lambda_fixed": None, "lambda0": None},
        DISTANCE_METRICS + ("consistency_mass", "lambda_hat_error", "degeneracy_freq"), _cell_case1,
        _tpl("merging_rate_case1", "gaussian_case1", {"theta0": 0.0}, [25, 100, 400, 1600], 2000,
             ["L1", "lambda_hat_error", "consistency_mass"], 0.5)),
    "gaussian_case2": Family(
        "gaussian_case2", "Gaussian location, estimated prior variance; exact degeneracy law",
        ("theta0", "m"), {"sigma2": 1.0, "tau2_fixed": 1.0},
        DISTANCE_METRICS + ("consistency_mass", "lambda_hat_error", "degeneracy_freq"), _cell_case2,
        _tpl("degeneracy_case2", "gaussian_case2", {"theta0": 0.0, "m": 0.0}, [10, 100], 100000,
             ["degeneracy_freq"])),
    "gaussian_case3": Family(
        "gaussian_case3", "Gaussian location, prior mean and variance estimated; point-mass EB posterior",
        ("theta0",), {"sigma2": 1.0, "m_fixed": 0.0, "tau2_fixed": 1.0},
        DISTANCE_METRICS + ("consistency_mass", "lambda_hat_error", "degeneracy_freq"), _cell_case3,
        _tpl("nonmerging_case3", "gaussian_case3", {"theta0": 0.0}, [10, 100, 1000], 200,
             ["TV", "degeneracy_freq"])),
    "gprior": Family(
        "gprior", "Zellner g-prior regression; probability that the estimated g is zero",
        ("k", "beta0"), {"sigma0_2": 1.0, "alpha0": 0.0, "g_fixed": ["n", 1.0], "design_csv": None},
        DISTANCE_METRICS + ("consistency_mass", "degeneracy_freq"), _cell_gprior,
        _tpl("gprior_degeneracy", "gprior", {"k": 2, "beta0": [0.0, 0.0]}, [200], 10000,
             ["degeneracy_freq", "TV"])),
    "modelselect": Family(
        "modelselect", "Variable selection with estimated inclusion probability",
        ("m", "k0", "signal"), {"sigma0_2": 1.0, "alpha0": 0.0, "g": "n", "design_csv": None},
        ("lambda_hat_error", "degeneracy_freq"), _cell_modelselect,
        _tpl("oracle_p", "modelselect", {"m": 8, "k0": 2, "signal": 1.0}, [500], 500,
             ["lambda_hat_error", "degeneracy_freq"])),
    "dpmix_I": Family(
        "dpmix_I", "DP location-scale mixture; precision by the cluster-count equation",
        ("weights", "means", "sds"),
        {"precision_start": 1.0, "base_mean": 0.0, "base_var": 25.0, "mu_bounds": [-10.0, 10.0],
         "sigma_bounds": [0.3, 3.0], "lambda_bracket": [0.01, 100.0], "outer_iters": 20, "gibbs_iters": 2000},
        ("degeneracy_freq",), _cell_dpmix_I,
        _tpl("liu_two_component", "dpmix_I", dict(_MIX2), [200], 1, ["degeneracy_freq"])),
    "dpmix_II": Family(
        "dpmix_II", "DP location mixture with the base mean set to the sample mean",
        ("weights", "means", "sds"),
        {"precision": 1.0, "base_var": 4.0, "sigma_bounds": [0.3, 3.0], "gibbs_iters": 600, "burnin": 200},
        DISTANCE_METRICS + ("lambda_hat_error", "degeneracy_freq"), _cell_dpmix_II,
        _tpl("plugin_mean_hellinger", "dpmix_II",
             {"weights": [0.5, 0.5], "means": [-1.5, 1.5], "sds": [1.0, 1.0]}, [50, 200, 500], 200,
             ["Hellinger", "lambda_hat_error"])),
    "bahadur": Family(
        "bahadur", "Spiky countable family: consistent Bayes against point-mass EB at the MLE",
        ("theta0",), {"C": 0.5, "K": 8},
        DISTANCE_METRICS + ("consistency_mass", "lambda_hat_error", "degeneracy_freq"), _cell_bahadur,
        _tpl("bahadur_dichotomy", "bahadur", {"theta0": 2}, [20, 80, 320], 500,
             ["TV", "consistency_mass"], 0.5)),
}


def resolved_truth(family: str, truth: dict) -> dict:
    fam = FAMILIES[family]
    out = dict(fam.defaults)
    out.update(truth)
    return out


def make_cell(config: dict):
    """Bind a validated config to a ``cell(n, rep, gen)`` callable."""
    fam = FAMILIES[config["family"]]
    truth = resolved_truth(config["family"], config["truth"])
    requested = tuple(config["metrics"])
    eps = float(config.get("epsilon", 0.5))

    def cell(n, rep, gen):
        return fam.cell(n, gen, truth, requested, eps)
    return cell


def list_scenarios():
    return [(name, fam.template["name"], fam.description) for name, fam in FAMILIES.items()]


def _is_number(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _number_list(truth, key, length=None):
    v = truth[key]
    if not isinstance(v, list) or not all(_is_number(t) for t in v) or not v:
        raise ConfigError(f"truth.{key} must be a non-empty list of numbers", key=f"truth.{key}")
    if length is not None and len(v) != length:
        raise ConfigError(f"truth.{key} must have length {length}", key=f"truth.{key}")
    return v


def validate_truth(family: str, truth: dict) -> dict:
    """Schema and family-specific checks for the truth block; returns the resolved block."""
    fam = FAMILIES[family]
    if not isinstance(truth, dict):
        raise ConfigError("truth must be an object", key="truth")
    for key in fam.required:
        if key not in truth:
            raise ConfigError(f"missing field '{key}' in truth for family {family}", key=f"truth.{key}")
    allowed = set(fam.required) | set(fam.defaults)
    for key in truth:
        if key not in allowed:
            raise ConfigError(f"unknown field '{key}' in truth for family {family}", key=f"truth.{key}")
    t = resolved_truth(family, truth)
    for key, v in t.items():
        if key in ("beta0", "weights", "means", "sds", "mu_bounds", "sigma_bounds", "lambda_bracket",
                   "g_fixed", "design_csv", "g", "lambda_fixed", "lambda0"):
            continue
        if not _is_number(v):
            raise ConfigError(f"truth.{key} must be a finite number", key=f"truth.{key}")
    for key in ("sigma2", "sigma0_2", "base_var"):
        if key in t and not t[key] > 0:
            raise ConfigError(f"truth.{key} must be positive", key=f"truth.{key}")
    for key in ("lambda_fixed", "lambda0"):
        if key in t and t[key] is not None and not _is_number(t[key]):
            raise ConfigError(f"truth.{key} must be a number or null", key=f"truth.{key}")
    if family in ("gprior", "modelselect"):
        g_list = t["g_fixed"] if family == "gprior" else [t["g"]]
        if not isinstance(g_list, list) or not g_list:
            raise ConfigError("truth.g_fixed must be a non-empty list", key="truth.g_fixed")
        for g in g_list:
            if not (g == "n" or (_is_number(g) and g > 0)):
                raise ConfigError("g values must be positive numbers or \"n\"", key="truth.g")
        if t["design_csv"] is not None and not isinstance(t["design_csv"], str):
            raise ConfigError("truth.design_csv must be a path", key="truth.design_csv")
    if family == "gprior":
        if not (isinstance(t["k"], int) and t["k"] >= 1):
            raise ConfigError("truth.k must be a positive integer", key="truth.k")
        _number_list(t, "beta0", t["k"])
    if family == "modelselect":
        for key in ("m", "k0"):
            if not isinstance(t[key], int) or isinstance(t[key], bool):
                raise ConfigError(f"truth.{key} must be an integer", key=f"truth.{key}")
        if not 1 <= t["m"] <= modelselect.MAX_COVARIATES:
            raise ConfigError(f"truth.m must lie in 1..{modelselect.MAX_COVARIATES}", key="truth.m")
        if not 0 <= t["k0"] <= t["m"]:
            raise ConfigError("truth.k0 must lie in 0..m", key="truth.k0")
    if family in ("dpmix_I", "dpmix_II"):
        w = _number_list(t, "weights")
        _number_list(t, "means", len(w))
        sds = _number_list(t, "sds", len(w))
        if any(x < 0 for x in w) or abs(sum(w) - 1) > 1e-9:
            raise ConfigError("truth.weights must be nonnegative and sum to 1", key="truth.weights")
        if any(s <= 0 for s in sds):
            raise ConfigError("truth.sds must be positive", key="truth.sds")
        lo, hi = _number_list(t, "sigma_bounds", 2)
        if not 0 < lo <= hi:
            raise ConfigError("truth.sigma_bounds must satisfy 0 < lo <= hi", key="truth.sigma_bounds")
        iters_key = "gibbs_iters"
        if not isinstance(t[iters_key], int) or t[iters_key] > 5000:
            raise ConfigError("truth.gibbs_iters must be an integer <= 5000", key="truth.gibbs_iters")
    if family == "dpmix_I":
        lo, hi = _number_list(t, "lambda_bracket", 2)
        if not 0 < lo < hi:
            raise ConfigError("truth.lambda_bracket must satisfy 0 < lo < hi", key="truth.lambda_bracket")
        _number_list(t, "mu_bounds", 2)
        if t["gibbs_iters"] < 500:
            raise ConfigError("truth.gibbs_iters must be at least 500", key="truth.gibbs_iters")
    if family == "dpmix_II":
        if not isinstance(t["burnin"], int) or not 100 <= t["burnin"] < t["gibbs_iters"]:
            raise ConfigError("truth.burnin must satisfy 100 <= burnin < gibbs_iters", key="truth.burnin")
    if family == "bahadur":
        if not 0 < t["C"] < 1:
            raise ConfigError("truth.C must lie in (0, 1)", key="truth.C")
        if not isinstance(t["K"], int) or t["K"] < 1:
            raise ConfigError("truth.K must be a positive integer", key="truth.K")
        try:
            _bahadur_family(float(t["C"]), t["K"])
        except CapacityError as exc:
            raise ConfigError(f"truth.K too large: {exc}", key="truth.K") from None
        if not isinstance(t["theta0"], int) or not 1 <= t["theta0"] <= t["K"]:
            raise ConfigError("truth.theta0 must be an integer in 1..K", key="truth.theta0")
    return t
