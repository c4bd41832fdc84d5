"""Linear regression under a Zellner g-prior with flat (alpha, log sigma) prior.

The prior on the slope vector is N(0, g sigma^2 (Xc'Xc)^-1) with Xc the
centered design. Everything the EB analysis needs is a function of
(n, k, TSS, R^2): the marginal likelihood in g, its maximizer
g_hat = max(F - 1, 0), and the Student posterior of the slopes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import stats
from .core import EBResult, HyperParam
from .errors import DomainError, ModelError
from .posterior import PointMass, PosteriorRep, ScaledStudentCF


@dataclass(frozen=True)
class RegressionData:
    y: np.ndarray
    X: np.ndarray
    Xc: np.ndarray

    @property
    def n(self) -> int:
        return int(self.y.shape[0])

    @property
    def k(self) -> int:
        return int(self.Xc.shape[1])


@dataclass(frozen=True)
class OlsSummary:
    alpha_hat: float
    beta_hat: np.ndarray
    SSE: float
    TSS: float
    R2: float
    Fn: float
    n: int
    k: int


def make_data(y, X) -> RegressionData:
    """Center the design; reject designs without full column rank."""
    y = np.asarray(y, dtype=float).ravel()
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n, k = X.shape
    if y.shape[0] != n:
        raise DomainError("y and X have different numbers of rows")
    if not 1 <= k < n - 1:
        raise DomainError(f"need 1 <= k < n-1, got n={n}, k={k}")
    Xc = X - X.mean(axis=0)
    if np.linalg.matrix_rank(Xc) < k:
        raise ModelError("centered design is rank deficient")
    return RegressionData(y, X, Xc)


def _standardize(X):
    Xc = X - X.mean(axis=0)
    scale = np.sqrt(np.mean(Xc ** 2, axis=0))
    scale[scale == 0] = 1.0
    return Xc / scale


def simulate_regression(n: int, k: int, alpha0: float, beta0, sigma0_2: float,
                        design: str = "iid_normal", rng=None, matrix=None) -> RegressionData:
    """y = alpha0 + X beta0 + N(0, sigma0_2) noise.

    Design columns are centered and scaled so each has mean square 1, making
    Xc'Xc / n a correlation matrix.
    """
    if not n > k + 1:
        raise DomainError("need n > k + 1")
    gen = stats.as_generator(rng if rng is not None else 0)
    beta0 = np.broadcast_to(np.asarray(beta0, dtype=float), (k,))
    for attempt in range(2):
        if design == "iid_normal":
            X = gen.standard_normal((n, k))
        elif design == "fixed_matrix":
            if matrix is None:
                raise DomainError("fixed_matrix design needs a matrix")
            X = np.asarray(matrix, dtype=float).reshape(n, k)
        else:
            raise DomainError(f"unknown design {design!r}")
        X = _standardize(X)
        if np.linalg.matrix_rank(X) == k:
            break
        if design == "fixed_matrix" or attempt == 1:
            raise ModelError("realized design is singular")
    y = alpha0 + X @ beta0 + gen.normal(0.0, math.sqrt(sigma0_2), n)
    return RegressionData(y, X, X - X.mean(axis=0))


def ols(data: RegressionData) -> OlsSummary:
    y, Xc = data.y, data.Xc
    ybar = float(y.mean())
    yc = y - ybar
    beta, *_ = np.linalg.lstsq(Xc, yc, rcond=None)
    resid = yc - Xc @ beta
    sse = float(resid @ resid)
    tss = float(yc @ yc)
    if tss <= 0:
        raise ModelError("response is constant")
    r2 = min(max(1.0 - sse / tss, 0.0), 1.0)
    n, k = data.n, data.k
    fn = (r2 / k) / ((1.0 - r2) / (n - 1 - k)) if r2 < 1 else math.inf
    return OlsSummary(ybar, beta, sse, tss, r2, fn, n, k)


def g_hat(summary: OlsSummary) -> float:
    return max(summary.Fn - 1.0, 0.0)


def log_marginal_r2(n: int, k: int, tss: float, r2: float, g: float) -> float:
    """log m(Y | g) from (n, k, TSS, R^2); k = 0 gives the intercept-only model."""
    if g < 0:
        raise DomainError("g must be nonnegative")
    q = tss * (1.0 + g * (1.0 - r2)) / (1.0 + g) if k > 0 else tss
    h = 0.5 * (n - 1)
    return (-h * math.log(2 * math.pi) - 0.5 * math.log(n) - 0.5 * k * math.log1p(g)
            + math.lgamma(h) - h * math.log(q / 2.0))


def log_marginal_g(data: RegressionData | OlsSummary, g: float) -> float:
    s = data if isinstance(data, OlsSummary) else ols(data)
    return log_marginal_r2(s.n, s.k, s.TSS, s.R2, g)


def posterior_beta_given_g(data: RegressionData, g: float) -> PosteriorRep:
    """Marginal posterior of the slopes (sigma^2 and alpha integrated out)."""
    if g < 0:
        raise DomainError("g must be nonnegative")
    if g == 0:
        return PointMass(np.zeros(data.k))
    s = ols(data)
    shrink = g / (1.0 + g)
    xtx = data.Xc.T @ data.Xc
    q = s.SSE + float(s.beta_hat @ xtx @ s.beta_hat) / (1.0 + g)
    scale = shrink * q / (s.n - 1) * np.linalg.inv(xtx)
    scale = 0.5 * (scale + scale.T)
    return ScaledStudentCF(shrink * s.beta_hat, scale, s.n - 1)


def eb_gprior(data: RegressionData) -> EBResult:
    s = ols(data)
    g = g_hat(s)
    return EBResult(HyperParam((g,), (g == 0.0,)), log_marginal_g(s, g),
                    posterior_beta_given_g(data, g))


@dataclass(frozen=True)
class GPriorFamily:
    """Adapter for the generic marginal-MLE driver (lambda = g)."""

    dim: int = 1

    def log_marginal(self, data, lam):
        return log_marginal_g(data, lam[0])

    def posterior(self, data, lam):
        return posterior_beta_given_g(data, lam[0])


def degeneracy_probability_mc(n: int, k: int, beta0, sigma0_2: float, reps: int,
                              rng) -> tuple[float, float]:
    """Monte Carlo frequency of g_hat = 0 and its binomial standard error."""
    if reps < 1000:
        raise DomainError("reps must be at least 1000")
    gen = stats.as_generator(rng)
    zero = 0
    for _ in range(reps):
        d = simulate_regression(n, k, 0.0, beta0, sigma0_2, rng=gen)
        zero += g_hat(ols(d)) == 0.0
    p = zero / reps
    return p, math.sqrt(p * (1 - p) / reps)


def exact_degeneracy_probability(n: int, k: int) -> float:
    """P(F(k, n-1-k) <= 1), the finite-n probability that g_hat = 0 under beta0 = 0."""
    return stats.f_cdf(1.0, k, n - 1 - k)
