"""Conjugate Gaussian location model with known variance.

Three EB variants are provided: estimate the prior mean (case 1), the prior
variance (case 2), or both (case 3). The marginal likelihood factors into a
lambda-free residual term and the density of the sample mean under
N(m, tau2 + sigma2/n), which is what every estimator here maximizes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import stats
from .core import EBResult, HyperParam
from .errors import DomainError
from .posterior import GaussianCF, PointMass, PosteriorRep


@dataclass(frozen=True)
class GaussianModelSpec:
    sigma2: float
    theta0: float = 0.0
    m: float = 0.0
    tau2: float = 1.0

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise DomainError("sigma2 must be positive")
        if self.tau2 < 0:
            raise DomainError("tau2 must be nonnegative")


def _summary(data):
    x = np.asarray(data, dtype=float).ravel()
    if x.size < 1:
        raise DomainError("need at least one observation")
    xbar = float(np.mean(x))
    return x.size, xbar, float(np.sum((x - xbar) ** 2))


def simulate(theta0: float, sigma2: float, n: int, rng) -> np.ndarray:
    return stats.as_generator(rng).normal(theta0, math.sqrt(sigma2), n)


def log_marginal(data, m: float, tau2: float, sigma2: float) -> float:
    """log of the integral of the likelihood against N(m, tau2)."""
    if tau2 < 0:
        raise DomainError("tau2 must be nonnegative")
    n, xbar, ss = _summary(data)
    resid = (-0.5 * n * math.log(2 * math.pi * sigma2) - ss / (2 * sigma2)
             + 0.5 * math.log(2 * math.pi * sigma2 / n))
    return resid + float(stats.normal_logpdf(xbar, m, tau2 + sigma2 / n))


def posterior_fixed(data, m: float, tau2: float, sigma2: float) -> PosteriorRep:
    """Conjugate posterior under N(m, tau2); a point mass at m when tau2 = 0."""
    if tau2 < 0:
        raise DomainError("tau2 must be nonnegative")
    if tau2 == 0:
        return PointMass(m)
    n, xbar, _ = _summary(data)
    s2n = sigma2 / n
    mean = s2n / (s2n + tau2) * m + tau2 / (tau2 + s2n) * xbar
    return GaussianCF(mean, 1.0 / (1.0 / tau2 + n / sigma2))


def tau2_hat(data, m: float, sigma2: float) -> float:
    """Closed-form marginal MLE of the prior variance."""
    n, xbar, _ = _summary(data)
    return (sigma2 / n) * max(n * (xbar - m) ** 2 / sigma2 - 1.0, 0.0)


def eb_case1(data, tau2: float, sigma2: float) -> EBResult:
    _, xbar, _ = _summary(data)
    return EBResult(HyperParam((xbar,)), log_marginal(data, xbar, tau2, sigma2),
                    posterior_fixed(data, xbar, tau2, sigma2))


def eb_case2(data, m: float, sigma2: float) -> EBResult:
    t = tau2_hat(data, m, sigma2)
    return EBResult(HyperParam((t,), (t == 0.0,)), log_marginal(data, m, t, sigma2),
                    posterior_fixed(data, m, t, sigma2))


def eb_case3(data, sigma2: float) -> EBResult:
    _, xbar, _ = _summary(data)
    return EBResult(HyperParam((xbar, 0.0), (False, True)), log_marginal(data, xbar, 0.0, sigma2),
                    PointMass(xbar))


def hierarchical_case1_posterior(data, lambda0: float, tau2_0: float, tau2: float,
                                 sigma2: float) -> PosteriorRep:
    """Posterior when the prior mean itself gets a N(lambda0, tau2_0) hyperprior."""
    if tau2_0 < 0:
        raise DomainError("tau2_0 must be nonnegative")
    return posterior_fixed(data, lambda0, tau2 + tau2_0, sigma2)


def hierarchical_case2_prior_logpdf(theta, m: float, nu: float):
    """Prior log density of theta when 1/tau2 ~ Gamma(shape nu/2, scale 2/nu).

    Integrating N(theta; m, tau2) over that hyperprior gives a Student-t with
    nu degrees of freedom, location m and unit scale.
    """
    if not nu > 0:
        raise DomainError("nu must be positive")
    return stats.t_logpdf(theta, nu, m, 1.0)


# Model families for the generic marginal-MLE driver -------------------------

@dataclass(frozen=True)
class Case1Family:
    tau2: float
    sigma2: float
    dim: int = 1

    def log_marginal(self, data, lam):
        return log_marginal(data, lam[0], self.tau2, self.sigma2)

    def posterior(self, data, lam):
        return posterior_fixed(data, lam[0], self.tau2, self.sigma2)


@dataclass(frozen=True)
class Case2Family:
    m: float
    sigma2: float
    dim: int = 1

    def log_marginal(self, data, lam):
        return log_marginal(data, self.m, lam[0], self.sigma2)

    def posterior(self, data, lam):
        return posterior_fixed(data, self.m, lam[0], self.sigma2)


@dataclass(frozen=True)
class Case3Family:
    sigma2: float
    dim: int = 2

    def log_marginal(self, data, lam):
        return log_marginal(data, lam[0], lam[1], self.sigma2)

    def posterior(self, data, lam):
        return posterior_fixed(data, lam[0], lam[1], self.sigma2)


def kl_gaussian(theta0, theta, sigma2: float = 1.0):
    """Per-observation KL(N(theta0, sigma2) || N(theta, sigma2))."""
    return (np.asarray(theta, dtype=float) - theta0) ** 2 / (2.0 * sigma2)
