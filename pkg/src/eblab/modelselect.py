"""Variable selection with an inclusion-probability hyperparameter p.

Every one of the 2^m submodels gets a g-prior marginal likelihood (g = n by
default, the unit-information choice). The prior over models is
p^k (1-p)^(m-k), and p is estimated by maximizing the resulting mixture
marginal over [0, 1].
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import stats
from .errors import DomainError
from .gprior import RegressionData, log_marginal_r2

MAX_COVARIATES = 20
_SINGULAR_RTOL = 1e-10


@dataclass(frozen=True)
class ModelIndex:
    gamma: int
    m: int

    @property
    def k_gamma(self) -> int:
        return int(self.gamma).bit_count()

    def columns(self) -> list[int]:
        return [j for j in range(self.m) if self.gamma >> j & 1]


@dataclass(frozen=True)
class ModelPosterior:
    p_hat: float
    log_marginals: np.ndarray
    posterior_probs: np.ndarray
    singular: np.ndarray
    degenerate: bool


class _Gram:
    """Cached sufficient statistics: every submodel R^2 comes from Xc'Xc and Xc'y."""

    def __init__(self, data: RegressionData):
        yc = data.y - data.y.mean()
        self.n = data.n
        self.m = data.k
        self.G = data.Xc.T @ data.Xc
        self.c = data.Xc.T @ yc
        self.tss = float(yc @ yc)

    def r2(self, cols):
        if not cols:
            return 0.0
        G = self.G[np.ix_(cols, cols)]
        ev = np.linalg.eigvalsh(G)
        if ev[0] <= _SINGULAR_RTOL * max(ev[-1], 1e-300) or len(cols) >= self.n - 1:
            return None
        c = self.c[cols]
        return float(c @ np.linalg.solve(G, c)) / self.tss


def _g_default(data, g):
    return float(data.n) if g is None else float(g)


def per_model_log_marginal(data: RegressionData, gamma: ModelIndex | int, g: float | None = None):
    """g-prior log marginal of one submodel, or None when its design is singular."""
    gram = _Gram(data)
    idx = gamma if isinstance(gamma, ModelIndex) else ModelIndex(int(gamma), data.k)
    r2 = gram.r2(idx.columns())
    if r2 is None:
        return None
    return log_marginal_r2(data.n, idx.k_gamma, gram.tss, min(r2, 1.0), _g_default(data, g))


def all_log_marginals(data: RegressionData, g: float | None = None):
    """Log marginals of all 2^m submodels (NaN where singular) and the singular mask."""
    m = data.k
    if m > MAX_COVARIATES:
        raise DomainError(f"exhaustive enumeration is limited to m <= {MAX_COVARIATES}")
    gram = _Gram(data)
    g = _g_default(data, g)
    out = np.full(2 ** m, np.nan)
    singular = np.zeros(2 ** m, dtype=bool)
    for gamma in range(2 ** m):
        idx = ModelIndex(gamma, m)
        r2 = gram.r2(idx.columns())
        if r2 is None:
            singular[gamma] = True
            continue
        out[gamma] = log_marginal_r2(data.n, idx.k_gamma, gram.tss, min(r2, 1.0), g)
    return out, singular


def _popcounts(m):
    return np.array([int(x).bit_count() for x in range(2 ** m)])


def _log_prior(k, m, p):
    # k log p + (m-k) log(1-p) with 0 log 0 = 0
    a = k * math.log(p) if k > 0 else 0.0
    b = (m - k) * math.log1p(-p) if m - k > 0 else 0.0
    return a + b


def _logsumexp(v):
    v = np.asarray(v, dtype=float)
    v = v[np.isfinite(v)] if np.any(np.isfinite(v)) else v
    mx = np.max(v)
    if not np.isfinite(mx):
        return float(mx)
    return float(mx + math.log(np.sum(np.exp(v - mx))))


def log_marginal_p(log_marginals, m: int, p: float) -> float:
    """log m(Y | p) for the model-space prior p^k (1-p)^(m-k)."""
    lm = np.asarray(log_marginals, dtype=float)
    ks = _popcounts(m)
    terms = []
    for k in range(m + 1):
        sel = lm[(ks == k) & np.isfinite(lm)]
        if sel.size and not ((p == 0 and k > 0) or (p == 1 and k < m)):
            terms.append(_log_prior(k, m, p) + _logsumexp(sel))
    return _logsumexp(terms) if terms else -math.inf


def p_hat_mml(log_marginals, m: int, tol: float = 1e-10) -> float:
    """Marginal MLE of p on [0, 1]; a flat objective returns 0.5."""
    lm = np.asarray(log_marginals, dtype=float)
    if lm.shape[0] != 2 ** m:
        raise DomainError("need one log marginal per model")
    ks = _popcounts(m)
    # group by model size once: m(Y|p) = sum_k p^k (1-p)^(m-k) exp(L_k)
    L = np.array([_logsumexp(lm[(ks == k) & np.isfinite(lm)]) if np.any((ks == k) & np.isfinite(lm))
                  else -math.inf for k in range(m + 1)])

    def obj(p):
        terms = [_log_prior(k, m, p) + L[k] for k in range(m + 1)
                 if np.isfinite(L[k]) and not ((p == 0 and k > 0) or (p == 1 and k < m))]
        return _logsumexp(terms) if terms else -math.inf

    grid = np.linspace(0.0, 1.0, 257)
    vals = np.array([obj(p) for p in grid])
    finite = vals[np.isfinite(vals)]
    if finite.size == vals.size and np.ptp(finite) <= 1e-12 * max(1.0, np.max(np.abs(finite))):
        return 0.5
    p, _ = stats.maximize_1d(obj, 0.0, 1.0, tol)
    return float(p)


def eb_model_posterior(data: RegressionData, g: float | None = None) -> ModelPosterior:
    lm, singular = all_log_marginals(data, g)
    m = data.k
    p = p_hat_mml(lm, m)
    ks = _popcounts(m)
    log_post = np.full(lm.shape, -np.inf)
    for gamma in range(lm.shape[0]):
        k = ks[gamma]
        if singular[gamma] or (p == 0 and k > 0) or (p == 1 and k < m):
            continue
        log_post[gamma] = _log_prior(k, m, p) + lm[gamma]
    log_post -= _logsumexp(log_post)
    probs = np.exp(log_post)
    probs /= probs.sum()
    return ModelPosterior(p, lm, probs, singular, p in (0.0, 1.0))
