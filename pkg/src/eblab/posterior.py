"""Posterior representations.

Every EB procedure in the package returns one of these. Closed forms are kept
closed so that distances can be computed exactly where possible.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import stats
from .errors import DomainError


class PosteriorRep:
    """Base class; concrete subclasses below."""

    absolutely_continuous = True
    dim = 1

    def sample(self, size, rng):
        raise NotImplementedError


@dataclass(frozen=True)
class GaussianCF(PosteriorRep):
    mean: float
    variance: float

    def __post_init__(self):
        if not (self.variance > 0 and math.isfinite(self.variance)):
            raise DomainError(f"variance must be positive, got {self.variance}")
        if not math.isfinite(self.mean):
            raise DomainError("mean must be finite")

    @property
    def sd(self):
        return math.sqrt(self.variance)

    def logpdf(self, x):
        return stats.normal_logpdf(x, self.mean, self.variance)

    def pdf(self, x):
        return np.exp(self.logpdf(x))

    def cdf(self, x):
        return stats.normal_cdf((x - self.mean) / self.sd)

    def support_hint(self, pad=8.0):
        return self.mean - pad * self.sd, self.mean + pad * self.sd

    def sample(self, size, rng):
        return stats.as_generator(rng).normal(self.mean, self.sd, size)


@dataclass(frozen=True)
class MultiGaussianCF(PosteriorRep):
    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.covariance, dtype=float))
        _check_spd(cov, "covariance", len(mean))
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)

    @property
    def dim(self):
        return len(self.mean)

    def marginal(self, i=0) -> GaussianCF:
        return GaussianCF(float(self.mean[i]), float(self.covariance[i, i]))

    def sample(self, size, rng):
        return stats.as_generator(rng).multivariate_normal(self.mean, self.covariance, size)


@dataclass(frozen=True)
class ScaledStudentCF(PosteriorRep):
    """Multivariate Student-t with location vector, scale matrix and df."""

    location: np.ndarray
    scale: np.ndarray
    df: float

    def __post_init__(self):
        loc = np.atleast_1d(np.asarray(self.location, dtype=float))
        scale = np.atleast_2d(np.asarray(self.scale, dtype=float))
        _check_spd(scale, "scale", len(loc))
        if not self.df > 0:
            raise DomainError("df must be positive")
        object.__setattr__(self, "location", loc)
        object.__setattr__(self, "scale", scale)

    @property
    def dim(self):
        return len(self.location)

    def marginal(self, i=0) -> "ScaledStudentCF":
        return ScaledStudentCF(self.location[i:i + 1], self.scale[i:i + 1, i:i + 1], self.df)

    def _scalar(self):
        if self.dim != 1:
            raise DomainError("density evaluation is implemented for 1-D marginals only")
        return float(self.location[0]), math.sqrt(float(self.scale[0, 0]))

    def logpdf(self, x):
        loc, s = self._scalar()
        return stats.t_logpdf(x, self.df, loc, s)

    def pdf(self, x):
        return np.exp(self.logpdf(x))

    def cdf(self, x):
        loc, s = self._scalar()
        return stats.t_cdf((x - loc) / s, self.df)

    def support_hint(self, tail=1e-13):
        # pad until each tail holds less than `tail` mass
        loc, s = self._scalar()
        z = 8.0
        while 1.0 - stats.t_cdf(z, self.df) > tail:
            z *= 1.5
        return loc - z * s, loc + z * s

    def sample(self, size, rng):
        gen = stats.as_generator(rng)
        z = gen.multivariate_normal(np.zeros(self.dim), self.scale, size)
        w = gen.chisquare(self.df, size) / self.df
        out = self.location + z / np.sqrt(w)[..., None]
        return out[..., 0] if self.dim == 1 else out


@dataclass(frozen=True)
class PointMass(PosteriorRep):
    value: object

    absolutely_continuous = False

    def __post_init__(self):
        v = np.asarray(self.value, dtype=float)
        object.__setattr__(self, "value", float(v) if v.ndim == 0 else v)

    @property
    def dim(self):
        return 1 if np.ndim(self.value) == 0 else len(self.value)

    def cdf(self, x):
        return 1.0 if x >= self.value else 0.0

    def sample(self, size, rng):
        if np.ndim(self.value) == 0:
            return np.full(size, self.value)
        return np.tile(self.value, (size, 1))


@dataclass(frozen=True)
class DiscreteWeights(PosteriorRep):
    """Distribution on a finite support. ``log_weights`` keeps tail precision."""

    support: np.ndarray
    weights: np.ndarray
    log_weights: np.ndarray | None = field(default=None, compare=False)

    absolutely_continuous = False

    def __post_init__(self):
        sup = np.asarray(self.support, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if sup.shape[0] != w.shape[0]:
            raise DomainError("support and weights differ in length")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise DomainError("weights must be nonnegative and sum to 1")
        object.__setattr__(self, "support", sup)
        object.__setattr__(self, "weights", w)
        if self.log_weights is None:
            with np.errstate(divide="ignore"):
                object.__setattr__(self, "log_weights", np.log(w))

    @classmethod
    def from_log_weights(cls, support, log_w):
        log_w = np.asarray(log_w, dtype=float)
        log_w = log_w - _logsumexp(log_w)
        w = np.exp(log_w)
        w = w / w.sum()
        return cls(support, w, log_w)

    def mass_at(self, value) -> float:
        return float(self.weights[self.support == value].sum())

    def log_mass_off(self, value) -> float:
        """log P(theta != value), accurate when that mass is tiny."""
        off = self.log_weights[self.support != value]
        return float(_logsumexp(off)) if off.size else -math.inf

    def cdf(self, x):
        return float(self.weights[self.support <= x].sum())

    def sample(self, size, rng):
        idx = stats.as_generator(rng).choice(len(self.weights), size=size, p=self.weights)
        return self.support[idx]


@dataclass(frozen=True)
class ParticleCloud(PosteriorRep):
    samples: np.ndarray

    absolutely_continuous = True

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if s.shape[0] == 0:
            raise DomainError("empty particle cloud")
        object.__setattr__(self, "samples", s)

    @property
    def dim(self):
        return 1 if self.samples.ndim == 1 else self.samples.shape[1]

    def cdf(self, x):
        return float(np.mean(self.samples <= x))

    def sample(self, size, rng):
        idx = stats.as_generator(rng).integers(0, self.samples.shape[0], size)
        return self.samples[idx]


@dataclass(frozen=True)
class DensityGrid(PosteriorRep):
    """Density tabulated on increasing abscissae; linear between nodes."""

    x: np.ndarray
    density: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        d = np.asarray(self.density, dtype=float)
        if x.ndim != 1 or x.shape != d.shape or x.size < 2:
            raise DomainError("abscissae and density must be matching 1-D arrays")
        if np.any(np.diff(x) <= 0):
            raise DomainError("abscissae must be strictly increasing")
        if np.any(d < 0):
            raise DomainError("density must be nonnegative")
        mass = float(np.trapezoid(d, x))
        if abs(mass - 1.0) > 1e-6:
            raise DomainError(f"grid mass {mass!r} outside 1 +/- 1e-6")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "density", d)

    @classmethod
    def normalized(cls, x, density):
        x = np.asarray(x, dtype=float)
        d = np.asarray(density, dtype=float)
        return cls(x, d / np.trapezoid(d, x))

    @property
    def mass(self):
        return float(np.trapezoid(self.density, self.x))

    def pdf(self, t):
        return np.interp(t, self.x, self.density, left=0.0, right=0.0)

    def cdf(self, t):
        cum = np.concatenate([[0.0], np.cumsum(np.diff(self.x) * 0.5 * (self.density[1:] + self.density[:-1]))])
        return float(np.interp(t, self.x, cum, left=0.0, right=cum[-1]))

    def support_hint(self, pad=0.0):
        return float(self.x[0]), float(self.x[-1])

    def sample(self, size, rng):
        cum = np.concatenate([[0.0], np.cumsum(np.diff(self.x) * 0.5 * (self.density[1:] + self.density[:-1]))])
        cum /= cum[-1]
        u = stats.as_generator(rng).random(size)
        return np.interp(u, cum, self.x)


def _check_spd(m, name, dim):
    if m.shape != (dim, dim):
        raise DomainError(f"{name} must be {dim}x{dim}")
    if not np.allclose(m, m.T, rtol=1e-10, atol=1e-14):
        raise DomainError(f"{name} must be symmetric")
    try:
        np.linalg.cholesky(m)
    except np.linalg.LinAlgError:
        raise DomainError(f"{name} must be positive definite") from None


def _logsumexp(v):
    v = np.asarray(v, dtype=float)
    if v.size == 0:
        return -math.inf
    m = np.max(v)
    if not np.isfinite(m):
        return m
    return m + math.log(np.sum(np.exp(v - m)))
