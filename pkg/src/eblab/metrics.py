"""Distances between posterior representations.

Closed forms are used for Gaussian pairs and for any pair involving an atom;
general 1-D density pairs go through adaptive quadrature (analytic
densities) or a union-grid trapezoid rule (tabulated densities); particle
clouds are binned with a Freedman-Diaconis width and bootstrapped.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import stats
from .errors import DomainError
from .posterior import (DensityGrid, DiscreteWeights, GaussianCF, MultiGaussianCF,
                        ParticleCloud, PointMass, PosteriorRep, ScaledStudentCF)

METRICS = ("TV", "L1", "Hellinger", "KL", "Kolmogorov")
_QUAD = stats.QuadSpec(abs_tol=1e-13, rel_tol=1e-12, max_subdivisions=4000)
_GRID_POINTS = 4097
_BOOTSTRAP_FOLDS = 10
_MC_DRAWS = 20_000


@dataclass(frozen=True)
class DistanceReport:
    metric: str
    value: float
    method: str
    std_error: float | None = None
    lower_bound: bool = False
    warning: str | None = None

    def __post_init__(self):
        if self.metric not in METRICS:
            raise DomainError(f"unknown metric {self.metric!r}")
        if self.method not in ("closed_form", "quadrature", "monte_carlo"):
            raise DomainError(f"unknown method {self.method!r}")


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def _check_dims(p, q):
    if p.dim != q.dim:
        raise DomainError(f"dimension mismatch: {p.dim} vs {q.dim}")


def _is_atomic(r):
    return isinstance(r, (PointMass, DiscreteWeights))


def _atoms(r):
    if isinstance(r, PointMass):
        return np.atleast_1d(np.asarray(r.value, dtype=float)).reshape(1, -1), np.array([1.0])
    return r.support.reshape(len(r.support), -1), r.weights


def _discrete_pair(p, q):
    """Align two atomic distributions on the union of their supports."""
    sp, wp = _atoms(p)
    sq, wq = _atoms(q)
    keys = {}
    for s, w in zip(sp, wp):
        keys.setdefault(tuple(s), [0.0, 0.0])[0] += w
    for s, w in zip(sq, wq):
        keys.setdefault(tuple(s), [0.0, 0.0])[1] += w
    arr = np.array(list(keys.values()))
    return arr[:, 0], arr[:, 1]


def _reduce_1d(r):
    """Return a 1-D density view, plus whether the reduction is a marginal."""
    if isinstance(r, MultiGaussianCF):
        if r.dim == 1:
            return r.marginal(0), False
        return r.marginal(0), True
    if isinstance(r, ScaledStudentCF) and r.dim > 1:
        return r.marginal(0), True
    return r, False


def _gaussian_crossings(p: GaussianCF, q: GaussianCF):
    # roots of log p(x) = log q(x)
    a = 0.5 / q.variance - 0.5 / p.variance
    b = p.mean / p.variance - q.mean / q.variance
    c = (0.5 * q.mean ** 2 / q.variance - 0.5 * p.mean ** 2 / p.variance
         + 0.5 * math.log(q.variance / p.variance))
    if abs(a) < 1e-300:
        return [-c / b] if b != 0 else []
    disc = b * b - 4 * a * c
    if disc < 0:
        return []
    r = math.sqrt(disc)
    return sorted([(-b - r) / (2 * a), (-b + r) / (2 * a)])


def _analytic_range(p, q):
    plo, phi = p.support_hint()
    qlo, qhi = q.support_hint()
    return min(plo, qlo), max(phi, qhi)


def _grid_abscissae(p, q):
    parts = []
    for r in (p, q):
        if isinstance(r, DensityGrid):
            parts.append(r.x)
        else:
            lo, hi = r.support_hint()
            parts.append(np.linspace(lo, hi, _GRID_POINTS))
    return np.union1d(parts[0], parts[1])


def _pdf_on(r, x):
    return np.asarray(r.pdf(x), dtype=float)


def _integrate_pair(p, q, integrand_from_pdfs, breakpoints=()):
    """Integrate g(p(x), q(x)) for 1-D density views p and q."""
    if isinstance(p, DensityGrid) or isinstance(q, DensityGrid):
        x = _grid_abscissae(p, q)
        return float(np.trapezoid(integrand_from_pdfs(_pdf_on(p, x), _pdf_on(q, x), x), x))
    lo, hi = _analytic_range(p, q)

    def f(x):
        return integrand_from_pdfs(_pdf_on(p, x), _pdf_on(q, x), x)
    return stats.integrate(f, lo, hi, _QUAD, points=breakpoints, vectorized=True)


def _crossings(p, q):
    if isinstance(p, GaussianCF) and isinstance(q, GaussianCF):
        return _gaussian_crossings(p, q)
    return ()


def _fd_bins(samples):
    s = np.asarray(samples, dtype=float)
    q75, q25 = np.percentile(s, [75, 25])
    iqr = q75 - q25
    width = 2.0 * iqr / len(s) ** (1 / 3) if iqr > 0 else 0.0
    lo, hi = float(s.min()), float(s.max())
    if width <= 0 or hi <= lo:
        width = max(abs(lo), 1.0) * 1e-3
    n_bins = int(min(max(math.ceil((hi - lo) / width), 1), 10_000))
    return np.linspace(lo, lo + n_bins * width, n_bins + 1)


def _bin_masses(r, edges):
    """Bin masses of r on ``edges`` with the two outer tails folded in."""
    if isinstance(r, ParticleCloud):
        counts, _ = np.histogram(np.clip(r.samples, edges[0], edges[-1]), edges)
        return counts / counts.sum()
    cdf = np.array([r.cdf(float(e)) for e in edges])
    m = np.diff(cdf)
    m[0] += cdf[0]
    m[-1] += 1.0 - cdf[-1]
    return m


def _binned_stat(p, q, stat, rng):
    """Binned statistic for pairs involving particle clouds, with bootstrap SE."""
    clouds = [r.samples for r in (p, q) if isinstance(r, ParticleCloud)]
    pooled = np.concatenate(clouds)
    edges = _fd_bins(pooled)
    value = stat(_bin_masses(p, edges), _bin_masses(q, edges))
    gen = stats.as_generator(rng if rng is not None else stats.RngStream(0, 0))
    reps = []
    for _ in range(_BOOTSTRAP_FOLDS):
        pb = ParticleCloud(gen.choice(p.samples, p.samples.shape[0])) if isinstance(p, ParticleCloud) else p
        qb = ParticleCloud(gen.choice(q.samples, q.samples.shape[0])) if isinstance(q, ParticleCloud) else q
        reps.append(stat(_bin_masses(pb, edges), _bin_masses(qb, edges)))
    return value, float(np.std(reps, ddof=1))


def _check_cloud_dims(p, q):
    for r in (p, q):
        if isinstance(r, ParticleCloud) and r.dim != 1:
            raise DomainError("particle-cloud distances are implemented for 1-D clouds")


# ---------------------------------------------------------------------------
# total variation / L1
# ---------------------------------------------------------------------------

def tv_distance(p: PosteriorRep, q: PosteriorRep, rng=None) -> DistanceReport:
    """Total variation distance sup_A |P(A) - Q(A)|."""
    _check_dims(p, q)
    if _is_atomic(p) and _is_atomic(q):
        a, b = _discrete_pair(p, q)
        return DistanceReport("TV", float(min(1.0, 0.5 * np.abs(a - b).sum())), "closed_form")
    if _is_atomic(p) or _is_atomic(q):
        # an atom is a Lebesgue-null set carrying mass 1 under the atomic side
        return DistanceReport("TV", 1.0, "closed_form")
    if isinstance(p, ParticleCloud) or isinstance(q, ParticleCloud):
        _check_cloud_dims(p, q)
        v, se = _binned_stat(p, q, lambda a, b: 0.5 * np.abs(a - b).sum(), rng)
        return DistanceReport("TV", float(min(v, 1.0)), "monte_carlo", std_error=se)
    if isinstance(p, MultiGaussianCF) and isinstance(q, MultiGaussianCF) and p.dim > 1:
        return _tv_multigauss(p, q, rng)
    p1, mp = _reduce_1d(p)
    q1, mq = _reduce_1d(q)
    lower = mp or mq
    if isinstance(p1, GaussianCF) and isinstance(q1, GaussianCF) and \
            math.isclose(p1.variance, q1.variance, rel_tol=1e-14):
        s = p1.sd
        v = 2.0 * stats.normal_cdf(abs(p1.mean - q1.mean) / (2.0 * s)) - 1.0
        return DistanceReport("TV", v, "closed_form", lower_bound=lower)
    v = 0.5 * _integrate_pair(p1, q1, lambda a, b, x: np.abs(a - b), _crossings(p1, q1))
    return DistanceReport("TV", float(min(max(v, 0.0), 1.0)), "quadrature", lower_bound=lower)


def _tv_multigauss(p: MultiGaussianCF, q: MultiGaussianCF, rng):
    if np.allclose(p.covariance, q.covariance, rtol=1e-14, atol=0):
        d = p.mean - q.mean
        maha = math.sqrt(float(d @ np.linalg.solve(p.covariance, d)))
        return DistanceReport("TV", 2.0 * stats.normal_cdf(maha / 2.0) - 1.0, "closed_form")
    gen = stats.as_generator(rng if rng is not None else stats.RngStream(0, 0))
    x = p.sample(_MC_DRAWS, gen)
    lr = _mvn_logpdf(x, q) - _mvn_logpdf(x, p)
    vals = np.clip(1.0 - np.exp(np.minimum(lr, 50.0)), 0.0, None)
    return DistanceReport("TV", float(vals.mean()), "monte_carlo",
                          std_error=float(vals.std(ddof=1) / math.sqrt(_MC_DRAWS)))


def _mvn_logpdf(x, r: MultiGaussianCF):
    L = np.linalg.cholesky(r.covariance)
    z = np.linalg.solve(L, (x - r.mean).T)
    return (-0.5 * np.sum(z * z, axis=0) - np.sum(np.log(np.diag(L)))
            - 0.5 * r.dim * math.log(2 * math.pi))


def l1_distance(p: PosteriorRep, q: PosteriorRep, rng=None) -> DistanceReport:
    """L1 distance between densities (= 2 TV)."""
    tv = tv_distance(p, q, rng)
    se = None if tv.std_error is None else 2.0 * tv.std_error
    return DistanceReport("L1", 2.0 * tv.value, tv.method, se, tv.lower_bound, tv.warning)


# ---------------------------------------------------------------------------
# Hellinger
# ---------------------------------------------------------------------------

def hellinger(p: PosteriorRep, q: PosteriorRep, rng=None) -> DistanceReport:
    """Hellinger distance normalized to [0, 1]: h^2 = 1 - int sqrt(p q)."""
    _check_dims(p, q)

    def from_bc(bc, method, se=None, lower=False):
        return DistanceReport("Hellinger", math.sqrt(min(max(1.0 - bc, 0.0), 1.0)), method, se, lower)

    if _is_atomic(p) and _is_atomic(q):
        a, b = _discrete_pair(p, q)
        return from_bc(float(np.sqrt(a * b).sum()), "closed_form")
    if _is_atomic(p) or _is_atomic(q):
        return from_bc(0.0, "closed_form")
    if isinstance(p, ParticleCloud) or isinstance(q, ParticleCloud):
        _check_cloud_dims(p, q)
        v, se = _binned_stat(p, q, lambda a, b: math.sqrt(max(0.0, 1.0 - np.sqrt(a * b).sum())), rng)
        return DistanceReport("Hellinger", v, "monte_carlo", se)
    if isinstance(p, MultiGaussianCF) and isinstance(q, MultiGaussianCF):
        avg = 0.5 * (p.covariance + q.covariance)
        d = p.mean - q.mean
        _, ld_p = np.linalg.slogdet(p.covariance)
        _, ld_q = np.linalg.slogdet(q.covariance)
        _, ld_a = np.linalg.slogdet(avg)
        log_bc = 0.25 * ld_p + 0.25 * ld_q - 0.5 * ld_a - 0.125 * float(d @ np.linalg.solve(avg, d))
        return from_bc(math.exp(log_bc), "closed_form")
    p1, mp = _reduce_1d(p)
    q1, mq = _reduce_1d(q)
    if isinstance(p1, GaussianCF) and isinstance(q1, GaussianCF):
        s2 = p1.variance + q1.variance
        bc = math.sqrt(2.0 * p1.sd * q1.sd / s2) * math.exp(-(p1.mean - q1.mean) ** 2 / (4.0 * s2))
        return from_bc(bc, "closed_form", lower=mp or mq)
    bc = _integrate_pair(p1, q1, lambda a, b, x: np.sqrt(a * b))
    return from_bc(bc, "quadrature", lower=mp or mq)


# ---------------------------------------------------------------------------
# Kullback-Leibler
# ---------------------------------------------------------------------------

def kl_div(p: PosteriorRep, q: PosteriorRep, rng=None) -> DistanceReport:
    """KL(p || q); +inf when p is not absolutely continuous w.r.t. q."""
    _check_dims(p, q)
    if _is_atomic(p) and _is_atomic(q):
        a, b = _discrete_pair(p, q)
        m = a > 0
        if np.any(b[m] == 0):
            return DistanceReport("KL", math.inf, "closed_form")
        return DistanceReport("KL", float(max(np.sum(a[m] * np.log(a[m] / b[m])), 0.0)), "closed_form")
    if _is_atomic(p) or _is_atomic(q):
        return DistanceReport("KL", math.inf, "closed_form")
    if isinstance(p, ParticleCloud) or isinstance(q, ParticleCloud):
        _check_cloud_dims(p, q)

        def stat(a, b):
            m = a > 0
            if np.any(b[m] == 0):
                return math.inf
            return float(max(np.sum(a[m] * np.log(a[m] / b[m])), 0.0))
        v, se = _binned_stat(p, q, stat, rng)
        return DistanceReport("KL", v, "monte_carlo", se)
    if isinstance(p, MultiGaussianCF) and isinstance(q, MultiGaussianCF):
        k = p.dim
        qi = np.linalg.inv(q.covariance)
        d = q.mean - p.mean
        _, ld_p = np.linalg.slogdet(p.covariance)
        _, ld_q = np.linalg.slogdet(q.covariance)
        v = 0.5 * (np.trace(qi @ p.covariance) + d @ qi @ d - k + ld_q - ld_p)
        return DistanceReport("KL", float(max(v, 0.0)), "closed_form")
    p1, mp = _reduce_1d(p)
    q1, mq = _reduce_1d(q)
    if isinstance(p1, GaussianCF) and isinstance(q1, GaussianCF):
        v = (math.log(q1.sd / p1.sd) + (p1.variance + (p1.mean - q1.mean) ** 2) / (2 * q1.variance) - 0.5)
        return DistanceReport("KL", max(v, 0.0), "closed_form", lower_bound=mp or mq)
    if isinstance(p1, DensityGrid) or isinstance(q1, DensityGrid):
        x = _grid_abscissae(p1, q1)
        a, b = _pdf_on(p1, x), _pdf_on(q1, x)
        m = a > 0
        if np.any(b[m] <= 0):
            return DistanceReport("KL", math.inf, "quadrature")
        integrand = np.zeros_like(a)
        integrand[m] = a[m] * (np.log(a[m]) - np.log(b[m]))
        return DistanceReport("KL", float(max(np.trapezoid(integrand, x), 0.0)), "quadrature",
                              lower_bound=mp or mq)
    lo, hi = p1.support_hint()

    def f(x):
        lp = p1.logpdf(x)
        return np.exp(lp) * (lp - q1.logpdf(x))
    v = stats.integrate(f, lo, hi, _QUAD, vectorized=True)
    return DistanceReport("KL", max(v, 0.0), "quadrature", lower_bound=mp or mq)


# ---------------------------------------------------------------------------
# Kolmogorov distance of push-forwards
# ---------------------------------------------------------------------------

def _cdf_fn(r):
    return r.cdf


def _atom_points(r):
    if isinstance(r, PointMass):
        return [float(r.value)]
    if isinstance(r, DiscreteWeights):
        return [float(s) for s in r.support]
    if isinstance(r, ParticleCloud):
        return [float(s) for s in np.unique(r.samples)]
    return []


def _left_limit(r, x):
    if isinstance(r, PointMass):
        return 1.0 if x > r.value else 0.0
    if isinstance(r, DiscreteWeights):
        return float(r.weights[r.support < x].sum())
    if isinstance(r, ParticleCloud):
        return float(np.mean(r.samples < x))
    return r.cdf(x)


def kolmogorov_on_functional(p: PosteriorRep, q: PosteriorRep,
                             functional: Callable | None = None, rng=None) -> DistanceReport:
    """sup_t |P(f(theta) <= t) - Q(f(theta) <= t)|.

    With no functional (identity) on 1-D representations the CDFs are used
    exactly; otherwise both posteriors are pushed forward by sampling.
    """
    _check_dims(p, q)
    warning = None
    for r in (p, q):
        if isinstance(r, ParticleCloud) and r.samples.shape[0] < 100:
            warning = "fewer than 100 particles: low precision"
    if functional is None and p.dim == 1 and q.dim == 1:
        p1, _ = _reduce_1d(p)
        q1, _ = _reduce_1d(q)
        atoms = _atom_points(p1) + _atom_points(q1)
        best = 0.0
        for a in atoms:
            best = max(best, abs(p1.cdf(a) - q1.cdf(a)), abs(_left_limit(p1, a) - _left_limit(q1, a)))
        if not atoms:
            lo, hi = _analytic_range(p1, q1) if not (isinstance(p1, DensityGrid) or isinstance(q1, DensityGrid)) \
                else (min(p1.support_hint()[0], q1.support_hint()[0]), max(p1.support_hint()[1], q1.support_hint()[1]))
            _, best = stats.maximize_1d(lambda x: abs(p1.cdf(x) - q1.cdf(x)), lo, hi, tol=1e-12,
                                        grid_points=2049)
        method = "monte_carlo" if isinstance(p1, ParticleCloud) or isinstance(q1, ParticleCloud) else \
            ("closed_form" if atoms else "quadrature")
        return DistanceReport("Kolmogorov", float(min(best, 1.0)), method, warning=warning)
    gen = stats.as_generator(rng if rng is not None else stats.RngStream(0, 0))
    f = functional or (lambda t: t)
    xs = np.sort(_push(p, f, gen))
    ys = np.sort(_push(q, f, gen))
    pts = np.concatenate([xs, ys])
    d = np.max(np.abs(np.searchsorted(xs, pts, side="right") / xs.size
                      - np.searchsorted(ys, pts, side="right") / ys.size))
    se = math.sqrt((xs.size + ys.size) / (4.0 * xs.size * ys.size))
    return DistanceReport("Kolmogorov", float(d), "monte_carlo", std_error=se, warning=warning)


def _push(r, f, gen):
    if isinstance(r, ParticleCloud):
        draws = r.samples
    else:
        draws = r.sample(_MC_DRAWS, gen)
    if np.ndim(draws) == 1:
        return np.array([f(t) for t in draws], dtype=float)
    return np.array([f(row) for row in draws], dtype=float)


DISTANCES = {
    "TV": tv_distance,
    "L1": l1_distance,
    "Hellinger": hellinger,
    "KL": kl_div,
    "Kolmogorov": kolmogorov_on_functional,
}
