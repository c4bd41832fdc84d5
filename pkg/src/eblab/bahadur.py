"""A countable family on [0, 1] whose MLE drifts to ever-narrower spikes.

p_theta equals h(x) = exp(1/x^2) on (a_theta, a_{theta-1}] and the constant
C elsewhere on [0, 1]. The cut points solve
int_{a_k}^{a_{k-1}} (h - C) dx = 1 - C, which makes every p_theta a density.
Priors come from a two-parameter family of normal-CDF differences whose
small-sigma limits are point masses, so the marginal MLE reproduces the
data MLE and the EB posterior is a point mass there.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import stats
from .core import EBResult, HyperParam
from .errors import CapacityError, DomainError, ModelError
from .posterior import DiscreteWeights, PointMass

X_FLOOR = 0.06          # exp(1/x^2) overflows double range just below this
TABLE_POINTS = 4096
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(8)


def _scaled_h_integral(a: float, b: float) -> float:
    """exp(-1/a^2) * int_a^b exp(1/x^2) dx; the integrand is at most 1 on [a, b]."""
    s = 1.0 / (a * a)
    spec = stats.QuadSpec(abs_tol=1e-15, rel_tol=1e-13, max_subdivisions=4000)
    return stats.integrate(lambda x: np.exp(1.0 / (x * x) - s), a, b, spec, vectorized=True)


def h_integral(a: float, b: float) -> float:
    """int_a^b exp(1/x^2) dx for 0 < a <= b."""
    if not 0 < a <= b:
        raise DomainError("need 0 < a <= b")
    if a == b:
        return 0.0
    return math.exp(1.0 / (a * a)) * _scaled_h_integral(a, b)


@dataclass(frozen=True)
class BahadurFamily:
    C: float
    a: np.ndarray
    _tables: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def K(self) -> int:
        return len(self.a) - 1

    def spike(self, theta: int) -> tuple[float, float]:
        self._check_theta(theta)
        return float(self.a[theta]), float(self.a[theta - 1])

    def spike_mass(self, theta: int) -> float:
        lo, hi = self.spike(theta)
        return 1.0 - self.C + self.C * (hi - lo)

    def total_mass(self, theta: int) -> float:
        lo, hi = self.spike(theta)
        return h_integral(lo, hi) + self.C * (1.0 - (hi - lo))

    def _check_theta(self, theta):
        if not (isinstance(theta, (int, np.integer)) and 1 <= theta <= self.K):
            raise DomainError(f"theta must be an integer in 1..{self.K}, got {theta!r}")

    def spike_table(self, theta: int):
        """Abscissae and normalized cumulative h-mass across the spike."""
        if theta not in self._tables:
            lo, hi = self.spike(theta)
            xs = np.linspace(lo, hi, TABLE_POINTS)
            left, right = xs[:-1], xs[1:]
            half = 0.5 * (right - left)
            mid = 0.5 * (right + left)
            pts = mid[:, None] + half[:, None] * _GL_NODES[None, :]
            seg = half * np.sum(_GL_WEIGHTS[None, :] * np.exp(1.0 / pts ** 2), axis=1)
            cum = np.concatenate([[0.0], np.cumsum(seg)])
            self._tables[theta] = (xs, cum / cum[-1])
        return self._tables[theta]


def build_family(C: float = 0.5, K: int = 8, tol: float = 1e-12) -> BahadurFamily:
    """Cut points a_0 = 1 > a_1 > ... > a_K by root finding."""
    if not 0 < C < 1:
        raise DomainError("C must lie in (0, 1)")
    if K < 1:
        raise DomainError("K must be at least 1")
    a = [1.0]
    for k in range(1, K + 1):
        prev = a[-1]

        def g(x, prev=prev):
            # int_x^prev (h - C) - (1 - C), divided through by exp(1/x^2) when large
            return h_integral(x, prev) - C * (prev - x) - (1.0 - C)

        lo = prev
        while True:
            lo = max(lo - 0.05 * lo, X_FLOOR)
            if g(lo) > 0:
                break
            if lo == X_FLOOR:
                raise CapacityError(f"a_{k} falls below {X_FLOOR}: exp(1/x^2) overflows",
                                    max_feasible=k - 1)
        a.append(stats.find_root(g, lo, prev, tol))
    return BahadurFamily(C, np.array(a))


def sample_p_theta(family: BahadurFamily, theta: int, n: int, rng) -> np.ndarray:
    """Draw n points: spike by inverse-CDF table, plateau uniformly."""
    family._check_theta(theta)
    gen = stats.as_generator(rng)
    lo, hi = family.spike(theta)
    w = hi - lo
    in_spike = gen.random(n) < family.spike_mass(theta)
    u = gen.random(n)
    xs, cum = family.spike_table(theta)
    spike_draw = np.interp(u, cum, xs)
    plateau = u * (1.0 - w)
    plateau = np.where(plateau <= lo, plateau, plateau + w)
    return np.where(in_spike, spike_draw, plateau)


def loglik_all(family: BahadurFamily, data) -> np.ndarray:
    """log-likelihood of every theta in 1..K (index 0 is theta = 1)."""
    x = np.asarray(data, dtype=float).ravel()
    if np.any((x < 0) | (x > 1)):
        return np.full(family.K, -np.inf)
    logC = math.log(family.C)
    inv2 = 1.0 / x ** 2 if x.size else x
    out = np.empty(family.K)
    for th in range(1, family.K + 1):
        lo, hi = family.a[th], family.a[th - 1]
        m = (x > lo) & (x <= hi)
        out[th - 1] = float(np.sum(inv2[m])) + (x.size - int(m.sum())) * logC
    return out


def loglik(family: BahadurFamily, theta: int, data) -> float:
    family._check_theta(theta)
    return float(loglik_all(family, data)[theta - 1])


def mle_discrete(family: BahadurFamily, data) -> int:
    ll = loglik_all(family, data)
    if not np.any(np.isfinite(ll)):
        raise ModelError("likelihood is zero for every theta")
    return int(np.argmax(ll)) + 1


def bayes_posterior(family: BahadurFamily, prior_weights, data) -> DiscreteWeights:
    w = np.asarray(prior_weights, dtype=float)
    if w.shape != (family.K,) or np.any(w <= 0) or abs(w.sum() - 1) > 1e-12:
        raise DomainError("prior weights must be positive on 1..K and sum to 1")
    ll = loglik_all(family, data)
    if not np.any(np.isfinite(ll)):
        raise ModelError("likelihood is zero for every theta")
    return DiscreteWeights.from_log_weights(np.arange(1, family.K + 1), np.log(w) + ll)


def prior_weights_gauss_cdf(family: BahadurFamily, m: float, sigma: float,
                            reflected: bool = True) -> np.ndarray:
    """Prior mass of theta = 1..K under the normal-CDF-difference family.

    theta = 1 gets the mass of (-1/2, 1/2] under N(m, sigma^2); theta > 1
    gets (theta - 3/2, theta - 1/2] plus the mirrored interval
    (-theta - 3/2, -theta - 1/2]. Masses over the truncated support sum to
    at most one.
    """
    if not sigma > 0:
        raise DomainError("sigma must be positive")
    out = np.empty(family.K)
    out[0] = stats.normal_interval_mass((-0.5 - m) / sigma, (0.5 - m) / sigma)
    for th in range(2, family.K + 1):
        v = stats.normal_interval_mass((th - 1.5 - m) / sigma, (th - 0.5 - m) / sigma)
        if reflected:
            v += stats.normal_interval_mass((-th - 1.5 - m) / sigma, (-th - 0.5 - m) / sigma)
        out[th - 1] = v
    return out


def log_marginal_gauss_cdf(family: BahadurFamily, data, m: float, sigma: float,
                           ll: np.ndarray | None = None) -> float:
    """log sum_theta Pi(theta | m, sigma) p_theta(data)."""
    ll = loglik_all(family, data) if ll is None else ll
    w = prior_weights_gauss_cdf(family, m, sigma)
    with np.errstate(divide="ignore"):
        terms = np.log(w) + ll
    mx = np.max(terms)
    if not np.isfinite(mx):
        return -math.inf
    return float(mx + math.log(np.sum(np.exp(terms - mx))))


def default_sigma_grid(sigma_floor: float = 1e-8, sigma_max: float = 10.0, points: int = 41):
    return np.geomspace(sigma_floor, sigma_max, points)


def default_m_grid(K: int, step: float = 0.25):
    return np.arange(0.0, K - 1 + step / 2, step)


def marginal_grid(family: BahadurFamily, data, m_grid=None, sigma_grid=None) -> np.ndarray:
    """log m(data | m, sigma) on the product grid (rows m, columns sigma)."""
    m_grid = default_m_grid(family.K) if m_grid is None else np.asarray(m_grid, dtype=float)
    sigma_grid = default_sigma_grid() if sigma_grid is None else np.asarray(sigma_grid, dtype=float)
    ll = loglik_all(family, data)
    return np.array([[log_marginal_gauss_cdf(family, data, m, s, ll) for s in sigma_grid] for m in m_grid])


def eb_gaussian_cdf_prior(family: BahadurFamily, data, sigma_floor: float = 1e-8) -> EBResult:
    """Marginal-MLE EB posterior for the normal-CDF prior family.

    The marginal is bounded by the maximal likelihood and reaches it only in
    the sigma -> 0 limit at m = theta_hat - 1, so the supremum is a boundary
    point and the EB posterior is a point mass at the MLE. The grid search
    below checks that the best evaluated marginal sits at the smallest sigma
    with m = theta_hat - 1.
    """
    ll = loglik_all(family, data)
    if not np.any(np.isfinite(ll)):
        raise ModelError("likelihood is zero for every theta")
    theta_hat = int(np.argmax(ll)) + 1
    m_grid = np.union1d(default_m_grid(family.K), [theta_hat - 1.0])
    sig = default_sigma_grid(sigma_floor)
    grid = np.array([[log_marginal_gauss_cdf(family, data, m, s, ll) for s in sig] for m in m_grid])
    sup = float(ll[theta_hat - 1])
    if np.max(grid) > sup + 1e-9 * max(1.0, abs(sup)):
        raise ModelError("marginal exceeds the maximal likelihood on the grid")
    at_limit = grid[int(np.flatnonzero(m_grid == theta_hat - 1)[0]), 0]
    if at_limit < np.max(grid) - 1e-12 * max(1.0, abs(sup)):
        i, j = np.unravel_index(int(np.argmax(grid)), grid.shape)
        raise ModelError("grid supremum is not at the point-mass limit",
                         offending=(float(m_grid[i]), float(sig[j])))
    return EBResult(HyperParam((theta_hat - 1.0, 0.0), (False, True)), sup, PointMass(float(theta_hat)))
