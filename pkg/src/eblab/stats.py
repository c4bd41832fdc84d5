"""Numerical substrate: RNG streams, distribution functions, quadrature,
1-D maximization and root finding.

The distribution functions are computed from regularized incomplete
gamma/beta functions evaluated by series and Lentz continued fractions, so
that they can serve as exact oracles for Monte Carlo frequencies.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import optimize

from .errors import BracketError, ConvergenceError, DomainError

_EPS = 1e-16
_TINY = 1e-300
_MAX_CF_ITER = 10_000
_UINT64_MAX = 2**64 - 1


# ---------------------------------------------------------------------------
# Random streams
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RngStream:
    """Counter-based random stream keyed by ``(seed, stream_id)``.

    Backed by the Philox4x64 bijection with the 128-bit key
    ``[seed, stream_id]``; equal keys give identical sequences and distinct
    stream ids give independent streams.
    """

    seed: int
    stream_id: int = 0

    def __post_init__(self):
        for name in ("seed", "stream_id"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or not 0 <= int(v) <= _UINT64_MAX:
                raise DomainError(f"{name} must be an unsigned 64-bit integer, got {v!r}")

    def generator(self) -> np.random.Generator:
        key = np.array([int(self.seed), int(self.stream_id)], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))

    def substream(self, offset: int) -> "RngStream":
        return RngStream(self.seed, (int(self.stream_id) + int(offset)) % 2**64)


def as_generator(rng) -> np.random.Generator:
    """Accept an RngStream, a numpy Generator or an integer seed."""
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, (int, np.integer)):
        return RngStream(int(rng), 0).generator()
    raise TypeError(f"cannot build a generator from {type(rng).__name__}")


# ---------------------------------------------------------------------------
# Special functions
# ---------------------------------------------------------------------------

def _check_finite(x, name="x"):
    if not math.isfinite(x):
        raise DomainError(f"{name} must be finite, got {x!r}")


def _gamma_series(a, x):
    # P(a, x) by its power series; converges fast for x < a + 1
    ap = a
    term = total = 1.0 / a
    for _ in range(_MAX_CF_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    else:
        raise ConvergenceError("incomplete gamma series did not converge", total)
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_cf(a, x):
    # Q(a, x) by the Lentz continued fraction; used for x >= a + 1
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_CF_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    else:
        raise ConvergenceError("incomplete gamma continued fraction did not converge", h)
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h


def gammainc_p(a: float, x: float) -> float:
    """Regularized lower incomplete gamma P(a, x)."""
    _check_finite(x)
    if a <= 0:
        raise DomainError("shape must be positive")
    if x <= 0:
        return 0.0
    if x < a + 1.0:
        return _gamma_series(a, x)
    return 1.0 - _gamma_cf(a, x)


def gammainc_q(a: float, x: float) -> float:
    """Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x)."""
    _check_finite(x)
    if a <= 0:
        raise DomainError("shape must be positive")
    if x <= 0:
        return 1.0
    if x < a + 1.0:
        return 1.0 - _gamma_series(a, x)
    return _gamma_cf(a, x)


def _beta_cf(a, b, x):
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, _MAX_CF_ITER):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    else:
        raise ConvergenceError("incomplete beta continued fraction did not converge", h)
    return h


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b)."""
    _check_finite(x)
    if a <= 0 or b <= 0:
        raise DomainError("beta parameters must be positive")
    if x <= 0:
        return 0.0
    if x >= 1:
        return 1.0
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log1p(-x))
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(log_front) * _beta_cf(a, b, x) / a
    return 1.0 - math.exp(log_front) * _beta_cf(b, a, 1.0 - x) / b


_SQRT2 = math.sqrt(2.0)
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


def normal_cdf(x: float) -> float:
    _check_finite(x)
    return 0.5 * math.erfc(-x / _SQRT2)


def normal_sf(x: float) -> float:
    _check_finite(x)
    return 0.5 * math.erfc(x / _SQRT2)


def normal_logpdf(x, mean=0.0, var=1.0):
    x = np.asarray(x, dtype=float)
    return -0.5 * (x - mean) ** 2 / var - 0.5 * np.log(var) - _LOG_SQRT_2PI


def normal_pdf(x, mean=0.0, var=1.0):
    return np.exp(normal_logpdf(x, mean, var))


def normal_interval_mass(lo: float, hi: float) -> float:
    """P(lo < Z <= hi) for standard normal Z, without cancellation in the tails."""
    if hi <= lo:
        return 0.0
    if lo == -math.inf and hi == math.inf:
        return 1.0
    if lo >= 0:
        return 0.5 * (math.erfc(lo / _SQRT2) - math.erfc(hi / _SQRT2))
    if hi <= 0:
        return 0.5 * (math.erfc(-hi / _SQRT2) - math.erfc(-lo / _SQRT2))
    return 1.0 - 0.5 * math.erfc(-lo / _SQRT2) - 0.5 * math.erfc(hi / _SQRT2)


# Acklam's rational approximation; refined by one Halley step below.
_PPF_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
          1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_PPF_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
          6.680131188771972e01, -1.328068155288572e01)
_PPF_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
          -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_PPF_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
          3.754408661907416e00)


def normal_ppf(p: float) -> float:
    _check_finite(p, "p")
    if not 0.0 < p < 1.0:
        raise DomainError("p must lie in (0, 1)")
    if p < 0.02425:
        q = math.sqrt(-2 * math.log(p))
        x = (((((_PPF_C[0] * q + _PPF_C[1]) * q + _PPF_C[2]) * q + _PPF_C[3]) * q + _PPF_C[4]) * q + _PPF_C[5]) / \
            ((((_PPF_D[0] * q + _PPF_D[1]) * q + _PPF_D[2]) * q + _PPF_D[3]) * q + 1)
    elif p > 1 - 0.02425:
        q = math.sqrt(-2 * math.log1p(-p))
        x = -(((((_PPF_C[0] * q + _PPF_C[1]) * q + _PPF_C[2]) * q + _PPF_C[3]) * q + _PPF_C[4]) * q + _PPF_C[5]) / \
            ((((_PPF_D[0] * q + _PPF_D[1]) * q + _PPF_D[2]) * q + _PPF_D[3]) * q + 1)
    else:
        q = p - 0.5
        r = q * q
        x = (((((_PPF_A[0] * r + _PPF_A[1]) * r + _PPF_A[2]) * r + _PPF_A[3]) * r + _PPF_A[4]) * r + _PPF_A[5]) * q / \
            (((((_PPF_B[0] * r + _PPF_B[1]) * r + _PPF_B[2]) * r + _PPF_B[3]) * r + _PPF_B[4]) * r + 1)
    e = normal_cdf(x) - p
    u = e * math.sqrt(2 * math.pi) * math.exp(x * x / 2)
    return x - u / (1 + x * u / 2)


def chisq_cdf(x: float, k: int) -> float:
    _check_finite(x)
    if k <= 0:
        raise DomainError("degrees of freedom must be positive")
    return gammainc_p(k / 2.0, x / 2.0) if x > 0 else 0.0


def f_cdf(x: float, d1: int, d2: int) -> float:
    _check_finite(x)
    if d1 <= 0 or d2 <= 0:
        raise DomainError("degrees of freedom must be positive")
    if x <= 0:
        return 0.0
    return betainc(d1 / 2.0, d2 / 2.0, d1 * x / (d1 * x + d2))


def t_cdf(x: float, df: float) -> float:
    """Student-t CDF with ``df`` degrees of freedom."""
    _check_finite(x)
    if df <= 0:
        raise DomainError("degrees of freedom must be positive")
    x2 = x * x
    if x2 < df:
        # central mass P(|T| <= |x|) directly; avoids 1 - (1 - tiny) near 0
        central = betainc(0.5, df / 2.0, x2 / (df + x2))
        return 0.5 + 0.5 * central if x >= 0 else 0.5 - 0.5 * central
    tail = 0.5 * betainc(df / 2.0, 0.5, df / (df + x2))
    return 1.0 - tail if x >= 0 else tail


def t_logpdf(x, df: float, loc=0.0, scale=1.0):
    z = (np.asarray(x, dtype=float) - loc) / scale
    c = (math.lgamma((df + 1) / 2) - math.lgamma(df / 2)
         - 0.5 * math.log(df * math.pi) - math.log(scale))
    return c - (df + 1) / 2 * np.log1p(z * z / df)


def _ppf_by_root(cdf, p, lo, hi):
    if not 0.0 < p < 1.0:
        raise DomainError("p must lie in (0, 1)")
    while cdf(hi) < p:
        lo, hi = hi, 2 * hi
    return find_root(lambda x: cdf(x) - p, lo, hi, tol=1e-14 * max(1.0, hi))


def chisq_ppf(p: float, k: int) -> float:
    return _ppf_by_root(lambda x: chisq_cdf(x, k), p, 0.0, max(1.0, 2.0 * k))


def f_ppf(p: float, d1: int, d2: int) -> float:
    return _ppf_by_root(lambda x: f_cdf(x, d1, d2), p, 0.0, 4.0)


# ---------------------------------------------------------------------------
# Quadrature
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QuadSpec:
    abs_tol: float = 1e-10
    rel_tol: float = 1e-10
    max_subdivisions: int = 2000

    def __post_init__(self):
        if not (self.abs_tol > 0 and self.rel_tol > 0 and self.max_subdivisions >= 1):
            raise DomainError("QuadSpec needs abs_tol > 0, rel_tol > 0, max_subdivisions >= 1")


_XGK = np.array([
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.0])
_WGK = np.array([
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714])
_WG = np.array([
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327])
_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])          # 15 nodes, ascending
_WK15 = np.concatenate([_WGK[:-1], _WGK[::-1]])
_WG15 = np.zeros(15)
_WG15[[1, 3, 5]] = _WG[:3]
_WG15[[13, 11, 9]] = _WG[:3]
_WG15[7] = _WG[3]


def _gk15(f, a, b, vectorized):
    c = 0.5 * (a + b)
    h = 0.5 * (b - a)
    x = c + h * _NODES
    if vectorized:
        y = np.asarray(f(x), dtype=float)
    else:
        y = np.array([f(float(t)) for t in x], dtype=float)
    k = h * float(np.dot(_WK15, y))
    g = h * float(np.dot(_WG15, y))
    return k, abs(k - g)


def integrate(f: Callable, a: float, b: float, spec: QuadSpec | None = None, *,
              points: Sequence[float] = (), vectorized: bool = False,
              full_output: bool = False):
    """Adaptive Gauss-Kronrod (7/15) quadrature of ``f`` over [a, b].

    Nodes never touch the endpoints, so integrable endpoint singularities are
    tolerated. ``points`` pre-splits the interval at known kinks. Raises
    ConvergenceError (carrying the best estimate) when the subdivision budget
    runs out before the error bound max(abs_tol, rel_tol*|result|) is met.
    """
    spec = spec or QuadSpec()
    if not a < b:
        raise DomainError("integrate needs a < b")
    cuts = [a] + sorted(p for p in points if a < p < b) + [b]
    heap = []
    total = err = 0.0
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        v, e = _gk15(f, lo, hi, vectorized)
        heapq.heappush(heap, (-e, lo, hi, v))
        total += v
        err += e
    n_sub = len(heap)
    while err > max(spec.abs_tol, spec.rel_tol * abs(total)):
        if not math.isfinite(total):
            raise ConvergenceError("integrand produced a non-finite value", total, err)
        if n_sub >= spec.max_subdivisions:
            raise ConvergenceError(
                f"subdivision budget {spec.max_subdivisions} exhausted", total, err)
        neg_e, lo, hi, v = heapq.heappop(heap)
        mid = 0.5 * (lo + hi)
        v1, e1 = _gk15(f, lo, mid, vectorized)
        v2, e2 = _gk15(f, mid, hi, vectorized)
        heapq.heappush(heap, (-e1, lo, mid, v1))
        heapq.heappush(heap, (-e2, mid, hi, v2))
        total += v1 + v2 - v
        err += e1 + e2 + neg_e
        n_sub += 1
    # re-sum to shed accumulated rounding from the running updates
    total = math.fsum(item[3] for item in heap)
    if full_output:
        return total, err
    return total


# ---------------------------------------------------------------------------
# 1-D maximization and root finding
# ---------------------------------------------------------------------------

_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def golden_section_max(f: Callable[[float], float], lo: float, hi: float,
                       tol: float = 1e-10, max_iter: int = 200):
    """Golden-section search for a maximum of a unimodal ``f`` on [lo, hi]."""
    a, b = lo, hi
    x1 = b - _INV_PHI * (b - a)
    x2 = a + _INV_PHI * (b - a)
    f1, f2 = f(x1), f(x2)
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if f1 >= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - _INV_PHI * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + _INV_PHI * (b - a)
            f2 = f(x2)
    return (x1, f1) if f1 >= f2 else (x2, f2)


def maximize_1d(f: Callable[[float], float], lo: float, hi: float, tol: float = 1e-8,
                grid_points: int = 257):
    """Grid scan of ``grid_points`` abscissae, then golden refinement of the
    best bracket. Ties on the grid resolve to the smallest abscissa; the
    refined point replaces the grid point only if strictly better.

    Returns (argmax, max).
    """
    if not lo < hi:
        raise DomainError("maximize_1d needs lo < hi")
    grid_points = max(int(grid_points), 257)
    xs = np.linspace(lo, hi, grid_points)
    fs = np.array([f(float(x)) for x in xs], dtype=float)
    fs = np.where(np.isnan(fs), -np.inf, fs)
    i = int(np.argmax(fs))
    best_x, best_f = float(xs[i]), float(fs[i])
    a = float(xs[max(i - 1, 0)])
    b = float(xs[min(i + 1, grid_points - 1)])
    x_ref, f_ref = golden_section_max(f, a, b, tol)
    if f_ref > best_f:
        best_x, best_f = float(x_ref), float(f_ref)
    # golden search stalls near sqrt(eps) relative precision on smooth peaks;
    # a couple of parabolic steps recover the vertex there
    for h in ((b - a) * 1e-3, (b - a) * 1e-5):
        xl, xr = max(best_x - h, a), min(best_x + h, b)
        if not xl < best_x < xr:
            break
        fl, fr = f(xl), f(xr)
        num = (best_x - xl) ** 2 * (best_f - fr) - (best_x - xr) ** 2 * (best_f - fl)
        den = (best_x - xl) * (best_f - fr) - (best_x - xr) * (best_f - fl)
        if not den > 0 or not (math.isfinite(fl) and math.isfinite(fr)):
            break
        v = min(max(best_x - 0.5 * num / den, a), b)
        fv = f(v)
        if fv >= best_f:
            best_x, best_f = float(v), float(fv)
    return best_x, best_f


def find_root(f: Callable[[float], float], lo: float, hi: float, tol: float = 1e-12) -> float:
    """Root of ``f`` in [lo, hi] by Brent's bisection/secant/inverse-quadratic method."""
    flo, fhi = f(lo), f(hi)
    if flo == 0:
        return float(lo)
    if fhi == 0:
        return float(hi)
    if flo * fhi > 0:
        raise BracketError(f"no sign change on [{lo}, {hi}]: f(lo)={flo}, f(hi)={fhi}")
    return float(optimize.brentq(f, lo, hi, xtol=tol, rtol=4 * np.finfo(float).eps, maxiter=500))
