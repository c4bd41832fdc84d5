"""Dirichlet-process Gaussian mixtures.

Two samplers share the Chinese-restaurant assignment step:

* kind I (``location_scale_I``): each cluster carries its own (mu, sigma)
  drawn from a discretized base, a truncated normal for mu on a compact
  interval times a log-uniform sigma on [sigma_lo, sigma_hi]. Because the
  base is discrete the new-table weight uses the exact prior predictive.
* kind II (``location_II``): a common sigma, cluster means integrated out
  against a N(base_mean, base_var) base; sigma is resampled on a log grid.

The Gibbs sweeps are numba kernels driven by uniforms drawn from the
caller's Philox stream, so runs are reproducible per stream.

The precision is estimated (kind I) by iterating the stationarity
condition sum_j lam/(lam+j-1) = E[K_n | lam, data].
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from . import stats
from .core import EBResult, HyperParam
from .errors import CapacityError, DomainError
from .posterior import DensityGrid

KINDS = ("location_scale_I", "location_II")
N_MU = 256
N_SIGMA = 64
N_PRED = 512
_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class DpMixSpec:
    kind: str = "location_II"
    precision: float = 1.0
    base_mean: float = 0.0
    base_var: float = 1.0
    mu_bounds: tuple = (-10.0, 10.0)
    sigma_bounds: tuple = (0.2, 3.0)
    truncation_level: int = 50

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"kind must be one of {KINDS}")
        if not self.precision > 0:
            raise DomainError("precision must be positive")
        lo, hi = self.sigma_bounds
        if not 0 < lo <= hi:
            raise DomainError("need 0 < sigma_lo <= sigma_hi")
        if not self.mu_bounds[0] < self.mu_bounds[1]:
            raise DomainError("mu_bounds must be an interval")
        if self.truncation_level < 10:
            raise DomainError("truncation_level must be at least 10")
        if not self.base_var > 0:
            raise DomainError("base_var must be positive")

    def sigma_grid(self) -> np.ndarray:
        lo, hi = self.sigma_bounds
        return np.geomspace(lo, hi, N_SIGMA) if hi > lo else np.full(1, lo)

    def mu_grid(self) -> np.ndarray:
        return np.linspace(self.mu_bounds[0], self.mu_bounds[1], N_MU)

    def log_mu_weights(self) -> np.ndarray:
        # truncated normal restricted to the grid on the compact support
        g = self.mu_grid()
        lw = -0.5 * (g - self.base_mean) ** 2 / self.base_var
        return lw - _lse(lw)


@dataclass
class GibbsResult:
    E_Kn: float
    std_error: float
    tau_int: float
    Kn_samples: np.ndarray
    predictive: DensityGrid | None
    predictive_raw_mass: float = math.nan
    warning: str | None = None
    sigma_samples: np.ndarray = field(default_factory=lambda: np.empty(0))


def _lse(v):
    m = np.max(v)
    return m + math.log(np.sum(np.exp(v - m)))


# ---------------------------------------------------------------------------
# numba kernels
# ---------------------------------------------------------------------------

@njit(nogil=True, cache=True)
def _draw(logp, k, u):
    """Index drawn from unnormalized log weights logp[:k] with uniform u."""
    mx = -np.inf
    for j in range(k):
        if logp[j] > mx:
            mx = logp[j]
    tot = 0.0
    for j in range(k):
        tot += math.exp(logp[j] - mx)
    target = u * tot
    acc = 0.0
    for j in range(k):
        acc += math.exp(logp[j] - mx)
        if acc >= target:
            return j
    return k - 1


@njit(nogil=True, cache=True)
def _remove_obs(i, x, z, counts, sums, sumsq, K, par_a, par_b):
    c = z[i]
    counts[c] -= 1
    sums[c] -= x[i]
    sumsq[c] -= x[i] * x[i]
    if counts[c] == 0:
        last = K - 1
        if c != last:
            counts[c] = counts[last]
            sums[c] = sums[last]
            sumsq[c] = sumsq[last]
            par_a[c] = par_a[last]
            par_b[c] = par_b[last]
            for j in range(z.shape[0]):
                if z[j] == last:
                    z[j] = c
        counts[last] = 0
        sums[last] = 0.0
        sumsq[last] = 0.0
        K -= 1
    return K


@njit(nogil=True, cache=True)
def _add_obs(i, c, x, z, counts, sums, sumsq):
    z[i] = c
    counts[c] += 1
    sums[c] += x[i]
    sumsq[c] += x[i] * x[i]


@njit(nogil=True, cache=True)
def _grid_logpost(nc, s, ss, mu_grid, sg_grid, logw_mu, logw_sg, const_lik, out):
    nm = mu_grid.shape[0]
    ns = sg_grid.shape[0]
    for a in range(nm):
        mu = mu_grid[a]
        dev = ss - 2.0 * mu * s + nc * mu * mu
        if dev < 0.0:
            dev = 0.0
        for b in range(ns):
            v = logw_mu[a] + logw_sg[b]
            if not const_lik:
                sg = sg_grid[b]
                v += -nc * math.log(sg) - dev / (2.0 * sg * sg)
            out[a * ns + b] = v


@njit(nogil=True, cache=True)
def _sweep_I(x, z, counts, sums, sumsq, mu_i, sg_i, K, mu_grid, sg_grid, logw_mu, logw_sg,
             log_q0, lam, const_lik, u):
    """One Gibbs sweep for kind I. Uses 2n + n uniforms from ``u``."""
    n = x.shape[0]
    ns = sg_grid.shape[0]
    nm = mu_grid.shape[0]
    logp = np.empty(n + 1)
    grid = np.empty(nm * ns)
    ui = 0
    for i in range(n):
        K = _remove_obs(i, x, z, counts, sums, sumsq, K, mu_i, sg_i)
        for c in range(K):
            lp = math.log(counts[c])
            if not const_lik:
                sg = sg_grid[sg_i[c]]
                d = x[i] - mu_grid[mu_i[c]]
                lp += -0.5 * _LOG_2PI - math.log(sg) - d * d / (2.0 * sg * sg)
            logp[c] = lp
        logp[K] = math.log(lam) + (0.0 if const_lik else log_q0[i])
        c = _draw(logp, K + 1, u[ui])
        ui += 1
        if c == K:
            _grid_logpost(1.0, x[i], x[i] * x[i], mu_grid, sg_grid, logw_mu, logw_sg, const_lik, grid)
            j = _draw(grid, nm * ns, u[ui])
            mu_i[K] = j // ns
            sg_i[K] = j % ns
            K += 1
        ui += 1
        _add_obs(i, c, x, z, counts, sums, sumsq)
    for c in range(K):
        _grid_logpost(float(counts[c]), sums[c], sumsq[c], mu_grid, sg_grid, logw_mu, logw_sg,
                      const_lik, grid)
        j = _draw(grid, nm * ns, u[2 * n + c])
        mu_i[c] = j // ns
        sg_i[c] = j % ns
    return K


@njit(nogil=True, cache=True)
def _accum_pred_I(xs, acc, counts, mu_i, sg_i, K, mu_grid, sg_grid, q0_xs, lam, n):
    w0 = lam / (lam + n)
    for t in range(xs.shape[0]):
        v = w0 * q0_xs[t]
        for c in range(K):
            sg = sg_grid[sg_i[c]]
            d = xs[t] - mu_grid[mu_i[c]]
            v += counts[c] / (lam + n) * math.exp(-d * d / (2.0 * sg * sg)) / (sg * math.sqrt(2.0 * math.pi))
        acc[t] += v


@njit(nogil=True, cache=True)
def _cluster_pred(nc, s, sig2, mu0, v0):
    """Posterior-predictive mean and variance for a new point in a cluster."""
    prec = 1.0 / v0 + nc / sig2
    m = (mu0 / v0 + s / sig2) / prec
    return m, sig2 + 1.0 / prec


@njit(nogil=True, cache=True)
def _sweep_II(x, z, counts, sums, sumsq, K, sig2, mu0, v0, lam, const_lik, u):
    n = x.shape[0]
    logp = np.empty(n + 1)
    dummy_a = np.zeros(n, dtype=np.int64)
    dummy_b = np.zeros(n, dtype=np.int64)
    for i in range(n):
        K = _remove_obs(i, x, z, counts, sums, sumsq, K, dummy_a, dummy_b)
        for c in range(K):
            lp = math.log(counts[c])
            if not const_lik:
                m, v = _cluster_pred(counts[c], sums[c], sig2, mu0, v0)
                d = x[i] - m
                lp += -0.5 * (_LOG_2PI + math.log(v)) - d * d / (2.0 * v)
            logp[c] = lp
        lp = math.log(lam)
        if not const_lik:
            v = v0 + sig2
            d = x[i] - mu0
            lp += -0.5 * (_LOG_2PI + math.log(v)) - d * d / (2.0 * v)
        logp[K] = lp
        c = _draw(logp, K + 1, u[i])
        if c == K:
            K += 1
        _add_obs(i, c, x, z, counts, sums, sumsq)
    return K


@njit(nogil=True, cache=True)
def _sigma_logpost_II(counts, sums, sumsq, K, sg_grid, mu0, v0):
    ns = sg_grid.shape[0]
    out = np.empty(ns)
    for b in range(ns):
        s2 = sg_grid[b] * sg_grid[b]
        tot = 0.0
        for c in range(K):
            nc = counts[c]
            xbar = sums[c] / nc
            ss = sumsq[c] - nc * xbar * xbar
            if ss < 0.0:
                ss = 0.0
            vb = v0 + s2 / nc
            d = xbar - mu0
            tot += (-0.5 * nc * (_LOG_2PI + math.log(s2)) - ss / (2.0 * s2)
                    + 0.5 * (_LOG_2PI + math.log(s2 / nc))
                    - 0.5 * (_LOG_2PI + math.log(vb)) - d * d / (2.0 * vb))
        out[b] = tot
    return out


@njit(nogil=True, cache=True)
def _accum_pred_II(xs, acc, counts, sums, K, sig2, mu0, v0, lam, n):
    for t in range(xs.shape[0]):
        vv = v0 + sig2
        d = xs[t] - mu0
        val = lam / (lam + n) * math.exp(-d * d / (2.0 * vv)) / math.sqrt(2.0 * math.pi * vv)
        for c in range(K):
            m, pv = _cluster_pred(counts[c], sums[c], sig2, mu0, v0)
            d = xs[t] - m
            val += counts[c] / (lam + n) * math.exp(-d * d / (2.0 * pv)) / math.sqrt(2.0 * math.pi * pv)
        acc[t] += val


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------

def integrated_autocorr_time(series, c: float = 5.0) -> float:
    """Integrated autocorrelation time with Sokal's self-consistent window."""
    x = np.asarray(series, dtype=float)
    n = x.size
    if n < 2:
        return 1.0
    x = x - x.mean()
    var = float(x @ x) / n
    if var == 0.0:
        return 1.0
    f = np.fft.rfft(x, 2 * n)
    acf = np.fft.irfft(f * np.conj(f))[:n] / (n * var)
    tau = 1.0
    for m in range(1, n):
        tau += 2.0 * acf[m]
        if m >= c * tau:
            break
    return max(tau, 1.0)


def mc_summary(series) -> tuple[float, float, float]:
    """(mean, standard error, integrated autocorrelation time)."""
    x = np.asarray(series, dtype=float)
    tau = integrated_autocorr_time(x)
    se = math.sqrt(float(np.var(x)) * tau / x.size) if x.size > 1 else 0.0
    return float(x.mean()), se, tau


# ---------------------------------------------------------------------------
# samplers
# ---------------------------------------------------------------------------

def _pred_grid(x, spec: DpMixSpec) -> np.ndarray:
    s_hi = spec.sigma_bounds[1]
    if spec.kind == "location_scale_I":
        lo, hi = spec.mu_bounds[0] - 8 * s_hi, spec.mu_bounds[1] + 8 * s_hi
    else:
        sd0 = math.sqrt(spec.base_var + s_hi ** 2)
        lo = min(float(np.min(x)) - 8 * s_hi, spec.base_mean - 8 * sd0)
        hi = max(float(np.max(x)) + 8 * s_hi, spec.base_mean + 8 * sd0)
    return np.linspace(lo, hi, N_PRED)


def _log_q0_I(points, spec):
    """Exact log prior predictive density of the discretized kind-I base."""
    mu = spec.mu_grid()
    sg = spec.sigma_grid()
    lw = spec.log_mu_weights()[:, None] + np.full(sg.size, -math.log(sg.size))[None, :]
    out = np.empty(points.size)
    for t, p in enumerate(points):
        ll = lw - np.log(sg)[None, :] - 0.5 * _LOG_2PI - (p - mu[:, None]) ** 2 / (2 * sg[None, :] ** 2)
        out[t] = _lse(ll.ravel())
    return out


def crp_gibbs(data, lam: float, spec: DpMixSpec, iters: int, burnin: int, rng,
              constant_likelihood: bool = False) -> GibbsResult:
    """Collapsed CRP Gibbs sampler at fixed precision ``lam``.

    Returns the post-burnin mean of K_n with its autocorrelation-corrected
    standard error, the K_n trace and the averaged predictive density.
    ``constant_likelihood`` replaces every likelihood factor by 1, which
    leaves the sampler targeting the CRP prior.
    """
    if not (iters > burnin >= 100):
        raise DomainError("need iters > burnin >= 100")
    if not lam > 0:
        raise DomainError("precision must be positive")
    x = np.ascontiguousarray(np.asarray(data, dtype=float).ravel())
    n = x.size
    if n < 1:
        raise DomainError("empty data")
    gen = stats.as_generator(rng)
    z = np.zeros(n, dtype=np.int64)
    counts = np.zeros(n + 1, dtype=np.int64)
    sums = np.zeros(n + 1)
    sumsq = np.zeros(n + 1)
    counts[0], sums[0], sumsq[0] = n, x.sum(), float(x @ x)
    K = 1
    xs = _pred_grid(x, spec)
    acc = np.zeros(xs.size)
    kept = iters - burnin
    Kn = np.empty(kept, dtype=np.int64)
    sig_trace = np.empty(0)
    const = bool(constant_likelihood)

    if spec.kind == "location_scale_I":
        mu_grid, sg_grid = spec.mu_grid(), spec.sigma_grid()
        logw_mu = spec.log_mu_weights()
        logw_sg = np.full(sg_grid.size, -math.log(sg_grid.size))
        mu_i = np.zeros(n + 1, dtype=np.int64)
        sg_i = np.zeros(n + 1, dtype=np.int64)
        mu_i[0] = int(np.argmin(np.abs(mu_grid - x.mean())))
        sg_i[0] = sg_grid.size - 1
        log_q0 = _log_q0_I(x, spec) if not const else np.zeros(n)
        q0_xs = np.exp(_log_q0_I(xs, spec))
        for t in range(iters):
            u = gen.random(3 * n + 1)
            K = _sweep_I(x, z, counts, sums, sumsq, mu_i, sg_i, K, mu_grid, sg_grid, logw_mu,
                         logw_sg, log_q0, lam, const, u)
            if t >= burnin:
                Kn[t - burnin] = K
                if not const:
                    _accum_pred_I(xs, acc, counts, mu_i, sg_i, K, mu_grid, sg_grid, q0_xs, lam, n)
    else:
        sg_grid = spec.sigma_grid()
        mu0, v0 = spec.base_mean, spec.base_var
        b = sg_grid.size - 1
        sig_trace = np.empty(kept)
        for t in range(iters):
            u = gen.random(n + 1)
            sig2 = float(sg_grid[b] ** 2)
            K = _sweep_II(x, z, counts, sums, sumsq, K, sig2, mu0, v0, lam, const, u)
            if not const:
                lp = _sigma_logpost_II(counts, sums, sumsq, K, sg_grid, mu0, v0)
                b = _draw(lp, lp.size, u[n])
            if t >= burnin:
                Kn[t - burnin] = K
                sig_trace[t - burnin] = sg_grid[b]
                if not const:
                    _accum_pred_II(xs, acc, counts, sums, K, float(sg_grid[b] ** 2), mu0, v0, lam, n)

    mean, se, tau = mc_summary(Kn)
    warning = None
    if tau > iters / 50:
        warning = f"K_n autocorrelation time {tau:.1f} exceeds iters/50"
    pred, raw = None, math.nan
    if not const:
        dens = acc / kept
        raw = float(np.trapezoid(dens, xs))
        pred = DensityGrid.normalized(xs, dens)
        if abs(raw - 1.0) > 1e-3:
            warning = (warning + "; " if warning else "") + f"predictive grid mass {raw:.6f}"
    return GibbsResult(mean, se, tau, Kn, pred, raw, warning, sig_trace)


# ---------------------------------------------------------------------------
# precision estimation
# ---------------------------------------------------------------------------

def liu_lhs(lam, n: int):
    """sum_{j=1}^n lam / (lam + j - 1): prior mean of the cluster count."""
    lam_arr = np.asarray(lam, dtype=float)
    if np.any(lam_arr <= 0):
        raise DomainError("precision must be positive")
    j = np.arange(n, dtype=float)
    out = np.sum(lam_arr[..., None] / (lam_arr[..., None] + j), axis=-1)
    return float(out) if out.ndim == 0 else out


def solve_liu(target: float, n: int, bracket=(1e-8, 1e8)) -> float:
    """The unique lam with liu_lhs(lam, n) = target; needs 1 < target < n."""
    lo, hi = bracket
    return stats.find_root(lambda t: liu_lhs(t, n) - target, lo, hi, tol=1e-12 * max(1.0, lo))


@dataclass
class LiuResult:
    lambda_hat: float
    trace: list
    residual: float
    residual_se: float
    degenerate: bool
    warning: str | None = None


def liu_solver(data, spec: DpMixSpec, lambda_bracket=(0.01, 100.0), outer_iters: int = 20,
               gibbs_iters: int = 2000, rng=None, burnin: int | None = None,
               estimator=None) -> LiuResult:
    """Stochastic fixed-point iteration for the marginal MLE of the precision.

    Each step estimates E[K_n | lam_t, data] by Gibbs and solves the prior
    cluster-count equation for lam_{t+1}. It stops on a relative move below
    1% or when the current point already satisfies the equation within two
    Monte Carlo standard errors. ``estimator(lam) -> (E, se)`` overrides the
    Gibbs call.
    """
    lo, hi = map(float, lambda_bracket)
    if not 0 < lo < hi:
        raise DomainError("need 0 < lambda_lo < lambda_hi")
    x = np.asarray(data, dtype=float).ravel()
    n = x.size
    gen = stats.as_generator(rng if rng is not None else 0)
    if burnin is None:
        burnin = max(100, gibbs_iters // 5)
    if estimator is None:
        def estimator(lam):
            r = crp_gibbs(x, lam, spec, gibbs_iters, burnin, gen)
            return r.E_Kn, r.std_error

    lam = min(max(spec.precision, lo), hi)
    if n == 1:
        return LiuResult(lam, [], 0.0, 0.0, True, "n = 1: every precision solves the equation")

    trace = []
    degenerate = False
    warning = None
    se_last = 0.0   # SE of the estimate lam was solved from; 0 when lam was not solved for
    for t in range(outer_iters):
        E, se = estimator(lam)
        if E <= 1 + 1e-9 or E >= n - 1e-9:
            nxt = lo if E <= 1 + 1e-9 else hi
            degenerate = True
            warning = f"E[K_n]={E} at the edge of (1, n): lambda clamped to bracket"
        elif E < liu_lhs(lo, n) or E > liu_lhs(hi, n):
            nxt = lo if E < liu_lhs(lo, n) else hi
            degenerate = True
            warning = f"solution for E[K_n]={E} lies outside the bracket"
        else:
            nxt = solve_liu(E, n, (lo, hi))
        trace.append({"iter": t, "lambda": lam, "E_Kn": E, "se": se, "lambda_next": nxt})
        if abs(E - liu_lhs(lam, n)) <= 2 * se:
            break
        moved = abs(nxt - lam)
        lam = nxt
        se_last = 0.0 if degenerate else se
        if moved < 0.01 * trace[-1]["lambda"] or degenerate:
            break
    else:
        warning = (warning + "; " if warning else "") + "outer iteration budget reached"

    # liu_lhs(lam) equals the estimate lam was solved from, so that estimate's
    # noise enters the residual alongside the fresh one
    E2, se2 = estimator(lam)
    trace.append({"iter": len(trace), "lambda": lam, "E_Kn": E2, "se": se2, "lambda_next": lam})
    residual = abs(liu_lhs(lam, n) - E2)
    return LiuResult(lam, trace, residual, math.sqrt(se2 ** 2 + se_last ** 2), degenerate, warning)


# ---------------------------------------------------------------------------
# plug-in mean EB and helpers
# ---------------------------------------------------------------------------

def eb_plug_in_mean(data, spec: DpMixSpec, iters: int = 1000, burnin: int = 200, rng=None) -> EBResult:
    """Kind-II mixture with the base mean replaced by the sample mean.

    The returned posterior is the averaged predictive density; the marginal
    likelihood of a DP mixture is not available in closed form, so the
    stored log marginal is NaN.
    """
    if spec.kind != "location_II":
        raise DomainError("plug-in mean applies to the location_II kind")
    x = np.asarray(data, dtype=float).ravel()
    xbar = float(x.mean())
    s = DpMixSpec("location_II", spec.precision, xbar, spec.base_var, spec.mu_bounds,
                  spec.sigma_bounds, spec.truncation_level)
    r = crp_gibbs(x, spec.precision, s, iters, burnin, rng if rng is not None else 0)
    return EBResult(HyperParam((xbar,)), math.nan, r.predictive)


def stick_breaking(lam: float, N: int, rng) -> tuple[np.ndarray, float]:
    """Truncated stick-breaking weights and the leftover mass after N sticks.

    The leftover is added to the last weight so the weights sum to one.
    """
    if N < 1:
        raise DomainError("need N >= 1")
    v = stats.as_generator(rng).beta(1.0, lam, N)
    log_rest = np.concatenate([[0.0], np.cumsum(np.log1p(-v))])
    w = v * np.exp(log_rest[:-1])
    leftover = float(np.exp(log_rest[-1]))
    w[-1] += leftover
    return w, leftover


def truncation_for(lam: float, tol: float = 1e-6, max_level: int = 100) -> int:
    """Smallest N with expected leftover (lam/(lam+1))^N below ``tol``."""
    N = max(10, math.ceil(math.log(tol) / math.log(lam / (lam + 1.0))))
    if N > max_level:
        raise CapacityError(f"precision {lam} needs truncation {N} > {max_level}", max_feasible=max_level)
    return N


def mixture_pdf(x, weights, means, sds):
    x = np.asarray(x, dtype=float)[..., None]
    w, m, s = (np.asarray(a, dtype=float) for a in (weights, means, sds))
    return np.sum(w * np.exp(-0.5 * ((x - m) / s) ** 2) / (s * math.sqrt(2 * math.pi)), axis=-1)


def sample_mixture(weights, means, sds, n: int, rng) -> np.ndarray:
    gen = stats.as_generator(rng)
    comp = gen.choice(len(weights), size=n, p=np.asarray(weights, dtype=float))
    return gen.normal(np.asarray(means)[comp], np.asarray(sds)[comp])
