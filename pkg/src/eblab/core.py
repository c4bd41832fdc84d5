"""Generic EB machinery: marginal-MLE driver, KL-ball prior mass, and the
replication harness that turns per-cell outcomes into merging curves."""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence

import numpy as np

from . import stats
from .errors import ModelError, ScenarioError
from .posterior import (DensityGrid, DiscreteWeights, GaussianCF, ParticleCloud,
                        PointMass, PosteriorRep, ScaledStudentCF)

FAILURE_LIMIT = 0.05


@dataclass(frozen=True)
class HyperParam:
    values: tuple
    boundary_flags: tuple = ()

    def __post_init__(self):
        vals = tuple(float(v) for v in np.atleast_1d(self.values))
        flags = tuple(bool(b) for b in self.boundary_flags) or (False,) * len(vals)
        if len(flags) != len(vals):
            raise ValueError("boundary_flags length must match values")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "boundary_flags", flags)

    def __len__(self):
        return len(self.values)

    def __getitem__(self, i):
        return self.values[i]

    @property
    def on_boundary(self) -> bool:
        return any(self.boundary_flags)


@dataclass(frozen=True)
class EBResult:
    lambda_hat: HyperParam
    log_marginal_at_hat: float
    posterior: PosteriorRep
    degenerate: bool = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "degenerate",
                           isinstance(self.posterior, PointMass) or self.lambda_hat.on_boundary)


class ModelFamily(Protocol):
    """What :func:`marginal_mle` needs from a model family."""

    dim: int

    def log_marginal(self, data, lam: Sequence[float]) -> float: ...

    def posterior(self, data, lam: Sequence[float]) -> PosteriorRep: ...


# ---------------------------------------------------------------------------
# marginal MLE
# ---------------------------------------------------------------------------

GRID_2D = 129
MAX_CYCLES = 50


def _finite_or_raise(v, lam):
    v = float(v)
    if not math.isfinite(v):
        raise ModelError(f"non-finite log marginal {v} at lambda={tuple(lam)}", offending=tuple(lam))
    return v


def marginal_mle(family: ModelFamily, data, bounds, tol: float = 1e-8) -> EBResult:
    """Maximize ``family.log_marginal(data, lam)`` over the box ``bounds``.

    ``bounds`` is a sequence of (lo, hi) pairs, one per hyperparameter
    coordinate. Ties on the scan grid resolve to the smallest lambda.
    """
    bounds = [(float(lo), float(hi)) for lo, hi in bounds]
    if len(bounds) != family.dim or family.dim not in (1, 2):
        raise ValueError("marginal_mle supports 1 or 2 hyperparameters matching family.dim")

    if family.dim == 1:
        lo, hi = bounds[0]
        xs = np.linspace(lo, hi, 257)
        for x in xs:  # certificate that the scan grid is finite
            _finite_or_raise(family.log_marginal(data, (float(x),)), (float(x),))
        x, fx = stats.maximize_1d(lambda t: family.log_marginal(data, (t,)), lo, hi, tol)
        lam = np.array([x])
        best = fx
    else:
        (lo0, hi0), (lo1, hi1) = bounds
        g0 = np.linspace(lo0, hi0, GRID_2D)
        g1 = np.linspace(lo1, hi1, GRID_2D)
        vals = np.empty((GRID_2D, GRID_2D))
        for i, a in enumerate(g0):
            for j, b in enumerate(g1):
                vals[i, j] = _finite_or_raise(family.log_marginal(data, (a, b)), (a, b))
        i, j = np.unravel_index(int(np.argmax(vals)), vals.shape)
        lam = np.array([g0[i], g1[j]])
        best = float(vals[i, j])
        steps = np.array([g0[1] - g0[0], g1[1] - g1[0]])
        for _ in range(MAX_CYCLES):
            moved = False
            for c in range(2):
                lo, hi = bounds[c]
                a = max(lo, lam[c] - steps[c])
                b = min(hi, lam[c] + steps[c])

                def f(t, c=c):
                    trial = lam.copy()
                    trial[c] = t
                    return family.log_marginal(data, tuple(trial))
                t, ft = stats.golden_section_max(f, a, b, tol)
                if ft > best:
                    moved = moved or abs(t - lam[c]) > tol
                    lam[c], best = t, ft
            if not moved:
                break
            steps = steps / 2.0

    flags = tuple(abs(v - lo) <= tol or abs(v - hi) <= tol for v, (lo, hi) in zip(lam, bounds))
    return EBResult(HyperParam(tuple(lam), flags), float(best), family.posterior(data, tuple(lam)))


# ---------------------------------------------------------------------------
# KL prior-mass estimator
# ---------------------------------------------------------------------------

def kl_ball_prior_mass(prior_sampler: Callable, theta0, eta: float, n_samples: int, rng,
                       kl: Callable) -> tuple[float, float]:
    """Monte Carlo prior mass of {theta : KL(theta0; theta) < eta}.

    ``prior_sampler(gen, size)`` draws from the prior; ``kl(theta0, thetas)``
    is the per-observation divergence, vectorized over draws.
    """
    if not eta > 0:
        raise ValueError("eta must be positive")
    gen = stats.as_generator(rng)
    draws = prior_sampler(gen, int(n_samples))
    try:
        d = np.asarray(kl(theta0, draws), dtype=float)
    except (FloatingPointError, ValueError, ArithmeticError) as exc:
        raise ModelError(f"KL evaluation failed: {exc}") from exc
    if np.any(np.isnan(d)):
        raise ModelError("KL evaluation returned NaN")
    p = float(np.mean(d < eta))
    return p, math.sqrt(p * (1.0 - p) / n_samples)


# ---------------------------------------------------------------------------
# posterior mass outside a ball around the truth
# ---------------------------------------------------------------------------

def mass_outside_ball(post: PosteriorRep, theta0, eps: float) -> float:
    """Posterior mass of U_eps^c = {theta : |theta - theta0| >= eps} (1-D or atomic)."""
    if isinstance(post, PointMass):
        return 0.0 if np.linalg.norm(np.atleast_1d(post.value) - theta0) < eps else 1.0
    if isinstance(post, DiscreteWeights):
        sup = post.support.reshape(len(post.support), -1)
        dist = np.linalg.norm(sup - np.atleast_1d(theta0), axis=1)
        return float(post.weights[dist >= eps].sum())
    if isinstance(post, ParticleCloud):
        s = post.samples.reshape(post.samples.shape[0], -1)
        return float(np.mean(np.linalg.norm(s - np.atleast_1d(theta0), axis=1) >= eps))
    if isinstance(post, GaussianCF):
        s = post.sd
        return stats.normal_sf((theta0 + eps - post.mean) / s) + stats.normal_cdf((theta0 - eps - post.mean) / s)
    if isinstance(post, ScaledStudentCF) and post.dim == 1:
        return 1.0 - post.cdf(theta0 + eps) + post.cdf(theta0 - eps)
    if isinstance(post, DensityGrid):
        return max(0.0, 1.0 - (post.cdf(theta0 + eps) - post.cdf(theta0 - eps)))
    raise TypeError(f"no ball-mass rule for {type(post).__name__}")


# ---------------------------------------------------------------------------
# replication harness
# ---------------------------------------------------------------------------

@dataclass
class CellOutcome:
    """Result of one (n, replication) cell: metric values and event flags."""

    values: dict
    events: dict = field(default_factory=dict)


@dataclass
class MergingCurve:
    n_grid: list
    reps: int
    summary: dict          # metric -> list of (mean, median, q10, q90, reps_ok) per n
    event_freq: dict       # event -> list of frequencies per n
    cells: dict            # (n, rep) -> CellOutcome | str (failure message)

    def failures(self) -> int:
        return sum(1 for v in self.cells.values() if not isinstance(v, CellOutcome))


def cell_stream_id(n_index: int, rep: int, reps: int) -> int:
    return n_index * reps + rep


def run_replications(cell_fn: Callable[[int, int, np.random.Generator], CellOutcome],
                     n_grid: Sequence[int], reps: int, seed: int, threads: int = 1,
                     cells: Sequence[tuple[int, int]] | None = None) -> dict:
    """Run ``cell_fn(n, rep, gen)`` over the grid with per-cell Philox streams.

    Exceptions inside a cell are captured as failure strings. Results are
    keyed by (n, rep), so aggregation does not depend on completion order.
    """
    index = {n: i for i, n in enumerate(n_grid)}
    todo = list(cells) if cells is not None else [(n, r) for n in n_grid for r in range(reps)]

    def work(cell):
        n, r = cell
        gen = stats.RngStream(seed, cell_stream_id(index[n], r, reps)).generator()
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                return cell, cell_fn(n, r, gen)
        except Exception as exc:  # a failed replication is data, not a crash
            return cell, f"{type(exc).__name__}: {exc}"

    if threads <= 1:
        results = [work(c) for c in todo]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, todo))
    return dict(results)


def summarize(cells: dict, n_grid: Sequence[int], reps: int) -> MergingCurve:
    total = len(cells)
    failed = sum(1 for v in cells.values() if not isinstance(v, CellOutcome))
    if total and failed / total > FAILURE_LIMIT:
        raise ScenarioError(f"{failed} of {total} replications failed")
    metrics, events = [], []
    for v in cells.values():
        if isinstance(v, CellOutcome):
            metrics += [k for k in v.values if k not in metrics]
            events += [k for k in v.events if k not in events]
    summary = {m: [] for m in metrics}
    freq = {e: [] for e in events}
    for n in n_grid:
        ok = [cells[(n, r)] for r in range(reps) if isinstance(cells.get((n, r)), CellOutcome)]
        for m in metrics:
            x = np.array([c.values[m] for c in ok if m in c.values], dtype=float)
            x = x[~np.isnan(x)]
            if x.size:
                q10, med, q90 = np.quantile(x, [0.1, 0.5, 0.9])
                summary[m].append((float(x.mean()), float(med), float(q10), float(q90), int(x.size)))
            else:
                summary[m].append((math.nan, math.nan, math.nan, math.nan, 0))
        for e in events:
            x = [float(c.events[e]) for c in ok if e in c.events]
            freq[e].append(float(np.mean(x)) if x else math.nan)
    return MergingCurve(list(n_grid), reps, summary, freq, cells)


def consistency_curve(scenario, rng_base: int | None = None, threads: int = 1) -> MergingCurve:
    """Replicate ``scenario.cell`` over its n-grid and summarize.

    ``scenario`` needs ``n_grid``, ``reps``, ``seed`` and a
    ``cell(n, rep, gen) -> CellOutcome`` method; cells report the posterior
    mass outside the epsilon-ball under the key ``consistency_mass``.
    """
    seed = scenario.seed if rng_base is None else rng_base
    cells = run_replications(scenario.cell, scenario.n_grid, scenario.reps, seed, threads)
    return summarize(cells, scenario.n_grid, scenario.reps)


def loglog_slope(n_grid, values) -> float:
    """Least-squares slope of log(values) against log(n)."""
    x = np.log(np.asarray(n_grid, dtype=float))
    y = np.log(np.asarray(values, dtype=float))
    return float(np.polyfit(x, y, 1)[0])
