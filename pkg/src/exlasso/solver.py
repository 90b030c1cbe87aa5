"""Inexact proximal gradient descent for the Exclusive Lasso.

Minimizes ``0.5 * ||y - X b||^2 + lam * 0.5 * sum_g ||b_g||_1^2`` with a
fixed step ``1 / L``, ``L = lambda_max(X^T X)``. Each prox is solved by
coordinate descent (see `exlasso.prox`) to a tolerance that shrinks like
``1 / k^2`` over outer iterations.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import (
    DimensionMismatch,
    MaxIterationsExceeded,
    MaxSweepsExceeded,
    NonFiniteEncountered,
    PathFitError,
    PerfectFit,
)
from .model import lambda_max_heuristic, penalty_value, support_of
from .diagnostics import kkt_residuals
from .prox import DEFAULT_MAX_SWEEPS, _group_cd

@dataclass
class SolverConfig:
    """Tolerances and limits for `fit`.

    The inner (prox) tolerance at outer step ``k >= 1`` is
    ``inner_tol * k ** -inner_decay``; the default decay of 2 keeps
    ``sum_k sqrt(delta_k)`` finite.
    """

    tol: float = 1e-8
    inner_tol: float = 1e-8
    inner_decay: float = 2.0
    max_iter: int = 100_000
    max_sweeps: int = DEFAULT_MAX_SWEEPS
    lipschitz: float | None = None

    def __post_init__(self):
        if self.tol <= 0 or self.inner_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.inner_decay < 0:
            raise ValueError("inner_decay must be nonnegative")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")

    def inner_tolerance(self, k):
        return min(self.inner_tol, self.inner_tol / max(k, 1) ** self.inner_decay)


@njit(cache=True, nogil=True)
def _pgd(gram, xty, yty, lam, lip, beta, order, ptr, tol, delta0, decay,
         max_iter, max_sweeps, trace):
    """Outer loop; `beta` is updated in place. trace[k] = objective after step k."""
    p = beta.shape[0]
    n_groups = ptr.shape[0] - 1
    step = 1.0 / lip
    lam_step = lam * step
    gb = gram @ beta
    trace[0] = _objective(beta, gb, xty, yty, lam, order, ptr)
    z = np.empty(p)
    new = np.empty(p)
    no_trace = np.empty(0)
    converged = False
    sweep_hits = 0
    k = 0
    while k < max_iter:
        k += 1
        for i in range(p):
            z[i] = beta[i] - step * (gb[i] - xty[i])
            new[i] = beta[i]
        delta = delta0 / k ** decay
        if delta > delta0:
            delta = delta0
        for g in range(n_groups):
            idx = order[ptr[g]:ptr[g + 1]]
            bg = new[idx]
            sw, ch, used = _group_cd(z[idx], lam_step, bg, delta, max_sweeps, no_trace)
            if ch > used:
                sweep_hits += 1
            new[idx] = bg
        diff = 0.0
        for i in range(p):
            d = new[i] - beta[i]
            diff += d * d
            beta[i] = new[i]
        gb = gram @ beta
        f = _objective(beta, gb, xty, yty, lam, order, ptr)
        trace[k] = f
        if not np.isfinite(f):
            break
        if np.sqrt(diff) <= tol:
            converged = True
            break
    return k, converged, sweep_hits


@njit(cache=True, nogil=True)
def _objective(beta, gb, xty, yty, lam, order, ptr):
    quad = 0.0
    for i in range(beta.shape[0]):
        quad += beta[i] * (0.5 * gb[i] - xty[i])
    pen = 0.0
    for g in range(ptr.shape[0] - 1):
        s = 0.0
        for j in range(ptr[g], ptr[g + 1]):
            s += abs(beta[order[j]])
        pen += s * s
    return quad + 0.5 * yty + 0.5 * lam * pen


@dataclass
class ExclusiveLassoFit:
    beta: np.ndarray
    lam: float
    support: np.ndarray
    objective_trace: np.ndarray = field(repr=False)
    n_iter: int
    converged: bool
    kkt_residual: float
    lipschitz: float
    inner_delta0: float = 1e-8
    inner_decay: float = 2.0
    prox_sweep_limit_hits: int = 0

    @property
    def objective(self):
        return float(self.objective_trace[-1])

    def inner_tolerance(self, k):
        return min(self.inner_delta0, self.inner_delta0 / max(k, 1) ** self.inner_decay)

    def group_active_counts(self, partition):
        active = np.zeros(partition.p, dtype=bool)
        active[self.support] = True
        return np.add.reduceat(active[partition.order].astype(int), partition.ptr[:-1])


def objective_value(problem, beta, lam):
    """``0.5 * ||y - X b||^2 + lam * P(b)`` evaluated from the residual."""
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (problem.p,):
        raise DimensionMismatch(f"beta has shape {beta.shape}, expected ({problem.p},)")
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    r = problem.y - problem.X @ beta
    return 0.5 * float(r @ r) + lam * penalty_value(beta, problem.partition)


def gradient_step(problem, beta, lipschitz):
    """``b - (1/L) X^T (X b - y)``."""
    if lipschitz <= 0:
        raise ValueError("Lipschitz constant must be positive")
    beta = np.asarray(beta, dtype=float)
    return beta - (problem.gram @ beta - problem.xty) / lipschitz


def fit(problem, lam, config=None, beta0=None):
    """Fit the Exclusive Lasso at a single `lam`.

    `beta0` warm-starts the iterate (zeros otherwise). Hitting ``max_iter``
    returns the last iterate with ``converged=False`` and a
    `MaxIterationsExceeded` warning.
    """
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    config = config or SolverConfig()
    lip = config.lipschitz if config.lipschitz is not None else problem.lipschitz
    part = problem.partition
    beta = np.zeros(problem.p) if beta0 is None else np.array(beta0, dtype=float)
    if beta.shape != (problem.p,):
        raise ValueError(f"beta0 has shape {beta.shape}, expected ({problem.p},)")

    if lip <= 0:
        # X == 0: the loss is constant and the penalty alone is minimized at 0
        beta[:] = 0.0
        trace = np.array([objective_value(problem, beta, lam)])
        n_iter, converged, hits = 0, True, 0
    else:
        trace = np.empty(config.max_iter + 1)
        yty = float(problem.y @ problem.y)
        n_iter, converged, hits = _pgd(
            problem.gram, problem.xty, yty, float(lam), float(lip), beta,
            part.order, part.ptr, float(config.tol), float(config.inner_tol),
            float(config.inner_decay), int(config.max_iter), int(config.max_sweeps), trace,
        )
        trace = trace[: n_iter + 1].copy()
    if not (np.all(np.isfinite(beta)) and np.isfinite(trace[-1])):
        raise NonFiniteEncountered(f"non-finite iterate at outer step {n_iter}")
    if not converged:
        warnings.warn(
            f"no convergence in {config.max_iter} outer iterations at lambda={lam:.6g}",
            MaxIterationsExceeded, stacklevel=2,
        )
    if hits:
        warnings.warn(f"{hits} inner prox solves hit max_sweeps", MaxSweepsExceeded,
                      stacklevel=2)
    r = problem.y - problem.X @ beta
    res = kkt_residuals(problem.X, r, beta, part, lam)
    return ExclusiveLassoFit(
        beta=beta, lam=float(lam), support=support_of(beta), objective_trace=trace,
        n_iter=int(n_iter), converged=bool(converged),
        kkt_residual=float(np.max(res, initial=0.0)), lipschitz=float(lip),
        inner_delta0=config.inner_tol, inner_decay=config.inner_decay,
        prox_sweep_limit_hits=int(hits),
    )


def default_lambda_grid(problem, n_lambdas=100, ratio=1e-4):
    """Log-spaced grid from `lambda_max_heuristic` down by `ratio`."""
    top = lambda_max_heuristic(problem)
    if top <= 0:
        return np.array([0.0])
    return np.geomspace(top, top * ratio, n_lambdas)


@dataclass
class PathResult:
    lambdas: np.ndarray
    fits: list
    df: np.ndarray
    bic: np.ndarray
    ebic: np.ndarray

    def __len__(self):
        return len(self.fits)

    def coefficients(self):
        return np.vstack([f.beta for f in self.fits])


def fit_path(problem, lambdas=None, config=None, beta0=None, criteria=True, max_df=None):
    """Fits along a strictly descending grid, each warm-started from the last.

    Degrees of freedom, BIC and EBIC are filled in unless ``criteria=False``.
    A criterion that diverges (zero residual) is stored as NaN.

    `max_df` stops the path at the first fit whose degrees of freedom reach
    it; that fit and the rest of the grid are dropped. Near-saturated fits
    (df close to n) make log-RSS criteria unbounded below.
    """
    from .selection import bic, df_estimate, ebic

    lambdas = default_lambda_grid(problem) if lambdas is None else np.asarray(lambdas, float)
    lambdas = np.atleast_1d(lambdas)
    if lambdas.size == 0:
        raise ValueError("empty lambda grid")
    if np.any(lambdas < 0):
        raise ValueError("lambdas must be nonnegative")
    if np.any(np.diff(lambdas) >= 0):
        raise ValueError("lambda grid must be strictly descending")
    config = config or SolverConfig()
    if config.lipschitz is None:
        config = SolverConfig(**{**config.__dict__, "lipschitz": problem.lipschitz})
    fits = []
    df = np.full(lambdas.size, np.nan)
    bics = np.full(lambdas.size, np.nan)
    ebics = np.full(lambdas.size, np.nan)
    warm = beta0
    for j, lam in enumerate(lambdas):
        try:
            f = fit(problem, lam, config, beta0=warm)
        except Exception as exc:
            raise PathFitError(lam, exc) from exc
        warm = f.beta
        if criteria or max_df is not None:
            df[j] = df_estimate(problem, f)
            if max_df is not None and df[j] >= max_df:
                break
        fits.append(f)
        if criteria:
            try:
                bics[j] = bic(problem, f, df[j])
                ebics[j] = ebic(problem, f, df[j])
            except PerfectFit:
                pass
    m = len(fits)
    if m == 0:
        raise PathFitError(lambdas[0], f"degrees of freedom reach max_df={max_df} at the first lambda")
    return PathResult(lambdas[:m], fits, df[:m], bics[:m], ebics[:m])
