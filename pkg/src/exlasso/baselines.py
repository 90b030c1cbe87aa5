"""Comparison selectors: Lasso-based, marginal-regression-based and OLS refitting.

Every selector returns a `SelectedModel` whose coefficients are an OLS refit
on the selected columns. Ties are always broken toward the smaller index.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import (
    EmptyPath,
    EmptySupport,
    GroupNeverEnters,
    MaxIterationsExceeded,
    NoFullCoverageLambda,
)
from .model import GroupPartition, Problem, support_of
from .numerics import largest_eigenvalue, ols_solve
from .selection import groupwise_threshold
from .solver import SolverConfig

METHODS = ("lasso_k", "thresh_lasso", "thresh_path", "marginal", "group_marginal", "group_lasso")


@dataclass
class SelectedModel:
    method: str
    support: np.ndarray
    coefficients: np.ndarray
    meta: dict = field(default_factory=dict)
    fallback: bool = False

    def to_dict(self):
        return {
            "method": self.method,
            "support": self.support.tolist(),
            "coefficients": self.coefficients.tolist(),
            "meta": self.meta,
            "fallback": self.fallback,
        }


@njit(cache=True, nogil=True)
def _ista(gram, xty, lam, lip, beta, tol, max_iter):
    p = beta.shape[0]
    step = 1.0 / lip
    thresh = lam * step
    gb = gram @ beta
    k = 0
    while k < max_iter:
        k += 1
        diff = 0.0
        for i in range(p):
            zi = beta[i] - step * (gb[i] - xty[i])
            if zi > thresh:
                new = zi - thresh
            elif zi < -thresh:
                new = zi + thresh
            else:
                new = 0.0
            d = new - beta[i]
            diff += d * d
            beta[i] = new
        gb = gram @ beta
        if np.sqrt(diff) <= tol:
            return k, True
    return k, False


def lasso_fit(problem, lam, config=None, beta0=None):
    """Minimize ``0.5 * ||y - X b||^2 + lam * ||b||_1`` by ISTA with step ``1/L``."""
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    config = config or SolverConfig()
    lip = config.lipschitz if config.lipschitz is not None else problem.lipschitz
    beta = np.zeros(problem.p) if beta0 is None else np.array(beta0, dtype=float)
    if lip <= 0:
        return np.zeros(problem.p)
    n_iter, converged = _ista(problem.gram, problem.xty, float(lam), float(lip), beta,
                              float(config.tol), int(config.max_iter))
    if not converged:
        warnings.warn(f"ISTA did not converge in {n_iter} iterations at lambda={lam:.6g}",
                      MaxIterationsExceeded, stacklevel=2)
    return beta


def lasso_grid(problem, n_lambdas=100, ratio=1e-4):
    """Log grid from ``||X^T y||_inf`` (where the Lasso solution is zero) downward."""
    top = float(np.max(np.abs(problem.xty), initial=0.0))
    if top <= 0:
        return np.array([0.0])
    return np.geomspace(top, top * ratio, n_lambdas)


def lasso_path(problem, lambdas=None, config=None):
    """Yield ``(lam, beta)`` along a descending grid with warm starts."""
    lambdas = lasso_grid(problem) if lambdas is None else np.asarray(lambdas, dtype=float)
    config = config or SolverConfig()
    if config.lipschitz is None:
        config = SolverConfig(**{**config.__dict__, "lipschitz": problem.lipschitz})
    beta = None
    for lam in lambdas:
        beta = lasso_fit(problem, lam, config, beta0=beta)
        yield float(lam), beta.copy()


def ols_refit(problem, support):
    """OLS on the selected columns, zeros elsewhere."""
    support = np.asarray(support, dtype=np.int64)
    if support.size == 0:
        raise EmptySupport("cannot refit on an empty support")
    beta = np.zeros(problem.p)
    beta[support] = ols_solve(problem.X[:, support], problem.y)
    return beta


def refit_selection(problem, method, support, meta=None, fallback=False):
    """Wrap a selected support as a `SelectedModel` with OLS coefficients."""
    support = np.unique(np.asarray(support, dtype=np.int64))
    coef = ols_refit(problem, support) if support.size else np.zeros(problem.p)
    return SelectedModel(method, support, coef, meta or {}, fallback)


def lasso_first_k(problem, k, lambdas=None, config=None):
    """Support at the largest lambda with exactly `k` nonzero Lasso coefficients.

    If no grid point has exactly `k`, the point whose count is closest to `k`
    is used (smaller counts win ties, then larger lambda).
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    best = None
    n_seen = 0
    for lam, beta in lasso_path(problem, lambdas, config):
        n_seen += 1
        supp = support_of(beta)
        if supp.size == k:
            return refit_selection(problem, "lasso_k", supp, {"lambda": lam, "k": k})
        key = (abs(supp.size - k), supp.size)
        if best is None or key < best[0]:
            best = (key, lam, supp)
    if n_seen == 0:
        raise EmptyPath("lambda grid is empty")
    _, lam, supp = best
    return refit_selection(problem, "lasso_k", supp, {"lambda": lam, "k": k}, fallback=True)


def thresholded_lasso(problem, lambdas=None, config=None):
    """Largest lambda with a nonzero in every group, then keep each group's largest entry."""
    part = problem.partition
    last = None
    for lam, beta in lasso_path(problem, lambdas, config):
        last = (lam, beta)
        counts = np.bincount(part.group_of[support_of(beta)], minlength=part.n_groups)
        if np.all(counts > 0):
            th = groupwise_threshold(beta, part)
            return refit_selection(problem, "thresh_lasso", np.flatnonzero(th), {"lambda": lam})
    if last is None:
        raise EmptyPath("lambda grid is empty")
    lam, beta = last
    warnings.warn("no grid lambda gives a nonzero in every group; using the smallest",
                  NoFullCoverageLambda, stacklevel=2)
    th = groupwise_threshold(beta, part)
    return refit_selection(problem, "thresh_lasso", np.flatnonzero(th), {"lambda": lam}, fallback=True)


def _groupwise_argmax(values, partition, tie_rtol=1e-9):
    """Per group, the index of the largest value.

    Values within `tie_rtol` (relative) of the group maximum are tied, since
    identical columns can differ in the last bits of ``X^T y``; ties go to
    the smallest index.
    """
    out = []
    for g in partition.groups:
        v = values[g]
        top = v.max()
        out.append(g[np.flatnonzero(v >= top - tie_rtol * abs(top))[0]])
    return np.array(out, dtype=np.int64)


def thresholded_reg_path(problem, lambdas=None, config=None):
    """First variable of each group to enter the Lasso path.

    Several entries from one group at the same grid step are resolved by the
    larger coefficient magnitude. Groups that never enter fall back to their
    largest ``|X_i^T y|``.
    """
    part = problem.partition
    chosen = np.full(part.n_groups, -1, dtype=np.int64)
    entered_at = {}
    for lam, beta in lasso_path(problem, lambdas, config):
        supp = support_of(beta)
        for g in np.unique(part.group_of[supp]):
            if chosen[g] >= 0:
                continue
            members = supp[part.group_of[supp] == g]
            chosen[g] = members[int(np.argmax(np.abs(beta[members])))]
            entered_at[int(g)] = lam
        if np.all(chosen >= 0):
            break
    missing = np.flatnonzero(chosen < 0)
    fallback = missing.size > 0
    if fallback:
        warnings.warn(f"groups {missing.tolist()} never enter the Lasso path",
                      GroupNeverEnters, stacklevel=2)
        marginal = _groupwise_argmax(np.abs(problem.xty), part)
        chosen[missing] = marginal[missing]
    meta = {"entry_lambda": {str(g): v for g, v in sorted(entered_at.items())}}
    return refit_selection(problem, "thresh_path", chosen, meta, fallback)


def marginal_regression(problem, k):
    """The `k` columns with the largest ``|X_i^T y|``."""
    if not 1 <= k <= problem.p:
        raise ValueError(f"k must be in 1..{problem.p}")
    score = np.abs(problem.xty)
    order = np.argsort(-score, kind="stable")
    return refit_selection(problem, "marginal", order[:k], {"k": k})


def groupwise_marginal(problem):
    """Within each group, the column with the largest ``|X_i^T y|``."""
    chosen = _groupwise_argmax(np.abs(problem.xty), problem.partition)
    return refit_selection(problem, "group_marginal", chosen)


def lasso_bic_path(problem, lambdas=None, config=None, max_df_fraction=None):
    """Lasso path tuned by BIC with ``df = #nonzeros``.

    Returns ``(lam, beta, bic_values)`` at the minimizing grid point (ties go
    to the larger lambda). `max_df_fraction` ends the path at the first grid
    point whose nonzero count reaches that fraction of ``n``.
    """
    n = problem.n
    best = None
    values = []
    for lam, beta in lasso_path(problem, lambdas, config):
        r = problem.y - problem.X @ beta
        rss = float(r @ r)
        df = support_of(beta).size
        if max_df_fraction is not None and df >= max_df_fraction * n:
            break
        if rss <= 0:
            values.append(np.nan)
            continue
        val = np.log(rss / n) + df * np.log(n) / n
        values.append(val)
        if best is None or val < best[0]:
            best = (val, lam, beta)
    if best is None:
        raise EmptyPath("no grid point has a finite BIC")
    return best[1], best[2], np.asarray(values)


def lasso_bic(problem, lambdas=None, config=None, max_df_fraction=None):
    lam, beta, values = lasso_bic_path(problem, lambdas, config, max_df_fraction)
    return refit_selection(problem, "lasso_bic", support_of(beta), {"lambda": lam})


def groupwise_lasso(problem, config=None, n_lambdas=100, ratio=1e-4, max_df_fraction=None):
    """Separate BIC-tuned Lasso on ``(X_g, y)`` for every group; supports are joined."""
    part = problem.partition
    support = []
    lams = {}
    for k, g in enumerate(part.groups):
        sub = Problem(problem.X[:, g], problem.y, GroupPartition.singletons(len(g)))
        grid = lasso_grid(sub, n_lambdas, ratio)
        lam, beta, _ = lasso_bic_path(sub, grid, config, max_df_fraction)
        support.extend(g[support_of(beta)].tolist())
        lams[str(k)] = lam
    return refit_selection(problem, "group_lasso", support, {"lambda": lams})


def run_baseline(problem, method, k=None, config=None):
    """Dispatch by method name (see `METHODS`)."""
    if method == "lasso_k":
        return lasso_first_k(problem, k or problem.partition.n_groups, config=config)
    if method == "thresh_lasso":
        return thresholded_lasso(problem, config=config)
    if method == "thresh_path":
        return thresholded_reg_path(problem, config=config)
    if method == "marginal":
        return marginal_regression(problem, k or problem.partition.n_groups)
    if method == "group_marginal":
        return groupwise_marginal(problem)
    if method == "group_lasso":
        return groupwise_lasso(problem, config=config)
    raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
