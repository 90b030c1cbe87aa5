"""Optimality checks and the two support-based characterizations of a solution.

At an optimum ``X^T (y - X b) = lam * z`` where, for ``i`` in group ``g``,
``z_i = sign(b_i) ||b_g||_1`` if ``b_i != 0`` and ``z_i`` lies in
``[-||b_g||_1, ||b_g||_1]`` otherwise.
"""

from dataclasses import dataclass

import numpy as np

from .errors import AllGroupsZero, DimensionMismatch, EmptySupport, SingularSystem
from .model import group_l1_norms, support_of
from .numerics import pinv_solve

EQUICORRELATION_RTOL = 1e-6


def kkt_residuals(X, r, beta, partition, lam):
    """Per-coordinate violation of the stationarity condition.

    Active ``i``: ``|X_i^T r - lam sign(b_i) ||b_g||_1|``.
    Inactive ``i``: ``max(0, |X_i^T r| - lam ||b_g||_1)``.
    """
    beta = np.asarray(beta, dtype=float)
    if X.shape[1] != beta.shape[0] or X.shape[0] != r.shape[0]:
        raise DimensionMismatch("design, residual and coefficients do not agree")
    corr = X.T @ r
    norms = group_l1_norms(beta, partition)[partition.group_of]
    active = np.zeros(beta.shape[0], dtype=bool)
    active[support_of(beta)] = True
    return np.where(
        active,
        np.abs(corr - lam * np.sign(beta) * norms),
        np.maximum(0.0, np.abs(corr) - lam * norms),
    )


@dataclass
class KktReport:
    residuals: np.ndarray
    max_residual: float
    active_set: np.ndarray
    weighted_correlations: np.ndarray  # |X_i^T r| / ||b_g||_1, NaN where the group is zero
    group_weighted_correlations: list  # per group: values over its active indices

    def to_dict(self):
        return {
            "max_residual": self.max_residual,
            "residuals": self.residuals.tolist(),
            "active_set": self.active_set.tolist(),
            "weighted_correlations": [
                None if np.isnan(v) else float(v) for v in self.weighted_correlations
            ],
            "group_weighted_correlations": [v.tolist() for v in self.group_weighted_correlations],
        }


def kkt_residual(problem, fit):
    beta = fit.beta
    if beta.shape != (problem.p,):
        raise DimensionMismatch(f"fit has {beta.shape[0]} coefficients, problem has {problem.p}")
    part = problem.partition
    r = problem.y - problem.X @ beta
    res = kkt_residuals(problem.X, r, beta, part, fit.lam)
    norms = group_l1_norms(beta, part)[part.group_of]
    corr = np.abs(problem.X.T @ r)
    with np.errstate(divide="ignore", invalid="ignore"):
        weighted = np.where(norms > 0, corr / np.where(norms > 0, norms, 1.0), np.nan)
    active = support_of(beta)
    per_group = [weighted[np.intersect1d(g, active)] for g in part.groups]
    return KktReport(res, float(np.max(res, initial=0.0)), active, weighted, per_group)


@dataclass
class EquicorrelationSet:
    indices: np.ndarray
    lam: float
    rtol: float


def equicorrelation_set(problem, fit, rtol=EQUICORRELATION_RTOL):
    """Indices whose residual correlation over the group l1 norm equals `lam`."""
    part = problem.partition
    norms = group_l1_norms(fit.beta, part)
    if not np.any(norms > 0):
        raise AllGroupsZero("every group is zero; the weighted correlation is undefined")
    r = problem.y - problem.X @ fit.beta
    corr = np.abs(problem.X.T @ r)
    col_norms = norms[part.group_of]
    nonzero = col_norms > 0
    ratio = np.zeros_like(corr)
    ratio[nonzero] = corr[nonzero] / col_norms[nonzero]
    members = nonzero & (np.abs(ratio - fit.lam) <= rtol * fit.lam)
    return EquicorrelationSet(np.flatnonzero(members), fit.lam, rtol)


def sign_block_matrix(support, signs, partition):
    """Block-diagonal ``M_S``: one ``s_g s_g^T`` block per group, over `support` order."""
    support = np.asarray(support, dtype=np.int64)
    signs = np.asarray(signs, dtype=float)
    groups = partition.group_of[support]
    same = groups[:, None] == groups[None, :]
    return np.where(same, np.outer(signs, signs), 0.0)


def prop1_refit(problem, support, signs, lam):
    """``b_S = (X_S^T X_S + lam M_S)^+ X_S^T y`` with zeros off the support."""
    support = np.asarray(support, dtype=np.int64)
    if support.size == 0:
        raise EmptySupport("support is empty")
    signs = np.asarray(signs, dtype=float)
    if signs.shape != support.shape:
        raise DimensionMismatch("one sign per support index is required")
    Xs = problem.X[:, support]
    A = Xs.T @ Xs + lam * sign_block_matrix(support, signs, problem.partition)
    beta = np.zeros(problem.p)
    beta[support] = pinv_solve(A, Xs.T @ problem.y)
    return beta


def prop2_reconstruct(problem, fit, rtol=EQUICORRELATION_RTOL):
    """Right-hand side of the equicorrelation-set formula at a computed solution.

    ``b_E = (X_E^T X_E + lam I)^{-1} [X_E^T y - lam * gbar * s]`` with
    ``gbar_i = ||b_g||_1 - |b_i|``. Signs come from the fit; a member of E
    whose coefficient is zero takes the sign of its residual correlation,
    which is what stationarity forces.
    """
    eq = equicorrelation_set(problem, fit, rtol).indices
    part = problem.partition
    beta = fit.beta
    r = problem.y - problem.X @ beta
    s = np.sign(beta[eq])
    zero = s == 0
    s[zero] = np.sign(problem.X[:, eq[zero]].T @ r)
    gbar = group_l1_norms(beta, part)[part.group_of[eq]] - np.abs(beta[eq])
    Xe = problem.X[:, eq]
    A = Xe.T @ Xe + fit.lam * np.eye(eq.size)
    rhs = Xe.T @ problem.y - fit.lam * gbar * s
    if fit.lam == 0 and np.linalg.matrix_rank(Xe) < eq.size:
        raise SingularSystem("lambda = 0 and the equicorrelation columns are rank deficient")
    try:
        sol = np.linalg.solve(A, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from exc
    out = np.zeros(problem.p)
    out[eq] = sol
    return out
