"""Degrees of freedom, BIC/EBIC, lambda selection and group-wise thresholding."""

from dataclasses import dataclass

import numpy as np

from .diagnostics import sign_block_matrix
from .errors import NoFiniteCriterion, PerfectFit
from .numerics import pinv_solve

CRITERIA = ("bic", "ebic")


def df_estimate(problem, fit):
    """``trace[X_S (X_S^T X_S + lam M_S)^+ X_S^T]`` over the fit's support."""
    support = np.asarray(fit.support)
    if support.size == 0:
        return 0.0
    Xs = problem.X[:, support]
    gram_s = Xs.T @ Xs
    M = sign_block_matrix(support, np.sign(fit.beta[support]), problem.partition)
    # trace(X_S A^+ X_S^T) = trace(A^+ X_S^T X_S)
    return float(np.trace(pinv_solve(gram_s + fit.lam * M, gram_s)))


def _rss(problem, fit):
    r = problem.y - problem.X @ fit.beta
    rss = float(r @ r)
    if rss <= 0.0:
        raise PerfectFit("residual sum of squares is zero")
    return rss


def bic(problem, fit, df):
    """``log(RSS / n) + df * log(n) / n``."""
    n = problem.n
    return float(np.log(_rss(problem, fit) / n) + df * np.log(n) / n)


def ebic(problem, fit, df):
    """BIC plus ``df * log(p) / n``."""
    return bic(problem, fit, df) + df * np.log(problem.p) / problem.n


def groupwise_threshold(beta, partition, tie_rtol=1e-9):
    """Keep only the largest-magnitude coefficient in each group.

    Magnitudes within ``tie_rtol`` (relative) of the group maximum count as
    tied, and ties go to the smallest index. All-zero groups stay zero.
    """
    beta = np.asarray(getattr(beta, "beta", beta), dtype=float)
    out = np.zeros_like(beta)
    for g in partition.groups:
        mag = np.abs(beta[g])
        top = mag.max()
        if top == 0:
            continue
        keep = g[np.flatnonzero(mag >= top * (1.0 - tie_rtol))[0]]
        out[keep] = beta[keep]
    return out


@dataclass
class SelectionResult:
    lam: float
    criterion: str
    values: np.ndarray
    index: int
    fit: object
    thresholded: np.ndarray | None = None

    def to_dict(self):
        out = {
            "criterion": self.criterion,
            "lambda": self.lam,
            "index": self.index,
            "criterion_values": [None if not np.isfinite(v) else float(v) for v in self.values],
            "beta": self.fit.beta.tolist(),
            "support": self.fit.support.tolist(),
        }
        if self.thresholded is not None:
            out["thresholded_beta"] = self.thresholded.tolist()
            out["thresholded_support"] = np.flatnonzero(self.thresholded).tolist()
        return out


def select_lambda(path, criterion="bic", partition=None, threshold=False):
    """Grid point minimizing BIC or EBIC; ties go to the larger lambda.

    Non-finite criterion values (e.g. a perfect fit) are skipped. With
    ``threshold=True`` the chosen fit is also group-wise thresholded, which
    needs `partition`.
    """
    criterion = criterion.lower()
    if criterion not in CRITERIA:
        raise ValueError(f"criterion must be one of {CRITERIA}, got {criterion!r}")
    values = np.asarray(getattr(path, criterion), dtype=float)
    if values.size == 0 or not np.any(np.isfinite(values)):
        raise NoFiniteCriterion(f"no finite {criterion} value on the path")
    masked = np.where(np.isfinite(values), values, np.inf)
    order = np.argsort(-np.asarray(path.lambdas), kind="stable")
    # argmin over descending lambdas returns the first (largest lambda) on ties
    idx = int(order[np.argmin(masked[order])])
    chosen = path.fits[idx]
    thresholded = None
    if threshold:
        if partition is None:
            raise ValueError("group-wise thresholding needs the partition")
        thresholded = groupwise_threshold(chosen.beta, partition)
    return SelectionResult(float(path.lambdas[idx]), criterion, values, idx, chosen, thresholded)
