"""Monte-Carlo check of the support-based degrees-of-freedom formula.

For draws ``y_b = X b* + sigma e_b`` the covariance form of the degrees of
freedom, ``sum_i cov(yhat_i, y_i) / sigma^2``, is estimated per grid point.

The default ``"centered"`` estimator uses the per-draw terms

    d_b = B / (B - 1) * (yhat_b - mean_b yhat_b) . (y_b - X b*) / sigma^2

whose mean is unbiased for the covariance. The ``"plugin"`` estimator centers
at ``H_b X b*`` instead, with ``H_b = X_S (X_S^T X_S + lam M_S)^+ X_S^T`` from
fit ``b``; since ``H_b`` moves with the noise, its mean is
``E[e^T H e]`` rather than ``E[trace H]`` and it runs high once the support
varies across draws. The standard error is ``sd(d_b) / sqrt(B)``.
"""

from dataclasses import dataclass

import numpy as np

from ..diagnostics import sign_block_matrix
from ..model import GroupPartition, Problem
from ..numerics import pinv_solve
from ..solver import SolverConfig, default_lambda_grid, fit_path
from .designs import ToeplitzSpec, derive_seed, sample_design, toeplitz_sigma


@dataclass
class DfMonteCarlo:
    lambdas: np.ndarray
    df_mc: np.ndarray
    stderr: np.ndarray
    df_estimate: np.ndarray  # mean of the formula over the same draws
    df_estimate_sd: np.ndarray
    draws: int

    def within(self, n_se=3.0):
        """Grid points where the formula and the Monte-Carlo value agree to `n_se` errors."""
        return np.abs(self.df_estimate - self.df_mc) <= n_se * self.stderr

    def rows(self):
        return [
            {"lambda": float(l), "df_mc": float(m), "stderr": float(s),
             "df_estimate": float(e), "df_estimate_sd": float(d)}
            for l, m, s, e, d in zip(self.lambdas, self.df_mc, self.stderr,
                                     self.df_estimate, self.df_estimate_sd)
        ]


def _hat_matrix_terms(X, fit, partition):
    """``(Xs, Q)`` with ``H = Xs @ Q`` for the fit's support, or ``None`` if empty."""
    S = fit.support
    if S.size == 0:
        return None
    Xs = X[:, S]
    A = Xs.T @ Xs + fit.lam * sign_block_matrix(S, np.sign(fit.beta[S]), partition)
    return Xs, pinv_solve(A, Xs.T)


ESTIMATORS = ("centered", "plugin")


def df_monte_carlo(X, beta_star, partition, lambdas, B=2000, seed=0, sigma=1.0,
                   config=None, estimator="centered"):
    """Monte-Carlo degrees of freedom over a descending `lambdas` grid.

    Draw ``b`` uses noise seeded by ``derive_seed(seed, b)``. The formula
    ``trace H`` is averaged over the same draws for comparison.
    """
    if B < 2:
        raise ValueError("B must be at least 2")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if estimator not in ESTIMATORS:
        raise ValueError(f"estimator must be one of {ESTIMATORS}")
    lambdas = np.asarray(lambdas, dtype=float)
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    mu = X @ np.asarray(beta_star, dtype=float)
    base = Problem(X, mu, partition)
    config = config or SolverConfig()
    if config.lipschitz is None:
        config = SolverConfig(**{**config.__dict__, "lipschitz": base.lipschitz})
    yhat = np.empty((B, lambdas.size, n))
    center = np.zeros((B, lambdas.size, n))
    noise = np.empty((B, n))
    tr = np.zeros((B, lambdas.size))
    for b in range(B):
        eps = sigma * np.random.default_rng(derive_seed(seed, b)).standard_normal(n)
        noise[b] = eps
        path = fit_path(base.with_response(mu + eps), lambdas, config, criteria=False)
        for j, f in enumerate(path.fits):
            yhat[b, j] = X @ f.beta
            terms = _hat_matrix_terms(X, f, partition)
            if terms is not None:
                Xs, Q = terms
                tr[b, j] = np.trace(Q @ Xs)
                if estimator == "plugin":
                    center[b, j] = Xs @ (Q @ mu)
    if estimator == "centered":
        center[:] = yhat.mean(axis=0)
        scale = B / (B - 1)
    else:
        scale = 1.0
    d = scale * np.einsum("bjn,bn->bj", yhat - center, noise) / sigma ** 2
    return DfMonteCarlo(
        lambdas, d.mean(axis=0), d.std(axis=0, ddof=1) / np.sqrt(B),
        tr.mean(axis=0), tr.std(axis=0, ddof=1), B,
    )


@dataclass(frozen=True)
class DfSweepDesign:
    """Small design for the df sweep: ``n x p`` Toeplitz draw, one unit coefficient per group."""

    n: int = 50
    group_sizes: tuple = (5, 5, 5, 5)
    w: float = 0.6
    b: float = 0.6
    n_lambdas: int = 15
    lambda_ratio: float = 1e-3
    seed: int = 0

    def build(self):
        """``(X, beta_star, partition, lambdas)``."""
        part = GroupPartition.contiguous(self.group_sizes)
        sig = toeplitz_sigma(ToeplitzSpec(part, self.w, self.b))
        X = sample_design(sig, self.n, derive_seed(self.seed, 0))
        rng = np.random.default_rng(derive_seed(self.seed, 1))
        beta_star = np.zeros(part.p)
        for g in part.groups:
            beta_star[rng.choice(g)] = 1.0
        prob = Problem(X, X @ beta_star, part)
        lambdas = default_lambda_grid(prob, self.n_lambdas, self.lambda_ratio)
        return X, beta_star, part, lambdas


def df_sweep(design=None, B=2000, seed=1, config=None, estimator="centered"):
    X, beta_star, part, lambdas = (design or DfSweepDesign()).build()
    return df_monte_carlo(X, beta_star, part, lambdas, B, seed, config=config,
                          estimator=estimator)
