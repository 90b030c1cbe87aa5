"""Dense linear-algebra kernels: Cholesky, spectral norm, pseudo-inverse solves, OLS."""

import numpy as np

from .errors import DimensionMismatch, NonConvergence, NotPositiveDefinite

PINV_RCOND = 1e-10
POWER_TOL = 1e-10
POWER_MAX_ITER = 10_000
POWER_INFLATION = 1.0 + 5e-9
DENSE_EIGH_MAX = 2000


def as_matrix(a, name="matrix"):
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite entries")
    return a


def as_vector(v, name="vector"):
    v = np.asarray(v, dtype=float)
    if v.ndim != 1:
        raise DimensionMismatch(f"{name} must be 1-D, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} contains non-finite entries")
    return v


def _check_symmetric(a, rtol=1e-10):
    if a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {a.shape}")
    scale = max(np.abs(a).max(initial=0.0), 1.0)
    if np.abs(a - a.T).max(initial=0.0) > rtol * scale:
        raise ValueError("matrix is not symmetric")


def cholesky_factor(a):
    """Lower-triangular ``L`` with ``L @ L.T == a``.

    A near-singular input gets one retry with ``1e-12 * trace(a) / p`` added
    to the diagonal before `NotPositiveDefinite` is raised.
    """
    a = as_matrix(a)
    _check_symmetric(a)
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        pass
    p = a.shape[0]
    jitter = 1e-12 * np.trace(a) / p
    if jitter <= 0:
        raise NotPositiveDefinite("matrix has non-positive trace")
    try:
        return np.linalg.cholesky(a + jitter * np.eye(p))
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(
            f"Cholesky failed even after diagonal jitter {jitter:.3g}"
        ) from exc


def largest_eigenvalue(a, tol=POWER_TOL, max_iter=POWER_MAX_ITER, seed=0, method="auto"):
    """Top eigenvalue of a symmetric PSD matrix, inflated by ``1 + 5e-9``.

    The inflation makes ``1 / L`` a safe gradient step. ``method="auto"`` uses
    a dense symmetric eigensolver up to ``DENSE_EIGH_MAX`` rows and power
    iteration beyond; power iteration stops once the relative change of the
    Rayleigh quotient drops below `tol`.
    """
    a = as_matrix(a)
    _check_symmetric(a)
    p = a.shape[0]
    if p == 0:
        raise DimensionMismatch("empty matrix")
    if method not in ("auto", "eigh", "power"):
        raise ValueError(f"unknown method {method!r}")
    if not np.any(a):
        return 0.0
    if method == "eigh" or (method == "auto" and p <= DENSE_EIGH_MAX):
        top = float(np.linalg.eigvalsh(a)[-1])
        return max(top, 0.0) * POWER_INFLATION
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(p) + 1.0
    v /= np.linalg.norm(v)
    rho = 0.0
    for _ in range(max_iter):
        w = a @ v
        rho_new = float(v @ w)
        norm_w = np.linalg.norm(w)
        if norm_w == 0.0:
            # start vector landed in the null space
            v = rng.standard_normal(p)
            v /= np.linalg.norm(v)
            continue
        v = w / norm_w
        if abs(rho_new - rho) <= tol * abs(rho_new):
            # one last Rayleigh quotient on the normalized iterate
            rho_new = max(rho_new, float(v @ (a @ v)))
            return rho_new * POWER_INFLATION
        rho = rho_new
    raise NonConvergence(f"power iteration did not converge in {max_iter} iterations")


def pinv_solve(a, b, rcond=PINV_RCOND):
    """Minimum-norm solution ``a^+ b`` for symmetric PSD `a`.

    Eigenvalues below ``rcond * lambda_max`` are treated as zero. `b` may be a
    vector or a matrix of right-hand sides.
    """
    a = as_matrix(a)
    b = np.asarray(b, dtype=float)
    if a.shape[0] != a.shape[1] or b.shape[0] != a.shape[0]:
        raise DimensionMismatch(f"cannot solve {a.shape} system with rhs {b.shape}")
    if a.shape[0] == 0:
        return np.zeros_like(b)
    evals, evecs = np.linalg.eigh(0.5 * (a + a.T))
    top = evals.max(initial=0.0)
    keep = evals > rcond * top if top > 0 else np.zeros_like(evals, dtype=bool)
    inv = np.zeros_like(evals)
    inv[keep] = 1.0 / evals[keep]
    coef = evecs.T @ b
    if coef.ndim == 1:
        return evecs @ (inv * coef)
    return evecs @ (inv[:, None] * coef)


def ols_solve(x, y):
    """Minimum-norm least squares ``(X^T X)^+ X^T y``."""
    x = as_matrix(x, "design")
    y = as_vector(y, "response")
    if x.shape[0] != y.shape[0]:
        raise DimensionMismatch(f"design has {x.shape[0]} rows, response {y.shape[0]}")
    if x.shape[0] < 1 or x.shape[1] < 1:
        raise DimensionMismatch("OLS needs at least one row and one column")
    return pinv_solve(x.T @ x, x.T @ y)
