"""Proximal operator of the Exclusive Lasso penalty.

``prox(z) = argmin_b 0.5 * ||b - z||^2 + lam * 0.5 * sum_g ||b_g||_1^2``

There is no closed form; each group is solved by cyclic coordinate descent
with the update ``b_i <- S(z_i / (1 + lam), lam * ||b_g without i||_1 / (1 + lam))``.
Groups never interact, so they are solved independently.
"""

import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import MaxSweepsExceeded
from .model import GroupPartition, penalty_value

DEFAULT_TOL = 1e-10
DEFAULT_MAX_SWEEPS = 10_000
_ULP_FACTOR = 8 * np.finfo(float).eps


def soft_threshold(z, t):
    """``sign(z) * max(|z| - t, 0)``; works elementwise on arrays."""
    if np.any(np.asarray(t) < 0):
        raise ValueError("threshold must be nonnegative")
    out = np.sign(z) * np.maximum(np.abs(z) - t, 0.0)
    return float(out) if np.ndim(out) == 0 else out


@njit(cache=True, nogil=True)
def _soft(z, t):
    if z > t:
        return z - t
    if z < -t:
        return z + t
    return 0.0


@njit(cache=True, nogil=True)
def _group_cd(z, lam, beta, tol, max_sweeps, trace):
    """Cyclic coordinate descent for one group, updating `beta` in place.

    Returns (sweeps, last max |change|, tolerance used); the tolerance is
    raised to a few ulps of ``max|z| / (1 + lam)`` when `tol` is below that.
    When `trace` is non-empty the prox objective after every coordinate
    update is written into it.
    """
    m = z.shape[0]
    shrink = 1.0 / (1.0 + lam)
    # a change below a few ulps of the iterate is rounding noise, not progress
    zmax = 0.0
    for j in range(m):
        if abs(z[j]) > zmax:
            zmax = abs(z[j])
    floor = _ULP_FACTOR * zmax * shrink
    if tol < floor:
        tol = floor
    sweeps = 0
    change = np.inf
    rec = 0
    while sweeps < max_sweeps:
        s = 0.0
        for j in range(m):
            s += abs(beta[j])
        change = 0.0
        for i in range(m):
            old = beta[i]
            rest = s - abs(old)
            if rest < 0.0:
                rest = 0.0
            new = _soft(z[i] * shrink, lam * rest * shrink)
            beta[i] = new
            s = rest + abs(new)
            d = abs(new - old)
            if d > change:
                change = d
            if rec < trace.shape[0]:
                acc = 0.0
                l1 = 0.0
                for j in range(m):
                    acc += (beta[j] - z[j]) ** 2
                    l1 += abs(beta[j])
                trace[rec] = 0.5 * acc + 0.5 * lam * l1 * l1
                rec += 1
        sweeps += 1
        if change <= tol:
            break
    return sweeps, change, tol


@njit(cache=True, nogil=True)
def _prox_csr(z, lam, beta, order, ptr, tol, max_sweeps, sweeps_out, change_out, tol_out):
    """Run `_group_cd` on every group of a CSR partition layout; `beta` in/out."""
    no_trace = np.empty(0)
    for g in range(ptr.shape[0] - 1):
        idx = order[ptr[g]:ptr[g + 1]]
        zg = z[idx]
        bg = beta[idx]
        sw, ch, used = _group_cd(zg, lam, bg, tol, max_sweeps, no_trace)
        beta[idx] = bg
        sweeps_out[g] = sw
        change_out[g] = ch
        tol_out[g] = used


def prox_objective(beta, z, lam, partition):
    beta = np.asarray(beta, dtype=float)
    return 0.5 * float(np.sum((beta - z) ** 2)) + lam * penalty_value(beta, partition)


def prox_group(z_g, lam, tol=DEFAULT_TOL, max_sweeps=DEFAULT_MAX_SWEEPS, init=None,
               return_info=False, trace=False):
    """Prox of ``lam * 0.5 * ||b||_1^2`` at `z_g` (a single group).

    Coordinates are swept in ascending order until the largest change in a
    sweep is at most `tol`. `init` warm-starts the sweep (zeros by default).

    With ``return_info=True`` returns ``(beta, sweeps, final_change)``; with
    ``trace=True`` also the objective after each coordinate update.
    """
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    if tol <= 0:
        raise ValueError("tolerance must be positive")
    z = np.ascontiguousarray(z_g, dtype=float)
    beta = np.zeros_like(z) if init is None else np.array(init, dtype=float)
    buf = np.empty(max_sweeps * z.size if trace else 0)
    sweeps, change, used = _group_cd(z, float(lam), beta, float(tol), int(max_sweeps), buf)
    if change > used:
        warnings.warn(
            f"prox_group stopped after {sweeps} sweeps with change {change:.3g} > {used:.3g}",
            MaxSweepsExceeded, stacklevel=2,
        )
    if trace:
        return beta, sweeps, change, buf[: sweeps * z.size].copy()
    if return_info:
        return beta, sweeps, change
    return beta


@dataclass
class ProxResult:
    minimizer: np.ndarray
    sweeps: np.ndarray
    final_change: np.ndarray
    tolerance: np.ndarray  # per group; above the request only at the rounding floor

    @property
    def max_sweeps_hit(self):
        return bool(np.any(self.final_change > self.tolerance))


def _thread_cap():
    raw = os.environ.get("EXLASSO_THREADS")
    if raw:
        return max(1, int(raw))
    return os.cpu_count() or 1


def prox_exclusive(z, lam, partition: GroupPartition, tol=DEFAULT_TOL,
                   max_sweeps=DEFAULT_MAX_SWEEPS, init=None, n_jobs=1):
    """Prox of the full penalty: independent `prox_group` solves per group.

    ``n_jobs > 1`` spreads groups over threads (capped by ``EXLASSO_THREADS``);
    the result is identical to the sequential run.
    """
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    if tol <= 0:
        raise ValueError("tolerance must be positive")
    z = np.ascontiguousarray(z, dtype=float)
    if z.shape != (partition.p,):
        raise ValueError(f"point has shape {z.shape}, partition expects ({partition.p},)")
    beta = np.zeros_like(z) if init is None else np.array(init, dtype=float)
    n_groups = partition.n_groups
    sweeps = np.zeros(n_groups, dtype=np.int64)
    change = np.zeros(n_groups)
    used = np.zeros(n_groups)

    n_jobs = min(n_jobs, _thread_cap(), n_groups)
    if n_jobs <= 1:
        _prox_csr(z, float(lam), beta, partition.order, partition.ptr,
                  float(tol), int(max_sweeps), sweeps, change, used)
    else:
        def solve(g):
            idx = partition.groups[g]
            bg = np.ascontiguousarray(beta[idx])
            return (g, bg) + _group_cd(np.ascontiguousarray(z[idx]), float(lam), bg,
                                       float(tol), int(max_sweeps), np.empty(0))

        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            for g, bg, sw, ch, tu in pool.map(solve, range(n_groups)):
                beta[partition.groups[g]] = bg
                sweeps[g] = sw
                change[g] = ch
                used[g] = tu

    result = ProxResult(beta, sweeps, change, used)
    if result.max_sweeps_hit:
        bad = np.flatnonzero(change > used).tolist()
        warnings.warn(f"groups {bad} hit max_sweeps={max_sweeps}", MaxSweepsExceeded,
                      stacklevel=2)
    return result
