"""Correlated Gaussian designs and seeding helpers for the simulation lab."""

import warnings
from dataclasses import dataclass

import numpy as np

from ..errors import IndefiniteCovariance, NotPositiveDefinite
from ..model import GroupPartition
from ..numerics import cholesky_factor


def derive_seed(base, *path):
    """Integer seed that depends only on `base` and the replicate/stream `path`.

    Replicate ``r`` always sees the same stream, whatever order replicates run in.
    """
    ss = np.random.SeedSequence([int(base), *[int(v) for v in path]])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class ToeplitzSpec:
    """Within-group rate `w` and between-group rate `b` over `partition`."""

    partition: GroupPartition
    w: float
    b: float

    def __post_init__(self):
        for name, v in (("w", self.w), ("b", self.b)):
            if not 0.0 <= v < 1.0:
                raise ValueError(f"{name} must lie in [0, 1), got {v}")

    @property
    def p(self):
        return self.partition.p


def toeplitz_sigma(spec):
    """``w^|i-j|`` for a same-group pair, ``b^|i-j|`` otherwise."""
    p = spec.p
    lag = np.abs(np.subtract.outer(np.arange(p), np.arange(p)))
    gid = spec.partition.group_of
    same = gid[:, None] == gid[None, :]
    return np.where(same, np.power(spec.w, lag), np.power(spec.b, lag))


def design_factor(sigma):
    """``F`` with ``F @ F.T`` equal to `sigma`, or to its nearest PSD matrix.

    Cholesky is tried first. Some (w, b) pairs give an indefinite matrix
    (w = .9, b = .6 among them); then the negative eigenvalues are clipped to
    zero, which is the Frobenius-nearest PSD matrix, and a warning is issued.
    """
    try:
        return cholesky_factor(sigma)
    except NotPositiveDefinite:
        vals, vecs = np.linalg.eigh(sigma)
        warnings.warn(f"covariance is indefinite (smallest eigenvalue {vals[0]:.3g}); "
                      "sampling from its nearest PSD matrix", IndefiniteCovariance, stacklevel=2)
        return vecs * np.sqrt(np.clip(vals, 0.0, None))


def sample_design(sigma, n, seed):
    """`n` rows drawn from ``N(0, sigma)``; bit-identical for a fixed seed."""
    if n < 1:
        raise ValueError("n must be at least 1")
    F = design_factor(np.asarray(sigma, dtype=float))
    g = np.random.default_rng(seed).standard_normal((n, F.shape[1]))
    return g @ F.T
