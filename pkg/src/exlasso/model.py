"""Grouped regression problem: partitions, the penalty, and problem-level helpers.

Column indices are 0-based everywhere in the library; the group file format
used by the CLI is 1-based and converted on read.
"""

from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from .errors import DimensionMismatch, EmptyGroup, MissingIndices, OverlappingGroups
from .numerics import as_matrix, as_vector, largest_eigenvalue


def validate_partition(groups, p):
    """Raise unless `groups` is a disjoint cover of ``range(p)`` by nonempty sets."""
    seen = {}
    overlap = set()
    for k, g in enumerate(groups):
        if len(g) == 0:
            raise EmptyGroup(f"group {k} is empty", ())
        for i in g:
            i = int(i)
            if i in seen:
                overlap.add(i)
            seen[i] = k
    if overlap:
        raise OverlappingGroups(
            f"indices in more than one group: {sorted(overlap)}", sorted(overlap)
        )
    outside = sorted(i for i in seen if i < 0 or i >= p)
    if outside:
        raise MissingIndices(f"indices outside 0..{p - 1}: {outside}", outside)
    missing = sorted(set(range(p)) - set(seen))
    if missing:
        raise MissingIndices(f"indices not covered by any group: {missing}", missing)


class GroupPartition:
    """Non-overlapping groups covering columns ``0..p-1``.

    Each group is kept sorted ascending. Besides the per-group index arrays the
    partition carries a column-to-group lookup and a flat CSR layout
    (``order``, ``ptr``) that the compiled kernels sweep over.
    """

    def __init__(self, groups, p=None):
        raw = [np.asarray(g, dtype=np.int64).ravel() for g in groups]
        if p is None:
            p = int(sum(len(g) for g in raw))
        validate_partition(raw, p)
        self.p = int(p)
        self.groups = tuple(np.sort(g) for g in raw)
        self.group_of = np.empty(self.p, dtype=np.int64)
        for k, g in enumerate(self.groups):
            self.group_of[g] = k
        self.order = np.concatenate(self.groups) if self.groups else np.empty(0, np.int64)
        self.ptr = np.zeros(len(self.groups) + 1, dtype=np.int64)
        self.ptr[1:] = np.cumsum([len(g) for g in self.groups])

    @classmethod
    def from_labels(cls, labels):
        """Build from a per-column label array; groups ordered by first appearance."""
        labels = list(labels)
        index = {}
        members = []
        for col, lab in enumerate(labels):
            if lab not in index:
                index[lab] = len(members)
                members.append([])
            members[index[lab]].append(col)
        return cls(members, p=len(labels))

    @classmethod
    def contiguous(cls, sizes):
        """Consecutive blocks of the given sizes."""
        bounds = np.concatenate([[0], np.cumsum(sizes)])
        return cls([np.arange(a, b) for a, b in zip(bounds[:-1], bounds[1:])])

    @classmethod
    def singletons(cls, p):
        return cls([[i] for i in range(p)], p=p)

    @property
    def n_groups(self):
        return len(self.groups)

    @property
    def sizes(self):
        return np.diff(self.ptr)

    def labels(self):
        return self.group_of.copy()

    def permuted(self, perm):
        """Partition for the columns reordered as ``x[:, perm]``."""
        perm = np.asarray(perm)
        inverse = np.empty_like(perm)
        inverse[perm] = np.arange(len(perm))
        return GroupPartition([inverse[g] for g in self.groups], p=self.p)

    def __len__(self):
        return len(self.groups)

    def __iter__(self):
        return iter(self.groups)

    def __eq__(self, other):
        if not isinstance(other, GroupPartition):
            return NotImplemented
        return self.p == other.p and len(self) == len(other) and all(
            np.array_equal(a, b) for a, b in zip(self.groups, other.groups)
        )

    def __repr__(self):
        return f"GroupPartition(p={self.p}, n_groups={self.n_groups})"


SUPPORT_RTOL = 1e-10


def support_of(beta):
    """Indices with ``|b_i| > 1e-10 * max(1, ||b||_inf)``."""
    beta = np.asarray(beta)
    cut = SUPPORT_RTOL * max(1.0, float(np.max(np.abs(beta), initial=0.0)))
    return np.flatnonzero(np.abs(beta) > cut)


def group_l1_norms(beta, partition):
    """``||beta_g||_1`` for every group, in partition order."""
    abs_beta = np.abs(np.asarray(beta, dtype=float))
    return np.add.reduceat(abs_beta[partition.order], partition.ptr[:-1])


def penalty_value(beta, partition):
    """Exclusive Lasso penalty ``0.5 * sum_g ||beta_g||_1 ** 2``."""
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (partition.p,):
        raise DimensionMismatch(f"beta has shape {beta.shape}, partition expects ({partition.p},)")
    return 0.5 * float(np.sum(group_l1_norms(beta, partition) ** 2))


@dataclass(frozen=True, eq=False)
class Problem:
    """Design, response and group structure of one regression problem.

    `y_mean` and `x_scale` record the transformations applied by
    `center_response` and `standardize_columns` so predictions can be mapped
    back to the original scale.
    """

    X: np.ndarray
    y: np.ndarray
    partition: GroupPartition
    centered: bool = False
    y_mean: float = 0.0
    x_scale: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        X = as_matrix(self.X, "design")
        y = as_vector(self.y, "response")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        if X.shape[0] != y.shape[0]:
            raise DimensionMismatch(f"design has {X.shape[0]} rows but response has {y.shape[0]}")
        if X.shape[1] != self.partition.p:
            raise DimensionMismatch(
                f"design has {X.shape[1]} columns but partition covers {self.partition.p}"
            )

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def p(self):
        return self.X.shape[1]

    @cached_property
    def gram(self):
        return self.X.T @ self.X

    @cached_property
    def xty(self):
        return self.X.T @ self.y

    @cached_property
    def lipschitz(self):
        """``lambda_max(X^T X)``, the Lipschitz constant of the loss gradient."""
        return largest_eigenvalue(self.gram)

    def with_response(self, y):
        """Same design and groups with a new response; design caches are shared."""
        new = Problem(self.X, y, self.partition, centered=False, x_scale=self.x_scale)
        for name in ("gram", "lipschitz"):
            if name in self.__dict__:
                new.__dict__[name] = self.__dict__[name]
        return new

    def subset(self, columns, partition=None):
        columns = np.asarray(columns, dtype=np.int64)
        if partition is None:
            partition = GroupPartition.singletons(len(columns))
        return Problem(self.X[:, columns], self.y, partition, self.centered, self.y_mean)

    def predict(self, beta):
        return self.X @ beta + self.y_mean


def center_response(problem):
    """Subtract the response mean; the mean is kept in ``y_mean`` for prediction."""
    mean = float(np.mean(problem.y))
    y = problem.y - mean
    # second pass removes the rounding residue of the first
    y -= np.mean(y)
    return replace(problem, y=y, centered=True, y_mean=problem.y_mean + mean)


def standardize_columns(problem):
    """Rescale design columns to unit variance; all-constant columns are left alone."""
    scale = problem.X.std(axis=0)
    scale[scale == 0] = 1.0
    return Problem(
        problem.X / scale, problem.y, problem.partition,
        problem.centered, problem.y_mean, x_scale=scale,
    )


def lambda_max_heuristic(problem):
    """``max_i |X_i^T y|``: in practice large enough to leave one variable per group."""
    return float(np.max(np.abs(problem.xty), initial=0.0))
