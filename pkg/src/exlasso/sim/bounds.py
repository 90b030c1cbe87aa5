"""Empirical checks of the prediction-error bounds.

The bounds are stated for the constrained estimator ``min ||y - X b||``
subject to ``P(b) <= K``. A penalized fit solves that problem with
``K = P(b_hat)``; the truth is feasible only when ``P(b*) <= K``, so
replicates where ``P(b*) > P(b_hat)`` are flagged and left out.
"""

from dataclasses import dataclass, field

import numpy as np

from ..model import penalty_value

# P(b*) may exceed P(b_hat) by this relative margin before a replicate is skipped,
# so that b_hat == b* up to rounding is kept
CAVEAT_RTOL = 1e-9
from .scenarios import ScenarioSpec, draw_replicate, exclusive_bic, map_replicates


@dataclass(frozen=True)
class BoundInputs:
    K: float
    M: float
    sigma: float
    n_groups: int

    def __post_init__(self):
        if self.K < 0 or self.M < 0 or self.sigma < 0 or self.n_groups < 1:
            raise ValueError("K, M, sigma must be nonnegative and n_groups positive")


def estimated_mspe(X, beta_hat, beta_star):
    """``(1/n) ||X (b_hat - b*)||^2``."""
    d = np.asarray(X) @ (np.asarray(beta_hat) - np.asarray(beta_star))
    return float(d @ d) / d.shape[0]


def estimated_mspe_bound(inputs, n, p):
    """``2 (K + |G|) M sigma sqrt(2 log(2p) / n)``."""
    return 2.0 * (inputs.K + inputs.n_groups) * inputs.M * inputs.sigma \
        * np.sqrt(2.0 * np.log(2.0 * p) / n)


def population_mspe_bound(inputs, n, p):
    """The estimated-error bound plus ``8 (K + |G|)^2 M^2 sqrt(2p log(2p^2) / n)``."""
    extra = 8.0 * (inputs.K + inputs.n_groups) ** 2 * inputs.M ** 2 \
        * np.sqrt(2.0 * p * np.log(2.0 * p ** 2) / n)
    return estimated_mspe_bound(inputs, n, p) + extra


@dataclass
class BoundSample:
    """One replicate's ingredients for the bound check."""

    X: np.ndarray
    beta_hat: np.ndarray
    beta_star: np.ndarray
    sigma: float
    partition: object

    @property
    def penalty_hat(self):
        return penalty_value(self.beta_hat, self.partition)

    @property
    def penalty_star(self):
        return penalty_value(self.beta_star, self.partition)

    @property
    def skipped(self):
        return self.penalty_star > self.penalty_hat * (1.0 + CAVEAT_RTOL)


@dataclass
class BoundReport:
    lhs: float  # replicate-averaged estimated MSPE over the kept replicates
    rhs: float
    satisfied: bool
    inputs: BoundInputs | None
    n_used: int
    n_skipped: int
    per_replicate: list = field(default_factory=list)

    def to_dict(self):
        return {
            "lhs": self.lhs, "rhs": self.rhs, "satisfied": self.satisfied,
            "inputs": None if self.inputs is None else vars(self.inputs),
            "n_used": self.n_used, "n_skipped": self.n_skipped,
            "per_replicate": self.per_replicate,
        }


def check_prediction_bound(samples, inputs=None, atol=0.0):
    """Compare the mean estimated MSPE with its bound over the kept `samples`.

    ``satisfied`` is ``lhs <= rhs + atol``; `atol` absorbs rounding when the
    bound is zero (noiseless data).

    Unless `inputs` is given, ``K`` and ``M`` are the largest ``P(b_hat)`` and
    ``max |X_ij|`` over the kept replicates, so one bound covers all of them.
    With no kept replicate the report has NaN sides and ``satisfied=False``.
    """
    samples = list(samples)
    per = []
    kept = []
    for s in samples:
        per.append({
            "mspe": estimated_mspe(s.X, s.beta_hat, s.beta_star),
            "penalty_hat": s.penalty_hat,
            "penalty_star": s.penalty_star,
            "max_abs_x": float(np.max(np.abs(s.X))),
            "skipped": bool(s.skipped),
        })
        if not s.skipped:
            kept.append(s)
    if not kept:
        return BoundReport(np.nan, np.nan, False, inputs, 0, len(samples), per)
    n, p = kept[0].X.shape
    if inputs is None:
        inputs = BoundInputs(
            K=max(s.penalty_hat for s in kept),
            M=max(float(np.max(np.abs(s.X))) for s in kept),
            sigma=kept[0].sigma,
            n_groups=kept[0].partition.n_groups,
        )
    lhs = float(np.mean([r["mspe"] for r in per if not r["skipped"]]))
    rhs = float(estimated_mspe_bound(inputs, n, p))
    return BoundReport(lhs, rhs, bool(lhs <= rhs + atol), inputs, len(kept),
                       len(samples) - len(kept), per)


def bound_samples(spec, count=None, config=None, n_jobs=1):
    """BIC-selected Exclusive Lasso fits on `count` replicates of `spec`."""
    count = spec.replicates if count is None else count

    def one(r):
        rep = draw_replicate(spec, r)
        sel = exclusive_bic(rep.problem, spec, config)
        return BoundSample(rep.problem.X, sel.fit.beta, rep.beta_star, spec.sigma,
                           rep.problem.partition)

    return map_replicates(one, count, n_jobs)


def collect_kept_samples(spec, target, max_replicates, config=None):
    """Draw replicates in order until `target` of them pass the penalty caveat.

    Returns ``(kept, total_drawn)``; fewer than `target` are returned when
    `max_replicates` runs out.
    """
    kept = []
    r = 0
    while len(kept) < target and r < max_replicates:
        rep = draw_replicate(spec, r)
        sel = exclusive_bic(rep.problem, spec, config)
        s = BoundSample(rep.problem.X, sel.fit.beta, rep.beta_star, spec.sigma,
                        rep.problem.partition)
        if not s.skipped:
            kept.append(s)
        r += 1
    return kept, r


def mspe_trend(ns=(100, 400, 1600), base=None, replicates=5, config=None):
    """Mean estimated MSPE of the BIC-selected fit for each sample size in `ns`.

    The design covariance, truth layout and seed come from `base`; only ``n``
    changes. Returns a list of ``(n, mean_mspe)``.
    """
    base = base or ScenarioSpec(replicates=replicates)
    out = []
    for n in ns:
        spec = ScenarioSpec(**{**base.to_dict(), "n": int(n), "replicates": replicates})
        vals = [estimated_mspe(s.X, s.beta_hat, s.beta_star)
                for s in bound_samples(spec, replicates, config)]
        out.append((int(n), float(np.mean(vals))))
    return out

