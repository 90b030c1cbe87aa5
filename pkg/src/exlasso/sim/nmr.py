"""Synthetic shifted-dictionary scenario modelled on spectral quantification.

Each molecule has a nonnegative signature made of Gaussian peaks on a grid.
The dictionary holds `k` shifted copies of every signature (the centre copy
plus symmetric left/right shifts); those copies form one group. The signal
uses one random shift per molecule and nonnegative noise ``|e|``.
"""

from dataclasses import asdict, dataclass

import numpy as np

from .. import baselines
from ..model import GroupPartition, Problem, support_of
from ..numerics import ols_solve
from ..selection import groupwise_threshold
from ..solver import SolverConfig
from .designs import derive_seed
from .scenarios import MethodOutcome, ScenarioReport, ScenarioSpec, exclusive_bic, map_replicates

NMR_METHODS = ("exclusive", "ols_unshifted", "marginal", "lasso")

_LIBRARY, _TRUTH, _NOISE, _TEST_NOISE = range(4)


@dataclass(frozen=True)
class ShiftedDictionarySpec:
    """`m` molecules with `k` shifts each (k odd) on a grid of `grid` points.

    Shifts are ``(j - k // 2) * shift_step`` grid points for ``j < k``.
    Molecule concentrations are uniform on ``concentration``.
    """

    m: int = 10
    k: int = 11
    grid: int = 500
    shift_step: int = 2
    peaks: tuple = (2, 5)  # inclusive range of peak counts per signature
    peak_width: float = 3.0
    concentration: tuple = (0.5, 1.5)
    sigma: float = 0.01
    replicates: int = 20
    seed: int = 0
    max_df_fraction: float | None = 0.5
    n_lambdas: int = 100
    lambda_ratio: float = 1e-4

    def __post_init__(self):
        if self.k < 1 or self.k % 2 == 0:
            raise ValueError("k must be odd")
        if self.m < 1 or self.grid < 2 or self.shift_step < 0:
            raise ValueError("m and grid must be positive and shift_step nonnegative")
        if self.sigma < 0 or self.peak_width <= 0:
            raise ValueError("sigma must be nonnegative and peak_width positive")
        object.__setattr__(self, "peaks", tuple(int(v) for v in self.peaks))
        object.__setattr__(self, "concentration", tuple(float(v) for v in self.concentration))

    @property
    def partition(self):
        return GroupPartition.contiguous([self.k] * self.m)

    def to_dict(self):
        out = asdict(self)
        out["peaks"] = list(self.peaks)
        out["concentration"] = list(self.concentration)
        return out

    @classmethod
    def from_dict(cls, d):
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        for key in ("peaks", "concentration"):
            if key in known:
                known[key] = tuple(known[key])
        return cls(**known)

    def as_scenario(self):
        """The model-selection settings shared with the Toeplitz scenarios."""
        return ScenarioSpec(
            n=self.grid, group_sizes=(self.k,) * self.m, max_df_fraction=self.max_df_fraction,
            n_lambdas=self.n_lambdas, lambda_ratio=self.lambda_ratio, replicates=1,
        )


def signatures(spec, rng):
    """``grid x m`` matrix of unit-height Gaussian-peak mixtures, kept away from the edges."""
    t = np.arange(spec.grid, dtype=float)
    margin = (spec.k // 2) * spec.shift_step + 3 * spec.peak_width
    lo, hi = margin, spec.grid - 1 - margin
    if hi <= lo:
        raise ValueError("grid too short for the requested shifts and peak width")
    out = np.zeros((spec.grid, spec.m))
    for j in range(spec.m):
        count = rng.integers(spec.peaks[0], spec.peaks[1] + 1)
        centers = rng.uniform(lo, hi, size=count)
        heights = rng.uniform(0.2, 1.0, size=count)
        for c, h in zip(centers, heights):
            out[:, j] += h * np.exp(-0.5 * ((t - c) / spec.peak_width) ** 2)
    return out


def shifted_dictionary(spec, base):
    """Dictionary with `k` shifted copies per molecule; column ``j*k + s`` is shift ``s``."""
    grid, m = base.shape
    cols = np.empty((grid, m * spec.k))
    for j in range(m):
        for s in range(spec.k):
            cols[:, j * spec.k + s] = np.roll(base[:, j], (s - spec.k // 2) * spec.shift_step)
    return cols


@dataclass
class ShiftedDraw:
    X: np.ndarray
    beta_star: np.ndarray
    y: np.ndarray
    y_new: np.ndarray  # same signal, fresh noise
    concentrations: np.ndarray
    true_shift: np.ndarray


def draw_shifted(spec, r):
    rng = np.random.default_rng(derive_seed(spec.seed, r, _LIBRARY))
    X = shifted_dictionary(spec, signatures(spec, rng))
    rng = np.random.default_rng(derive_seed(spec.seed, r, _TRUTH))
    shift = rng.integers(0, spec.k, size=spec.m)
    conc = rng.uniform(*spec.concentration, size=spec.m)
    beta_star = np.zeros(spec.m * spec.k)
    beta_star[np.arange(spec.m) * spec.k + shift] = conc
    signal = X @ beta_star
    noise = np.random.default_rng(derive_seed(spec.seed, r, _NOISE)).standard_normal(spec.grid)
    fresh = np.random.default_rng(derive_seed(spec.seed, r, _TEST_NOISE)) \
        .standard_normal(spec.grid)
    return ShiftedDraw(X, beta_star, signal + spec.sigma * np.abs(noise),
                       signal + spec.sigma * np.abs(fresh), conc, shift)


def _outcome(name, draw, spec, coef, support, fallback=False, meta=None):
    """``mse_beta`` is ``(1/p) ||b_hat - b*||^2``; ``mse_concentration`` compares the
    per-molecule coefficient sums with the true concentrations."""
    conc_hat = coef.reshape(spec.m, spec.k).sum(axis=1)
    truth = np.flatnonzero(draw.beta_star)
    support = np.asarray(support, dtype=np.int64)
    hits = int(np.isin(support, truth).sum())
    resid = draw.y_new - draw.X @ coef
    extra = dict(meta or {})
    extra["mse_beta"] = float(np.mean((coef - draw.beta_star) ** 2))
    extra["mse_concentration"] = float(np.mean((conc_hat - draw.concentrations) ** 2))
    return MethodOutcome(name, support.tolist(), hits, int(support.size) - hits,
                         float(np.mean(resid ** 2)), fallback, extra)


def run_shifted_dictionary(spec, methods=NMR_METHODS, config=None, n_jobs=1):
    """Compare concentration recovery across `methods` on `spec.replicates` draws.

    ``exclusive``: BIC-selected fit, thresholded to one shift per molecule.
    ``lasso``: BIC-tuned Lasso, thresholded the same way.
    ``marginal``: the shift with the largest ``|X_i^T y|`` per molecule.
    ``ols_unshifted``: OLS on the centre copies only, ignoring shifts.
    Every selected support is OLS-refit before scoring.
    """
    config = config or SolverConfig()
    sc = spec.as_scenario()
    part = spec.partition
    centre = np.arange(spec.m) * spec.k + spec.k // 2

    def one(r):
        draw = draw_shifted(spec, r)
        prob = Problem(draw.X, draw.y, part)
        out = []
        for name in methods:
            if name == "exclusive":
                sel = exclusive_bic(prob, sc, config, threshold=True)
                model = baselines.refit_selection(prob, name, np.flatnonzero(sel.thresholded),
                                                  {"lambda": sel.lam})
            elif name == "lasso":
                grid = baselines.lasso_grid(prob, spec.n_lambdas, spec.lambda_ratio)
                lam, beta, _ = baselines.lasso_bic_path(prob, grid, config,
                                                        spec.max_df_fraction)
                th = groupwise_threshold(beta, part)
                model = baselines.refit_selection(prob, name, support_of(th), {"lambda": lam})
            elif name == "marginal":
                model = baselines.groupwise_marginal(prob)
            elif name == "ols_unshifted":
                coef = np.zeros(part.p)
                coef[centre] = ols_solve(draw.X[:, centre], draw.y)
                out.append(_outcome(name, draw, spec, coef, centre))
                continue
            else:
                raise ValueError(f"unknown method {name!r}")
            out.append(_outcome(name, draw, spec, model.coefficients, model.support,
                                model.fallback, model.meta))
        return out

    results = map_replicates(one, spec.replicates, n_jobs)
    seeds = [derive_seed(spec.seed, r, _LIBRARY) for r in range(spec.replicates)]
    return ScenarioReport("shifted_dictionary", spec.to_dict(), tuple(methods), results, seeds)
