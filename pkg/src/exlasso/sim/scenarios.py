"""Replicated selection experiments on Toeplitz-correlated designs.

Each replicate draws a design, a sparse truth and a response, runs a set of
selectors, OLS-refits every selected support and scores it on a fresh test
draw from the same model.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .. import baselines
from ..errors import ReplicateError
from ..model import GroupPartition, Problem
from ..prox import _thread_cap
from ..selection import select_lambda
from ..solver import SolverConfig, default_lambda_grid, fit, fit_path
from .designs import ToeplitzSpec, derive_seed, sample_design, toeplitz_sigma

ONE_PER_GROUP_METHODS = (
    "exclusive", "lasso", "marginal", "group_marginal",
    "thresh_exclusive", "thresh_lasso", "thresh_path",
)
MULTI_PER_GROUP_METHODS = ("exclusive", "lasso", "group_lasso")

# streams drawn from derive_seed(base, replicate, stream)
_DESIGN, _TRUTH, _NOISE, _TEST_DESIGN, _TEST_NOISE = range(5)


@dataclass(frozen=True)
class ScenarioSpec:
    """One simulation setting.

    `true_per_group` gives how many true variables each group holds; ``None``
    means one per group. With ``shuffle_layout`` the counts are permuted
    across groups in every replicate. Positions inside a group are uniform.
    `max_df_fraction` stops BIC-tuned paths once the degrees of freedom reach
    that fraction of `n` (``None`` keeps the whole grid).
    """

    n: int = 100
    group_sizes: tuple = (20, 20, 20, 20, 20)
    w: float = 0.6
    b: float = 0.6
    true_per_group: tuple | None = None
    shuffle_layout: bool = True
    magnitude: float = 1.0
    sigma: float = 1.0
    replicates: int = 50
    n_test: int = 1000
    seed: int = 0
    max_df_fraction: float | None = 0.5
    n_lambdas: int = 100
    lambda_ratio: float = 1e-4

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")
        if self.n < 1 or self.replicates < 1 or self.n_test < 1:
            raise ValueError("n, replicates and n_test must be positive")
        object.__setattr__(self, "group_sizes", tuple(int(s) for s in self.group_sizes))
        if self.true_per_group is not None:
            counts = tuple(int(c) for c in self.true_per_group)
            if len(counts) != len(self.group_sizes):
                raise ValueError("true_per_group needs one count per group")
            if any(c < 1 for c in counts):
                raise ValueError("every group needs at least one true variable")
            if any(c > s for c, s in zip(sorted(counts), sorted(self.group_sizes))):
                raise ValueError("a group cannot hold more true variables than members")
            object.__setattr__(self, "true_per_group", counts)
        ToeplitzSpec(self.partition, self.w, self.b)

    @property
    def partition(self):
        return GroupPartition.contiguous(self.group_sizes)

    @property
    def p(self):
        return sum(self.group_sizes)

    @property
    def n_true(self):
        return len(self.group_sizes) if self.true_per_group is None else sum(self.true_per_group)

    def sigma_matrix(self):
        return toeplitz_sigma(ToeplitzSpec(self.partition, self.w, self.b))

    def to_dict(self):
        out = asdict(self)
        out["group_sizes"] = list(self.group_sizes)
        if self.true_per_group is not None:
            out["true_per_group"] = list(self.true_per_group)
        return out

    @classmethod
    def from_dict(cls, d):
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        for key in ("group_sizes", "true_per_group"):
            if known.get(key) is not None:
                known[key] = tuple(known[key])
        return cls(**known)


@dataclass
class Replicate:
    index: int
    problem: Problem
    beta_star: np.ndarray
    X_test: np.ndarray
    y_test: np.ndarray

    @property
    def true_support(self):
        return np.flatnonzero(self.beta_star)


def draw_replicate(spec, r, sigma_matrix=None):
    """Training problem and test draw for replicate `r`; deterministic in (spec, r)."""
    sig = spec.sigma_matrix() if sigma_matrix is None else sigma_matrix
    part = spec.partition
    rng = np.random.default_rng(derive_seed(spec.seed, r, _TRUTH))
    counts = np.ones(part.n_groups, dtype=int) if spec.true_per_group is None \
        else np.array(spec.true_per_group)
    if spec.shuffle_layout:
        counts = rng.permutation(counts)
    beta_star = np.zeros(spec.p)
    for g, c in zip(part.groups, counts):
        beta_star[rng.choice(g, size=c, replace=False)] = spec.magnitude

    X = sample_design(sig, spec.n, derive_seed(spec.seed, r, _DESIGN))
    noise = np.random.default_rng(derive_seed(spec.seed, r, _NOISE)).standard_normal(spec.n)
    y = X @ beta_star + spec.sigma * noise
    X_test = sample_design(sig, spec.n_test, derive_seed(spec.seed, r, _TEST_DESIGN))
    test_noise = np.random.default_rng(derive_seed(spec.seed, r, _TEST_NOISE)) \
        .standard_normal(spec.n_test)
    y_test = X_test @ beta_star + spec.sigma * test_noise
    return Replicate(r, Problem(X, y, part), beta_star, X_test, y_test)


@dataclass
class MethodOutcome:
    method: str
    support: list
    true_vars: int
    false_vars: int
    pred_error: float
    fallback: bool = False
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


def score(model, rep):
    """Counts of true and false selections and test-set mean squared error."""
    support = np.asarray(model.support, dtype=np.int64)
    hits = int(np.isin(support, rep.true_support).sum())
    resid = rep.y_test - rep.X_test @ model.coefficients
    return MethodOutcome(
        model.method, support.tolist(), hits, int(support.size) - hits,
        float(np.mean(resid ** 2)), bool(model.fallback), dict(model.meta),
    )


def exclusive_bic(problem, spec, config=None, threshold=False):
    """BIC-selected Exclusive Lasso fit on the default grid, optionally thresholded."""
    grid = default_lambda_grid(problem, spec.n_lambdas, spec.lambda_ratio)
    max_df = None if spec.max_df_fraction is None else spec.max_df_fraction * problem.n
    path = fit_path(problem, grid, config, max_df=max_df)
    sel = select_lambda(path, "bic", problem.partition, threshold=threshold)
    return sel


def _selectors(spec, config, which):
    k = spec.n_true

    def excl_fixed(problem):
        lam = baselines.lasso_grid(problem, 1)[0]
        f = fit(problem, lam, config)
        return baselines.refit_selection(problem, "exclusive", f.support, {"lambda": f.lam})

    def excl_bic(problem):
        sel = exclusive_bic(problem, spec, config)
        return baselines.refit_selection(problem, "exclusive", sel.fit.support,
                                         {"lambda": sel.lam, "path_length": len(sel.values)})

    def excl_thresh(problem):
        sel = exclusive_bic(problem, spec, config, threshold=True)
        return baselines.refit_selection(problem, "thresh_exclusive",
                                         np.flatnonzero(sel.thresholded), {"lambda": sel.lam})

    def lasso_bic(problem):
        grid = baselines.lasso_grid(problem, spec.n_lambdas, spec.lambda_ratio)
        m = baselines.lasso_bic(problem, grid, config, spec.max_df_fraction)
        m.method = "lasso"
        return m

    table = {
        "exclusive": excl_fixed if which == "one" else excl_bic,
        "lasso": (lambda pr: _renamed(baselines.lasso_first_k(pr, k, config=config), "lasso"))
        if which == "one" else lasso_bic,
        "marginal": lambda pr: baselines.marginal_regression(pr, k),
        "group_marginal": baselines.groupwise_marginal,
        "thresh_exclusive": excl_thresh,
        "thresh_lasso": lambda pr: baselines.thresholded_lasso(pr, config=config),
        "thresh_path": lambda pr: baselines.thresholded_reg_path(pr, config=config),
        "group_lasso": lambda pr: baselines.groupwise_lasso(
            pr, config, spec.n_lambdas, spec.lambda_ratio, spec.max_df_fraction),
    }
    return table


def _renamed(model, name):
    model.method = name
    return model


@dataclass
class ScenarioReport:
    """Per-replicate outcomes plus mean/SD summaries per method."""

    name: str
    spec: dict
    methods: tuple
    replicates: list  # one list of MethodOutcome per replicate, in `methods` order
    seeds: list

    def values(self, method, key):
        j = self.methods.index(method)
        return np.array([rep[j].to_dict()[key] if key in ("true_vars", "false_vars", "pred_error")
                         else rep[j].extra[key] for rep in self.replicates], dtype=float)

    def summary(self):
        """Mean and sample SD (ddof=1, 0 for a single replicate) of each metric."""
        out = {}
        for m in self.methods:
            row = {}
            for key in self.metric_names():
                v = self.values(m, key)
                row[f"{key}_mean"] = float(np.mean(v))
                row[f"{key}_sd"] = float(np.std(v, ddof=1)) if v.size > 1 else 0.0
            out[m] = row
        return out

    def metric_names(self):
        names = ["true_vars", "false_vars", "pred_error"]
        extra = self.replicates[0][0].extra if self.replicates else {}
        return names + [k for k in ("mse_beta", "mse_concentration") if k in extra]

    def summary_rows(self):
        return [{"method": m, "replicates": len(self.replicates), **v}
                for m, v in self.summary().items()]

    def to_dict(self):
        return {
            "name": self.name,
            "spec": self.spec,
            "methods": list(self.methods),
            "seeds": list(self.seeds),
            "summary": self.summary(),
            "replicates": [[o.to_dict() for o in rep] for rep in self.replicates],
        }


def map_replicates(func, count, n_jobs=1):
    """``[func(r) for r in range(count)]``, optionally on threads; order is preserved."""
    n_jobs = min(max(1, n_jobs), _thread_cap(), count)

    def guarded(r):
        try:
            return func(r)
        except ReplicateError:
            raise
        except Exception as exc:
            raise ReplicateError(r, exc) from exc

    if n_jobs <= 1:
        return [guarded(r) for r in range(count)]
    with ThreadPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(guarded, range(count)))


def _run(spec, name, methods, which, config, n_jobs):
    config = config or SolverConfig()
    table = _selectors(spec, config, which)
    unknown = [m for m in methods if m not in table]
    if unknown:
        raise ValueError(f"unknown methods {unknown}")
    sig = spec.sigma_matrix()

    def one(r):
        rep = draw_replicate(spec, r, sig)
        return [score(table[m](rep.problem), rep) for m in methods]

    results = map_replicates(one, spec.replicates, n_jobs)
    seeds = [derive_seed(spec.seed, r, _DESIGN) for r in range(spec.replicates)]
    return ScenarioReport(name, spec.to_dict(), tuple(methods), results, seeds)


def run_scenario_one_per_group(spec, methods=ONE_PER_GROUP_METHODS, config=None, n_jobs=1):
    """One true variable per group; the seven selectors of the first comparison.

    ``exclusive`` fits at ``max_i |X_i^T y|``; ``thresh_exclusive`` is the
    BIC-selected fit thresholded to one variable per group.
    """
    if spec.true_per_group is not None and any(c != 1 for c in spec.true_per_group):
        raise ValueError("layout must have exactly one true variable per group")
    return _run(spec, "one_per_group", methods, "one", config, n_jobs)


def run_scenario_multi_per_group(spec, methods=MULTI_PER_GROUP_METHODS, config=None, n_jobs=1):
    """Several true variables in some groups; BIC-tuned Exclusive Lasso, Lasso and
    group-wise Lasso."""
    if spec.true_per_group is None:
        spec = ScenarioSpec(**{**spec.to_dict(), "true_per_group": (1, 1, 1, 2, 2)})
    return _run(spec, "multi_per_group", methods, "multi", config, n_jobs)


def one_per_group_spec(w=0.6, b=0.6, **kw):
    return ScenarioSpec(w=w, b=b, **kw)


def multi_per_group_spec(w=0.6, b=0.6, **kw):
    return ScenarioSpec(w=w, b=b, true_per_group=(1, 1, 1, 2, 2), **kw)
