import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from exlasso.errors import IndefiniteCovariance, ReplicateError
from exlasso.model import GroupPartition
from exlasso.sim.bounds import (
    BoundInputs,
    BoundSample,
    bound_samples,
    check_prediction_bound,
    collect_kept_samples,
    estimated_mspe,
    estimated_mspe_bound,
    mspe_trend,
    population_mspe_bound,
)
from exlasso.sim.designs import (
    ToeplitzSpec,
    derive_seed,
    design_factor,
    sample_design,
    toeplitz_sigma,
)
from exlasso.sim.dof import DfSweepDesign, df_monte_carlo, df_sweep
from exlasso.sim.nmr import (
    ShiftedDictionarySpec,
    draw_shifted,
    run_shifted_dictionary,
    shifted_dictionary,
    signatures,
)
from exlasso.sim.scenarios import (
    ScenarioSpec,
    draw_replicate,
    map_replicates,
    run_scenario_multi_per_group,
    run_scenario_one_per_group,
    one_per_group_spec,
    multi_per_group_spec,
)

SMALL = dict(n=40, group_sizes=(5, 5, 5), replicates=2, n_test=50, n_lambdas=15,
             lambda_ratio=1e-2)


# designs

def test_derive_seed_is_deterministic_and_path_sensitive():
    assert derive_seed(3, 1, 2) == derive_seed(3, 1, 2)
    assert len({derive_seed(3, 1, 2), derive_seed(3, 2, 1), derive_seed(4, 1, 2)}) == 3


def test_toeplitz_by_hand():
    part = GroupPartition.contiguous([2, 2])
    S = toeplitz_sigma(ToeplitzSpec(part, 0.5, 0.2))
    expect = np.array([
        [1, 0.5, 0.04, 0.008],
        [0.5, 1, 0.2, 0.04],
        [0.04, 0.2, 1, 0.5],
        [0.008, 0.04, 0.5, 1],
    ])
    assert np.allclose(S, expect)


@pytest.mark.parametrize("w, b", [(1.0, 0.5), (0.5, -0.1)])
def test_toeplitz_rejects_rates(w, b):
    with pytest.raises(ValueError):
        ToeplitzSpec(GroupPartition.singletons(2), w, b)


@given(st.lists(st.integers(1, 6), min_size=1, max_size=5),
       st.floats(0, 0.95), st.floats(0, 0.95))
def test_toeplitz_symmetric_unit_diagonal(sizes, w, b):
    S = toeplitz_sigma(ToeplitzSpec(GroupPartition.contiguous(sizes), w, b))
    assert np.array_equal(S, S.T)
    assert np.all(np.diag(S) == 1.0)
    assert np.all((S >= 0) & (S <= 1))


def test_design_factor_reconstructs(rng):
    A = rng.standard_normal((5, 5))
    S = A @ A.T + np.eye(5)
    F = design_factor(S)
    assert np.allclose(F @ F.T, S)
    bad = np.array([[1.0, 0.9, 0.0], [0.9, 1.0, 0.9], [0.0, 0.9, 1.0]])
    with pytest.warns(IndefiniteCovariance):
        F = design_factor(bad)
    fixed = F @ F.T
    assert np.linalg.eigvalsh(fixed)[0] >= -1e-12
    # clipping moves the matrix by exactly the negative eigenvalue's magnitude
    assert np.linalg.norm(fixed - bad) == pytest.approx(-np.linalg.eigvalsh(bad)[0])


def test_sample_design_deterministic_and_covariance():
    S = toeplitz_sigma(ToeplitzSpec(GroupPartition.contiguous([3, 3]), 0.6, 0.3))
    a = sample_design(S, 20000, 7)
    assert np.array_equal(a, sample_design(S, 20000, 7))
    assert not np.array_equal(a, sample_design(S, 20000, 8))
    assert np.allclose(np.cov(a, rowvar=False), S, atol=0.05)
    with pytest.raises(ValueError):
        sample_design(S, 0, 1)


# scenarios

def test_spec_validation_and_round_trip():
    spec = multi_per_group_spec(n=50)
    assert spec.true_per_group == (1, 1, 1, 2, 2) and spec.n_true == 7 and spec.p == 100
    assert ScenarioSpec.from_dict(spec.to_dict()) == spec
    assert one_per_group_spec().n_true == 5
    with pytest.raises(ValueError):
        ScenarioSpec(true_per_group=(1, 2))
    with pytest.raises(ValueError):
        ScenarioSpec(true_per_group=(0, 1, 1, 1, 1))
    with pytest.raises(ValueError):
        ScenarioSpec(w=1.2)
    with pytest.raises(ValueError):
        ScenarioSpec(sigma=-1)


def test_draw_replicate_layout_and_determinism():
    spec = ScenarioSpec(**SMALL, true_per_group=(1, 2, 1))
    rep = draw_replicate(spec, 1)
    again = draw_replicate(spec, 1)
    assert np.array_equal(rep.problem.X, again.problem.X)
    assert np.array_equal(rep.y_test, again.y_test)
    counts = np.bincount(spec.partition.group_of[rep.true_support], minlength=3)
    assert sorted(counts) == [1, 1, 2]
    assert rep.X_test.shape == (50, 15)
    other = draw_replicate(spec, 0)
    assert not np.array_equal(rep.problem.X, other.problem.X)


def test_map_replicates_order_and_errors():
    assert map_replicates(lambda r: r * r, 5, n_jobs=3) == [0, 1, 4, 9, 16]

    def boom(r):
        if r == 2:
            raise ValueError("bad")
        return r

    with pytest.raises(ReplicateError) as info:
        map_replicates(boom, 4)
    assert info.value.replicate == 2


def test_one_per_group_run():
    spec = ScenarioSpec(**SMALL)
    rep = run_scenario_one_per_group(spec)
    assert len(rep.replicates) == 2 and len(rep.seeds) == 2
    summary = rep.summary()
    assert set(summary) == set(rep.methods)
    for m in rep.methods:
        tv = rep.values(m, "true_vars")
        assert np.all((tv >= 0) & (tv <= 3))
    # thresholded selectors return exactly one variable per group
    for m in ("thresh_exclusive", "thresh_lasso", "thresh_path", "group_marginal"):
        assert np.all(rep.values(m, "true_vars") + rep.values(m, "false_vars") == 3)
    d = rep.to_dict()
    assert d["name"] == "one_per_group" and len(d["replicates"]) == 2
    rows = rep.summary_rows()
    assert {"method", "true_vars_mean", "pred_error_sd"} <= set(rows[0])
    with pytest.raises(ValueError):
        run_scenario_one_per_group(ScenarioSpec(**SMALL, true_per_group=(1, 2, 1)))
    with pytest.raises(ValueError):
        run_scenario_one_per_group(spec, methods=("ridge",))


def test_runs_reproducible_across_threads():
    spec = ScenarioSpec(**SMALL)
    a = run_scenario_one_per_group(spec, methods=("exclusive", "marginal"))
    b = run_scenario_one_per_group(spec, methods=("exclusive", "marginal"), n_jobs=2)
    assert a.to_dict() == b.to_dict()


def test_multi_per_group_run_defaults_layout():
    spec = ScenarioSpec(n=60, group_sizes=(5,) * 5, replicates=1, n_test=30, n_lambdas=15,
                        lambda_ratio=1e-2)
    rep = run_scenario_multi_per_group(spec)
    assert rep.spec["true_per_group"] == [1, 1, 1, 2, 2]
    assert rep.methods == ("exclusive", "lasso", "group_lasso")


# degrees of freedom

def test_df_sweep_design_build():
    X, beta_star, part, lambdas = DfSweepDesign().build()
    assert X.shape == (50, 20) and part.n_groups == 4
    assert np.array_equal(np.bincount(part.group_of[np.flatnonzero(beta_star)]), [1, 1, 1, 1])
    assert lambdas.size == 15 and np.all(np.diff(lambdas) < 0)


def test_df_monte_carlo_singletons_match_ridge_trace():
    # singleton groups: the fit is linear in y and df is exactly the ridge trace
    rng = np.random.default_rng(0)
    X = rng.standard_normal((20, 4))
    part = GroupPartition.singletons(4)
    lams = np.array([5.0, 1.0])
    mc = df_monte_carlo(X, np.ones(4), part, lams, B=400, seed=3)
    for lam, df in zip(lams, mc.df_estimate):
        ref = np.trace(X @ np.linalg.solve(X.T @ X + lam * np.eye(4), X.T))
        assert df == pytest.approx(ref, rel=1e-6)
    assert np.all(mc.within(4))
    assert len(mc.rows()) == 2


def test_df_sweep_small_run():
    mc = df_sweep(DfSweepDesign(n_lambdas=5), B=60, seed=2)
    assert mc.df_mc.shape == (5,) and mc.draws == 60
    assert np.all(mc.stderr > 0)
    plug = df_sweep(DfSweepDesign(n_lambdas=5), B=60, seed=2, estimator="plugin")
    assert np.allclose(plug.df_estimate, mc.df_estimate)


def test_df_monte_carlo_argument_checks():
    X = np.eye(3)
    part = GroupPartition.singletons(3)
    with pytest.raises(ValueError):
        df_monte_carlo(X, np.ones(3), part, [1.0], B=1)
    with pytest.raises(ValueError):
        df_monte_carlo(X, np.ones(3), part, [1.0], sigma=0)
    with pytest.raises(ValueError):
        df_monte_carlo(X, np.ones(3), part, [1.0], estimator="naive")


# bounds

def test_bound_formulas_by_hand():
    inp = BoundInputs(K=2.0, M=3.0, sigma=0.5, n_groups=4)
    expect = 2 * 6 * 3 * 0.5 * np.sqrt(2 * np.log(20) / 100)
    assert estimated_mspe_bound(inp, 100, 10) == pytest.approx(expect)
    extra = 8 * 36 * 9 * np.sqrt(20 * np.log(200) / 100)
    assert population_mspe_bound(inp, 100, 10) == pytest.approx(expect + extra)
    with pytest.raises(ValueError):
        BoundInputs(K=-1, M=1, sigma=1, n_groups=1)


def test_estimated_mspe():
    X = np.array([[1.0, 0.0], [0.0, 2.0]])
    assert estimated_mspe(X, [1.0, 1.0], [0.0, 0.0]) == pytest.approx(2.5)


def test_check_prediction_bound_skips_caveat_replicates():
    part = GroupPartition.contiguous([2])
    X = np.eye(2)
    kept = BoundSample(X, np.array([1.0, 0.0]), np.array([0.5, 0.0]), 1.0, part)
    skipped = BoundSample(X, np.array([0.1, 0.0]), np.array([1.0, 0.0]), 1.0, part)
    assert not kept.skipped and skipped.skipped
    rep = check_prediction_bound([kept, skipped])
    assert rep.n_used == 1 and rep.n_skipped == 1
    assert rep.lhs == pytest.approx(0.125)
    assert rep.inputs.K == pytest.approx(0.5) and rep.inputs.M == 1.0
    assert rep.satisfied
    none = check_prediction_bound([skipped])
    assert none.n_used == 0 and not none.satisfied and np.isnan(none.lhs)
    assert rep.to_dict()["n_used"] == 1


def test_bound_sampling_helpers():
    spec = ScenarioSpec(**SMALL)
    samples = bound_samples(spec, 2)
    assert len(samples) == 2
    kept, drawn = collect_kept_samples(spec, target=1, max_replicates=3)
    assert len(kept) <= 1 and 1 <= drawn <= 3
    assert all(not s.skipped for s in kept)
    trend = mspe_trend(ns=(40, 80), base=spec, replicates=1)
    assert [n for n, _ in trend] == [40, 80]


# shifted dictionary

NMR_SMALL = dict(m=3, k=3, grid=120, replicates=2, n_lambdas=20, lambda_ratio=1e-3)


def test_shifted_dictionary_structure():
    spec = ShiftedDictionarySpec(**NMR_SMALL)
    base = signatures(spec, np.random.default_rng(0))
    assert base.shape == (120, 3) and np.all(base >= 0)
    D = shifted_dictionary(spec, base)
    assert D.shape == (120, 9)
    assert np.array_equal(D[:, 1], base[:, 0])
    assert np.array_equal(D[:, 2], np.roll(base[:, 0], 2))
    assert np.array_equal(D[:, 0], np.roll(base[:, 0], -2))


def test_shifted_spec_validation():
    with pytest.raises(ValueError):
        ShiftedDictionarySpec(k=4)
    with pytest.raises(ValueError):
        ShiftedDictionarySpec(sigma=-1)
    spec = ShiftedDictionarySpec(**NMR_SMALL)
    assert ShiftedDictionarySpec.from_dict(spec.to_dict()) == spec
    with pytest.raises(ValueError):
        signatures(ShiftedDictionarySpec(grid=20), np.random.default_rng(0))


def test_draw_shifted_truth():
    spec = ShiftedDictionarySpec(**NMR_SMALL)
    d = draw_shifted(spec, 0)
    assert np.count_nonzero(d.beta_star) == 3
    assert np.allclose(d.beta_star.reshape(3, 3).sum(axis=1), d.concentrations)
    # noise is nonnegative
    assert np.all(d.y >= d.X @ d.beta_star)
    assert np.array_equal(d.y, draw_shifted(spec, 0).y)


def test_run_shifted_dictionary_small():
    spec = ShiftedDictionarySpec(**NMR_SMALL)
    rep = run_shifted_dictionary(spec)
    assert "mse_beta" in rep.metric_names()
    assert rep.values("exclusive", "mse_beta").shape == (2,)
    with pytest.raises(ReplicateError):
        run_shifted_dictionary(spec, methods=("ridge",))


# further examples

def test_toeplitz_values_and_lag_one_correlation():
    part = GroupPartition.contiguous([10, 10])
    S = toeplitz_sigma(ToeplitzSpec(part, 0.9, 0.6))
    assert S[0, 2] == pytest.approx(0.81)
    assert S[9, 10] == pytest.approx(0.6)
    # this pair gives an indefinite matrix; sampling uses its nearest PSD matrix
    assert np.linalg.eigvalsh(S)[0] < 0
    with pytest.warns(IndefiniteCovariance):
        X = sample_design(S, 5000, 11)
    lag1 = np.mean([np.corrcoef(X[:, i], X[:, i + 1])[0, 1] for i in range(9)])
    assert abs(lag1 - 0.9) < 0.03
    flat = toeplitz_sigma(ToeplitzSpec(part, 0.5, 0.5))
    lag = np.abs(np.subtract.outer(np.arange(20), np.arange(20)))
    assert np.allclose(flat, 0.5 ** lag)


def test_noiseless_independent_design_every_method_recovers_truth():
    spec = ScenarioSpec(n=100, group_sizes=(20,) * 5, w=0.0, b=0.0, sigma=1e-6,
                        replicates=2, n_test=50, n_lambdas=30, lambda_ratio=1e-2)
    rep = run_scenario_one_per_group(spec)
    for m in rep.methods:
        assert np.all(rep.values(m, "true_vars") == 5), m


def test_single_replicate_report_is_reproducible():
    spec = ScenarioSpec(**{**SMALL, "replicates": 1})
    a = run_scenario_multi_per_group(ScenarioSpec(**{**SMALL, "replicates": 1,
                                                     "true_per_group": (1, 2, 1)}))
    b = run_scenario_multi_per_group(ScenarioSpec(**{**SMALL, "replicates": 1,
                                                     "true_per_group": (1, 2, 1)}))
    assert a.to_dict() == b.to_dict()
    assert run_scenario_one_per_group(spec).to_dict() == run_scenario_one_per_group(spec).to_dict()


def test_true_plus_false_equals_selection_size():
    rep = run_scenario_one_per_group(ScenarioSpec(**SMALL))
    for outcomes in rep.replicates:
        for o in outcomes:
            assert o.true_vars + o.false_vars == len(o.support)


def test_df_monte_carlo_zero_lambda_and_trend():
    rng = np.random.default_rng(5)
    X = rng.standard_normal((30, 6))
    part = GroupPartition.contiguous([3, 3])
    beta = np.array([1.0, 0, 0, 0, 1.0, 0])
    mc = df_monte_carlo(X, beta, part, [0.0], B=300, seed=1)
    assert abs(mc.df_mc[0] - 6.0) <= 3 * mc.stderr[0]
    assert mc.df_estimate[0] == pytest.approx(6.0)
    grid = np.geomspace(50.0, 0.05, 6)
    trend = df_monte_carlo(X, beta, part, grid, B=200, seed=2)
    # df grows as the penalty weakens, allowing Monte-Carlo noise
    assert np.all(np.diff(trend.df_mc) > -3 * trend.stderr[1:])
    assert trend.df_mc[-1] > trend.df_mc[0] + 2


def test_df_stderr_scales_with_draws():
    design = DfSweepDesign(n_lambdas=3)
    small = df_sweep(design, B=100, seed=4)
    large = df_sweep(design, B=400, seed=4)
    ratio = small.stderr / large.stderr
    assert np.all(np.abs(ratio - 2.0) <= 0.3 * 2.0)


def test_bound_noiseless_small_lambda_has_tiny_error():
    from exlasso.model import Problem
    from exlasso.solver import SolverConfig, fit

    spec = ScenarioSpec(**SMALL)
    rep = draw_replicate(spec, 0)
    prob = Problem(rep.problem.X, rep.problem.X @ rep.beta_star, spec.partition)
    f = fit(prob, 0.0, SolverConfig(tol=1e-13, inner_tol=1e-13))
    s = BoundSample(prob.X, f.beta, rep.beta_star, 0.0, spec.partition)
    inputs = BoundInputs(K=s.penalty_hat, M=1.0, sigma=0.0, n_groups=3)
    report = check_prediction_bound([s], inputs, atol=1e-20)
    assert report.rhs == 0.0 and report.lhs < 1e-20 and report.satisfied


def test_mspe_decreases_with_n():
    base = ScenarioSpec(n=100, group_sizes=(10,) * 5, n_test=10, n_lambdas=30,
                        lambda_ratio=1e-3)
    trend = mspe_trend(ns=(100, 400, 1600), base=base, replicates=3)
    vals = [v for _, v in trend]
    assert vals[0] > vals[1] > vals[2]


def test_zero_shift_picks_smallest_index():
    spec = ShiftedDictionarySpec(**{**NMR_SMALL, "shift_step": 0, "replicates": 1})
    rep = run_shifted_dictionary(spec, methods=("exclusive", "marginal", "lasso"))
    picks = {o.method: o.support for o in rep.replicates[0]}
    assert picks["marginal"] == [0, 3, 6]
    assert picks["lasso"] == [0, 3, 6]
    # identical columns make the Exclusive Lasso fit non-unique; the pick is
    # still one per group and reproducible
    again = run_shifted_dictionary(spec, methods=("exclusive",))
    assert again.replicates[0][0].support == picks["exclusive"]
    assert [i // 3 for i in picks["exclusive"]] == [0, 1, 2]


def test_shifted_report_is_reproducible():
    spec = ShiftedDictionarySpec(**{**NMR_SMALL, "replicates": 1})
    assert run_shifted_dictionary(spec).to_dict() == run_shifted_dictionary(spec).to_dict()
