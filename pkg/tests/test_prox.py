import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from oracles import prox_enumerate, prox_group_enumerate, prox_objective

from exlasso.errors import MaxSweepsExceeded
from exlasso.model import GroupPartition
from exlasso.prox import prox_exclusive, prox_group, soft_threshold


def test_soft_threshold():
    z = np.array([-3.0, -0.5, 0.0, 0.5, 3.0])
    assert np.allclose(soft_threshold(z, 1.0), [-2.0, 0.0, 0.0, 0.0, 2.0])
    assert soft_threshold(2.5, 0.5) == pytest.approx(2.0)


def test_prox_group_single_coordinate_is_shrinkage():
    # one coordinate: argmin 0.5 (b - z)^2 + 0.5 lam b^2 = z / (1 + lam)
    assert prox_group(np.array([3.0]), 2.0)[0] == pytest.approx(1.0)


def test_prox_group_equal_entries_shrink_together():
    # z = (1, 1): both coordinates stay active at 1 / (1 + 2 lam)
    for lam in (0.5, 1.0, 10.0):
        b = prox_group(np.array([1.0, 1.0]), lam, tol=1e-14)
        assert np.allclose(b, 1.0 / (1.0 + 2.0 * lam), atol=1e-10)


def test_prox_group_large_lambda_keeps_dominant_entry():
    b = prox_group(np.array([5.0, 1.0, -0.5]), 100.0, tol=1e-14)
    assert b[0] == pytest.approx(5.0 / 101.0, rel=1e-8)
    assert b[1] == 0.0 and b[2] == 0.0


def test_prox_group_zero_lambda_is_identity(rng):
    z = rng.standard_normal(6)
    assert np.allclose(prox_group(z, 0.0), z)


def test_prox_group_rejects_bad_arguments():
    with pytest.raises(ValueError):
        prox_group(np.ones(2), -1.0)
    with pytest.raises(ValueError):
        prox_group(np.ones(2), 1.0, tol=0.0)


@pytest.mark.parametrize("lam", [0.1, 1.0, 10.0])
def test_prox_group_matches_enumeration(rng, lam):
    for _ in range(30):
        z = rng.standard_normal(rng.integers(1, 7)) * 3
        b = prox_group(z, lam, tol=1e-14)
        ref = prox_group_enumerate(z, lam)
        assert np.allclose(b, ref, atol=1e-8)


def test_prox_group_trace_is_monotone(rng):
    z = rng.standard_normal(6)
    beta, sweeps, change, trace = prox_group(z, 1.0, tol=1e-12, trace=True)
    assert trace.size == sweeps * z.size
    assert np.all(np.diff(trace) <= 1e-12 * (1 + np.abs(trace[:-1])))
    assert trace[-1] == pytest.approx(0.5 * np.sum((beta - z) ** 2)
                                      + 0.5 * np.abs(beta).sum() ** 2, rel=1e-12)


def test_prox_group_warns_on_sweep_limit():
    z = np.array([1.0, 0.99, 0.98, 0.97])
    with pytest.warns(MaxSweepsExceeded):
        prox_group(z, 0.01, tol=1e-15, max_sweeps=1)


def test_prox_group_warm_start_gives_same_point(rng):
    z = rng.standard_normal(5)
    cold = prox_group(z, 0.7, tol=1e-14)
    warm = prox_group(z, 0.7, tol=1e-14, init=cold + 0.1)
    assert np.allclose(cold, warm, atol=1e-10)


def test_prox_exclusive_result_fields(rng):
    part = GroupPartition.contiguous([3, 2, 4])
    z = rng.standard_normal(part.p)
    res = prox_exclusive(z, 0.5, part, tol=1e-12)
    assert res.minimizer.shape == (9,)
    assert res.sweeps.shape == (3,) and np.all(res.sweeps >= 1)
    assert not res.max_sweeps_hit
    assert np.all(res.tolerance >= 1e-12)


def test_prox_exclusive_rejects_wrong_shape():
    with pytest.raises(ValueError):
        prox_exclusive(np.ones(3), 1.0, GroupPartition.contiguous([2]))


def test_prox_exclusive_threads_match_sequential(rng, monkeypatch):
    monkeypatch.setenv("EXLASSO_THREADS", "4")
    part = GroupPartition.contiguous([5] * 8)
    z = rng.standard_normal(part.p)
    a = prox_exclusive(z, 0.3, part).minimizer
    b = prox_exclusive(z, 0.3, part, n_jobs=4).minimizer
    assert np.array_equal(a, b)


def test_prox_exclusive_separates_over_groups(rng):
    part = GroupPartition([[0, 3], [1, 2, 4]])
    z = rng.standard_normal(5)
    full = prox_exclusive(z, 2.0, part, tol=1e-14).minimizer
    for g in part.groups:
        assert np.allclose(full[g], prox_group(z[g], 2.0, tol=1e-14), atol=1e-14)


@given(
    st.lists(st.floats(-10, 10, allow_nan=False), min_size=1, max_size=8),
    st.sampled_from([0.1, 1.0, 10.0]),
    st.integers(0, 10**6),
)
def test_prox_matches_enumeration_property(values, lam, seed):
    z = np.array(values)
    labels = np.random.default_rng(seed).integers(0, 3, z.size)
    part = GroupPartition.from_labels(labels)
    with warnings.catch_warnings():
        warnings.simplefilter("error", MaxSweepsExceeded)
        b = prox_exclusive(z, lam, part, tol=1e-13).minimizer
    ref = prox_enumerate(z, lam, part.groups)
    assert prox_objective(b, z, lam, part.groups) <= prox_objective(ref, z, lam, part.groups) + 1e-9
    assert np.allclose(b, ref, atol=1e-6)


@given(st.lists(st.floats(-10, 10, allow_nan=False), min_size=1, max_size=8),
       st.floats(0.01, 20))
def test_prox_sign_and_magnitude_properties(values, lam):
    z = np.array(values)
    b = prox_group(z, lam, tol=1e-13)
    # the prox never flips a sign and never grows a coordinate
    assert np.all(b * z >= 0)
    assert np.all(np.abs(b) <= np.abs(z) + 1e-12)
    # ordering of magnitudes is preserved
    order = np.argsort(np.abs(z))
    assert np.all(np.diff(np.abs(b[order])) >= -1e-9)


@given(st.lists(st.floats(-10, 10, allow_nan=False), min_size=2, max_size=6),
       st.floats(0.01, 20))
def test_prox_is_nonexpansive(values, lam):
    z1 = np.array(values)
    z2 = z1[::-1].copy()
    b1 = prox_group(z1, lam, tol=1e-14)
    b2 = prox_group(z2, lam, tol=1e-14)
    assert np.linalg.norm(b1 - b2) <= np.linalg.norm(z1 - z2) + 1e-8
