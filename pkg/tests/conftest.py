import sys
import warnings
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

from exlasso.model import GroupPartition, Problem  # noqa: E402
from exlasso.solver import fit  # noqa: E402

settings.register_profile(
    "default", max_examples=60, deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture(scope="session", autouse=True)
def _warm_jit():
    # compile the numba kernels once so per-test timings are not dominated by JIT
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        fit(Problem(np.eye(3), np.ones(3), GroupPartition.singletons(3)), 0.5)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_problem(rng, n=30, sizes=(3, 4, 5), noise=0.1, density=1):
    """Gaussian design with `density` unit coefficients per group."""
    part = GroupPartition.contiguous(sizes)
    X = rng.standard_normal((n, part.p))
    beta = np.zeros(part.p)
    for g in part.groups:
        beta[rng.choice(g, size=min(density, g.size), replace=False)] = 1.0
    y = X @ beta + noise * rng.standard_normal(n)
    return Problem(X, y, part), beta


@pytest.fixture
def small_problem(rng):
    return make_problem(rng)[0]


# criterion lines collected by the acceptance tests
ACCEPTANCE_LINES = {}


def acceptance_order(key):
    # "7b" after "7a", "10" after "9"
    return int("".join(ch for ch in key if ch.isdigit())), key


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES, key=acceptance_order):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
