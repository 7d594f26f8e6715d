import numpy as np
import pytest

from minimax_cate import validate_problem


def random_problem(rng, G_max=5, B_choices=(0.1, 1.0, 10.0), v_range=(0.1, 10.0), G=None):
    G = int(rng.integers(1, G_max + 1)) if G is None else G
    p = rng.dirichlet(np.ones(G))
    v = rng.uniform(*v_range, size=G)
    B = float(rng.choice(B_choices))
    return validate_problem(p, v, B)


def random_correlated_problem(rng, G_max=4, B_choices=(0.1, 1.0, 10.0)):
    """Nonnegative covariances that keep diag(v) + C PSD (a Gram matrix of nonnegative factors)."""
    G = int(rng.integers(1, G_max + 1))
    F = rng.uniform(0.0, 1.0, size=(G, 3))
    M = F @ F.T + np.diag(rng.uniform(0.1, 2.0, size=G))
    v = np.diag(M).copy()
    C = M - np.diag(v)
    p = rng.dirichlet(np.ones(G))
    B = float(rng.choice(B_choices))
    return validate_problem(p, v, B, covariances=C)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def sym2():
    return validate_problem([0.5, 0.5], [1.0, 1.0], 1.0)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("tests.test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in mod.RESULTS:
            terminalreporter.write_line(line)
