import math

import numpy as np
import pytest

from minimax_cate import GridSpec, grid_search, solve_minimax, validate_problem, worst_case_mse
from minimax_cate.errors import ResolutionTooCoarse, TooManyGroups
from minimax_cate.oracle import axis_lattice

from .conftest import random_problem


def test_axis_lattice_includes_endpoint():
    assert axis_lattice(0.25, 0.1) == pytest.approx([0, 0.1, 0.2, 0.25])
    assert axis_lattice(0.3, 0.1)[-1] == 0.3
    assert len(axis_lattice(0.3, 0.1)) == 4
    assert axis_lattice(0.0, 0.1).tolist() == [0.0]


def test_scalar():
    # w^2 + (1 - w)^2 is minimized at 1/2 which is on the lattice
    w, obj = grid_search(validate_problem([1.0], [1.0], 1.0))
    assert w == pytest.approx([0.5], abs=1e-12)
    assert obj == pytest.approx(0.5, abs=1e-12)


def test_symmetric_pair(sym2):
    w, obj = grid_search(sym2, GridSpec(resolution=1e-3))
    assert obj == pytest.approx(1 / 3, abs=1e-5)
    assert obj >= 1 / 3 - 1e-15


def test_never_beats_closed_form(rng):
    for _ in range(40):
        pr = random_problem(rng, G_max=3)
        _, obj = grid_search(pr, GridSpec(resolution=5e-3))
        assert obj >= solve_minimax(pr).mse.total - 1e-12


def test_gap_shrinks_with_resolution():
    pr = validate_problem([0.3, 0.7], [2.0, 5.0], 0.8)
    opt = solve_minimax(pr).mse.total
    gaps = [grid_search(pr, GridSpec(resolution=r))[1] - opt for r in (0.04, 0.02, 0.01, 0.005)]
    assert all(g >= -1e-15 for g in gaps)
    assert all(b <= a + 1e-15 for a, b in zip(gaps, gaps[1:]))
    assert gaps[-1] < gaps[0]


def test_objective_matches_worst_case(rng):
    for _ in range(20):
        pr = random_problem(rng, G_max=4)
        w, obj = grid_search(pr, GridSpec(resolution=0.05))
        assert obj == pytest.approx(worst_case_mse(pr, w).total, rel=1e-12)


def test_refine_improves():
    pr = validate_problem([0.3, 0.7], [2.0, 5.0], 0.8)
    coarse = grid_search(pr, GridSpec(resolution=0.05))[1]
    refined = grid_search(pr, GridSpec(resolution=0.05, refine=True))[1]
    assert refined <= coarse
    assert refined == pytest.approx(solve_minimax(pr).mse.total, abs=1e-12)


def test_ties_lexicographic():
    # singular objective: every (w1, w2) with w1 + w2 = 1/2 is optimal
    pr = validate_problem([0.5, 0.5], [1, 1], 1, covariances=[[0, 1], [1, 0]])
    w, _ = grid_search(pr, GridSpec(resolution=0.25))
    assert w.tolist() == [0.0, 0.5]


def test_too_many_groups():
    with pytest.raises(TooManyGroups):
        grid_search(validate_problem(np.full(6, 1 / 6), np.ones(6), 1.0))


def test_resolution_too_coarse():
    with pytest.raises(ResolutionTooCoarse):
        grid_search(validate_problem([0.5, 0.5], [1, 1], 1), GridSpec(resolution=0.6))


def test_infinite_B():
    with pytest.raises(ValueError):
        grid_search(validate_problem([1.0], [1.0], math.inf))
