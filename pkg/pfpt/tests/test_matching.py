#!/usr/bin/env python3
# -*- coding: utf-8 -*-
import numpy as np
import pytest

from pfpt.analytical import exhaustive_max
from pfpt.clients import make_ground_truth
from pfpt.likelihood import cost_matrix, joint_objective
from pfpt.matching import (brute_force_assignments, hungarian_max,
                           replay_sweep, solve_assignments)
from pfpt.model import (Assignment, GuardError, InfeasibleError,
                        InputShapeError, LocalPromptSet)
from pfpt.tests import (constant_nets, random_params, random_sets,
                        run_tests)


def test_hungarian_small_cases():
    result = hungarian_max([[5.0]])
    assert result.row_to_col.tolist() == [0] and result.total == 5.0
    result = hungarian_max([[1.0, 0.0], [0.0, 1.0]])
    assert result.row_to_col.tolist() == [0, 1] and result.total == 2.0
    result = hungarian_max([[3.0, 1.0, 9.0], [2.0, 4.0, 8.0]])
    assert result.row_to_col.tolist() == [2, 1] and result.total == 13.0


def test_hungarian_matches_enumeration():
    rng = np.random.default_rng(0)
    for _ in range(200):
        n_cols = int(rng.integers(1, 9))
        n_rows = int(rng.integers(1, min(n_cols, 7) + 1))
        costs = rng.standard_normal((n_rows, n_cols))
        result = hungarian_max(costs)
        cols, total = exhaustive_max(costs)
        assert result.total == total
        assert np.array_equal(result.row_to_col, cols)


def test_hungarian_beats_random_assignments():
    rng = np.random.default_rng(1)
    costs = rng.standard_normal((5, 8))
    best = hungarian_max(costs).total
    for _ in range(1000):
        cols = rng.permutation(8)[:5]
        assert costs[np.arange(5), cols].sum() <= best + 1e-12


def test_hungarian_ties_are_lexicographic():
    assert hungarian_max(np.zeros((2, 3))).row_to_col.tolist() == [0, 1]
    assert hungarian_max(np.ones((3, 3))).row_to_col.tolist() == [0, 1, 2]
    costs = np.array([[1.0, 1.0, 0.0], [1.0, 1.0, 0.0]])
    assert hungarian_max(costs).row_to_col.tolist() == [0, 1]
    rng = np.random.default_rng(2)
    for _ in range(50):
        costs = rng.integers(0, 3, size=(3, 4)).astype(float)
        cols, total = exhaustive_max(costs)
        result = hungarian_max(costs)
        assert result.total == total
        assert np.array_equal(result.row_to_col, cols)


def test_hungarian_column_permutation():
    rng = np.random.default_rng(3)
    costs = rng.standard_normal((4, 6))
    perm = rng.permutation(6)
    base = hungarian_max(costs)
    permuted = hungarian_max(costs[:, perm])
    assert np.array_equal(perm[permuted.row_to_col], base.row_to_col)
    assert abs(permuted.total - base.total) < 1e-12


def test_hungarian_errors():
    with pytest.raises(InfeasibleError):
        hungarian_max(np.zeros((3, 2)))
    with pytest.raises(InputShapeError):
        hungarian_max(np.array([[0.0, np.inf]]))
    with pytest.raises(InputShapeError):
        hungarian_max(np.zeros(3))


def test_single_client_is_one_matching():
    rng = np.random.default_rng(4)
    gp = random_params(rng, 5, 3)
    lset = LocalPromptSet(7, rng.standard_normal((3, 3)))
    a = solve_assignments([lset], gp)
    assert a.client_ids == (7,)
    assert np.array_equal(a[0], hungarian_max(cost_matrix(lset, gp)).row_to_col)


def test_solve_matches_brute_force():
    rng = np.random.default_rng(5)
    for _ in range(50):
        n = int(rng.integers(3, 5))
        d = int(rng.integers(1, 4))
        gp = random_params(rng, n, d, hidden=3)
        sets = random_sets(rng, int(rng.integers(1, 4)), d, 3)
        fast = solve_assignments(sets, gp)
        slow = brute_force_assignments(sets, gp)
        assert abs(joint_objective(sets, fast, gp).total
                   - joint_objective(sets, slow, gp).total) < 1e-9
        assert all(np.array_equal(f, s) for f, s in zip(fast, slow))


def test_brute_force_forced_and_tied():
    gp = constant_nets(np.array([[0.5, 0.5]]))
    lset = LocalPromptSet(0, np.array([[1.0, 0.0]]))
    assert brute_force_assignments([lset], gp)[0].tolist() == [0]
    gp = constant_nets(np.array([[0.5, 0.5], [0.5, 0.5]]))
    a = brute_force_assignments([lset], gp)
    b = solve_assignments([lset], gp)
    assert joint_objective([lset], a, gp).total == \
        joint_objective([lset], b, gp).total


def test_brute_force_guard():
    rng = np.random.default_rng(6)
    gp = random_params(rng, 8, 2)
    sets = [LocalPromptSet(t, rng.standard_normal((4, 2))) for t in range(3)]
    with pytest.raises(GuardError):
        brute_force_assignments(sets, gp, limit=10 ** 4)
    with pytest.raises(InfeasibleError):
        brute_force_assignments([LocalPromptSet(0, np.zeros((9, 2)))], gp)


def test_noise_free_clients_recover_records():
    truth = make_ground_truth(6, 4, 2.0, seed=3)
    gp = truth.true_params
    rng = np.random.default_rng(7)
    sets, sources = [], []
    for t in range(5):
        source = rng.permutation(6)[:int(rng.integers(1, 7))]
        sets.append(LocalPromptSet(t, truth.true_pool.prompts[source]))
        sources.append(source)
    a = solve_assignments(sets, gp)
    for row, source in zip(a, sources):
        assert np.array_equal(row, source)


def test_fixed_point_and_threads():
    rng = np.random.default_rng(8)
    gp = random_params(rng, 6, 3)
    sets = random_sets(rng, 6, 3, 4)
    a = solve_assignments(sets, gp)
    replay_sweep(sets, gp, a)
    threaded = solve_assignments(sets, gp, workers=3)
    assert all(np.array_equal(x, y) for x, y in zip(a, threaded))
    b = solve_assignments(sets, gp, dummy=True)
    assert isinstance(b, Assignment)
    assert joint_objective(sets, b, gp).total >= \
        joint_objective(sets, a, gp).total - 1e-9


if __name__ == "__main__":
    run_tests(globals())
