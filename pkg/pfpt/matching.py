#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Exact assignment of local prompts to pool prompts.

For fixed generative parameters the objective decouples over clients, so each
client is solved independently as a rectangular maximum-weight bipartite
matching on its cost matrix.

Functions
    hungarian_max: optimal injective row -> column map of a cost matrix
    solve_assignments: one matching per client
    replay_sweep: re-solve clients one after another and check nothing moves
    brute_force_assignments: exhaustive joint optimum, for small instances
"""
import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .likelihood import (assignment_logprior, cost_matrix, joint_objective,
                         local_set_loglik)
from .model import (UNASSIGNED, Assignment, AssignmentError, GuardError,
                    InfeasibleError, InputShapeError)

logger = logging.getLogger(__name__)

BRUTE_FORCE_LIMIT = 10 ** 6
TIE_RTOL = 1e-12


@dataclass(frozen=True)
class MatchResult:
    row_to_col: np.ndarray
    total: float


def _solve(costs):
    if costs.shape[0] == 0:
        return 0.0, np.zeros(0, dtype=np.int64)
    rows, cols = linear_sum_assignment(costs, maximize=True)
    return float(costs[rows, cols].sum()), cols.astype(np.int64)


def _has_single_optimum(costs, row_to_col, best, tol):
    """
    True if banning any chosen edge lowers the optimum by more than tol.
    """
    n_rows = costs.shape[0]
    # any assignment through a banned edge scores below every other one
    banned_value = costs.min() - 1.0 - 2.0 * n_rows * np.abs(costs).max()
    for k, c in enumerate(row_to_col):
        banned = costs.copy()
        banned[k, c] = banned_value
        other, cols = _solve(banned)
        if cols[k] == c:
            # no feasible alternative for row k
            continue
        if other >= best - tol:
            return False
    return True


def _lexicographic_refine(costs, row_to_col, best, tol):
    """
    Smallest optimum in lexicographic order of row_to_col.

    Rows are fixed one at a time. For each row only columns smaller than the
    incumbent's are tried, and the remaining rows are re-solved on the columns
    still free.
    """
    n_rows, n_cols = costs.shape
    result = row_to_col.copy()
    row_max = costs.max(axis=1)
    suffix = np.concatenate([np.cumsum(row_max[::-1])[::-1], [0.0]])
    used = np.zeros(n_cols, dtype=bool)
    prefix = 0.0
    for k in range(n_rows):
        rest = np.arange(k + 1, n_rows)
        for c in range(result[k]):
            if used[c] or prefix + costs[k, c] + suffix[k + 1] < best - tol:
                continue
            free = ~used
            free[c] = False
            free_cols = np.flatnonzero(free)
            sub_total, sub_cols = _solve(costs[np.ix_(rest, free_cols)])
            if prefix + costs[k, c] + sub_total >= best - tol:
                result[k] = c
                result[rest] = free_cols[sub_cols]
                break
        used[result[k]] = True
        prefix += costs[k, result[k]]
    return result


def hungarian_max(costs):
    """
    Maximum-weight injective assignment of rows to columns.

    Among optimal assignments (equal totals up to a relative tolerance of
    TIE_RTOL) the lexicographically smallest row_to_col is returned.

    :param costs: Array (n_rows, n_cols) with n_rows <= n_cols, finite
    :return: MatchResult
    """
    costs = np.asarray(costs, dtype=np.float64)
    if costs.ndim != 2:
        raise InputShapeError("cost matrix must be 2D, got shape %s"
                              % (costs.shape,))
    n_rows, n_cols = costs.shape
    if n_rows > n_cols:
        raise InfeasibleError("cannot assign %d rows injectively to %d "
                              "columns" % (n_rows, n_cols))
    if not np.all(np.isfinite(costs)):
        raise InputShapeError("cost matrix contains non-finite entries")
    best, row_to_col = _solve(costs)
    if n_rows == 0:
        return MatchResult(row_to_col, 0.0)
    tol = TIE_RTOL * (1.0 + n_rows * np.abs(costs).max())
    if not _has_single_optimum(costs, row_to_col, best, tol):
        row_to_col = _lexicographic_refine(costs, row_to_col, best, tol)
    total = float(costs[np.arange(n_rows), row_to_col].sum())
    return MatchResult(row_to_col, total)


def _client_match(lset, gp, dummy):
    costs = cost_matrix(lset, gp, dummy=dummy)
    result = hungarian_max(costs)
    row = result.row_to_col.copy()
    if dummy:
        row[row >= gp.pool.size] = UNASSIGNED
    logger.debug("client %d: matched %d prompts, total %.6g", lset.client_id,
                 lset.size, result.total)
    return row


def solve_assignments(sets, gp, dummy=False, workers=1):
    """
    Optimal assignment of every set to the pool for fixed parameters.

    :param sets: List of LocalPromptSet
    :param gp: GenerativeParams
    :param dummy: Allow local prompts to stay unassigned (dummy columns)
    :param workers: Number of threads used for the per-client matchings
    :return: Assignment in the order of sets
    """
    for lset in sets:
        if lset.dim != gp.dim:
            raise InputShapeError("client %d uploads prompts of dimension %d, "
                                  "pool has %d"
                                  % (lset.client_id, lset.dim, gp.dim))
        if not dummy and lset.size > gp.pool.size:
            raise InfeasibleError("client %d uploads %d prompts for a pool of "
                                  "%d" % (lset.client_id, lset.size,
                                          gp.pool.size))
    if workers > 1 and len(sets) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(lambda s: _client_match(s, gp, dummy), sets))
    else:
        rows = [_client_match(s, gp, dummy) for s in sets]
    return Assignment(tuple(rows), tuple(s.client_id for s in sets))


def replay_sweep(sets, gp, a, dummy=False):
    """
    Sweep over clients, re-solving each one with all others held fixed, and
    raise AssignmentError if any row or the objective changes.
    """
    rows = list(a.rows)
    before = joint_objective(sets, a, gp).total
    for t, lset in enumerate(sets):
        rows[t] = _client_match(lset, gp, dummy)
        if not np.array_equal(rows[t], a.rows[t]):
            raise AssignmentError("client %d moved from %s to %s in the "
                                  "replayed sweep" % (lset.client_id,
                                                      a.rows[t], rows[t]))
    after = joint_objective(sets, Assignment(tuple(rows), a.client_ids),
                            gp).total
    logger.debug("fixed-point replay: objective %.12g -> %.12g", before, after)
    if after != before:
        raise AssignmentError("objective changed in the replayed sweep: "
                              "%.17g -> %.17g" % (before, after))


def brute_force_assignments(sets, gp, limit=BRUTE_FORCE_LIMIT):
    """
    Exhaustive joint maximization over all injective assignments.

    Candidates are visited in lexicographic order and the first maximum is
    kept, so ties resolve the same way hungarian_max resolves them.

    :param limit: Largest number of joint candidates to enumerate
    """
    n = gp.pool.size
    count = 1
    for lset in sets:
        count *= math.perm(n, lset.size) if lset.size <= n else 0
    if count == 0:
        raise InfeasibleError("a client uploads more prompts than the pool "
                              "holds (%d)" % n)
    if count > limit:
        raise GuardError("%d joint assignments exceed the enumeration limit "
                         "of %d" % (count, limit))
    tables = []
    for lset in sets:
        perms = list(itertools.permutations(range(n), lset.size))
        values = [local_set_loglik(lset, p, gp) + assignment_logprior(p, gp)
                  for p in perms]
        tables.append(list(zip(perms, values)))
    best, best_rows = -np.inf, None
    for combo in itertools.product(*tables):
        value = sum(v for _, v in combo)
        if best_rows is None or value > best + TIE_RTOL * (1.0 + abs(best)):
            best, best_rows = value, [p for p, _ in combo]
    return Assignment(tuple(np.array(p, dtype=np.int64) for p in best_rows),
                      tuple(s.client_id for s in sets))
