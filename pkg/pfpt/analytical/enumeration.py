# -*- coding: utf-8 -*-
"""Exhaustive and numerical reference solutions.

This module contains the functions:
    -exhaustive_max: Best injective row -> column map by enumeration
    -flatten, unflatten: GenerativeParams <-> one parameter vector
    -flatten_gradients: ParamGradients in the order of flatten
    -central_differences: Numerical gradient of a scalar function of the params
"""

import itertools

import numpy as np

from ..model import GenerativeParams, GlobalPool, MlpParams


def exhaustive_max(costs):
    """
    Maximum total of an injective row -> column map, visiting the maps in
    lexicographic order and keeping the first best.

    Args:
        costs (np.ndarray): (n_rows, n_cols) with n_rows <= n_cols

    Returns:
        row_to_col (np.ndarray) The first optimal map
        total (float) Its total
    """
    n_rows, n_cols = costs.shape
    best, best_cols = -np.inf, None
    rows = np.arange(n_rows)
    for cols in itertools.permutations(range(n_cols), n_rows):
        total = float(costs[rows, list(cols)].sum())
        if total > best:
            best, best_cols = total, cols
    return np.array(best_cols, dtype=np.int64), best


def _net_arrays(gp):
    return gp.w_net.arrays() + gp.gamma_net.arrays()


def flatten(gp):
    return np.concatenate([gp.pool.prompts.ravel()]
                          + [a.ravel() for a in _net_arrays(gp)])


def unflatten(gp, vector):
    """GenerativeParams shaped like gp with values taken from vector."""
    shapes = [gp.pool.prompts.shape] + [a.shape for a in _net_arrays(gp)]
    arrays, pos = [], 0
    for shape in shapes:
        size = int(np.prod(shape))
        arrays.append(vector[pos:pos + size].reshape(shape))
        pos += size
    return GenerativeParams(GlobalPool(arrays[0], gp.pool.generation),
                            MlpParams(*arrays[1:5]), MlpParams(*arrays[5:9]))


def flatten_gradients(grads):
    return np.concatenate([grads.pool.ravel()]
                          + [a.ravel() for a in grads.w_net.arrays()]
                          + [a.ravel() for a in grads.gamma_net.arrays()])


def central_differences(func, gp, step=1e-5):
    """
    Numerical gradient (f(x + h e_j) - f(x - h e_j)) / 2h of func(gp) over
    every coordinate of flatten(gp).
    """
    x = flatten(gp)
    grad = np.zeros_like(x)
    for j in range(x.size):
        up, down = x.copy(), x.copy()
        up[j] += step
        down[j] -= step
        grad[j] = (func(unflatten(gp, up)) - func(unflatten(gp, down))) \
            / (2 * step)
    return grad
