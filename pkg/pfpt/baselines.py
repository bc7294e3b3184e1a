#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Baseline aggregators.

fedavg_prompts averages the uploads position by position, which is only
meaningful if every client keeps its prompts in the same order.
gmm_aggregate fits a diagonal Gaussian mixture to the pooled uploads by EM and
returns its means.
"""
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp
from sklearn.cluster import kmeans_plusplus

from .likelihood import gaussian_logpdf
from .model import (EPS_VAR, DegenerateComponentError, DomainError, GlobalPool,
                    InputShapeError)

logger = logging.getLogger(__name__)

GMM_TOL = 1e-7
GMM_MAX_ITER = 500
MIN_WEIGHT = 1e-8


def fedavg_prompts(uploads, weights=None, generation=0):
    """
    Position-wise weighted mean, pool[j] = sum_t w_t omega_t[j].

    Uploads of different lengths are truncated to the shortest one.

    :param uploads: List of LocalPromptSet
    :param weights: One weight per upload, n_t by default; normalized here
    :return: GlobalPool
    """
    if len(uploads) == 0:
        raise InputShapeError("fedavg needs at least one upload")
    dim = uploads[0].dim
    if any(u.dim != dim for u in uploads):
        raise InputShapeError("uploads have different prompt dimensions %s"
                              % sorted({u.dim for u in uploads}))
    sizes = np.array([u.size for u in uploads])
    if weights is None:
        weights = sizes.astype(np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != sizes.shape or np.any(weights < 0) or \
            not weights.sum() > 0:
        raise DomainError("need one non-negative weight per upload, got %s"
                          % (weights,))
    length = int(sizes.min())
    if np.any(sizes != length):
        logger.warning("uploads have %d to %d prompts; truncating to %d",
                       length, sizes.max(), length)
    stacked = np.stack([u.prompts[:length] for u in uploads])
    mean = np.tensordot(weights / weights.sum(), stacked, axes=1)
    return GlobalPool(mean, generation)


@dataclass
class GmmState:
    """
    A fitted diagonal mixture.

    :param means: (K, d)
    :param variances: (K, d), >= EPS_VAR
    :param weights: (K,), sum to 1
    :param responsibilities: (N, K) from the last E step
    :param loglik_trace: Data log-likelihood before every M step
    :param reseed_iteration: Iteration at which a component was re-seeded
    """
    means: np.ndarray
    variances: np.ndarray
    weights: np.ndarray
    responsibilities: np.ndarray = None
    loglik_trace: list = field(default_factory=list)
    reseed_iteration: int = None
    converged: bool = False

    @property
    def K(self):
        return self.means.shape[0]


def _e_step(X, state):
    log_joint = (np.log(state.weights)[np.newaxis, :]
                 + gaussian_logpdf(X[:, np.newaxis, :],
                                   state.means[np.newaxis, :, :],
                                   state.variances[np.newaxis, :, :]))
    per_point = logsumexp(log_joint, axis=1)
    return np.exp(log_joint - per_point[:, np.newaxis]), per_point


def _m_step(X, resp):
    nk = resp.sum(axis=0)
    weights = nk / X.shape[0]
    safe = np.maximum(nk, np.finfo(float).tiny)[:, np.newaxis]
    means = resp.T @ X / safe
    variances = np.stack([resp[:, k] @ (X - means[k]) ** 2
                          for k in range(resp.shape[1])]) / safe
    return weights, means, np.maximum(variances, EPS_VAR)


def default_components(uploads):
    """Median upload size, at least 1."""
    return max(1, int(np.median([u.size for u in uploads])))


def gmm_aggregate(uploads, K=None, seed=0, tol=GMM_TOL, max_iter=GMM_MAX_ITER,
                  return_state=False, generation=0):
    """
    EM for a K-component diagonal Gaussian mixture on all uploaded prompts.

    Means are seeded by k-means++, variances start at the global variance and
    weights uniform. EM stops when the log-likelihood gains less than tol or
    after max_iter iterations. A component whose weight falls below 1e-8 is
    moved once to the worst explained prompt; a second collapse raises
    DegenerateComponentError.

    :param uploads: List of LocalPromptSet
    :param K: Number of components, default_components(uploads) if None
    :param seed: Seed of the k-means++ initialization
    :return: GlobalPool of the means sorted by first coordinate (then the
             following ones), and the GmmState if return_state
    """
    if len(uploads) == 0:
        raise InputShapeError("GMM aggregation needs at least one upload")
    X = np.concatenate([u.prompts for u in uploads])
    K = default_components(uploads) if K is None else int(K)
    if not 1 <= K <= X.shape[0]:
        raise DomainError("cannot fit %d components to %d prompts"
                          % (K, X.shape[0]))
    spread = np.maximum(X.var(axis=0), EPS_VAR)
    centers, _ = kmeans_plusplus(X, K, random_state=int(seed) % 2 ** 32)
    state = GmmState(centers.astype(np.float64), np.tile(spread, (K, 1)),
                     np.full(K, 1.0 / K))

    for iteration in range(max_iter):
        resp, per_point = _e_step(X, state)
        state.responsibilities = resp
        state.loglik_trace.append(float(per_point.sum()))
        if len(state.loglik_trace) > 1 and \
                state.loglik_trace[-1] - state.loglik_trace[-2] < tol:
            state.converged = True
            break
        weights, means, variances = _m_step(X, resp)
        degenerate = np.flatnonzero(weights < MIN_WEIGHT)
        if degenerate.size:
            if state.reseed_iteration is not None:
                raise DegenerateComponentError(
                    "component(s) %s collapsed again at iteration %d (first "
                    "reseed at %d)" % (degenerate.tolist(), iteration,
                                       state.reseed_iteration))
            worst = np.argsort(per_point, kind="stable")[:degenerate.size]
            logger.warning("GMM component(s) %s collapsed at iteration %d; "
                           "re-seeding", degenerate.tolist(), iteration)
            means[degenerate] = X[worst]
            variances[degenerate] = spread
            weights[degenerate] = 1.0 / X.shape[0]
            weights /= weights.sum()
            state.reseed_iteration = iteration
        state.weights, state.means, state.variances = weights, means, variances

    order = np.lexsort(state.means.T[::-1])
    state.means = state.means[order]
    state.variances = state.variances[order]
    state.weights = state.weights[order]
    if state.responsibilities is not None:
        state.responsibilities = state.responsibilities[:, order]
    pool = GlobalPool(state.means, generation)
    if return_state:
        return pool, state
    return pool
