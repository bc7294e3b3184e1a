#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Log-likelihood of uploaded prompt sets under the generative model, in its
linearized form, with the per-client matching costs and the analytic gradients
with respect to the pool and both nets.

The objective for a list of sets and an assignment is

    total = sum over matched pairs (w, i) of log N(w; phi_i, diag(alpha(phi_i)))
          + sum over matched pairs of g(phi_i)
          + m * sum_i log(1 - sigmoid(g(phi_i)))

with m the number of sets. The three sums are the l1, l2_linear and l2_const
fields of ObjectiveBreakdown. Logits are clamped to [-30, 30] in both selection
sums.
"""
import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .model import (EPS_VAR, LOGIT_CLAMP, UNASSIGNED, Assignment,
                    AssignmentError, DomainError, InputShapeError, MlpParams,
                    alpha_forward, g_forward, mlp_backward, mlp_forward,
                    softplus)

logger = logging.getLogger(__name__)

LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class ObjectiveBreakdown:
    l1: float
    l2_linear: float
    l2_const: float

    @property
    def total(self):
        return self.l1 + self.l2_linear + self.l2_const

    def as_dict(self):
        return {"l1": self.l1, "l2_linear": self.l2_linear,
                "l2_const": self.l2_const, "total": self.total}


@dataclass(frozen=True)
class ParamGradients:
    """Gradients of the total objective, shaped like GenerativeParams."""
    pool: np.ndarray
    w_net: MlpParams
    gamma_net: MlpParams

    def sq_norm(self, learn_nets=True):
        norm = float(np.sum(self.pool ** 2))
        if learn_nets:
            norm += self.w_net.sq_norm() + self.gamma_net.sq_norm()
        return norm

    def block_norms(self):
        return {"pool": float(np.sqrt(np.sum(self.pool ** 2))),
                "w_net": float(np.sqrt(self.w_net.sq_norm())),
                "gamma_net": float(np.sqrt(self.gamma_net.sq_norm()))}

    def is_finite(self):
        return all(np.all(np.isfinite(a)) for a in
                   (self.pool,) + self.w_net.arrays() + self.gamma_net.arrays())


def gaussian_logpdf(omega, phi, variances):
    """
    Log-density of a diagonal-covariance normal, summed over the last axis.

    Inputs broadcast against each other, so (N, d) rows against (N, d) or (d,)
    means return an (N,) array.

    :param omega: Point(s) where the density is evaluated
    :param phi: Mean(s)
    :param variances: Diagonal variance(s), strictly positive
    """
    omega = np.asarray(omega, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    variances = np.asarray(variances, dtype=np.float64)
    if np.any(~(variances > 0)):
        raise DomainError("variances must be strictly positive, got min %s"
                          % np.min(variances))
    diff = omega - phi
    return -0.5 * np.sum(LOG_2PI + np.log(variances) + diff ** 2 / variances,
                         axis=-1)


def clamped_logits(gp, phi):
    """Selection logits g(phi) clamped to [-LOGIT_CLAMP, LOGIT_CLAMP]."""
    return np.clip(g_forward(gp, phi), -LOGIT_CLAMP, LOGIT_CLAMP)


def log1m_sigmoid(logits):
    """log(1 - sigmoid(g)) with g clamped to [-LOGIT_CLAMP, LOGIT_CLAMP]."""
    return -np.logaddexp(0.0, np.clip(logits, -LOGIT_CLAMP, LOGIT_CLAMP))


def _check_row(row, size, pool_size):
    row = np.asarray(row, dtype=np.int64).reshape(-1)
    if row.size != size:
        raise AssignmentError("%d assignments for %d local prompts"
                              % (row.size, size))
    used = row[row != UNASSIGNED]
    if np.any(used < 0) or np.any(used >= pool_size):
        raise AssignmentError("assignment %s out of range for a pool of %d"
                              % (row, pool_size))
    if np.unique(used).size != used.size:
        raise AssignmentError("assignment %s is not injective" % row)
    return row


def _check_dim(sets, gp):
    for s in sets:
        if s.dim != gp.dim:
            raise InputShapeError("client %d uploads prompts of dimension %d, "
                                  "pool has %d" % (s.client_id, s.dim, gp.dim))


def _dummy_variance(gp):
    return alpha_forward(gp, np.zeros(gp.dim))


def local_set_loglik(lset, row, gp):
    """
    Gaussian log-likelihood of one client's prompts given its assignment row.

    Unassigned entries (dummy mode) are scored against the zero prompt with
    variance alpha(0).
    """
    _check_dim([lset], gp)
    row = _check_row(row, lset.size, gp.pool.size)
    assigned = row != UNASSIGNED
    total = 0.0
    if np.any(assigned):
        phi = gp.pool.prompts[row[assigned]]
        total += float(np.sum(gaussian_logpdf(lset.prompts[assigned], phi,
                                              alpha_forward(gp, phi))))
    if not np.all(assigned):
        total += float(np.sum(gaussian_logpdf(lset.prompts[~assigned], 0.0,
                                              _dummy_variance(gp))))
    return total


def assignment_logprior(row, gp):
    """
    Log-probability of the selection pattern of one client under the
    Bernoulli prior over pool prompts.
    """
    row = np.asarray(row, dtype=np.int64).reshape(-1)
    row = _check_row(row, row.size, gp.pool.size)
    logits = clamped_logits(gp, gp.pool.prompts)
    used = row[row != UNASSIGNED]
    return float(np.sum(logits[used]) + np.sum(log1m_sigmoid(logits)))


def _stack(sets, a, gp):
    _check_dim(sets, gp)
    if not isinstance(a, Assignment):
        a = Assignment(tuple(a))
    if len(a) != len(sets):
        raise AssignmentError("%d assignment rows for %d prompt sets"
                              % (len(a), len(sets)))
    rows = [_check_row(row, s.size, gp.pool.size) for s, row in zip(sets, a)]
    omegas = np.concatenate([s.prompts for s in sets])
    cols = np.concatenate(rows)
    return omegas, cols


def joint_objective(sets, a, gp):
    """
    Linearized joint log-likelihood of all sets.

    :param sets: List of LocalPromptSet
    :param a: Assignment (or a sequence of rows), one row per set
    :param gp: GenerativeParams
    :return: ObjectiveBreakdown
    """
    if len(sets) == 0:
        raise InputShapeError("joint_objective needs at least one prompt set")
    omegas, cols = _stack(sets, a, gp)
    pool = gp.pool.prompts
    assigned = cols != UNASSIGNED
    alphas = alpha_forward(gp, pool)
    l1 = float(np.sum(gaussian_logpdf(omegas[assigned], pool[cols[assigned]],
                                      alphas[cols[assigned]])))
    if not np.all(assigned):
        l1 += float(np.sum(gaussian_logpdf(omegas[~assigned], 0.0,
                                           _dummy_variance(gp))))
    logits = clamped_logits(gp, pool)
    l2_linear = float(np.sum(logits[cols[assigned]]))
    l2_const = len(sets) * float(np.sum(log1m_sigmoid(logits)))
    return ObjectiveBreakdown(l1, l2_linear, l2_const)


def cost_matrix(lset, gp, dummy=False):
    """
    Matching costs of one client, C[k, i] = log N(w_k; phi_i, alpha(phi_i))
    + g(phi_i). The assignment-independent log(1 - sigmoid) sum is left out.

    With dummy=True, n_t extra columns are appended; column n + j scores
    leaving a prompt unassigned (zero mean, variance alpha(0), no logit).

    :return: Array (n_t, n) or (n_t, n + n_t)
    """
    _check_dim([lset], gp)
    pool = gp.pool.prompts
    alphas = alpha_forward(gp, pool)
    logits = clamped_logits(gp, pool)
    omegas = lset.prompts
    costs = gaussian_logpdf(omegas[:, np.newaxis, :], pool[np.newaxis, :, :],
                            alphas[np.newaxis, :, :]) + logits[np.newaxis, :]
    if dummy:
        out = gaussian_logpdf(omegas, 0.0, _dummy_variance(gp))
        costs = np.hstack([costs, np.repeat(out[:, np.newaxis], lset.size,
                                            axis=1)])
    return costs


def _dlogpdf(omegas, means, variances):
    diff = omegas - means
    return diff / variances, -0.5 * (1.0 / variances - diff ** 2
                                     / variances ** 2)


def grad_params(sets, a, gp):
    """
    Exact gradient of joint_objective(sets, a, gp).total.

    The pool gradient gathers the Gaussian mean path, the variance path
    through alpha(phi_i) and the selection path through g(phi_i).

    :return: ParamGradients
    """
    if len(sets) == 0:
        raise InputShapeError("grad_params needs at least one prompt set")
    omegas, cols = _stack(sets, a, gp)
    pool = gp.pool.prompts
    n, d = pool.shape
    assigned = cols != UNASSIGNED
    idx = cols[assigned]

    raw = mlp_forward(gp.gamma_net, pool)
    alphas = softplus(raw) + EPS_VAR
    dmean, dvar = _dlogpdf(omegas[assigned], pool[idx], alphas[idx])

    grad_pool = np.zeros((n, d))
    np.add.at(grad_pool, idx, dmean)
    var_grad = np.zeros((n, d))
    np.add.at(var_grad, idx, dvar)
    gamma_grads, dphi = mlp_backward(gp.gamma_net, pool,
                                     var_grad * expit(raw))
    grad_pool += dphi

    if not np.all(assigned):
        zero = np.zeros(d)
        raw0 = mlp_forward(gp.gamma_net, zero)
        _, dvar0 = _dlogpdf(omegas[~assigned], 0.0, softplus(raw0) + EPS_VAR)
        grads0, _ = mlp_backward(gp.gamma_net, zero,
                                 dvar0.sum(axis=0) * expit(raw0))
        gamma_grads = gamma_grads.axpy(1.0, grads0)

    logits = g_forward(gp, pool)
    counts = np.bincount(idx, minlength=n).astype(np.float64)
    inside = np.abs(logits) <= LOGIT_CLAMP
    dlogit = (counts - len(sets) * expit(logits)) * inside
    w_grads, dphi = mlp_backward(gp.w_net, pool, dlogit[:, np.newaxis])
    grad_pool += dphi

    return ParamGradients(grad_pool, w_grads, gamma_grads)
