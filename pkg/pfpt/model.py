#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Shared domain types of the prompt aggregation model, and the two small
feed-forward nets that parameterize it: the selection logit g(.; w) and the
diagonal covariance function alpha(.; gamma).

Prompts are stored as float64 numpy arrays. A set of prompts is always a 2D
array with one prompt per row.
"""
import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import expit

logger = logging.getLogger(__name__)

EPS_VAR = 1e-6
LOGIT_CLAMP = 30.0
UNASSIGNED = -1


class PFPTError(Exception):
    pass


class InputShapeError(PFPTError, ValueError):
    pass


class DomainError(PFPTError, ValueError):
    pass


class AssignmentError(PFPTError):
    pass


class InfeasibleError(AssignmentError):
    pass


class GuardError(PFPTError):
    pass


class NumericalError(PFPTError, ArithmeticError):
    pass


class PartitionError(PFPTError):
    pass


class DegenerateComponentError(PFPTError):
    pass


class ConfigError(PFPTError):

    def __init__(self, message, lineno=None, path=None):
        self.message = message
        self.lineno = lineno
        self.path = path
        super().__init__(str(self))

    def __str__(self):
        if self.lineno is None:
            return self.message
        return "%s:%d: %s" % (self.path or "<config>", self.lineno,
                              self.message)


class RoundError(PFPTError):
    pass


def as_prompts(values, dim=None, name="prompts"):
    """
    Convert values to a finite float64 array of shape (n, d)

    :param values: Anything np.asarray accepts; a single vector is promoted to
                   one row.
    :param dim: If given, the required prompt dimension
    :param name: Name used in error messages
    :return: The validated 2D array
    """
    arr = np.array(values, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[np.newaxis, :]
    if arr.ndim != 2 or arr.shape[1] == 0:
        raise InputShapeError("%s must be a 2D array of prompts, got shape %s"
                              % (name, arr.shape))
    if dim is not None and arr.shape[1] != dim:
        raise InputShapeError("%s have dimension %d, expected %d"
                              % (name, arr.shape[1], dim))
    if not np.all(np.isfinite(arr)):
        raise InputShapeError("%s contain non-finite entries" % name)
    return arr


def softplus(x):
    return np.logaddexp(0.0, x)


def softplus_inv(y):
    # log(exp(y) - 1), stable for small and large y
    y = np.asarray(y, dtype=np.float64)
    return y + np.log(-np.expm1(-y))


def sigmoid(x):
    return expit(x)


@dataclass(frozen=True)
class LocalPromptSet:
    """
    The prompts one client uploads in a round.

    :param client_id: Identifier of the uploading client
    :param prompts: Array (n_t, d), n_t >= 1
    """
    client_id: int
    prompts: np.ndarray

    def __post_init__(self):
        prompts = as_prompts(self.prompts, name="local prompts of client %s"
                                                % self.client_id)
        object.__setattr__(self, "client_id", int(self.client_id))
        object.__setattr__(self, "prompts", prompts)

    @property
    def size(self):
        return self.prompts.shape[0]

    @property
    def dim(self):
        return self.prompts.shape[1]


@dataclass(frozen=True)
class GlobalPool:
    """
    The server's summarizing prompts. Prompt identities are row indices.

    :param prompts: Array (n, d), n >= 1
    :param generation: Communication round that produced the pool
    """
    prompts: np.ndarray
    generation: int = 0

    def __post_init__(self):
        object.__setattr__(self, "prompts",
                           as_prompts(self.prompts, name="pool prompts"))
        object.__setattr__(self, "generation", int(self.generation))

    @property
    def size(self):
        return self.prompts.shape[0]

    @property
    def dim(self):
        return self.prompts.shape[1]

    def take(self, indices):
        return GlobalPool(self.prompts[np.asarray(indices, dtype=int)],
                          self.generation)


@dataclass(frozen=True)
class MlpParams:
    """
    One-hidden-layer network x -> W2 tanh(W1 x + b1) + b2.

    :param W1: Hidden weights (h, d)
    :param b1: Hidden biases (h,)
    :param W2: Output weights (o, h)
    :param b2: Output biases (o,)
    """
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray

    def __post_init__(self):
        arrays = [np.array(a, dtype=np.float64) for a in self.arrays()]
        W1, b1, W2, b2 = arrays
        if (W1.ndim != 2 or W2.ndim != 2 or b1.shape != (W1.shape[0],)
                or W2.shape[1] != W1.shape[0] or b2.shape != (W2.shape[0],)):
            raise InputShapeError(
                "inconsistent MLP shapes W1%s b1%s W2%s b2%s"
                % (W1.shape, b1.shape, W2.shape, b2.shape))
        if not all(np.all(np.isfinite(a)) for a in arrays):
            raise InputShapeError("MLP parameters must be finite")
        for name, a in zip(("W1", "b1", "W2", "b2"), arrays):
            object.__setattr__(self, name, a)

    @property
    def in_dim(self):
        return self.W1.shape[1]

    @property
    def hidden(self):
        return self.W1.shape[0]

    @property
    def out_dim(self):
        return self.W2.shape[0]

    def arrays(self):
        return self.W1, self.b1, self.W2, self.b2

    def axpy(self, scale, other):
        """Return self + scale * other, parameter-wise."""
        return MlpParams(*[a + scale * b for a, b in zip(self.arrays(),
                                                          other.arrays())])

    def sq_norm(self):
        return float(sum(np.sum(a ** 2) for a in self.arrays()))

    @classmethod
    def zeros_like(cls, other):
        return cls(*[np.zeros_like(a) for a in other.arrays()])


def init_mlp(in_dim, hidden, out_dim, rng, out_bias=0.0, weight_scale=1.0):
    """
    Initialize an MlpParams with weights ~ U(-s/sqrt(fan_in), s/sqrt(fan_in))
    and zero biases, except the output bias set to out_bias.

    :param in_dim: Input width d
    :param hidden: Hidden width h
    :param out_dim: Output width o
    :param rng: A numpy Generator
    :param out_bias: Value (scalar or (o,)) of the output bias
    :param weight_scale: Multiplier s on the uniform bound
    """
    if in_dim < 1 or hidden < 1 or out_dim < 1:
        raise DomainError("MLP widths must be positive, got (%d, %d, %d)"
                          % (in_dim, hidden, out_dim))
    bound1 = weight_scale / np.sqrt(in_dim)
    bound2 = weight_scale / np.sqrt(hidden)
    W1 = rng.uniform(-bound1, bound1, size=(hidden, in_dim))
    W2 = rng.uniform(-bound2, bound2, size=(out_dim, hidden))
    b2 = np.zeros(out_dim) + out_bias
    return MlpParams(W1, np.zeros(hidden), W2, b2)


def _check_input(params, x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim not in (1, 2) or x.shape[-1] != params.in_dim:
        raise InputShapeError("MLP input has shape %s, expected (..., %d)"
                              % (x.shape, params.in_dim))
    if not np.all(np.isfinite(x)):
        raise InputShapeError("MLP input must be finite")
    return x


def mlp_forward(params, x):
    """
    Evaluate the network on one input (d,) or a batch (N, d).

    :return: Output (o,) or (N, o)
    """
    x = _check_input(params, x)
    hidden = np.tanh(x @ params.W1.T + params.b1)
    return hidden @ params.W2.T + params.b2


def mlp_backward(params, x, out_grad):
    """
    Reverse-mode gradient of sum(out_grad * mlp_forward(params, x)).

    For a batch input, parameter gradients are summed over the batch and the
    input gradient keeps one row per input.

    :param params: The network
    :param x: Input (d,) or (N, d)
    :param out_grad: Cotangent of the output, same leading shape as the output
    :return: (MlpParams of parameter gradients, input gradient shaped like x)
    """
    x = _check_input(params, x)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    G = np.asarray(out_grad, dtype=np.float64)
    G = G.reshape(1, -1) if single else G
    if G.shape != (X.shape[0], params.out_dim):
        raise InputShapeError("output gradient has shape %s, expected %s"
                              % (np.shape(out_grad),
                                 (params.out_dim,) if single
                                 else (X.shape[0], params.out_dim)))
    hidden = np.tanh(X @ params.W1.T + params.b1)
    dW2 = G.T @ hidden
    db2 = G.sum(axis=0)
    dpre = (G @ params.W2) * (1.0 - hidden ** 2)
    dW1 = dpre.T @ X
    db1 = dpre.sum(axis=0)
    dx = dpre @ params.W1
    return MlpParams(dW1, db1, dW2, db2), (dx[0] if single else dx)


@dataclass(frozen=True)
class GenerativeParams:
    """
    All parameters of the generative model: the summarizing prompts, the
    selection logit net (o = 1) and the raw covariance net (o = d).
    """
    pool: GlobalPool
    w_net: MlpParams
    gamma_net: MlpParams

    def __post_init__(self):
        d = self.pool.dim
        if self.w_net.in_dim != d or self.w_net.out_dim != 1:
            raise InputShapeError("w_net must map R^%d -> R, got (%d -> %d)"
                                  % (d, self.w_net.in_dim, self.w_net.out_dim))
        if self.gamma_net.in_dim != d or self.gamma_net.out_dim != d:
            raise InputShapeError(
                "gamma_net must map R^%d -> R^%d, got (%d -> %d)"
                % (d, d, self.gamma_net.in_dim, self.gamma_net.out_dim))

    @property
    def dim(self):
        return self.pool.dim

    def with_pool(self, pool):
        return replace(self, pool=pool)


def init_generative_params(pool, hidden=32, rng=None, seed=None):
    """
    Fresh nets for a pool. Variances start at ~1 everywhere, logits at ~0.

    :param pool: A GlobalPool
    :param hidden: Hidden width of both nets
    :param rng: A numpy Generator, or None to build one from seed
    :param seed: Seed used when rng is None
    """
    if rng is None:
        rng = np.random.default_rng(seed)
    d = pool.dim
    w_net = init_mlp(d, hidden, 1, rng)
    gamma_net = init_mlp(d, hidden, d, rng, out_bias=softplus_inv(1.0))
    return GenerativeParams(pool, w_net, gamma_net)


def alpha_forward(gp, psi):
    """Diagonal variances alpha(psi; gamma) >= EPS_VAR, for (d,) or (N, d)."""
    return softplus(mlp_forward(gp.gamma_net, psi)) + EPS_VAR


def g_forward(gp, phi):
    """
    Selection logit g(phi; w), scalar for (d,) input, (N,) for (N, d).
    The log-odds log(sigma(g) / (1 - sigma(g))) is this value itself.
    """
    return mlp_forward(gp.w_net, phi)[..., 0]


def selection_probability(gp, phi):
    return sigmoid(g_forward(gp, phi))


@dataclass(frozen=True)
class Assignment:
    """
    Per-client maps from local prompts to pool indices.

    rows[t][k] is the pool index matched to local prompt k of the t-th set,
    or UNASSIGNED (-1) when the dummy-column mode left it out.
    """
    rows: tuple
    client_ids: tuple = field(default=None)

    def __post_init__(self):
        rows = tuple(np.array(r, dtype=np.int64).reshape(-1) for r in self.rows)
        for t, row in enumerate(rows):
            used = row[row != UNASSIGNED]
            if np.any(used < 0):
                raise AssignmentError("client %d: negative pool index in %s"
                                      % (t, row))
            if np.unique(used).size != used.size:
                raise AssignmentError("client %d: assignment %s is not "
                                      "injective" % (t, row))
        ids = self.client_ids
        ids = tuple(range(len(rows))) if ids is None else tuple(map(int, ids))
        if len(ids) != len(rows):
            raise AssignmentError("%d client ids for %d assignment rows"
                                  % (len(ids), len(rows)))
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "client_ids", ids)

    def __len__(self):
        return len(self.rows)

    def __getitem__(self, t):
        return self.rows[t]

    def __iter__(self):
        return iter(self.rows)

    def counts(self, pool_size):
        """Number of local prompts assigned to each pool index."""
        counts = np.zeros(pool_size, dtype=np.int64)
        for row in self.rows:
            used = row[row != UNASSIGNED]
            if used.size and used.max() >= pool_size:
                raise AssignmentError("pool index %d out of range for a pool "
                                      "of %d" % (used.max(), pool_size))
            np.add.at(counts, used, 1)
        return counts

    def remap(self, mapping):
        """Apply an old-index -> new-index array to every row."""
        mapping = np.asarray(mapping, dtype=np.int64)
        rows = [np.where(r == UNASSIGNED, UNASSIGNED,
                         mapping[np.maximum(r, 0)]) for r in self.rows]
        return Assignment(tuple(rows), self.client_ids)

    def check(self, sets, pool_size, allow_unassigned=False):
        """
        Raise AssignmentError unless this assignment is feasible for the sets.
        """
        if len(sets) != len(self.rows):
            raise AssignmentError("%d assignment rows for %d prompt sets"
                                  % (len(self.rows), len(sets)))
        for s, row in zip(sets, self.rows):
            if row.size != s.size:
                raise AssignmentError(
                    "client %d: %d assignments for %d local prompts"
                    % (s.client_id, row.size, s.size))
            if not allow_unassigned and np.any(row == UNASSIGNED):
                raise AssignmentError("client %d: unassigned local prompt in "
                                      "full-assignment mode" % s.client_id)
            if row.size and row.max() >= pool_size:
                raise AssignmentError("client %d: pool index %d out of range "
                                      "for a pool of %d"
                                      % (s.client_id, row.max(), pool_size))
