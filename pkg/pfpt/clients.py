#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Simulated clients.

A client selects the pool prompts closest to its data (cosine similarity to a
query built from its class proportions and one prototype per class), then
produces its upload in one of two modes:

    generative: sample from a known ground-truth model. Each true prompt of the
                client's dominant classes is kept with probability
                sigmoid(g*(phi*)) and perturbed with variance alpha*(phi*).
    drift: move every selected prompt towards the nearest prototype of the
           client's dominant classes with a few convex steps plus jitter.

All randomness of a client in a round comes from client_rng(seed, client_id,
round), so results do not depend on the execution order of the clients.
"""
import logging
from dataclasses import dataclass, fields

import numpy as np
from scipy.spatial.distance import pdist

from .model import (DomainError, GenerativeParams, GlobalPool,
                    LocalPromptSet, alpha_forward, as_prompts, init_mlp,
                    selection_probability, softplus_inv)

logger = logging.getLogger(__name__)

MODES = ("generative", "drift")
MAX_RESAMPLE = 1000


def client_rng(seed, client_id, round_):
    """Generator of one client in one round."""
    return np.random.default_rng(np.random.SeedSequence(
        [int(seed), int(client_id), int(round_)]))


@dataclass
class TruthSpec:
    """
    Hidden generative model of recovery runs.

    :param n_star: Number of true prompts
    :param separation: Minimum pairwise distance of the true prompts
    :param inclusion_logit: Output bias of the true selection net
    :param hidden: Hidden width of the true nets
    :param n_classes: True prompt i belongs to class i mod n_classes; defaults
                      to the number of classes of the partition
    :param seed: Seed of the truth; defaults to the experiment seed
    """
    n_star: int = 12
    separation: float = 1.0
    inclusion_logit: float = 2.0
    hidden: int = 8
    n_classes: int = None
    seed: int = None

    def validate(self):
        if int(self.n_star) < 1:
            raise DomainError("truth.n_star must be >= 1, got %r" % self.n_star)
        if not self.separation > 0:
            raise DomainError("truth.separation must be positive, got %r"
                              % self.separation)
        if int(self.hidden) < 1:
            raise DomainError("truth.hidden must be >= 1, got %r" % self.hidden)
        return self

    @classmethod
    def keys(cls):
        return [f.name for f in fields(cls)]


@dataclass(frozen=True)
class GenerationRecord:
    """source[k] is the true prompt that generated local prompt k."""
    client_id: int
    source: np.ndarray


@dataclass(frozen=True)
class GroundTruth:
    """
    Hidden model of a recovery run. records holds the GenerationRecord of
    every upload of the latest round, in client order.
    """
    true_pool: GlobalPool
    true_params: GenerativeParams
    prompt_classes: np.ndarray
    records: tuple = ()

    @property
    def n_star(self):
        return self.true_pool.size

    def with_records(self, records):
        return GroundTruth(self.true_pool, self.true_params,
                           self.prompt_classes, tuple(records))

    def class_means(self, n_classes):
        """Mean true prompt of each class; zero for classes with none."""
        means = np.zeros((n_classes, self.true_pool.dim))
        for c in range(n_classes):
            members = self.prompt_classes == c
            if np.any(members):
                means[c] = self.true_pool.prompts[members].mean(axis=0)
        return means


def _farthest_points(cloud, n):
    chosen = [0]
    dist = np.linalg.norm(cloud - cloud[0], axis=1)
    while len(chosen) < n:
        nxt = int(np.argmax(dist))
        chosen.append(nxt)
        dist = np.minimum(dist, np.linalg.norm(cloud - cloud[nxt], axis=1))
    return cloud[chosen]


def make_ground_truth(n_star, d, separation, seed, n_classes=None,
                      inclusion_logit=2.0, hidden=8):
    """
    A seeded ground truth: n_star prompts at pairwise distance >= separation
    and small nets with near-constant output.

    The prompts are chosen by farthest-point sampling from a Gaussian cloud
    and scaled up if their closest pair is nearer than separation.
    """
    if n_star < 1 or d < 1 or not separation > 0:
        raise DomainError("ground truth needs n* >= 1, d >= 1, separation > 0; "
                          "got %r, %r, %r" % (n_star, d, separation))
    rng = np.random.default_rng(seed)
    cloud = rng.standard_normal((max(20 * n_star, 64), d))
    prompts = _farthest_points(cloud, n_star)
    if n_star > 1:
        closest = pdist(prompts).min()
        prompts = prompts * max(1.0, separation / closest)
    n_classes = n_star if n_classes is None else int(n_classes)
    w_net = init_mlp(d, hidden, 1, rng, out_bias=inclusion_logit,
                     weight_scale=0.1)
    gamma_net = init_mlp(d, hidden, d, rng, out_bias=softplus_inv(1.0),
                         weight_scale=0.1)
    pool = GlobalPool(prompts)
    return GroundTruth(pool, GenerativeParams(pool, w_net, gamma_net),
                       np.arange(n_star) % n_classes)


@dataclass
class ClientTemplate:
    """
    Settings shared by all simulated clients.

    :param k: Number of pool prompts a client selects
    :param mode: "generative" or "drift"
    :param local_steps: Convex steps per round (drift)
    :param step_size: Convex step size in [0, 1] (drift)
    :param jitter_std: Gaussian jitter per step (drift)
    :param noise_std: Multiplier of the true standard deviation (generative)
    :param dominant_mass: Share of a client's data covered by the classes it
                          tunes towards
    :param prototype_scale: Scale of the random class prototypes (drift)
    """
    k: int = 10
    mode: str = "generative"
    local_steps: int = 5
    step_size: float = 0.1
    jitter_std: float = 0.01
    noise_std: float = 0.05
    dominant_mass: float = 0.9
    prototype_scale: float = 1.0

    def validate(self):
        if self.mode not in MODES:
            raise DomainError("unknown client mode %r, expected one of %s"
                              % (self.mode, ", ".join(MODES)))
        if int(self.k) < 1:
            raise DomainError("clients.k must be >= 1, got %r" % self.k)
        if int(self.local_steps) < 0:
            raise DomainError("clients.local_steps must be >= 0, got %r"
                              % self.local_steps)
        if not 0 <= self.step_size <= 1:
            raise DomainError("clients.step_size must lie in [0, 1], got %r"
                              % self.step_size)
        for name in ("jitter_std", "noise_std"):
            if not getattr(self, name) >= 0:
                raise DomainError("clients.%s must be >= 0, got %r"
                                  % (name, getattr(self, name)))
        if not 0 <= self.dominant_mass <= 1:
            raise DomainError("clients.dominant_mass must lie in [0, 1], got %r"
                              % self.dominant_mass)
        return self

    @classmethod
    def keys(cls):
        return [f.name for f in fields(cls)]


@dataclass(frozen=True)
class ClientState:
    profile: object
    prototypes: np.ndarray
    template: ClientTemplate

    @property
    def client_id(self):
        return self.profile.client_id

    def dominant_classes(self):
        return self.profile.dominant_classes(self.template.dominant_mass)


@dataclass(frozen=True)
class SelectionResult:
    indices: np.ndarray
    fallback: bool = False


def select_prompts(state, pool):
    """
    The min(k, n) pool prompts most similar to the client's query, in
    decreasing cosine similarity with ties broken by lower index.

    A zero query selects the lowest indices and sets the fallback flag.
    """
    k = min(int(state.template.k), pool.size)
    query = state.profile.proportions @ state.prototypes
    qnorm = np.linalg.norm(query)
    if qnorm == 0:
        logger.warning("client %d has a zero query vector; selecting the first "
                       "%d pool prompts", state.client_id, k)
        return SelectionResult(np.arange(k), fallback=True)
    norms = np.linalg.norm(pool.prompts, axis=1)
    cosine = np.zeros(pool.size)
    nonzero = norms > 0
    cosine[nonzero] = pool.prompts[nonzero] @ query / (norms[nonzero] * qnorm)
    order = np.lexsort((np.arange(pool.size), -cosine))
    return SelectionResult(order[:k])


def local_tune_generative(state, truth, rng):
    """
    Sample an upload from the ground truth.

    Eligible true prompts are those of the client's dominant classes (all of
    them if none qualifies). Each is included independently with probability
    sigmoid(g*(phi*_i)), redrawn until at least one is kept, and perturbed by
    noise_std * sqrt(alpha*(phi*_i)) * N(0, 1). Prompts are emitted in random
    order.

    :return: (LocalPromptSet, GenerationRecord)
    """
    eligible = np.flatnonzero(np.isin(truth.prompt_classes,
                                      state.dominant_classes()))
    if eligible.size == 0:
        eligible = np.arange(truth.n_star)
    phi = truth.true_pool.prompts[eligible]
    prob = selection_probability(truth.true_params, phi)
    for _ in range(MAX_RESAMPLE):
        keep = rng.random(eligible.size) < prob
        if np.any(keep):
            break
    else:
        keep = np.zeros(eligible.size, dtype=bool)
        keep[np.argmax(prob)] = True
    source = eligible[keep]
    std = np.sqrt(alpha_forward(truth.true_params, phi[keep]))
    omega = phi[keep] + state.template.noise_std * std * rng.standard_normal(
        phi[keep].shape)
    order = rng.permutation(source.size)
    return (LocalPromptSet(state.client_id, omega[order]),
            GenerationRecord(state.client_id, source[order]))


def local_tune_drift(state, selected, rng):
    """
    Convex steps of every selected prompt towards its nearest dominant-class
    prototype, x <- (1 - eta) x + eta p + jitter.
    """
    x = as_prompts(selected, dim=state.prototypes.shape[1],
                   name="selected prompts").copy()
    classes = state.dominant_classes()
    if classes.size == 0:
        classes = np.arange(state.prototypes.shape[0])
    anchors = state.prototypes[classes]
    eta = state.template.step_size
    for _ in range(int(state.template.local_steps)):
        dist = np.linalg.norm(x[:, np.newaxis, :] - anchors[np.newaxis, :, :],
                              axis=2)
        nearest = anchors[np.argmin(dist, axis=1)]
        x = (1.0 - eta) * x + eta * nearest
        if state.template.jitter_std > 0:
            x = x + state.template.jitter_std * rng.standard_normal(x.shape)
    return LocalPromptSet(state.client_id, x)


def random_prototypes(n_classes, d, scale, seed):
    return scale * np.random.default_rng(seed).standard_normal((n_classes, d))


@dataclass(frozen=True)
class ClientUpload:
    upload: LocalPromptSet
    selection: SelectionResult
    record: GenerationRecord = None


def simulate_client(state, pool, seed, round_, truth=None):
    """
    One client's round: selection, then local tuning in the template's mode.
    """
    rng = client_rng(seed, state.client_id, round_)
    selection = select_prompts(state, pool)
    if state.template.mode == "generative":
        if truth is None:
            raise DomainError("generative clients need a ground truth")
        upload, record = local_tune_generative(state, truth, rng)
        return ClientUpload(upload, selection, record)
    upload = local_tune_drift(state, pool.prompts[selection.indices], rng)
    return ClientUpload(upload, selection)

