#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Client data partitions over s classes.

Three schemes are provided:
    dirichlet: every class is split over the m clients with shares drawn from
               Dirichlet(alpha * 1_m)
    imbalance: every client draws dominant_share of its examples from a small
               dominant class subset and spreads the rest over all classes
    longtail: class totals decay exponentially with ratio imbalance_factor
              between the largest and the smallest class, then split as in
              the dirichlet scheme

Counts are integers. Every scheme conserves the per-class totals exactly by
largest-remainder rounding.
"""
import logging
from dataclasses import dataclass, fields

import numpy as np

from .model import DomainError, PartitionError

logger = logging.getLogger(__name__)

SCHEMES = ("dirichlet", "imbalance", "longtail")


@dataclass(frozen=True)
class ClientProfile:
    client_id: int
    class_counts: np.ndarray

    def __post_init__(self):
        counts = np.array(self.class_counts, dtype=np.int64).reshape(-1)
        if np.any(counts < 0):
            raise PartitionError("client %d has negative class counts %s"
                                 % (self.client_id, counts))
        object.__setattr__(self, "class_counts", counts)
        object.__setattr__(self, "client_id", int(self.client_id))

    @property
    def total(self):
        return int(self.class_counts.sum())

    @property
    def proportions(self):
        total = self.total
        if total == 0:
            return np.zeros(self.class_counts.size)
        return self.class_counts / total

    def dominant_classes(self, mass=0.9):
        """
        Smallest set of classes, largest share first (lower index on ties),
        whose proportions add up to at least mass.
        """
        props = self.proportions
        if self.total == 0:
            return np.zeros(0, dtype=np.int64)
        order = np.lexsort((np.arange(props.size), -props))
        covered = np.cumsum(props[order])
        stop = int(np.searchsorted(covered, mass - 1e-12)) + 1
        return np.sort(order[:min(stop, props.size)])


@dataclass
class PartitionSpec:
    """
    Parameters of a client data partition.

    :param scheme: One of "dirichlet", "imbalance", "longtail"
    :param s: Number of classes
    :param m: Number of clients
    :param alpha: Dirichlet concentration (dirichlet, longtail)
    :param dominant_frac: Size of a dominant subset as a fraction of s
    :param dominant_share: Share of a client's examples in its dominant subset
    :param imbalance_factor: Ratio of the largest to the smallest class total
                             (longtail)
    :param class_totals: Examples per class; defaults to examples_per_class
                         for every class
    :param examples_per_class: Default class total, and the largest class in
                               the longtail scheme
    :param seed: Seed of the random draws, 0 if None
    :param pooled_remainder: In the imbalance scheme, split each class's
                             dominant part among the clients it dominates and
                             pool the rest evenly over all clients
    """
    scheme: str = "dirichlet"
    s: int = 10
    m: int = 100
    alpha: float = 0.5
    dominant_frac: float = 0.10
    dominant_share: float = 0.99
    imbalance_factor: float = 1.0
    class_totals: tuple = None
    examples_per_class: int = 500
    seed: int = None
    pooled_remainder: bool = False

    def validate(self):
        if self.scheme not in SCHEMES:
            raise DomainError("partition.scheme must be one of %s, got %r"
                              % (", ".join(SCHEMES), self.scheme))
        for name in ("s", "m"):
            if int(getattr(self, name)) < 1:
                raise DomainError("partition.%s must be >= 1, got %r"
                                  % (name, getattr(self, name)))
        if self.scheme != "imbalance" and not self.alpha > 0:
            raise DomainError("partition.alpha must be positive, got %r"
                              % self.alpha)
        if not 0 < self.dominant_frac <= 1:
            raise DomainError("partition.dominant_frac must lie in (0, 1], "
                              "got %r" % self.dominant_frac)
        if self.scheme == "imbalance" and self.s * self.dominant_frac < 1:
            raise DomainError("partition.dominant_frac %r times partition.s %d "
                              "is below one dominant class"
                              % (self.dominant_frac, self.s))
        if not 0 <= self.dominant_share <= 1:
            raise DomainError("partition.dominant_share must lie in [0, 1], "
                              "got %r" % self.dominant_share)
        if self.scheme == "longtail" and not self.imbalance_factor >= 1:
            raise DomainError("partition.imbalance_factor must be >= 1, got %r"
                              % self.imbalance_factor)
        if self.examples_per_class < 0:
            raise DomainError("partition.examples_per_class must be >= 0, "
                              "got %r" % self.examples_per_class)
        if self.class_totals is not None:
            totals = np.asarray(self.class_totals)
            if totals.shape != (self.s,) or np.any(totals < 0):
                raise DomainError("partition.class_totals must hold %d "
                                  "non-negative counts, got %r"
                                  % (self.s, self.class_totals))
        return self

    def totals(self):
        if self.class_totals is None:
            return np.full(self.s, int(self.examples_per_class), dtype=np.int64)
        return np.asarray(self.class_totals, dtype=np.int64)

    @classmethod
    def keys(cls):
        return [f.name for f in fields(cls)]


def round_half_up(x):
    return int(np.floor(x + 0.5))


def largest_remainder(weights, total, start=0):
    """
    Split an integer total proportionally to weights.

    Floors of the exact quotas are topped up one by one in order of decreasing
    fractional part; fractional parts equal up to 1e-9 are served in index order
    starting at `start` and wrapping around.

    :return: Integer array summing to total
    """
    weights = np.asarray(weights, dtype=np.float64)
    n = weights.size
    counts = np.zeros(n, dtype=np.int64)
    if total == 0:
        return counts
    wsum = weights.sum()
    if not (wsum > 0 and np.all(weights >= 0)):
        raise PartitionError("cannot split %d examples with weights %s"
                             % (total, weights))
    quotas = weights / wsum * total
    counts = np.floor(quotas).astype(np.int64)
    rotated = (np.arange(n) - start) % n
    frac = np.round(quotas - counts, 9)
    short = int(total - counts.sum())
    if short > 0:
        counts[np.lexsort((rotated, -frac))[:short]] += 1
    elif short < 0:
        counts[np.lexsort((rotated, frac))[:-short]] -= 1
    return counts


def _rng(spec):
    return np.random.default_rng(0 if spec.seed is None else spec.seed)


def _topped_up(counts, weights):
    # number of rounding top-ups handed out by largest_remainder
    total = counts.sum()
    if total == 0:
        return 0
    return int(total - np.floor(weights / weights.sum() * total).sum())


def _profiles(counts):
    return [ClientProfile(j, counts[j]) for j in range(counts.shape[0])]


def _dirichlet_counts(totals, m, alpha, rng):
    counts = np.zeros((m, totals.size), dtype=np.int64)
    for c, total in enumerate(totals):
        if m == 1:
            shares = np.ones(1)
        else:
            shares = rng.dirichlet(np.full(m, alpha))
            if not (np.all(np.isfinite(shares)) and shares.sum() > 0):
                # tiny alpha underflows; the whole class goes to one client
                shares = np.zeros(m)
                shares[rng.integers(m)] = 1.0
        counts[:, c] = largest_remainder(shares, int(total))
    return counts


def dirichlet_partition(spec):
    """
    Per class c, client shares ~ Dirichlet(alpha * 1_m) and counts by
    largest-remainder rounding of the class total.

    :param spec: PartitionSpec
    :return: List of m ClientProfile
    """
    spec.validate()
    rng = _rng(spec)
    return _profiles(_dirichlet_counts(spec.totals(), spec.m, spec.alpha, rng))


def dominant_subsets(spec):
    """
    Round-robin dominant class subsets, D_j = {(j q + r) mod s, r < q} with
    q = round(s * dominant_frac).
    """
    q = round_half_up(spec.s * spec.dominant_frac)
    if spec.s * spec.dominant_frac < 1 or q < 1:
        raise PartitionError("a dominant subset of %g%% of %d classes is empty"
                             % (100 * spec.dominant_frac, spec.s))
    return [np.sort((j * q + np.arange(q)) % spec.s) for j in range(spec.m)]


def _per_client_imbalance(spec, totals, subsets):
    s, m = spec.s, spec.m
    quota = largest_remainder(np.ones(m), int(totals.sum()))
    target = np.outer(quota, np.full(s, (1 - spec.dominant_share) / s))
    for j, subset in enumerate(subsets):
        target[j, subset] += quota[j] * spec.dominant_share / subset.size
    counts = np.zeros((m, s), dtype=np.int64)
    cursor = 0
    for c in range(s):
        if totals[c] > 0 and not target[:, c].sum() > 0:
            raise PartitionError(
                "class %d has %d examples but no client asks for it "
                "(dominant_share %g and it is in no dominant subset)"
                % (c, totals[c], spec.dominant_share))
        if totals[c] == 0:
            continue
        counts[:, c] = largest_remainder(target[:, c], int(totals[c]),
                                         start=cursor)
        cursor = (cursor + _topped_up(counts[:, c], target[:, c])) % m
    return counts


def _pooled_imbalance(spec, totals, subsets):
    s, m = spec.s, spec.m
    counts = np.zeros((m, s), dtype=np.int64)
    owners = [[j for j, subset in enumerate(subsets) if c in subset]
              for c in range(s)]
    cursor = 0
    for c in range(s):
        if owners[c]:
            dominant = round_half_up(totals[c] * spec.dominant_share)
            split = largest_remainder(np.ones(len(owners[c])), dominant,
                                      start=cursor)
            counts[owners[c], c] += split
        else:
            logger.warning("class %d is in no dominant subset; all of it is "
                           "pooled", c)
            dominant = 0
        pooled = int(totals[c]) - dominant
        spread = largest_remainder(np.ones(m), pooled, start=cursor)
        counts[:, c] += spread
        cursor = (cursor + _topped_up(spread, np.ones(m))) % m
    return counts


def imbalance_partition(spec):
    """
    Every client j is dominated by the class subset D_j of size
    round(s * dominant_frac): dominant_share of its examples come from D_j,
    the rest is spread evenly over all classes. Per-class totals are then
    reconciled by largest remainder with a rotating tie order.

    :param spec: PartitionSpec
    :return: List of m ClientProfile
    """
    spec.validate()
    totals = spec.totals()
    subsets = dominant_subsets(spec)
    if spec.pooled_remainder:
        counts = _pooled_imbalance(spec, totals, subsets)
    else:
        counts = _per_client_imbalance(spec, totals, subsets)
    profiles = _profiles(counts)
    shares = dominant_shares(profiles, subsets)
    worst = np.max(np.abs(shares - spec.dominant_share))
    if worst > 0.05:
        logger.warning("realized dominant shares deviate from %g by up to %.3f;"
                       " classes are not dominated evenly by the %d clients",
                       spec.dominant_share, worst, spec.m)
    return profiles


def longtail_totals(spec):
    """n_c = round(n_max * IF^(-c / (s - 1))) for c = 0 .. s-1."""
    if not spec.imbalance_factor >= 1:
        raise DomainError("imbalance factor must be >= 1, got %r"
                          % spec.imbalance_factor)
    n_max = int(spec.totals().max()) if spec.s else 0
    if spec.s == 1:
        return np.array([n_max], dtype=np.int64)
    exponents = -np.arange(spec.s) / (spec.s - 1)
    return np.array([round_half_up(n_max * spec.imbalance_factor ** e)
                     for e in exponents], dtype=np.int64)


def longtail_partition(spec):
    """
    Long-tailed class totals, split over clients as in dirichlet_partition.

    :return: (class totals, list of m ClientProfile)
    """
    spec.validate()
    totals = longtail_totals(spec)
    rng = _rng(spec)
    return totals, _profiles(_dirichlet_counts(totals, spec.m, spec.alpha,
                                               rng))


def make_partition(spec):
    """Profiles of any scheme."""
    if spec.scheme == "dirichlet":
        return dirichlet_partition(spec)
    if spec.scheme == "imbalance":
        return imbalance_partition(spec)
    if spec.scheme == "longtail":
        return longtail_partition(spec)[1]
    raise DomainError("unknown partition scheme %r" % spec.scheme)


def dominant_shares(profiles, subsets):
    """Fraction of each client's examples that falls in its dominant subset."""
    return np.array([p.class_counts[subset].sum() / p.total if p.total else 0.0
                     for p, subset in zip(profiles, subsets)])


def partition_summary(spec, profiles):
    """
    Per-class totals and per-client dominant shares of a partition.

    For the imbalance scheme the dominant subset is the client's assigned
    subset; otherwise it is its single most frequent class.
    """
    counts = np.array([p.class_counts for p in profiles])
    totals = counts.sum(axis=0)
    if spec.scheme == "imbalance":
        subsets = dominant_subsets(spec)
    else:
        subsets = [p.dominant_classes(0.0)[:1] for p in profiles]
    positive = totals[totals > 0]
    return {
        "scheme": spec.scheme,
        "class_totals": totals.tolist(),
        "client_totals": counts.sum(axis=1).tolist(),
        "dominant_shares": dominant_shares(profiles, subsets).tolist(),
        "max_min_ratio": (float(positive.max() / positive.min())
                          if positive.size else None),
    }
