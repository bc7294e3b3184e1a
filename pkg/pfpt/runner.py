#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Multi-round federated simulation.

Every round samples clients without replacement, lets them select from and
tune against the broadcast pool, aggregates their uploads with the configured
aggregator and records RoundMetrics. A run is a deterministic function of its
ExperimentConfig, whatever the number of worker threads.
"""
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np
from scipy.spatial.distance import cdist, pdist
from tqdm.auto import tqdm

from .aggregation import AggregationConfig, server_aggregate
from .baselines import fedavg_prompts, gmm_aggregate
from .clients import (ClientState, ClientTemplate, TruthSpec,
                      make_ground_truth, random_prototypes, simulate_client)
from .matching import hungarian_max
from .model import UNASSIGNED, ConfigError, GlobalPool, RoundError
from .partition import PartitionSpec, make_partition

logger = logging.getLogger(__name__)

AGGREGATORS = ("pfpt", "fedavg", "gmm")

# seed streams, kept apart from the (seed, client_id, round) client streams
STREAM_BASE = 2 ** 31
PROTOTYPES, INITIAL_POOL, SAMPLING, NETS, GMM = range(1, 6)


def sub_rng(seed, stream, *extra):
    return np.random.default_rng(np.random.SeedSequence(
        [int(seed), STREAM_BASE + stream] + [int(e) for e in extra]))


def sub_seed(seed, stream, *extra):
    return int(sub_rng(seed, stream, *extra).integers(2 ** 63))


@dataclass
class ExperimentConfig:
    """
    Everything a simulation depends on.

    :param rounds: Communication rounds
    :param total_clients: Client population; partition.m if None, and takes
                          precedence over partition.m otherwise
    :param sampled: Clients sampled per round
    :param dim: Prompt dimension
    :param aggregator: "pfpt", "fedavg" or "gmm"
    :param seed: Master seed
    :param workers: Threads for client simulation and matching
    :param gmm_components: K of the GMM baseline, median upload size if None
    :param initial_pool_size: Prompts in the random round-0 pool, clients.k if
                              None
    :param checkpoint_every: Rounds between raw prompt checkpoints, 0 for none
    :param progress: Show a progress bar on stderr
    :param out_dir: Default output directory of the command line
    """
    rounds: int = 120
    total_clients: int = None
    sampled: int = 10
    dim: int = 16
    aggregator: str = "pfpt"
    seed: int = 0
    workers: int = 1
    gmm_components: int = None
    initial_pool_size: int = None
    checkpoint_every: int = 10
    progress: bool = False
    out_dir: str = "pfpt-out"
    partition: PartitionSpec = field(default_factory=PartitionSpec)
    clients: ClientTemplate = field(default_factory=ClientTemplate)
    truth: TruthSpec = field(default_factory=TruthSpec)
    aggregation: AggregationConfig = field(default_factory=AggregationConfig)

    SECTIONS = ("partition", "clients", "truth", "aggregation")

    def validate(self):
        if int(self.rounds) < 1:
            raise ConfigError("experiment.rounds must be >= 1, got %r"
                              % self.rounds)
        if int(self.dim) < 1:
            raise ConfigError("experiment.dim must be >= 1, got %r" % self.dim)
        if not 1 <= int(self.sampled) <= self.n_clients:
            raise ConfigError("experiment.sampled must lie in [1, %d clients], "
                              "got %r" % (self.n_clients, self.sampled))
        if self.aggregator not in AGGREGATORS:
            raise ConfigError("experiment.aggregator must be one of %s, got %r"
                              % (", ".join(AGGREGATORS), self.aggregator))
        if int(self.workers) < 1:
            raise ConfigError("experiment.workers must be >= 1, got %r"
                              % self.workers)
        if int(self.checkpoint_every) < 0:
            raise ConfigError("experiment.checkpoint_every must be >= 0, got %r"
                              % self.checkpoint_every)
        for name in ("gmm_components", "initial_pool_size"):
            value = getattr(self, name)
            if value is not None and int(value) < 1:
                raise ConfigError("experiment.%s must be >= 1, got %r"
                                  % (name, value))
        self.resolved_partition().validate()
        self.clients.validate()
        self.truth.validate()
        self.aggregation.validate()
        return self

    @property
    def n_clients(self):
        if self.total_clients is None:
            return int(self.partition.m)
        return int(self.total_clients)

    def resolved_partition(self):
        seed = self.seed if self.partition.seed is None else self.partition.seed
        return replace(self.partition, m=self.n_clients, seed=seed)

    def resolved_truth(self):
        seed = self.seed if self.truth.seed is None else self.truth.seed
        n_classes = (self.partition.s if self.truth.n_classes is None
                     else self.truth.n_classes)
        return replace(self.truth, seed=seed, n_classes=n_classes)

    @property
    def recovery(self):
        return self.clients.mode == "generative"

    def as_dict(self):
        out = asdict(self)
        out["partition"] = asdict(self.resolved_partition())
        if out["partition"]["class_totals"] is not None:
            out["partition"]["class_totals"] = [
                int(c) for c in out["partition"]["class_totals"]]
        out["truth"] = asdict(self.resolved_truth())
        return out

    @classmethod
    def keys(cls):
        return [f.name for f in fields(cls) if f.name not in cls.SECTIONS]


@dataclass
class RoundMetrics:
    round: int
    pool_size: int
    objective: float = None
    alignment_accuracy: float = None
    pool_recovery_error: float = None
    centroid_shift: float = None
    n_uploads: int = 0
    pruned_count: int = None
    alternations: int = None
    wall_ms: int = 0

    def as_record(self):
        """Metrics without wall-clock time."""
        out = asdict(self)
        del out["wall_ms"]
        return out


@dataclass
class RoundOutcome:
    metrics: RoundMetrics
    pool: GlobalPool
    uploads: list
    sampled: list
    report: object = None


@dataclass
class ExperimentResult:
    metrics: list
    pool: GlobalPool
    params: object = None
    truth: object = None
    profiles: list = None


def pool_recovery_error(pool, true_pool):
    """
    Mean distance between truth and pool under the optimal one-to-one
    matching; each prompt left over on either side adds the truth's minimum
    pairwise distance (1.0 for a single true prompt).
    """
    dist = cdist(pool.prompts, true_pool.prompts)
    if pool.size <= true_pool.size:
        matched = -hungarian_max(-dist).total
    else:
        matched = -hungarian_max(-dist.T).total
    penalty = (float(pdist(true_pool.prompts).min()) if true_pool.size > 1
               else 1.0)
    surplus = abs(pool.size - true_pool.size)
    return (matched + surplus * penalty) / true_pool.size


def truth_to_pool(pool, true_pool):
    """pool index -> matched true index (or UNASSIGNED), by distance."""
    dist = cdist(true_pool.prompts, pool.prompts)
    mapping = np.full(pool.size, UNASSIGNED, dtype=np.int64)
    if true_pool.size <= pool.size:
        cols = hungarian_max(-dist).row_to_col
        mapping[cols] = np.arange(true_pool.size)
    else:
        rows = hungarian_max(-dist.T).row_to_col
        mapping[np.arange(pool.size)] = rows
    return mapping


def alignment_accuracy(assignment, records, pool, true_pool):
    """
    Fraction of local prompts whose assigned pool prompt is matched to the
    true prompt that generated them. None if there is nothing to score.

    :param assignment: Assignment with one row per record, same client order
    :param records: List of GenerationRecord
    """
    total = sum(r.source.size for r in records)
    if assignment is None or total == 0:
        return None
    mapping = truth_to_pool(pool, true_pool)
    correct = 0
    for row, record in zip(assignment.rows, records):
        inferred = np.where(row == UNASSIGNED, UNASSIGNED,
                            mapping[np.maximum(row, 0)])
        correct += int(np.sum(inferred == record.source))
    return correct / total


def _centroid_shift(pool, previous):
    return float(np.linalg.norm(pool.prompts.mean(axis=0)
                                - previous.prompts.mean(axis=0)))


class Experiment:
    """
    State of a running simulation.

    :param cfg: ExperimentConfig, validated here
    """

    def __init__(self, cfg):
        self.cfg = cfg.validate()
        self.profiles = make_partition(cfg.resolved_partition())
        self.truth = None
        if cfg.recovery:
            spec = cfg.resolved_truth()
            self.truth = make_ground_truth(
                spec.n_star, cfg.dim, spec.separation, spec.seed,
                n_classes=spec.n_classes,
                inclusion_logit=spec.inclusion_logit, hidden=spec.hidden)
            prototypes = self.truth.class_means(cfg.partition.s)
        else:
            prototypes = random_prototypes(
                cfg.partition.s, cfg.dim, cfg.clients.prototype_scale,
                sub_seed(cfg.seed, PROTOTYPES))
        self.states = [ClientState(p, prototypes, cfg.clients)
                       for p in self.profiles]
        size = cfg.initial_pool_size or cfg.clients.k
        self.pool = GlobalPool(cfg.clients.prototype_scale * sub_rng(
            cfg.seed, INITIAL_POOL).standard_normal((size, cfg.dim)))
        self.params = None
        self._sampling = sub_rng(cfg.seed, SAMPLING)
        self._nets = sub_rng(cfg.seed, NETS)

    def sample_clients(self):
        picked = self._sampling.choice(self.cfg.n_clients,
                                       self.cfg.sampled, replace=False)
        return sorted(int(c) for c in picked)

    def _simulate(self, sampled, round_):
        def run(cid):
            return simulate_client(self.states[cid], self.pool, self.cfg.seed,
                                   round_, truth=self.truth)
        if self.cfg.workers > 1:
            with ThreadPoolExecutor(max_workers=self.cfg.workers) as pool:
                return list(pool.map(run, sampled))
        return [run(cid) for cid in sampled]

    def _aggregate(self, uploads, round_):
        cfg = self.cfg
        if cfg.aggregator == "fedavg":
            return fedavg_prompts(uploads, generation=round_), None, None
        if cfg.aggregator == "gmm":
            pool = gmm_aggregate(uploads, K=cfg.gmm_components,
                                 seed=sub_seed(cfg.seed, GMM, round_),
                                 generation=round_)
            return pool, None, None
        agg_cfg = replace(cfg.aggregation, workers=cfg.workers)
        previous = None if round_ == 1 else self.pool
        pool, self.params, assignment, report = server_aggregate(
            previous, uploads, self.params, agg_cfg, rng=self._nets,
            generation=round_)
        return pool, assignment, report

    def run_round(self, round_):
        """Execute one round and move the broadcast pool forward."""
        start = time.perf_counter()
        sampled = self.sample_clients()
        outcomes = self._simulate(sampled, round_)
        uploads = [o.upload for o in outcomes]
        pool, assignment, report = self._aggregate(uploads, round_)
        metrics = RoundMetrics(round_, pool.size,
                               n_uploads=sum(u.size for u in uploads),
                               centroid_shift=_centroid_shift(pool, self.pool))
        if report is not None:
            metrics.objective = report.objective
            metrics.pruned_count = report.pruned_count
            metrics.alternations = report.alternations_run
        if self.truth is not None:
            self.truth = self.truth.with_records(o.record for o in outcomes)
            metrics.pool_recovery_error = pool_recovery_error(
                pool, self.truth.true_pool)
            metrics.alignment_accuracy = alignment_accuracy(
                assignment, self.truth.records, pool, self.truth.true_pool)
        self.pool = pool
        metrics.wall_ms = int(round(1000 * (time.perf_counter() - start)))
        logger.info("round %d: pool %d, objective %s, recovery error %s, "
                    "alignment %s", round_, pool.size, metrics.objective,
                    metrics.pool_recovery_error, metrics.alignment_accuracy)
        return RoundOutcome(metrics, pool, uploads, sampled, report)


def run_experiment(cfg, on_round=None):
    """
    Run cfg.rounds rounds.

    :param cfg: ExperimentConfig
    :param on_round: Called with every RoundOutcome as soon as it completes
    :return: ExperimentResult
    """
    experiment = Experiment(cfg)
    metrics = []
    rounds = tqdm(range(1, cfg.rounds + 1), disable=not cfg.progress,
                  desc="rounds", unit="round")
    for round_ in rounds:
        try:
            outcome = experiment.run_round(round_)
        except Exception as err:
            raise RoundError("round %d: %s: %s" % (round_, type(err).__name__,
                                                   err)) from err
        metrics.append(outcome.metrics)
        if on_round is not None:
            on_round(outcome)
    return ExperimentResult(metrics, experiment.pool, experiment.params,
                            experiment.truth, experiment.profiles)
