#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Server-side aggregation: candidate pool construction, alternating
maximization over the assignment and the generative parameters, and pruning of
pool prompts that no client uses.
"""
import logging
from dataclasses import asdict, dataclass, field, fields

import numpy as np
from scipy.optimize import minimize
from scipy.spatial.distance import cdist, pdist

from .likelihood import grad_params, joint_objective
from .matching import replay_sweep, solve_assignments
from .model import (Assignment, DomainError, GenerativeParams, GlobalPool,
                    InputShapeError, MlpParams, NumericalError, as_prompts,
                    init_generative_params)

logger = logging.getLogger(__name__)

SOLVERS = ("lbfgs", "ascent")


@dataclass
class AggregationConfig:
    """
    Optimizer schedule of the server.

    :param max_alternations: Upper bound on matching / parameter alternations
    :param solver: "lbfgs" maximizes over the parameters with L-BFGS-B between
                   two matchings, "ascent" takes param_steps_per_alt
                   backtracking gradient steps
    :param lbfgs_iterations: Iterations of each L-BFGS-B run
    :param param_steps_per_alt: Gradient steps between two matchings (ascent)
    :param initial_step_size: First trial step of the line search
    :param backtrack_factor: Step shrink factor in (0, 1)
    :param backtrack_max: Shrinks tried before a step is given up
    :param objective_tol: Stop when an alternation gains less than this
    :param dedup_radius_frac: Merge radius of the candidate pool, as a fraction
                              of the median pairwise upload distance
    :param full_assignment: Every local prompt is assigned (no dummy columns)
    :param learn_nets: Update w and gamma, not only the pool
    :param reinit_nets: Start every round from fresh nets
    :param hidden_width: Hidden width of fresh nets
    :param verify_fixed_point: Replay a client-by-client sweep after every
                               matching and fail if it moves anything
    :param workers: Threads used for per-client matchings
    """
    max_alternations: int = 50
    solver: str = "lbfgs"
    lbfgs_iterations: int = 200
    param_steps_per_alt: int = 10
    initial_step_size: float = 0.05
    backtrack_factor: float = 0.5
    backtrack_max: int = 20
    objective_tol: float = 1e-8
    dedup_radius_frac: float = 0.25
    full_assignment: bool = True
    learn_nets: bool = True
    reinit_nets: bool = False
    hidden_width: int = 32
    verify_fixed_point: bool = False
    workers: int = 1

    def validate(self):
        if self.solver not in SOLVERS:
            raise DomainError("aggregation.solver must be one of %s, got %r"
                              % (", ".join(SOLVERS), self.solver))
        for name in ("max_alternations", "lbfgs_iterations",
                     "param_steps_per_alt", "backtrack_max", "hidden_width",
                     "workers"):
            if int(getattr(self, name)) < 1:
                raise DomainError("aggregation.%s must be a positive integer, "
                                  "got %r" % (name, getattr(self, name)))
        for name in ("initial_step_size", "objective_tol",
                     "dedup_radius_frac"):
            if not getattr(self, name) > 0:
                raise DomainError("aggregation.%s must be positive, got %r"
                                  % (name, getattr(self, name)))
        if not 0 < self.backtrack_factor < 1:
            raise DomainError("aggregation.backtrack_factor must lie in (0, 1),"
                              " got %r" % self.backtrack_factor)
        return self

    @property
    def max_step_size(self):
        return self.initial_step_size * 2.0 ** self.backtrack_max

    @classmethod
    def keys(cls):
        return [f.name for f in fields(cls)]


@dataclass
class AggregationReport:
    objective_trace: list = field(default_factory=list)
    pool_size_before: int = 0
    pool_size_after: int = 0
    pruned_count: int = 0
    alternations_run: int = 0
    solver_iterations: int = 0
    objective: float = float("nan")
    step_size: float = float("nan")

    def as_dict(self):
        return asdict(self)


def _check_uploads(uploads, dim=None):
    if len(uploads) == 0:
        raise InputShapeError("aggregation needs at least one upload")
    dim = uploads[0].dim if dim is None else dim
    for lset in uploads:
        if lset.dim != dim:
            raise InputShapeError("client %d uploads prompts of dimension %d, "
                                  "expected %d" % (lset.client_id, lset.dim,
                                                   dim))
    return dim


def build_candidate_pool(previous, uploads, cfg):
    """
    Union of the previous pool and the uploaded prompts, where an upload is
    added only if it lies farther than eps from every prompt already kept.

    eps = cfg.dedup_radius_frac * median pairwise distance among the uploads.
    Uploads are visited in lexicographic order of their coordinates, so the
    result does not depend on the order of the clients. If fewer than
    max n_t prompts survive, the uploads farthest from the pool are added back.

    :param previous: GlobalPool or None
    :param uploads: List of LocalPromptSet
    :param cfg: AggregationConfig
    :return: GlobalPool
    """
    dim = _check_uploads(uploads, None if previous is None else previous.dim)
    stacked = np.concatenate([lset.prompts for lset in uploads])
    stacked = stacked[np.lexsort(stacked.T[::-1])]
    eps = 0.0
    if stacked.shape[0] > 1:
        eps = cfg.dedup_radius_frac * float(np.median(pdist(stacked)))
    kept = [] if previous is None else list(previous.prompts)
    added = np.zeros(stacked.shape[0], dtype=bool)
    for j, prompt in enumerate(stacked):
        if kept and np.min(np.linalg.norm(np.asarray(kept) - prompt,
                                          axis=1)) <= eps:
            continue
        kept.append(prompt)
        added[j] = True
    need = max(lset.size for lset in uploads) - len(kept)
    if need > 0:
        rest = np.flatnonzero(~added)
        dist = cdist(stacked[rest], np.asarray(kept)).min(axis=1)
        order = rest[np.lexsort((rest, -dist))][:need]
        kept.extend(stacked[np.sort(order)])
    generation = 0 if previous is None else previous.generation
    pool = GlobalPool(as_prompts(kept, dim=dim), generation)
    logger.debug("candidate pool: %d prompts (eps %.4g, %d uploads)",
                 pool.size, eps, stacked.shape[0])
    return pool


def _move(gp, grads, step, learn_nets):
    pool = GlobalPool(gp.pool.prompts + step * grads.pool, gp.pool.generation)
    if not learn_nets:
        return gp.with_pool(pool)
    return GenerativeParams(pool, gp.w_net.axpy(step, grads.w_net),
                            gp.gamma_net.axpy(step, grads.gamma_net))


def param_step(sets, a, gp, cfg, step=None, objective=None):
    """
    One gradient-ascent step on the joint objective with backtracking.

    The trial step starts at `step` (cfg.initial_step_size by default) and is
    multiplied by cfg.backtrack_factor until the objective does not decrease.
    If cfg.backtrack_max shrinks all fail, gp is returned unchanged.

    :return: (gp', objective', accepted or last tried step)
    """
    if objective is None:
        objective = joint_objective(sets, a, gp).total
    grads = grad_params(sets, a, gp)
    if not grads.is_finite():
        raise NumericalError("non-finite gradient at objective %r, block "
                             "norms %s" % (objective, grads.block_norms()))
    if grads.sq_norm(cfg.learn_nets) == 0.0:
        return gp, objective, step or cfg.initial_step_size
    trial = cfg.initial_step_size if step is None else step
    for _ in range(cfg.backtrack_max + 1):
        try:
            candidate = _move(gp, grads, trial, cfg.learn_nets)
            value = joint_objective(sets, a, candidate).total
        except InputShapeError:
            # overflowed to non-finite parameters
            value = -np.inf
        if np.isfinite(value) and value >= objective:
            return candidate, value, trial
        trial *= cfg.backtrack_factor
    logger.warning("line search gave up after %d shrinks (step %.3g, "
                   "gradient norm %.3g)", cfg.backtrack_max, trial,
                   np.sqrt(grads.sq_norm(cfg.learn_nets)))
    return gp, objective, trial


def _pack(pool, w_net, gamma_net, block):
    parts = []
    if block in ("pool", "all"):
        parts.append(np.ravel(pool))
    if block in ("nets", "all"):
        parts.extend(np.ravel(x) for x in w_net.arrays() + gamma_net.arrays())
    return np.concatenate(parts)


def _unpack(x, gp, block):
    pos = 0

    def take(like):
        nonlocal pos
        out = x[pos:pos + like.size].reshape(like.shape)
        pos += like.size
        return out

    pool, w_net, gamma_net = gp.pool, gp.w_net, gp.gamma_net
    if block in ("pool", "all"):
        pool = GlobalPool(take(pool.prompts), pool.generation)
    if block in ("nets", "all"):
        w_net = MlpParams(*[take(a) for a in w_net.arrays()])
        gamma_net = MlpParams(*[take(a) for a in gamma_net.arrays()])
    return GenerativeParams(pool, w_net, gamma_net)


def _lbfgs(sets, a, gp, block, maxiter):
    """
    L-BFGS-B on the negated joint objective over one parameter block
    ("pool", "nets" or "all"), the others held fixed.

    :return: (GenerativeParams at the solver's last iterate, or None if it is
              not finite, OptimizeResult)
    """
    def negative(x):
        try:
            trial = _unpack(x, gp, block)
            value = joint_objective(sets, a, trial).total
            grads = grad_params(sets, a, trial)
        except InputShapeError:
            # overflowed to non-finite parameters
            return np.inf, np.zeros_like(x)
        if not (np.isfinite(value) and grads.is_finite()):
            return np.inf, np.zeros_like(x)
        return -value, -_pack(grads.pool, grads.w_net, grads.gamma_net, block)

    x0 = _pack(gp.pool.prompts, gp.w_net, gp.gamma_net, block)
    result = minimize(negative, x0, jac=True, method="L-BFGS-B",
                      options={"maxiter": maxiter})
    try:
        return _unpack(result.x, gp, block), result
    except InputShapeError:
        return None, result


def solve_params(sets, a, gp, cfg, objective=None):
    """
    Maximize the joint objective over the pool and the nets for a fixed
    assignment.

    With cfg.learn_nets, L-BFGS-B first runs over the nets with the pool held
    fixed, then over all parameters together; otherwise over the pool only.
    The result of a run is kept only if it does not lower the objective.

    :return: (gp', objective', L-BFGS-B iterations)
    """
    if objective is None:
        objective = joint_objective(sets, a, gp).total
    blocks = ("nets", "all") if cfg.learn_nets else ("pool",)
    iterations = 0
    for block in blocks:
        candidate, result = _lbfgs(sets, a, gp, block, cfg.lbfgs_iterations)
        iterations += int(result.nit)
        value = -np.inf
        if candidate is not None:
            value = joint_objective(sets, a, candidate).total
        if np.isfinite(value) and value >= objective:
            gp, objective = candidate, value
        else:
            logger.debug("L-BFGS-B over %s rejected (%s): objective %.10g, "
                         "reached %.10g", block, result.message, objective,
                         value)
    return gp, objective, iterations


def prune_inactive(pool, a):
    """
    Drop the pool prompts no local prompt is assigned to.

    :return: (pruned GlobalPool, dict old index -> new index)
    """
    counts = a.counts(pool.size)
    keep = np.flatnonzero(counts > 0)
    if keep.size == 0:
        logger.warning("no pool prompt is assigned; keeping all %d", pool.size)
        keep = np.arange(pool.size)
    remap = {int(old): new for new, old in enumerate(keep)}
    return pool.take(keep), remap


def _remap_array(remap, size):
    mapping = np.full(size, -1, dtype=np.int64)
    for old, new in remap.items():
        mapping[old] = new
    return mapping


def _carry_nets(gp_carry, pool, cfg, rng):
    if gp_carry is None or cfg.reinit_nets:
        return init_generative_params(pool, hidden=cfg.hidden_width, rng=rng)
    if gp_carry.dim != pool.dim:
        raise InputShapeError("carried nets expect dimension %d, pool has %d"
                              % (gp_carry.dim, pool.dim))
    return GenerativeParams(pool, gp_carry.w_net, gp_carry.gamma_net)


def server_aggregate(previous, uploads, gp_carry=None, cfg=None, rng=None,
                     generation=None):
    """
    Aggregate one round of uploads into a new pool.

    Matchings and parameter updates (solve_params, or blocks of param_step
    with the ascent solver) alternate until an alternation gains less than
    cfg.objective_tol or cfg.max_alternations is reached. The loop ends on a
    matching, so the returned assignment is optimal for the returned
    parameters. Unused pool prompts are pruned last.

    Uploads are processed in order of client id and the assignment rows are
    returned in the order of `uploads`.

    :param previous: GlobalPool broadcast in the previous round, or None
    :param uploads: List of LocalPromptSet
    :param gp_carry: GenerativeParams whose nets are warm-started, or None
    :param cfg: AggregationConfig
    :param rng: numpy Generator used for fresh nets
    :param generation: Generation stamped on the returned pool
    :return: (GlobalPool, GenerativeParams, Assignment, AggregationReport)
    """
    cfg = (cfg or AggregationConfig()).validate()
    rng = np.random.default_rng(rng)
    order = sorted(range(len(uploads)), key=lambda t: uploads[t].client_id)
    sets = [uploads[t] for t in order]
    candidates = build_candidate_pool(previous, sets, cfg)
    gp = _carry_nets(gp_carry, candidates, cfg, rng)
    dummy = not cfg.full_assignment

    def z_step(gp):
        a = solve_assignments(sets, gp, dummy=dummy, workers=cfg.workers)
        if cfg.verify_fixed_point:
            replay_sweep(sets, gp, a, dummy=dummy)
        return a, joint_objective(sets, a, gp).total

    a, objective = z_step(gp)
    report = AggregationReport(objective_trace=[objective],
                               pool_size_before=candidates.size)
    step = cfg.initial_step_size
    for alternation in range(1, cfg.max_alternations + 1):
        if cfg.solver == "lbfgs":
            gp, objective, iterations = solve_params(sets, a, gp, cfg,
                                                     objective=objective)
            report.solver_iterations += iterations
        else:
            for _ in range(cfg.param_steps_per_alt):
                gp, objective, step = param_step(sets, a, gp, cfg,
                                                 step=step,
                                                 objective=objective)
                step = min(2.0 * step, cfg.max_step_size)
        a, objective = z_step(gp)
        report.objective_trace.append(objective)
        report.alternations_run = alternation
        gain = objective - report.objective_trace[-2]
        logger.debug("alternation %d: objective %.10g (gain %.3g)",
                     alternation, objective, gain)
        if gain < cfg.objective_tol:
            break

    pool, remap = prune_inactive(gp.pool, a)
    if generation is not None:
        pool = GlobalPool(pool.prompts, generation)
    gp = gp.with_pool(pool)
    a = a.remap(_remap_array(remap, candidates.size))
    report.pool_size_after = pool.size
    report.pruned_count = candidates.size - pool.size
    report.objective = joint_objective(sets, a, gp).total
    if cfg.solver == "ascent":
        report.step_size = step
    rows = [None] * len(sets)
    for pos, t in enumerate(order):
        rows[t] = a[pos]
    a = Assignment(tuple(rows), tuple(u.client_id for u in uploads))
    return pool, gp, a, report
