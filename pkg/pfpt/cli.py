#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Command line front end::

    pfpt simulate  --config run.cfg [--seed N] [--set section.key=value] --out DIR
    pfpt partition --config run.cfg [--seed N] [--set ...] --out DIR
    pfpt aggregate a.csv b.csv ... [--config run.cfg] [--params params.txt] --out DIR

Exit status is 0 on success, 2 for configuration or input errors and 1 for
failures while running.
"""
import argparse
import logging
import os
import sys
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .aggregation import server_aggregate
from .config import config_hash, read_config
from .fileio import (CheckpointWriter, append_jsonl, dumps_record,
                     read_params, read_prompts_csv, write_json, write_params,
                     write_profiles_csv, write_prompts_csv)
from .model import (ConfigError, DomainError, InputShapeError, LocalPromptSet,
                    PFPTError)
from .partition import make_partition, partition_summary
from .runner import NETS, run_experiment, sub_rng

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


@dataclass
class RunManifest:
    config_hash: str
    seed: int
    version: str = __version__
    started_at: str = None
    finished_at: str = None
    outputs: list = field(default_factory=list)


def _now():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _load_config(config, overrides, seed):
    try:
        return read_config(config, overrides, seed)
    except (ConfigError, DomainError) as err:
        logger.error("%s", err)
        return None


def _out_dir(out, cfg):
    out = out or cfg.out_dir
    os.makedirs(out, exist_ok=True)
    return out


def cmd_simulate(config, overrides=(), seed=None, out=None):
    """
    Run a simulation and write metrics.jsonl, timings.jsonl, pool.csv,
    profiles.csv, checkpoints.h5, params.txt (pfpt) and manifest.json.
    """
    cfg = _load_config(config, overrides, seed)
    if cfg is None:
        return EXIT_USAGE
    out = _out_dir(out, cfg)
    manifest = RunManifest(config_hash(cfg), cfg.seed, started_at=_now())
    path = lambda name: os.path.join(out, name)
    checkpoints = None
    if cfg.checkpoint_every > 0:
        checkpoints = CheckpointWriter(path("checkpoints.h5"))
    try:
        with open(path("metrics.jsonl"), "w", encoding="utf-8",
                  newline="\n") as metrics, \
                open(path("timings.jsonl"), "w", encoding="utf-8",
                     newline="\n") as timings:

            def on_round(outcome):
                m = outcome.metrics
                append_jsonl(metrics, m.as_record())
                append_jsonl(timings, {"round": m.round, "wall_ms": m.wall_ms,
                                       "sampled": outcome.sampled})
                metrics.flush()
                if checkpoints is not None and (
                        m.round % cfg.checkpoint_every == 0
                        or m.round == cfg.rounds):
                    checkpoints.write_round(m.round, outcome.pool,
                                            outcome.uploads)

            result = run_experiment(cfg, on_round=on_round)
    except PFPTError as err:
        logger.error("%s", err)
        return EXIT_RUNTIME
    finally:
        if checkpoints is not None:
            checkpoints.close()
    outputs = ["metrics.jsonl", "timings.jsonl", "pool.csv", "profiles.csv"]
    write_prompts_csv(path("pool.csv"), result.pool.prompts)
    write_profiles_csv(path("profiles.csv"), result.profiles)
    if result.params is not None:
        write_params(path("params.txt"), result.params)
        outputs.append("params.txt")
    if checkpoints is not None:
        outputs.append("checkpoints.h5")
    manifest.finished_at = _now()
    manifest.outputs = sorted(outputs + ["manifest.json"])
    write_json(path("manifest.json"), asdict(manifest))
    logger.info("wrote %s to %s", ", ".join(manifest.outputs), out)
    return EXIT_OK


def cmd_partition(config, overrides=(), seed=None, out=None):
    """Write profiles.csv and partition_summary.json for the configured scheme."""
    cfg = _load_config(config, overrides, seed)
    if cfg is None:
        return EXIT_USAGE
    out = _out_dir(out, cfg)
    spec = cfg.resolved_partition()
    try:
        profiles = make_partition(spec)
    except PFPTError as err:
        logger.error("%s", err)
        return EXIT_RUNTIME
    write_profiles_csv(os.path.join(out, "profiles.csv"), profiles)
    with open(os.path.join(out, "partition_summary.json"), "w",
              encoding="utf-8", newline="\n") as f:
        f.write(dumps_record(partition_summary(spec, profiles)) + "\n")
    logger.info("wrote %d profiles to %s", len(profiles), out)
    return EXIT_OK


def _read_sets(paths):
    sets = [LocalPromptSet(t, read_prompts_csv(p)) for t, p in enumerate(paths)]
    dims = sorted({s.dim for s in sets})
    if len(dims) > 1:
        raise InputShapeError("prompt files have different dimensions %s"
                              % dims)
    return sets


def cmd_aggregate(paths, config=None, overrides=(), seed=None, out=None,
                  params=None):
    """
    Aggregate prompt CSV files once and write pool.csv, report.json and
    params.txt.
    """
    cfg = _load_config(config, overrides, seed)
    if cfg is None:
        return EXIT_USAGE
    try:
        sets = _read_sets(paths)
        warm = read_params(params) if params is not None else None
        if warm is not None and warm.dim != sets[0].dim:
            raise InputShapeError("warm-start parameters have dimension %d, "
                                  "prompts %d" % (warm.dim, sets[0].dim))
    except InputShapeError as err:
        logger.error("%s", err)
        return EXIT_USAGE
    except PFPTError as err:
        logger.error("%s", err)
        return EXIT_RUNTIME
    out = _out_dir(out, cfg)
    previous = warm.pool if warm is not None else None
    try:
        pool, gp, _, report = server_aggregate(
            previous, sets, warm, cfg.aggregation, rng=sub_rng(cfg.seed, NETS),
            generation=(previous.generation + 1) if previous else 1)
    except PFPTError as err:
        logger.error("%s", err)
        return EXIT_RUNTIME
    write_prompts_csv(os.path.join(out, "pool.csv"), pool.prompts)
    write_params(os.path.join(out, "params.txt"), gp)
    with open(os.path.join(out, "report.json"), "w", encoding="utf-8",
              newline="\n") as f:
        f.write(dumps_record(report.as_dict()) + "\n")
    logger.info("aggregated %d files into %d prompts (objective %s)",
                len(sets), pool.size, report.objective)
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="pfpt", description="Probabilistic federated prompt aggregation "
                                 "simulator")
    parser.add_argument("--version", action="version",
                        version="%(prog)s " + __version__)
    commands = parser.add_subparsers(dest="command", required=True)

    def common(sub):
        sub.add_argument("--config", type=str, default=None,
                         help="configuration file")
        sub.add_argument("--seed", type=int, default=None,
                         help="override experiment.seed")
        sub.add_argument("--set", dest="overrides", action="append",
                         default=[], metavar="SECTION.KEY=VALUE",
                         help="override one configuration value")
        sub.add_argument("--out", type=str, default=None,
                         help="output directory")
        sub.add_argument("-v", "--verbose", action="count", default=0,
                         help="-v for progress messages, -vv for debugging")

    common(commands.add_parser("simulate", help="run a federated simulation"))
    common(commands.add_parser("partition", help="write client data profiles"))
    aggregate = commands.add_parser("aggregate",
                                    help="aggregate prompt files once")
    common(aggregate)
    aggregate.add_argument("prompts", nargs="+", help="prompt CSV files")
    aggregate.add_argument("--params", type=str, default=None,
                           help="warm start from a params.txt")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    level = {0: logging.WARNING, 1: logging.INFO}.get(args.verbose,
                                                       logging.DEBUG)
    logging.basicConfig(level=level,
                        format="%(levelname)s %(name)s: %(message)s")
    np.seterr(over="ignore", under="ignore")
    if args.command == "simulate":
        return cmd_simulate(args.config, args.overrides, args.seed, args.out)
    if args.command == "partition":
        return cmd_partition(args.config, args.overrides, args.seed, args.out)
    return cmd_aggregate(args.prompts, args.config, args.overrides, args.seed,
                         args.out, args.params)


if __name__ == "__main__":
    sys.exit(main())
