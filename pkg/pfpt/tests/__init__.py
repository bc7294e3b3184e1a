"""
Tests of the pfpt package, collected by pytest. Every test module can also be
run directly, for example::

    python -m pfpt.tests.test_matching --test test_hungarian_matches_enumeration
"""
import argparse
import inspect
import pathlib
import tempfile

import numpy as np

from ..model import (GenerativeParams, GlobalPool, LocalPromptSet, MlpParams,
                     init_mlp, softplus_inv)


def constant_nets(pool, hidden=4, logit=0.0, variance=1.0):
    """
    GenerativeParams whose nets ignore their input: g = logit and
    alpha = variance + 1e-6 everywhere.
    """
    pool = pool if isinstance(pool, GlobalPool) else GlobalPool(pool)
    d = pool.dim
    w_net = MlpParams(np.zeros((hidden, d)), np.zeros(hidden),
                      np.zeros((1, hidden)), np.array([float(logit)]))
    gamma_net = MlpParams(np.zeros((hidden, d)), np.zeros(hidden),
                          np.zeros((d, hidden)),
                          np.full(d, float(softplus_inv(variance))))
    return GenerativeParams(pool, w_net, gamma_net)


def random_params(rng, n, d, hidden=4, scale=1.0, weight_scale=1.0):
    pool = GlobalPool(scale * rng.standard_normal((n, d)))
    w_net = init_mlp(d, hidden, 1, rng, weight_scale=weight_scale)
    gamma_net = init_mlp(d, hidden, d, rng, out_bias=softplus_inv(1.0),
                         weight_scale=weight_scale)
    return GenerativeParams(pool, w_net, gamma_net)


def random_sets(rng, m, d, n_max, scale=1.0):
    return [LocalPromptSet(t, scale * rng.standard_normal(
        (int(rng.integers(1, n_max + 1)), d))) for t in range(m)]


def random_rows(rng, sets, n):
    return [rng.permutation(n)[:s.size] for s in sets]


def run_tests(namespace, argv=None):
    """
    Run the test_* functions of a module namespace, all of them or the one
    named by --test, printing 'passed' after each.
    """
    parser = argparse.ArgumentParser()
    parser.add_argument("--test",
                        type=str,
                        default="all",
                        help="Name of the test to run, default to all")
    args, _ = parser.parse_known_args(argv)
    tests = sorted((name, func) for name, func in namespace.items()
                   if name.startswith("test_") and callable(func))
    for name, func in tests:
        if args.test not in (name, "all"):
            continue
        print("Testing: " + name + " ....... ", end="", flush=True)
        kwargs = {}
        if "tmp_path" in inspect.signature(func).parameters:
            kwargs["tmp_path"] = pathlib.Path(tempfile.mkdtemp())
        func(**kwargs)
        print("passed")
