#!/usr/bin/env python3
# -*- coding: utf-8 -*-
from dataclasses import replace

import numpy as np
import pytest
from scipy.spatial.distance import pdist

from pfpt.clients import (ClientState, ClientTemplate, client_rng,
                          local_tune_drift, local_tune_generative,
                          make_ground_truth, select_prompts, simulate_client)
from pfpt.model import (DomainError, GlobalPool, alpha_forward,
                        selection_probability)
from pfpt.partition import ClientProfile
from pfpt.tests import run_tests


def make_state(counts, prototypes, **template):
    return ClientState(ClientProfile(0, counts), np.asarray(prototypes),
                       ClientTemplate(**template))


def test_select_whole_pool():
    state = make_state([1, 1], np.eye(2, 3), k=10)
    pool = GlobalPool(np.random.default_rng(0).standard_normal((4, 3)))
    selection = select_prompts(state, pool)
    assert sorted(selection.indices.tolist()) == [0, 1, 2, 3]
    assert not selection.fallback


def test_select_most_similar_first():
    state = make_state([5, 0], np.eye(2, 3), k=1)
    pool = GlobalPool(np.array([[0.0, 1.0, 0.0], [2.0, 0.0, 0.0],
                                [0.0, 0.0, 1.0]]))
    assert select_prompts(state, pool).indices.tolist() == [1]


def test_select_matches_brute_force_ranking():
    rng = np.random.default_rng(1)
    for _ in range(20):
        prototypes = rng.standard_normal((4, 5))
        counts = rng.integers(0, 10, size=4)
        counts[0] += 1
        state = make_state(counts, prototypes, k=3)
        pool = GlobalPool(rng.standard_normal((7, 5)))
        query = counts / counts.sum() @ prototypes
        cosine = [p @ query / (np.linalg.norm(p) * np.linalg.norm(query))
                  for p in pool.prompts]
        expected = sorted(range(7), key=lambda i: (-cosine[i], i))[:3]
        assert select_prompts(state, pool).indices.tolist() == expected


def test_select_zero_query_falls_back():
    state = make_state([0, 0], np.eye(2, 3), k=2)
    selection = select_prompts(state, GlobalPool(np.ones((3, 3))))
    assert selection.fallback and selection.indices.tolist() == [0, 1]


def test_ground_truth():
    single = make_ground_truth(1, 3, 1.0, seed=0)
    assert single.n_star == 1
    truth = make_ground_truth(12, 16, 1.0, seed=4, n_classes=5)
    assert pdist(truth.true_pool.prompts).min() >= 1.0 - 1e-12
    assert truth.prompt_classes.tolist() == [i % 5 for i in range(12)]
    again = make_ground_truth(12, 16, 1.0, seed=4, n_classes=5)
    assert np.array_equal(truth.true_pool.prompts, again.true_pool.prompts)
    assert np.array_equal(truth.true_params.w_net.W1,
                          again.true_params.w_net.W1)
    wide = make_ground_truth(6, 2, 25.0, seed=4)
    assert pdist(wide.true_pool.prompts).min() >= 25.0 - 1e-9
    with pytest.raises(DomainError):
        make_ground_truth(0, 3, 1.0, seed=0)


def test_generative_noise_free_is_exact():
    truth = make_ground_truth(4, 3, 1.0, seed=1, n_classes=4,
                              inclusion_logit=40.0)
    state = make_state([1, 1, 1, 1], np.zeros((4, 3)), noise_std=0.0,
                       dominant_mass=1.0)
    upload, record = local_tune_generative(state, truth, client_rng(0, 0, 1))
    assert sorted(record.source.tolist()) == [0, 1, 2, 3]
    assert np.array_equal(upload.prompts,
                          truth.true_pool.prompts[record.source])


def test_generative_dominant_classes_only():
    truth = make_ground_truth(8, 3, 1.0, seed=2, n_classes=4,
                              inclusion_logit=40.0)
    state = make_state([0, 9, 1, 0], np.zeros((4, 3)), dominant_mass=0.9)
    _, record = local_tune_generative(state, truth, client_rng(0, 0, 1))
    assert sorted(record.source.tolist()) == [1, 5]


def test_generative_inclusion_frequencies():
    truth = make_ground_truth(4, 2, 1.0, seed=3, n_classes=1,
                              inclusion_logit=0.0)
    state = make_state([1], np.zeros((1, 2)))
    p = selection_probability(truth.true_params, truth.true_pool.prompts)
    # uploads are redrawn until non-empty
    expected = p / (1.0 - np.prod(1.0 - p))
    trials = 4000
    hits = np.zeros(4)
    sizes = set()
    rng = np.random.default_rng(5)
    for _ in range(trials):
        upload, record = local_tune_generative(state, truth, rng)
        hits[record.source] += 1
        sizes.add(upload.size)
    se = np.sqrt(expected * (1 - expected) / trials)
    assert np.all(np.abs(hits / trials - expected) <= 3 * se + 1e-3)
    assert len(sizes) > 1


def test_generative_uploads_stay_close():
    truth = make_ground_truth(5, 3, 1.0, seed=6, n_classes=1)
    state = make_state([1], np.zeros((1, 3)), noise_std=1.0)
    rng = np.random.default_rng(7)
    violations = 0
    for _ in range(2000):
        upload, record = local_tune_generative(state, truth, rng)
        phi = truth.true_pool.prompts[record.source]
        bound = 6 * np.sqrt(alpha_forward(truth.true_params, phi).max())
        violations += int(np.sum(np.abs(upload.prompts - phi) > bound))
    assert violations <= 2


def test_drift_identity_and_full_step():
    prototypes = np.array([[1.0, 0.0], [0.0, 5.0]])
    selected = np.array([[0.9, 0.1], [0.2, 4.0]])
    state = make_state([1, 1], prototypes, local_steps=0, jitter_std=0.0,
                       mode="drift", dominant_mass=1.0)
    same = local_tune_drift(state, selected, np.random.default_rng(0))
    assert np.array_equal(same.prompts, selected)
    state = replace(state, template=replace(state.template, local_steps=1,
                                            step_size=1.0))
    moved = local_tune_drift(state, selected, np.random.default_rng(0))
    assert np.array_equal(moved.prompts, prototypes)


def test_drift_clients_separate():
    prototypes = np.array([[3.0, 0.0], [-3.0, 0.0]])
    selected = np.random.default_rng(1).standard_normal((6, 2))
    a = make_state([10, 0], prototypes, mode="drift", local_steps=10,
                   step_size=0.3)
    b = make_state([0, 10], prototypes, mode="drift", local_steps=10,
                   step_size=0.3)
    ua = local_tune_drift(a, selected, np.random.default_rng(2)).prompts
    ub = local_tune_drift(b, selected, np.random.default_rng(3)).prompts
    inter = np.linalg.norm(ua.mean(axis=0) - ub.mean(axis=0))
    intra = max(pdist(ua).max(), pdist(ub).max())
    assert inter > intra


def test_simulate_client_is_deterministic():
    truth = make_ground_truth(6, 3, 1.0, seed=8, n_classes=3)
    state = make_state([4, 4, 4], np.zeros((3, 3)), k=2)
    pool = GlobalPool(np.random.default_rng(9).standard_normal((5, 3)))
    first = simulate_client(state, pool, 17, 3, truth=truth)
    second = simulate_client(state, pool, 17, 3, truth=truth)
    assert np.array_equal(first.upload.prompts, second.upload.prompts)
    other = simulate_client(state, pool, 17, 4, truth=truth)
    assert not np.array_equal(first.upload.prompts, other.upload.prompts) \
        or first.upload.size != other.upload.size
    with pytest.raises(DomainError):
        simulate_client(state, pool, 17, 3)
    drift = replace(state, template=replace(state.template, mode="drift"))
    out = simulate_client(drift, pool, 17, 3)
    assert out.upload.size == 2 and out.record is None


def test_template_validation():
    for bad in ({"mode": "real"}, {"k": 0}, {"step_size": 1.5},
                {"noise_std": -1.0}):
        with pytest.raises(DomainError):
            ClientTemplate(**bad).validate()


if __name__ == "__main__":
    run_tests(globals())
