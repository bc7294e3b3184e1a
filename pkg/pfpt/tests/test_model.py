#!/usr/bin/env python3
# -*- coding: utf-8 -*-
import numpy as np
import pytest

from pfpt.analytical import direct, flatten, unflatten
from pfpt.model import (EPS_VAR, Assignment, AssignmentError, GenerativeParams,
                        GlobalPool, InputShapeError, LocalPromptSet, MlpParams,
                        alpha_forward, g_forward, init_generative_params,
                        init_mlp, mlp_backward, mlp_forward,
                        selection_probability, softplus, softplus_inv)
from pfpt.tests import constant_nets, random_params, run_tests


def test_mlp_zero_weights_pass_bias():
    params = MlpParams(np.zeros((3, 2)), np.zeros(3), np.zeros((2, 3)),
                       np.array([0.5, -1.5]))
    for x in ([0.0, 0.0], [3.0, -7.0]):
        assert np.array_equal(mlp_forward(params, x), [0.5, -1.5])


def test_mlp_zero_preactivation():
    params = MlpParams(np.array([[1.0, -1.0]]), np.zeros(1), np.array([[4.0]]),
                       np.array([0.25]))
    assert mlp_forward(params, [2.0, 2.0])[0] == 0.25


def test_mlp_matches_scalar_loops():
    rng = np.random.default_rng(1)
    for _ in range(20):
        d, h, o = rng.integers(1, 6, size=3)
        params = init_mlp(d, h, o, rng, out_bias=rng.standard_normal(o))
        x = rng.standard_normal(d)
        assert np.allclose(mlp_forward(params, x), direct.mlp(params, list(x)),
                           rtol=1e-13, atol=1e-13)
    batch = rng.standard_normal((5, d))
    assert np.allclose(mlp_forward(params, batch),
                       [direct.mlp(params, list(x)) for x in batch])


def test_mlp_backward_zero_cotangent():
    rng = np.random.default_rng(2)
    params = init_mlp(4, 3, 2, rng)
    grads, dx = mlp_backward(params, rng.standard_normal(4), np.zeros(2))
    assert grads.sq_norm() == 0.0
    assert np.all(dx == 0.0)


def test_mlp_backward_zero_hidden_weights():
    rng = np.random.default_rng(3)
    params = init_mlp(4, 3, 2, rng)
    params = MlpParams(np.zeros_like(params.W1), params.b1, params.W2,
                       params.b2)
    _, dx = mlp_backward(params, rng.standard_normal(4), np.ones(2))
    assert np.all(dx == 0.0)


def _net_objective(params, x, cot):
    return float(np.sum(cot * mlp_forward(params, x)))


def test_mlp_backward_finite_differences():
    rng = np.random.default_rng(4)
    h = 1e-5
    for _ in range(50):
        d, hid, o = rng.integers(1, 5, size=3)
        params = init_mlp(d, hid, o, rng, out_bias=rng.standard_normal(o))
        x = rng.standard_normal(d)
        cot = rng.standard_normal(o)
        grads, dx = mlp_backward(params, x, cot)
        for name, grad in zip(("W1", "b1", "W2", "b2"), grads.arrays()):
            base = getattr(params, name)
            for idx in np.ndindex(base.shape):
                up, down = base.copy(), base.copy()
                up[idx] += h
                down[idx] -= h
                num = (_net_objective(MlpParams(**{**params.__dict__,
                                                   name: up}), x, cot)
                       - _net_objective(MlpParams(**{**params.__dict__,
                                                     name: down}), x, cot)) \
                    / (2 * h)
                assert abs(num - grad[idx]) <= 1e-4 * max(1.0, abs(num))
        for j in range(d):
            e = np.zeros(d)
            e[j] = h
            num = (_net_objective(params, x + e, cot)
                   - _net_objective(params, x - e, cot)) / (2 * h)
            assert abs(num - dx[j]) <= 1e-4 * max(1.0, abs(num))


def test_mlp_backward_batch_sums_parameters():
    rng = np.random.default_rng(5)
    params = init_mlp(3, 4, 2, rng)
    X = rng.standard_normal((6, 3))
    G = rng.standard_normal((6, 2))
    grads, dX = mlp_backward(params, X, G)
    singles = [mlp_backward(params, x, g) for x, g in zip(X, G)]
    assert np.allclose(grads.W1, sum(s[0].W1 for s in singles))
    assert np.allclose(dX, np.stack([s[1] for s in singles]))


def test_alpha_softplus_of_zero():
    gp = constant_nets(np.zeros((1, 3)))
    gp = GenerativeParams(gp.pool, gp.w_net,
                          MlpParams(gp.gamma_net.W1, gp.gamma_net.b1,
                                    gp.gamma_net.W2, np.zeros(3)))
    alpha = alpha_forward(gp, np.ones(3))
    assert np.allclose(alpha, np.log(2.0) + 1e-6, rtol=0, atol=1e-15)
    assert abs(alpha[0] - 0.6931482) < 1e-7


def test_alpha_floor():
    gp = constant_nets(np.zeros((1, 2)))
    gp = GenerativeParams(gp.pool, gp.w_net,
                          MlpParams(gp.gamma_net.W1, gp.gamma_net.b1,
                                    gp.gamma_net.W2, np.full(2, -50.0)))
    alpha = alpha_forward(gp, np.zeros(2))
    assert np.all(alpha > 0)
    assert np.allclose(alpha, EPS_VAR, rtol=1e-9)


def test_alpha_positive_and_matches_scalar_softplus():
    rng = np.random.default_rng(6)
    gp = random_params(rng, 3, 4, hidden=5, weight_scale=3.0)
    psi = 5.0 * rng.standard_normal((10 ** 4, 4))
    alpha = alpha_forward(gp, psi)
    assert np.all(alpha > 0)
    for x in psi[:20]:
        assert np.allclose(alpha_forward(gp, x), direct.alpha(gp, list(x)),
                           rtol=1e-12)


def test_selection_logit_identity():
    gp = constant_nets(np.zeros((1, 2)))
    assert g_forward(gp, np.zeros(2)) == 0.0
    assert selection_probability(gp, np.zeros(2)) == 0.5
    for g in np.linspace(-30, 30, 61):
        gp = constant_nets(np.zeros((1, 2)), logit=g)
        assert abs(g_forward(gp, np.zeros(2)) - g) <= 1e-12
        if abs(g) <= 10:
            p = selection_probability(gp, np.zeros(2))
            assert abs(np.log(p) - np.log1p(-p) - g) <= 1e-9
    rng = np.random.default_rng(7)
    gp = random_params(rng, 4, 3)
    for phi in gp.pool.prompts:
        assert abs(selection_probability(gp, phi)
                   - direct.sigmoid(direct.g(gp, list(phi)))) < 1e-14


def test_init_unit_variance_bias():
    gp = init_generative_params(GlobalPool(np.zeros((2, 5))), hidden=6, seed=0)
    assert np.allclose(softplus(gp.gamma_net.b2), 1.0)
    assert abs(softplus_inv(1.0) - 0.5413) < 1e-4
    assert np.all(gp.w_net.b1 == 0) and np.all(gp.w_net.b2 == 0)
    assert np.all(np.abs(gp.w_net.W1) <= 1 / np.sqrt(5))
    again = init_generative_params(GlobalPool(np.zeros((2, 5))), hidden=6,
                                   seed=0)
    assert np.array_equal(flatten(gp), flatten(again))


def test_flatten_roundtrip_keeps_shapes():
    rng = np.random.default_rng(8)
    gp = random_params(rng, 3, 2, hidden=3)
    back = unflatten(gp, flatten(gp))
    assert back.w_net.W1.shape == (3, 2) and back.gamma_net.W2.shape == (2, 3)


def test_invalid_prompts():
    with pytest.raises(InputShapeError):
        LocalPromptSet(0, [[1.0, np.nan]])
    with pytest.raises(InputShapeError):
        GlobalPool(np.zeros((2, 3, 1)))
    with pytest.raises(InputShapeError):
        MlpParams(np.zeros((2, 3)), np.zeros(3), np.zeros((1, 2)),
                  np.zeros(1))
    with pytest.raises(InputShapeError):
        GenerativeParams(GlobalPool(np.zeros((1, 3))),
                         constant_nets(np.zeros((1, 2))).w_net,
                         constant_nets(np.zeros((1, 3))).gamma_net)


def test_assignment_validation_and_remap():
    with pytest.raises(AssignmentError):
        Assignment(([0, 0],))
    a = Assignment(([2, 0], [-1, 2]))
    assert np.array_equal(a.counts(3), [1, 0, 2])
    b = a.remap(np.array([1, -1, 0]))
    assert np.array_equal(b[0], [0, 1]) and np.array_equal(b[1], [-1, 0])
    sets = [LocalPromptSet(0, np.zeros((2, 1))),
            LocalPromptSet(1, np.zeros((2, 1)))]
    a.check(sets, 3, allow_unassigned=True)
    with pytest.raises(AssignmentError):
        a.check(sets, 3)
    with pytest.raises(AssignmentError):
        a.check(sets, 2, allow_unassigned=True)


if __name__ == "__main__":
    run_tests(globals())
