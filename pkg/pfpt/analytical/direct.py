# -*- coding: utf-8 -*-
"""Reference evaluations of the generative model with plain Python loops.

Nothing here is vectorized and nothing is linearized: the likelihood is
written over the indicator tensor z[t][k][i] and the prior as a product of
Bernoulli terms. The tests compare the production code against these.

This module contains the functions:
    -softplus, sigmoid, log_sigmoid: Scalar versions with math
    -mlp: One-hidden-layer tanh network, one neuron at a time
    -logpdf: Diagonal normal log-density, one coordinate at a time
    -indicators: Assignment rows as a z tensor
    -direct_objective: Likelihood and prior terms from the z tensor
"""

import math


def softplus(x):
    if x > 0:
        return x + math.log1p(math.exp(-x))
    return math.log1p(math.exp(x))


def sigmoid(x):
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def log_sigmoid(x):
    """log(sigmoid(x)), without clamping."""
    if x >= 0:
        return -math.log1p(math.exp(-x))
    return x - math.log1p(math.exp(x))


def mlp(params, x):
    """
    Output list of W2 tanh(W1 x + b1) + b2.

    Args:
        params (MlpParams): The network
        x (list): Input of length d

    Returns:
        out (list) Output of length o
    """
    hidden = []
    for j in range(params.W1.shape[0]):
        pre = params.b1[j]
        for l in range(len(x)):
            pre += params.W1[j, l] * x[l]
        hidden.append(math.tanh(pre))
    out = []
    for o in range(params.W2.shape[0]):
        val = params.b2[o]
        for j in range(len(hidden)):
            val += params.W2[o, j] * hidden[j]
        out.append(val)
    return out


def alpha(gp, psi, eps=1e-6):
    return [softplus(v) + eps for v in mlp(gp.gamma_net, psi)]


def g(gp, phi):
    return mlp(gp.w_net, phi)[0]


def logpdf(omega, mean, variances):
    val = 0.0
    for w, m, v in zip(omega, mean, variances):
        val += -0.5 * (math.log(2 * math.pi) + math.log(v) + (w - m) ** 2 / v)
    return val


def indicators(rows, n):
    """
    z[t][k][i] = 1 if local prompt k of set t is assigned to pool prompt i.
    """
    z = []
    for row in rows:
        z.append([[1 if int(c) == i else 0 for i in range(n)] for c in row])
    return z


def direct_objective(sets, rows, gp):
    """
    Likelihood and prior of the sets given assignment rows, evaluated from
    the indicator tensor.

    Each local prompt is compared with psi = sum_i z[t][k][i] phi_i, which is
    the zero vector for an unassigned prompt, under variance alpha(psi). Each
    pool prompt contributes log sigmoid(g) to a set that selects it and
    log(1 - sigmoid(g)) to a set that does not.

    Args:
        sets (list): LocalPromptSet of every client
        rows (list): Assignment row of every client
        gp (GenerativeParams): The model

    Returns:
        loglik (float) Gaussian term
        logprior (float) Bernoulli term
    """
    pool = [list(p) for p in gp.pool.prompts]
    n, d = len(pool), len(pool[0])
    z = indicators(rows, n)
    loglik = 0.0
    for lset, zt in zip(sets, z):
        for k, omega in enumerate(lset.prompts):
            psi = [0.0] * d
            for i in range(n):
                for l in range(d):
                    psi[l] += zt[k][i] * pool[i][l]
            loglik += logpdf(list(omega), psi, alpha(gp, psi))
    logprior = 0.0
    for zt in z:
        for i in range(n):
            selected = sum(zt[k][i] for k in range(len(zt)))
            gi = g(gp, pool[i])
            logprior += (selected * log_sigmoid(gi)
                         + (1 - selected) * log_sigmoid(-gi))
    return loglik, logprior
