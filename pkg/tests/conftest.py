"""Shared test oracles: brute-force minimizers and finite-difference gradients."""

import numpy as np
import pytest

from teffect.losses import loss_value
from teffect.network import _forward_cached, _objective_value


def weighted_objective(y, w, spec, beta):
    """n^{-1} sum_i w_i L(y_i - beta), vectorized over a beta grid."""
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    v = y[None, :] - beta[:, None]
    vals = (w[None, :] * loss_value(spec, v)).sum(axis=1) / y.size
    return vals if vals.size > 1 else float(vals[0])


def grid_minimizer(y, w, spec, spread=1.0, coarse=4001, fine=4001):
    """Two-stage dense-grid minimizer of the weighted loss.

    Returns (beta, flat_lo, flat_hi): the best grid point plus the interval
    of grid points whose objective is within one part in 1e12 of the
    minimum (nondegenerate only for the piecewise-linear check loss).
    """
    lo = float(np.min(y)) - spread
    hi = float(np.max(y)) + spread
    grid = np.linspace(lo, hi, coarse)
    vals = weighted_objective(y, w, spec, grid)
    k = int(np.argmin(vals))
    step = grid[1] - grid[0]
    fine_grid = np.linspace(grid[k] - step, grid[k] + step, fine)
    fine_vals = weighted_objective(y, w, spec, fine_grid)
    j = int(np.argmin(fine_vals))
    best = float(fine_grid[j])

    tol = abs(vals.min()) * 1e-12 + 1e-12
    flat = grid[vals <= vals[k] + tol]
    return best, float(flat.min()), float(flat.max())


def check_flat_set(y, w, spec):
    """Exact minimizer interval of the weighted check loss.

    The objective is piecewise linear in beta with kinks only at data
    values, so its minimizer set is an interval whose endpoints are data
    points; enumerating the kinks finds it without any solver.
    """
    pts = np.unique(y)
    vals = weighted_objective(y, w, spec, pts)
    tol = abs(vals.min()) * 1e-9 + 1e-12
    hit = pts[vals <= vals.min() + tol]
    return float(hit.min()), float(hit.max())


def fd_objective(weights, biases, activation, X, y, objective):
    _, _, f = _forward_cached(weights, biases, activation, X)
    return _objective_value(f, y, objective)


def fd_gradients(net, X, y, objective, h=1e-5):
    """Central finite differences of the batch objective in every parameter."""
    weights = [np.array(w) for w in net.weights]
    biases = [np.array(b) for b in net.biases]
    act = net.config.activation

    grads_w, grads_b = [], []
    for u in range(len(weights)):
        gw = np.zeros_like(weights[u])
        it = np.nditer(weights[u], flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = weights[u][idx]
            weights[u][idx] = orig + h
            up = fd_objective(weights, biases, act, X, y, objective)
            weights[u][idx] = orig - h
            down = fd_objective(weights, biases, act, X, y, objective)
            weights[u][idx] = orig
            gw[idx] = (up - down) / (2.0 * h)
        grads_w.append(gw)

        gb = np.zeros_like(biases[u])
        for j in range(biases[u].size):
            orig = biases[u][j]
            biases[u][j] = orig + h
            up = fd_objective(weights, biases, act, X, y, objective)
            biases[u][j] = orig - h
            down = fd_objective(weights, biases, act, X, y, objective)
            biases[u][j] = orig
            gb[j] = (up - down) / (2.0 * h)
        grads_b.append(gb)
    return grads_w, grads_b


def flatten_grads(grads_w, grads_b):
    return np.concatenate([g.ravel() for g in grads_w + grads_b])


def relu_margin(net, X):
    """Smallest |pre-activation| over all hidden units; FD needs it > h."""
    weights = [np.array(w) for w in net.weights]
    biases = [np.array(b) for b in net.biases]
    _, pre, _ = _forward_cached(weights, biases, net.config.activation, np.asarray(X, float))
    if not pre:
        return np.inf
    return min(float(np.abs(z).min()) for z in pre)


@pytest.fixture
def rng():
    return np.random.default_rng(20260816)
