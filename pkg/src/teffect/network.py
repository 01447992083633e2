"""Feedforward networks trained from scratch with mini-batch gradient descent.

Single-hidden-layer networks are the default nuisance learners; deeper
stacks follow the same recursion.  Everything is plain numpy: forward pass,
backprop, and an optional per-unit l1 projection after every step.  Two
output links are supported, identity for conditional means and logit for
propensities, and two batch objectives, half mean squared error and the
Bernoulli cross-entropy.

Training is deterministic: identical data, config, and seed give a
bit-identical network.  The only randomness is the init and the batch
shuffle, both driven by one generator seeded from the config.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .data import Sample
from .exceptions import DimensionMismatch, EmptyArm, NonFiniteLoss

IDENTITY = "identity"
LOGIT = "logit"

BERNOULLI = "bernoulli"
SQUARED_ERROR = "squared_error"

_PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class NetworkConfig:
    """Architecture and optimization settings for one training run.

    widths is one entry per hidden layer.  weight_bound, when finite,
    caps every unit's l1 norm (incoming weights plus bias) on every layer
    via Euclidean projection after each gradient step; None disables it.
    """

    widths: tuple = (16,)
    activation: str = "relu"
    weight_bound: float | None = None
    learning_rate: float = 0.01
    batch_size: int = 256
    epochs: int = 200
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        if len(self.widths) == 0 or any(w < 1 for w in self.widths):
            raise ValueError("widths must be a nonempty tuple of positive ints")
        if self.activation not in ("relu", "sigmoid"):
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.weight_bound is not None and not self.weight_bound > 0:
            raise ValueError("weight_bound must be positive or None")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be at least 1")


def _act(name, z):
    if name == "relu":
        return np.maximum(z, 0.0)
    return expit(z)


def _act_deriv(name, z):
    # relu subgradient at exactly 0 is 0
    if name == "relu":
        return (z > 0.0).astype(float)
    s = expit(z)
    return s * (1.0 - s)


@dataclass(frozen=True)
class FittedNetwork:
    """Trained network: layer parameters, output link, and the loss trace.

    weights[u] has shape (out_u, in_u); the final layer has out = 1.
    loss_trace holds the full-batch objective at init and after every epoch.
    """

    config: NetworkConfig
    input_dim: int
    link: str
    weights: tuple
    biases: tuple
    loss_trace: tuple

    def logits(self, X) -> np.ndarray:
        """Pre-link network output for a batch, shape (n,)."""
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        if X.shape[1] != self.input_dim:
            raise DimensionMismatch(
                f"expected {self.input_dim} input features, got {X.shape[1]}"
            )
        a = X
        for u in range(len(self.weights) - 1):
            a = _act(self.config.activation, a @ self.weights[u].T + self.biases[u])
        return (a @ self.weights[-1].T + self.biases[-1]).ravel()

    def predict(self, X) -> np.ndarray:
        """Link-applied output for a batch; probabilities under the logit link."""
        f = self.logits(X)
        if self.link == LOGIT:
            return np.clip(expit(f), _PROB_FLOOR, 1.0 - _PROB_FLOOR)
        return f

    def forward(self, x) -> float:
        """Link-applied output for a single covariate vector."""
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.shape[0] != self.input_dim:
            raise DimensionMismatch(
                f"expected {self.input_dim} input features, got {x.shape[0]}"
            )
        return float(self.predict(x.reshape(1, -1))[0])


def project_l1(v: np.ndarray, bound: float) -> np.ndarray:
    """Euclidean projection of `v` onto the l1 ball of radius `bound`.

    Sort-and-threshold construction: with u the sorted absolute values and
    c their cumulative sums, the shrinkage theta is (c[rho] - bound)/(rho+1)
    at the largest feasible pivot rho.  The input is returned unchanged when
    already feasible.
    """
    if bound <= 0:
        raise ValueError("bound must be positive")
    v = np.asarray(v, dtype=float)
    if np.abs(v).sum() <= bound:
        return v
    u = np.sort(np.abs(v))[::-1]
    csum = np.cumsum(u)
    pivots = u * np.arange(1, v.size + 1) > (csum - bound)
    rho = int(np.nonzero(pivots)[0][-1])
    theta = (csum[rho] - bound) / (rho + 1.0)
    return np.sign(v) * np.maximum(np.abs(v) - theta, 0.0)


def _project_layer(W, b, bound):
    stacked = np.hstack([W, b[:, None]])
    for j in range(stacked.shape[0]):
        row = stacked[j]
        if np.abs(row).sum() > bound:
            stacked[j] = project_l1(row, bound)
    return stacked[:, :-1], stacked[:, -1]


def _init_params(input_dim, config):
    rng = np.random.default_rng(config.seed)
    dims = [input_dim, *config.widths, 1]
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        s = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-s, s, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return weights, biases, rng


def _forward_cached(weights, biases, activation, X):
    acts = [X]
    pre = []
    a = X
    for u in range(len(weights) - 1):
        z = a @ weights[u].T + biases[u]
        pre.append(z)
        a = _act(activation, z)
        acts.append(a)
    f = (a @ weights[-1].T + biases[-1]).ravel()
    return acts, pre, f


def _objective_value(f, y, objective):
    if objective == BERNOULLI:
        return float(np.mean(np.logaddexp(0.0, f) - y * f))
    return float(0.5 * np.mean((y - f) ** 2))


def _gradients(weights, biases, activation, X, y, objective):
    m = X.shape[0]
    acts, pre, f = _forward_cached(weights, biases, activation, X)
    if objective == BERNOULLI:
        dfdj = (expit(f) - y) / m
    elif objective == SQUARED_ERROR:
        dfdj = (f - y) / m
    else:
        raise ValueError(f"unknown objective {objective!r}")

    grads_w = [None] * len(weights)
    grads_b = [None] * len(biases)
    delta = dfdj[:, None]
    grads_w[-1] = delta.T @ acts[-1]
    grads_b[-1] = delta.sum(axis=0)
    back = delta @ weights[-1]
    for u in range(len(weights) - 2, -1, -1):
        delta = back * _act_deriv(activation, pre[u])
        grads_w[u] = delta.T @ acts[u]
        grads_b[u] = delta.sum(axis=0)
        if u > 0:
            back = delta @ weights[u]
    return grads_w, grads_b


def batch_gradient(net: FittedNetwork, X, y, objective):
    """Exact gradient of the batch-mean objective at the network's weights.

    Returns (grads_w, grads_b) with entries shaped like the layer parameters.
    The objective is the one the training loop uses: mean Bernoulli
    cross-entropy under the logit link or half mean squared error under the
    identity link.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).reshape(-1)
    if X.shape[0] != y.shape[0]:
        raise DimensionMismatch("X and y row counts differ")
    if X.shape[1] != net.input_dim:
        raise DimensionMismatch("X width does not match the network input")
    return _gradients(
        [np.array(w) for w in net.weights],
        [np.array(b) for b in net.biases],
        net.config.activation,
        X,
        y,
        objective,
    )


def _train(X, y, config, link, objective) -> FittedNetwork:
    X = np.ascontiguousarray(X, dtype=float)
    y = np.asarray(y, dtype=float).reshape(-1)
    n = X.shape[0]
    weights, biases, rng = _init_params(X.shape[1], config)

    def full_loss():
        _, _, f = _forward_cached(weights, biases, config.activation, X)
        return _objective_value(f, y, objective)

    trace = [full_loss()]
    lr = config.learning_rate
    for _ in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            gw, gb = _gradients(weights, biases, config.activation, X[idx], y[idx], objective)
            for u in range(len(weights)):
                weights[u] -= lr * gw[u]
                biases[u] -= lr * gb[u]
                if config.weight_bound is not None:
                    weights[u], biases[u] = _project_layer(
                        weights[u], biases[u], config.weight_bound
                    )
        value = full_loss()
        if not np.isfinite(value):
            raise NonFiniteLoss(f"objective became {value} during training")
        trace.append(value)

    frozen_w = tuple(_freeze(w) for w in weights)
    frozen_b = tuple(_freeze(b) for b in biases)
    return FittedNetwork(
        config=config,
        input_dim=X.shape[1],
        link=link,
        weights=frozen_w,
        biases=frozen_b,
        loss_trace=tuple(trace),
    )


def _freeze(a):
    a = np.array(a)
    a.setflags(write=False)
    return a


def train_propensity(sample: Sample, level: int, config: NetworkConfig) -> FittedNetwork:
    """Fit a logit-link network for P(D = level | X) on the full sample.

    Maximizes the Bernoulli likelihood of the one-vs-rest indicator by
    mini-batch descent on the mean cross-entropy.
    """
    labels = sample.indicator(level)
    return _train(sample.covariates, labels, config, LOGIT, BERNOULLI)


def train_regression(sample: Sample, level: int, targets, config: NetworkConfig) -> FittedNetwork:
    """Fit an identity-link network for E[target | X, D = level].

    Only rows with D = level enter the objective, matching a squared-error
    fit weighted by the arm indicator.
    """
    mask = sample.arm(level)
    if not mask.any():
        raise EmptyArm(f"no observations with treatment level {level}")
    targets = np.asarray(targets, dtype=float).reshape(-1)
    if targets.shape[0] != sample.n:
        raise DimensionMismatch("targets length does not match the sample")
    return _train(sample.covariates[mask], targets[mask], config, IDENTITY, SQUARED_ERROR)


def heldout_cross_entropy(net: FittedNetwork, X, y) -> float:
    """Mean Bernoulli cross-entropy of a logit-link network on held-out rows."""
    f = net.logits(X)
    y = np.asarray(y, dtype=float).reshape(-1)
    return float(np.mean(np.logaddexp(0.0, f) - y * f))


def heldout_mse(net: FittedNetwork, X, y) -> float:
    """Mean squared error of an identity-link network on held-out rows."""
    g = net.predict(X)
    y = np.asarray(y, dtype=float).reshape(-1)
    return float(np.mean((y - g) ** 2))


class _NetworkMixin:
    """Shared sklearn plumbing for the two network estimators."""

    def _config(self) -> NetworkConfig:
        return NetworkConfig(
            widths=tuple(self.widths),
            activation=self.activation,
            weight_bound=self.weight_bound,
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            epochs=self.epochs,
            seed=self.seed,
        )

    def _check_xy(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float).reshape(-1)
        if X.ndim != 2:
            raise DimensionMismatch("X must be 2-dimensional")
        if X.shape[0] != y.shape[0]:
            raise DimensionMismatch("X and y row counts differ")
        return X, y


class RegressionNetwork(_NetworkMixin, RegressorMixin, BaseEstimator):
    """sklearn-style regressor wrapping the identity-link network."""

    def __init__(
        self,
        widths=(16,),
        activation="relu",
        weight_bound=None,
        learning_rate=0.01,
        batch_size=256,
        epochs=200,
        seed=0,
    ):
        self.widths = widths
        self.activation = activation
        self.weight_bound = weight_bound
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.seed = seed

    def fit(self, X, y):
        X, y = self._check_xy(X, y)
        self.net_ = _train(X, y, self._config(), IDENTITY, SQUARED_ERROR)
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "net_")
        return self.net_.predict(np.asarray(X, dtype=float))


class PropensityNetwork(_NetworkMixin, ClassifierMixin, BaseEstimator):
    """sklearn-style binary classifier wrapping the logit-link network."""

    def __init__(
        self,
        widths=(16,),
        activation="relu",
        weight_bound=None,
        learning_rate=0.01,
        batch_size=256,
        epochs=200,
        seed=0,
    ):
        self.widths = widths
        self.activation = activation
        self.weight_bound = weight_bound
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.seed = seed

    def fit(self, X, y):
        X, y = self._check_xy(X, y)
        values = np.unique(y)
        if not np.all(np.isin(values, (0.0, 1.0))):
            raise ValueError("labels must be binary 0/1")
        self.classes_ = np.array([0, 1])
        self.net_ = _train(X, y, self._config(), LOGIT, BERNOULLI)
        self.n_features_in_ = X.shape[1]
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "net_")
        p1 = self.net_.predict(np.asarray(X, dtype=float))
        return np.column_stack([1.0 - p1, p1])

    def predict(self, X):
        return (self.predict_proba(X)[:, 1] >= 0.5).astype(int)
