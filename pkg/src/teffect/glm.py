"""Parametric baseline nuisances: main-effects logistic and linear models.

These exist to quantify what the network nuisances buy: the same estimator
and variance pipeline run with misspecified parametric fits.  The logistic
fit is iteratively reweighted least squares driven to a gradient norm of
1e-8 with a 100-iteration cap; non-convergence is flagged, not raised, so a
separated replication is recorded rather than lost.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit


@dataclass(frozen=True)
class LogisticFit:
    coef: np.ndarray  # intercept first
    converged: bool
    n_iter: int
    grad_norm: float

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        f = self.coef[0] + X @ self.coef[1:]
        return np.clip(expit(f), 1e-12, 1.0 - 1e-12)


@dataclass(frozen=True)
class LinearFit:
    coef: np.ndarray  # intercept first

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        return self.coef[0] + X @ self.coef[1:]


def fit_logistic(X, y, tol: float = 1e-8, max_iter: int = 100) -> LogisticFit:
    """Main-effects logistic regression by IRLS.

    Stops when the mean-score norm drops below `tol`; after `max_iter`
    steps the last iterate is returned with converged False.  A vanishing
    ridge keeps the weighted normal equations solvable under separation.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).reshape(-1)
    Z = np.column_stack([np.ones(X.shape[0]), X])
    n, k = Z.shape
    coef = np.zeros(k)
    grad_norm = np.inf
    for it in range(1, max_iter + 1):
        p = expit(Z @ coef)
        grad = Z.T @ (y - p) / n
        grad_norm = float(np.linalg.norm(grad))
        if grad_norm <= tol:
            return LogisticFit(coef=coef, converged=True, n_iter=it, grad_norm=grad_norm)
        w = p * (1.0 - p)
        hess = (Z * w[:, None]).T @ Z / n + 1e-12 * np.eye(k)
        coef = coef + np.linalg.solve(hess, grad)
    return LogisticFit(coef=coef, converged=False, n_iter=max_iter, grad_norm=grad_norm)


def fit_linear(X, y) -> LinearFit:
    """Ordinary least squares with an intercept, via lstsq."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).reshape(-1)
    Z = np.column_stack([np.ones(X.shape[0]), X])
    coef, *_ = np.linalg.lstsq(Z, y, rcond=None)
    return LinearFit(coef=coef)
