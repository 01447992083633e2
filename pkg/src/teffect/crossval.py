"""K-fold cross-validated hyperparameter selection for the nuisance networks.

The grid is the cross product of widths, learning rates, batch sizes, and
epoch counts.  Propensity candidates are scored by held-out cross-entropy on
the full sample; regression candidates by held-out mean squared error on the
arm being fitted.  A candidate whose training diverges is skipped rather
than failing the whole search; an error is raised only when every candidate
fails.

Fold assignment depends on the seed and the row count alone, and candidate
fit seeds are derived from the candidate's own hyperparameters, never its
position, so enlarging the grid can only improve the selected score.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .data import Sample
from .exceptions import EmptyArm, NonFiniteLoss
from .network import (
    BERNOULLI,
    LOGIT,
    IDENTITY,
    SQUARED_ERROR,
    NetworkConfig,
    _train,
    heldout_cross_entropy,
    heldout_mse,
)
from .seeding import derive_seed


@dataclass(frozen=True)
class CvGrid:
    """Candidate lists for the grid search plus the fold count."""

    widths: tuple = ((4,), (8,), (16,), (32,))
    learning_rates: tuple = (0.01, 0.001)
    batch_sizes: tuple = (64, 256)
    epochs: tuple = (100, 300)
    folds: int = 5
    activation: str = "relu"
    weight_bound: float | None = None

    def __post_init__(self):
        if self.folds < 2:
            raise ValueError("folds must be at least 2")
        for name in ("widths", "learning_rates", "batch_sizes", "epochs"):
            if len(getattr(self, name)) == 0:
                raise ValueError(f"{name} must be nonempty")

    def candidates(self):
        """Yield (widths, lr, batch, epochs) tuples in grid order."""
        return itertools.product(
            self.widths, self.learning_rates, self.batch_sizes, self.epochs
        )


DEFAULT_GRID = CvGrid()

# Reduced grids for the replication benchmark at desk scale; the full grid
# sits behind the full-scale flag.  Each is a single unbounded candidate:
# narrower or l1-bounded fits shrink the propensity toward 1/2, and that
# attenuation feeds straight into the weighted estimates as bias, so the
# desk candidates were chosen by downstream bias and coverage pilots rather
# than by held-out propensity error.  Held-out cross-entropy cannot arbitrate
# between them either: it prefers smooth attenuated fits in high dimension
# and noisy aggressive fits in low dimension, the opposite of what coverage
# needs in each regime, so the training budget is scheduled on the covariate
# count instead.
DESK_GRID = CvGrid(
    widths=((32,),),
    learning_rates=(0.05,),
    batch_sizes=(256,),
    epochs=(400,),
)

# More covariates need more capacity and larger steps to escape the
# attenuation plateau within a fixed epoch budget.
DESK_GRID_HIGH_DIM = CvGrid(
    widths=((96,),),
    learning_rates=(0.1,),
    batch_sizes=(256,),
    epochs=(400,),
)


def desk_grid(p: int) -> CvGrid:
    """Desk-scale candidate for a design with p covariates."""
    return DESK_GRID if p <= 10 else DESK_GRID_HIGH_DIM


@dataclass(frozen=True)
class CandidateScore:
    widths: tuple
    learning_rate: float
    batch_size: int
    epochs: int
    fold_losses: tuple
    mean_loss: float
    failed: bool


@dataclass(frozen=True)
class CvResult:
    best: NetworkConfig
    table: tuple
    objective: str


def _cv_data(sample: Sample, level: int, objective: str, targets):
    if objective == BERNOULLI:
        return sample.covariates, sample.indicator(level)
    mask = sample.arm(level)
    if not mask.any():
        raise EmptyArm(f"no observations with treatment level {level}")
    if targets is None:
        targets = sample.outcomes
    targets = np.asarray(targets, dtype=float).reshape(-1)
    return sample.covariates[mask], targets[mask]


def cv_select(
    sample: Sample,
    level: int,
    grid: CvGrid,
    objective: str,
    seed: int,
    targets=None,
) -> CvResult:
    """Pick the grid candidate with the lowest mean held-out loss.

    Parameters
    ----------
    objective : str
        ``bernoulli`` scores P(D = level | X) candidates by cross-entropy;
        ``squared_error`` scores E[target | X, D = level] candidates by MSE.
    seed : int
        Drives fold assignment and every candidate fit deterministically.
    targets : array, optional
        Regression targets; defaults to the sample outcomes.

    Returns
    -------
    CvResult with the winning NetworkConfig (its seed derived from the
    winning hyperparameters, so it is stable under grid enlargement) and
    the full score table.
    """
    if objective not in (BERNOULLI, SQUARED_ERROR):
        raise ValueError(f"unknown objective {objective!r}")
    all_candidates = list(grid.candidates())
    if len(all_candidates) == 1:
        # a one-point grid selects itself; skip the fold fits
        widths, lr, batch, epochs = all_candidates[0]
        best = NetworkConfig(
            widths=widths,
            activation=grid.activation,
            weight_bound=grid.weight_bound,
            learning_rate=lr,
            batch_size=batch,
            epochs=epochs,
            seed=derive_seed(seed, "fit", all_candidates[0]),
        )
        only = CandidateScore(
            widths=widths,
            learning_rate=lr,
            batch_size=batch,
            epochs=epochs,
            fold_losses=(),
            mean_loss=float("nan"),
            failed=False,
        )
        return CvResult(best=best, table=(only,), objective=objective)
    X, y = _cv_data(sample, level, objective, targets)
    n_rows = X.shape[0]
    perm = np.random.default_rng(derive_seed(seed, "folds", n_rows)).permutation(n_rows)
    fold_slices = np.array_split(perm, grid.folds)
    link = LOGIT if objective == BERNOULLI else IDENTITY
    score = heldout_cross_entropy if objective == BERNOULLI else heldout_mse

    table = []
    best_key = None
    best_mean = np.inf
    for cand in all_candidates:
        widths, lr, batch, epochs = cand
        fold_losses = []
        failed = False
        for k, hold in enumerate(fold_slices):
            train_idx = np.setdiff1d(perm, hold, assume_unique=True)
            config = NetworkConfig(
                widths=widths,
                activation=grid.activation,
                weight_bound=grid.weight_bound,
                learning_rate=lr,
                batch_size=batch,
                epochs=epochs,
                seed=derive_seed(seed, "cv", cand, k),
            )
            try:
                net = _train(X[train_idx], y[train_idx], config, link,
                             objective)
                value = score(net, X[hold], y[hold])
            except NonFiniteLoss:
                failed = True
                break
            if not np.isfinite(value):
                failed = True
                break
            fold_losses.append(value)
        mean_loss = float(np.mean(fold_losses)) if not failed else np.inf
        table.append(
            CandidateScore(
                widths=widths,
                learning_rate=lr,
                batch_size=batch,
                epochs=epochs,
                fold_losses=tuple(fold_losses),
                mean_loss=mean_loss,
                failed=failed,
            )
        )
        if mean_loss < best_mean:
            best_mean = mean_loss
            best_key = cand

    if best_key is None:
        raise NonFiniteLoss("every cross-validation candidate diverged")

    widths, lr, batch, epochs = best_key
    best = NetworkConfig(
        widths=widths,
        activation=grid.activation,
        weight_bound=grid.weight_bound,
        learning_rate=lr,
        batch_size=batch,
        epochs=epochs,
        seed=derive_seed(seed, "fit", best_key),
    )
    return CvResult(best=best, table=tuple(table), objective=objective)
