"""Point estimators: weighted loss minimizers under inverse propensity weights.

For each treatment level d the parameter solves

    minimize over b:  sum_i w_i(d) * L(Y_i - b)

with w the inverse propensity weights (population targets) or the
treated-subgroup reweighting.  Each supported family has a closed-form or
fixed-point minimizer, so no generic optimizer enters: weighted mean,
weighted lower quantile, weighted expectile.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Sample
from .exceptions import (
    AllZeroWeights,
    DegenerateWeights,
    DimensionMismatch,
    NoConvergence,
)
from .losses import ASYMMETRIC_SQUARED, CHECK, SQUARED, LossSpec, loss_deriv


@dataclass(frozen=True)
class EstimandSpec:
    """What to estimate: the loss family and the target population.

    treated_level None targets the full population; an integer d' targets
    the subgroup with D = d'.  contrast, when set, is the vector a defining
    the reported scalar a'beta.
    """

    loss: LossSpec
    treated_level: int | None = None
    contrast: tuple | None = None

    def __post_init__(self):
        if self.contrast is not None:
            object.__setattr__(self, "contrast", tuple(float(c) for c in self.contrast))


def _readonly(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class PropensitySet:
    """Fitted one-vs-rest propensities with a trimming floor.

    probs has one column per treatment level; columns need not sum to one
    because each level is fitted separately.  Weights computed from the set
    divide by max(prob, floor); trimmed_counts records how many entries sat
    under the floor per level.
    """

    probs: np.ndarray
    floor: float = 1e-3
    source: str = "fixed"

    def __post_init__(self):
        probs = np.atleast_2d(np.asarray(self.probs, dtype=float))
        if not np.all((probs > 0.0) & (probs < 1.0)):
            raise ValueError("propensities must lie strictly in (0, 1)")
        if not 0.0 < self.floor < 0.5:
            raise ValueError("floor must lie in (0, 0.5)")
        object.__setattr__(self, "probs", _readonly(probs))

    @classmethod
    def from_networks(cls, sample: Sample, networks, floor=1e-3, source="ann"):
        """Stack per-level network predictions into a propensity matrix."""
        cols = []
        for level in range(sample.n_levels):
            cols.append(networks[level].predict(sample.covariates))
        return cls(np.column_stack(cols), floor=floor, source=source)

    @property
    def n_levels(self) -> int:
        return self.probs.shape[1]

    def trimmed(self, level: int) -> np.ndarray:
        """Column `level` with the floor applied."""
        return np.maximum(self.probs[:, level], self.floor)

    @property
    def trimmed_counts(self) -> tuple:
        return tuple(int((self.probs[:, d] < self.floor).sum()) for d in range(self.n_levels))


@dataclass(frozen=True)
class PointEstimate:
    """Per-level estimates with first-order-condition residuals.

    foc_residuals[d] is n^{-1} sum_i w_i L'(Y_i - beta_d); foc_bounds[d] is
    the tolerance it provably satisfies (a jump bound for the check family,
    a solver bound otherwise).
    """

    beta: np.ndarray
    estimand: EstimandSpec
    foc_residuals: np.ndarray
    foc_bounds: np.ndarray
    weight_sums: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "beta", _readonly(self.beta))
        object.__setattr__(self, "foc_residuals", _readonly(self.foc_residuals))
        object.__setattr__(self, "foc_bounds", _readonly(self.foc_bounds))
        object.__setattr__(self, "weight_sums", _readonly(self.weight_sums))


def weighted_mean(values, weights) -> float:
    """Weighted mean; the minimizer of the weighted squared loss."""
    values, weights = _check_pair(values, weights)
    total = weights.sum()
    if total <= 0.0:
        raise AllZeroWeights("total weight is zero")
    return float(weights @ values / total)


def weighted_quantile(values, weights, tau) -> float:
    """Lower endpoint of the weighted tau-quantile set.

    Sorts the values and returns the smallest one whose normalized
    cumulative weight reaches tau; this is the smallest minimizer of the
    weighted check loss, which standard subgradient algebra shows is the
    whole interval between this point and the next distinct value when the
    cumulative weight hits tau exactly.
    """
    if not 0.0 < tau < 1.0:
        raise ValueError("tau must lie strictly in (0, 1)")
    values, weights = _check_pair(values, weights)
    total = weights.sum()
    if total <= 0.0:
        raise AllZeroWeights("total weight is zero")
    order = np.argsort(values, kind="stable")
    csum = np.cumsum(weights[order])
    idx = int(np.searchsorted(csum, tau * total, side="left"))
    idx = min(idx, values.size - 1)
    return float(values[order[idx]])


def weighted_expectile(values, weights, tau, tol=1e-10, max_iter=200) -> float:
    """Weighted tau-expectile by fixed-point iteration.

    Iterates b <- sum(k_i y_i)/sum(k_i) with k_i = w_i |tau - 1{y_i <= b}|
    from the weighted mean, stopping when the update moves less than `tol`.
    """
    if not 0.0 < tau < 1.0:
        raise ValueError("tau must lie strictly in (0, 1)")
    values, weights = _check_pair(values, weights)
    if weights.sum() <= 0.0:
        raise AllZeroWeights("total weight is zero")
    beta = weighted_mean(values, weights)
    for _ in range(max_iter):
        kappa = weights * np.abs(tau - (values <= beta))
        beta_new = float(kappa @ values / kappa.sum())
        if abs(beta_new - beta) <= tol:
            return beta_new
        beta = beta_new
    raise NoConvergence(f"expectile iteration did not converge in {max_iter} steps")


def _check_pair(values, weights):
    values = np.asarray(values, dtype=float).reshape(-1)
    weights = np.asarray(weights, dtype=float).reshape(-1)
    if values.shape != weights.shape:
        raise DimensionMismatch("values and weights lengths differ")
    if np.any(weights < 0.0):
        raise ValueError("weights must be nonnegative")
    return values, weights


def minimize_weighted_loss(loss: LossSpec, values, weights) -> float:
    """Dispatch to the family's minimizer."""
    if loss.family == SQUARED:
        return weighted_mean(values, weights)
    if loss.family == CHECK:
        return weighted_quantile(values, weights, loss.tau)
    return weighted_expectile(values, weights, loss.tau)


def population_weights(sample: Sample, ps: PropensitySet, level: int) -> np.ndarray:
    """Inverse propensity weights D_{di} / max(pi_d, floor)."""
    return sample.indicator(level) / ps.trimmed(level)


def treated_weights(
    sample: Sample, ps: PropensitySet, level: int, treated_level: int
) -> np.ndarray:
    """Treated-subgroup weights D_{di} pi_{d'} / max(pi_d, floor).

    The d = d' component collapses to the bare arm indicator: the propensity
    ratio cancels exactly, so no trimming noise enters its own arm.
    """
    if level == treated_level:
        return sample.indicator(level)
    return sample.indicator(level) * ps.probs[:, treated_level] / ps.trimmed(level)


def _foc_bound(loss: LossSpec, values, weights, beta) -> float:
    n = values.shape[0]
    wsum = weights.sum()
    if loss.family == CHECK:
        # the residual is bounded by the largest subgradient jump; see the
        # ledgered note on the two normalizations
        return float(loss.scale * weights.max() * max(1.0 / n, 1.0 / wsum) * (1 + 1e-9))
    if loss.family == ASYMMETRIC_SQUARED:
        # fixed-point stop tolerance transfers linearly to the residual
        return float(4.0 * loss.scale * wsum * 1e-10 / n + 1e-12)
    scale_hint = loss.scale * (1.0 + abs(float(weights @ values)))
    return float(1e-8 * scale_hint / max(n, 1))


def _estimate_levels(sample: Sample, loss: LossSpec, weight_fn, estimand: EstimandSpec):
    n = sample.n
    betas, focs, bounds, sums = [], [], [], []
    for level in range(sample.n_levels):
        w = weight_fn(level)
        if w.sum() <= 0.0:
            raise DegenerateWeights(f"all weights are zero for level {level}")
        beta = minimize_weighted_loss(loss, sample.outcomes, w)
        foc = float(w @ loss_deriv(loss, sample.outcomes - beta) / n)
        bound = _foc_bound(loss, sample.outcomes, w, beta)
        if abs(foc) > max(bound, 1e-9 * (1.0 + abs(foc))):
            raise RuntimeError(
                f"first-order condition violated at level {level}: {foc} > {bound}"
            )
        betas.append(beta)
        focs.append(foc)
        bounds.append(bound)
        sums.append(float(w.sum()))
    return PointEstimate(
        beta=np.array(betas),
        estimand=estimand,
        foc_residuals=np.array(focs),
        foc_bounds=np.array(bounds),
        weight_sums=np.array(sums),
    )


def estimate_ipw(sample: Sample, loss: LossSpec, ps: PropensitySet) -> PointEstimate:
    """Population estimates for every level under inverse propensity weights."""
    _check_ps(sample, ps)
    estimand = EstimandSpec(loss=loss, treated_level=None)
    return _estimate_levels(
        sample, loss, lambda d: population_weights(sample, ps, d), estimand
    )


def estimate_treated(
    sample: Sample, loss: LossSpec, ps: PropensitySet, treated_level: int
) -> PointEstimate:
    """Treated-subgroup estimates: counterfactual summaries among D = d'.

    Any positive rescaling of the weights leaves every minimizer unchanged,
    so the literal weights and their self-normalized variant give identical
    points; the literal form is used.
    """
    _check_ps(sample, ps)
    if not 0 <= treated_level < sample.n_levels:
        raise ValueError(f"treated_level {treated_level} out of range")
    estimand = EstimandSpec(loss=loss, treated_level=treated_level)
    return _estimate_levels(
        sample, loss, lambda d: treated_weights(sample, ps, d, treated_level), estimand
    )


def estimate_regression_means(
    sample: Sample, regressions, treated_level: int | None = None
) -> PointEstimate:
    """Outcome-regression estimates: average fitted conditional means.

    Population targets average g_d over every row; treated-subgroup targets
    average over the rows with D = d'.  Defined for the squared family.
    """
    if treated_level is None:
        mask = np.ones(sample.n, dtype=bool)
    else:
        mask = sample.arm(treated_level)
        if not mask.any():
            raise DegenerateWeights(f"no rows with treatment level {treated_level}")
    loss = LossSpec(SQUARED)
    betas = []
    for level in range(sample.n_levels):
        fitted = regressions[level].predict(sample.covariates[mask])
        betas.append(float(np.mean(fitted)))
    zeros = np.zeros(sample.n_levels)
    return PointEstimate(
        beta=np.array(betas),
        estimand=EstimandSpec(loss=loss, treated_level=treated_level),
        foc_residuals=zeros,
        foc_bounds=zeros,
        weight_sums=np.full(sample.n_levels, float(mask.sum())),
    )


def contrast_point(point: PointEstimate, contrast) -> float:
    """Scalar a'beta for a contrast vector a."""
    a = np.asarray(contrast, dtype=float).reshape(-1)
    if a.shape[0] != point.beta.shape[0]:
        raise DimensionMismatch("contrast length does not match the level count")
    return float(a @ point.beta)


def _check_ps(sample: Sample, ps: PropensitySet):
    if ps.probs.shape != (sample.n, sample.n_levels):
        raise DimensionMismatch(
            f"propensity matrix shape {ps.probs.shape} does not match "
            f"({sample.n}, {sample.n_levels})"
        )
