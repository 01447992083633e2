"""Sandwich variance for the weighted loss minimizers.

The asymptotic variance of each level's estimate is H^{-2} E[S^2] with H the
curvature of the population first-order condition and S the efficient
influence value.  Three plug-ins are assembled here:

- an exponential-family sieve for the conditional outcome density, whose
  y-score turns the curvature into a sample average (integration by parts);
- a regression of the loss derivative on covariates, the augmentation term
  that restores efficiency relative to the known-propensity variance;
- the influence values themselves, combined into the sandwich.

Treated-subgroup targets reuse every formula with the outer weight
pi_{d'}(X)/p_{d'} applied to the curvature average and to the influence
terms; the population case is outer weight 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.stats import norm

from .data import Sample
from .effects import PointEstimate, PropensitySet, population_weights
from .exceptions import (
    DimensionMismatch,
    NegativeVariance,
    NoConvergence,
    QuadratureOverflow,
    SingularCurvature,
)
from .losses import ASYMMETRIC_SQUARED, CHECK, SQUARED, LossSpec, loss_deriv, unit_scale
from .network import FittedNetwork, NetworkConfig, train_regression

_CURVATURE_FLOOR = 1e-10


# ---------------------------------------------------------------------------
# sieve conditional density
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SieveBasis:
    """Basis descriptor: standardized-y powers crossed with {1, x_j}.

    x_cols None selects the first min(p, 5) covariate columns; the term
    count is capped at max_terms, dropping the highest-order terms first.
    """

    y_powers: tuple = (1, 2, 3)
    x_cols: tuple | None = None
    max_terms: int = 24

    def resolve(self, p: int):
        cols = tuple(range(min(p, 5))) if self.x_cols is None else tuple(self.x_cols)
        terms = [(yp, xf) for yp in self.y_powers for xf in range(len(cols) + 1)]
        return cols, terms[: self.max_terms]


@dataclass(frozen=True)
class OutcomeDensity:
    """Fitted conditional density exp(a'r(y, x)) / Z(x) for one arm.

    Holds the coefficient vector, the y-standardization, the quadrature
    window, and the resolved basis; `score` evaluates d/dy log f(y | x).
    """

    level: int
    coef: np.ndarray
    y_mean: float
    y_sd: float
    y_lo: float
    y_hi: float
    y_powers: tuple
    x_cols: tuple
    terms: tuple
    n_nodes: int
    ridge: float
    n_iter: int
    grad_norm: float

    def _features(self, y, X):
        y = np.asarray(y, dtype=float).reshape(-1)
        X = np.asarray(X, dtype=float)
        u = np.column_stack([np.ones(y.shape[0]), X[:, self.x_cols]])
        ys = (y - self.y_mean) / self.y_sd
        out = np.empty((y.shape[0], len(self.terms)))
        for k, (yp, xf) in enumerate(self.terms):
            out[:, k] = ys**yp * u[:, xf]
        return out

    def score(self, y, X) -> np.ndarray:
        """d/dy log f(y | x) at the given pairs, chain rule included."""
        y = np.asarray(y, dtype=float).reshape(-1)
        X = np.asarray(X, dtype=float)
        u = np.column_stack([np.ones(y.shape[0]), X[:, self.x_cols]])
        ys = (y - self.y_mean) / self.y_sd
        total = np.zeros(y.shape[0])
        for k, (yp, xf) in enumerate(self.terms):
            total += self.coef[k] * yp * ys ** (yp - 1) * u[:, xf] / self.y_sd
        return total

    def log_density(self, y, X) -> np.ndarray:
        """log f(y | x); the normalizer is recomputed by quadrature."""
        feats = self._features(y, X)
        nodes, logw = _quad_nodes(self.y_lo, self.y_hi, self.n_nodes)
        grid = _grid_features(
            nodes, np.asarray(X, dtype=float), self.y_mean, self.y_sd, self.x_cols, self.terms
        )
        s = grid @ self.coef
        log_z = _logsumexp_weighted(s, logw)
        return feats @ self.coef - log_z


def _quad_nodes(lo, hi, n_nodes):
    xi, wq = leggauss(n_nodes)
    nodes = 0.5 * (hi + lo) + 0.5 * (hi - lo) * xi
    return nodes, np.log(0.5 * (hi - lo) * wq)


def _grid_features(nodes, X, y_mean, y_sd, x_cols, terms):
    u = np.column_stack([np.ones(X.shape[0]), X[:, list(x_cols)]])
    ys = (nodes - y_mean) / y_sd
    t_grid = np.column_stack([ys**yp for yp, _ in terms])  # (Q, K) per-term y part
    grid = np.empty((X.shape[0], nodes.shape[0], len(terms)))
    for k, (_, xf) in enumerate(terms):
        grid[:, :, k] = np.outer(u[:, xf], t_grid[:, k])
    return grid


def _logsumexp_weighted(s, logw):
    if not np.all(np.isfinite(s)):
        raise QuadratureOverflow("non-finite exponent in the density quadrature")
    shifted = s + logw
    m = shifted.max(axis=-1, keepdims=True)
    return (m + np.log(np.exp(shifted - m).sum(axis=-1, keepdims=True))).squeeze(-1)


def fit_outcome_density(
    sample: Sample,
    level: int,
    basis: SieveBasis | None = None,
    n_nodes: int = 64,
    ridge: float = 1e-8,
    tol: float = 1e-8,
    max_iter: int = 200,
) -> OutcomeDensity:
    """Maximum-likelihood sieve fit of f(y | x, D = level).

    The log-likelihood normalizes over y per observation by 64-node
    Gauss-Legendre quadrature on [min(Y) - 3 sd, max(Y) + 3 sd] of the arm's
    outcomes.  A ridge of 1e-8 keeps the Newton system solvable when basis
    columns collide; the objective is concave, so Newton with halving
    converges in a handful of steps.
    """
    basis = basis or SieveBasis()
    mask = sample.arm(level)
    y = sample.outcomes[mask]
    X = sample.covariates[mask]
    if y.size < 2:
        raise ValueError(f"need at least 2 observations in arm {level}")
    y_mean = float(y.mean())
    y_sd = float(y.std())
    if y_sd <= 0.0:
        raise ValueError("outcomes are constant within the arm; density undefined")
    lo = float(y.min() - 3.0 * y_sd)
    hi = float(y.max() + 3.0 * y_sd)

    x_cols, terms = basis.resolve(sample.p)
    dens = OutcomeDensity(
        level=level,
        coef=np.zeros(len(terms)),
        y_mean=y_mean,
        y_sd=y_sd,
        y_lo=lo,
        y_hi=hi,
        y_powers=tuple(basis.y_powers),
        x_cols=x_cols,
        terms=tuple(terms),
        n_nodes=n_nodes,
        ridge=ridge,
        n_iter=0,
        grad_norm=np.inf,
    )
    feats = dens._features(y, X)  # (m, K)
    nodes, logw = _quad_nodes(lo, hi, n_nodes)
    grid = _grid_features(nodes, X, y_mean, y_sd, x_cols, terms)  # (m, Q, K)
    m, q_n, k_n = grid.shape
    flat = grid.reshape(m * q_n, k_n)

    coef = np.zeros(k_n)
    mean_feats = feats.mean(axis=0)

    def objective(a):
        s = grid @ a
        log_z = _logsumexp_weighted(s, logw)
        return float(mean_feats @ a - log_z.mean() - 0.5 * ridge * a @ a)

    value = objective(coef)
    n_iter = 0
    grad_norm = np.inf
    for n_iter in range(1, max_iter + 1):
        s = grid @ coef  # (m, Q)
        shifted = s + logw
        mx = shifted.max(axis=1, keepdims=True)
        p = np.exp(shifted - mx)
        p /= p.sum(axis=1, keepdims=True)  # (m, Q), rows sum to 1
        mu = np.einsum("mq,mqk->mk", p, grid)  # (m, K)
        grad = mean_feats - mu.mean(axis=0) - ridge * coef
        grad_norm = float(np.linalg.norm(grad))
        if grad_norm <= tol:
            break
        pw = (flat * p.reshape(-1, 1)).T @ flat / m  # E[r r'] under the fit
        hess = pw - mu.T @ mu / m + ridge * np.eye(k_n)
        step = np.linalg.solve(hess, grad)
        scale = 1.0
        for _ in range(40):
            trial = coef + scale * step
            trial_value = objective(trial)
            if trial_value >= value - 1e-14:
                coef = trial
                value = trial_value
                break
            scale *= 0.5
        else:
            raise NoConvergence("sieve line search stalled")
    else:
        raise NoConvergence(f"sieve Newton did not reach {tol} in {max_iter} iterations")

    return OutcomeDensity(
        level=level,
        coef=coef,
        y_mean=y_mean,
        y_sd=y_sd,
        y_lo=lo,
        y_hi=hi,
        y_powers=tuple(basis.y_powers),
        x_cols=x_cols,
        terms=tuple(terms),
        n_nodes=n_nodes,
        ridge=ridge,
        n_iter=n_iter,
        grad_norm=grad_norm,
    )


# ---------------------------------------------------------------------------
# curvature of the population first-order condition
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CurvatureEstimate:
    """The curvature used for the sandwich plus its diagnostics.

    value is what the covariance uses.  For the squared family the analytic
    constant 2*scale is the default and the sieve average, when a density is
    supplied, is kept alongside with the relative gap as a sieve diagnostic.
    """

    value: float
    method: str
    sieve_value: float | None = None
    analytic_value: float | None = None
    rel_gap: float | None = None


def _sieve_curvature(sample, level, beta, loss, ps, density, outer):
    w = population_weights(sample, ps, level)
    deriv = loss_deriv(loss, sample.outcomes - beta)
    score = density.score(sample.outcomes, sample.covariates)
    return float(-(outer * w * deriv * score).mean())


def estimate_curvature(
    sample: Sample,
    level: int,
    beta: float,
    loss: LossSpec,
    ps: PropensitySet,
    density: OutcomeDensity | None = None,
    outer=None,
    method: str | None = None,
) -> CurvatureEstimate:
    """Plug-in curvature H for one level.

    method defaults per family: analytic for squared (2*scale), the direct
    moment plug-in for asymmetric_squared (the derivative has no jump, so
    differentiation passes through the expectation), and the sieve-score
    average for check, which requires a fitted density.
    """
    outer = _resolve_outer(sample, outer)
    if method is None:
        method = {SQUARED: "analytic", ASYMMETRIC_SQUARED: "direct", CHECK: "sieve"}[
            loss.family
        ]

    analytic = 2.0 * loss.scale if loss.family == SQUARED else None
    direct = None
    if loss.family == ASYMMETRIC_SQUARED:
        w = population_weights(sample, ps, level)
        direct = float(
            2.0 * loss.scale * (outer * w * np.abs(loss.tau - (sample.outcomes <= beta))).mean()
        )
    sieve = None
    if density is not None:
        sieve = _sieve_curvature(sample, level, beta, loss, ps, density, outer)

    if method == "analytic":
        if analytic is None:
            raise ValueError("analytic curvature is defined for the squared family only")
        value = analytic
    elif method == "direct":
        if direct is None:
            raise ValueError("direct curvature is defined for asymmetric_squared only")
        value = direct
    elif method == "sieve":
        if sieve is None:
            raise ValueError("sieve curvature requires a fitted density")
        value = sieve
    else:
        raise ValueError(f"unknown curvature method {method!r}")

    reference = analytic if analytic is not None else direct
    rel_gap = None
    if sieve is not None and reference not in (None, 0.0):
        rel_gap = float(abs(sieve - reference) / abs(reference))
    return CurvatureEstimate(
        value=value,
        method=method,
        sieve_value=sieve,
        analytic_value=analytic if analytic is not None else direct,
        rel_gap=rel_gap,
    )


# ---------------------------------------------------------------------------
# augmentation regression and influence values
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GradientRegression:
    """Fitted E[L'(Y - beta) | X, D = d] with the loss scale reapplied.

    The base model is trained on unit-scale targets so rescaling the loss
    rescales predictions exactly, keeping the sandwich scale-invariant in
    floating point.
    """

    base: object
    scale: float

    def predict(self, X) -> np.ndarray:
        return self.scale * np.asarray(self.base.predict(X), dtype=float)


def fit_gradient_regression(
    sample: Sample,
    level: int,
    beta: float,
    loss: LossSpec,
    config: NetworkConfig,
) -> GradientRegression:
    """Train the augmentation regression for one level by network descent."""
    targets = loss_deriv(unit_scale(loss), sample.outcomes - beta)
    net = train_regression(sample, level, targets, config)
    return GradientRegression(base=net, scale=loss.scale)


def influence_values(
    sample: Sample,
    level: int,
    beta: float,
    loss: LossSpec,
    ps: PropensitySet,
    grad_mean,
    outer=None,
) -> np.ndarray:
    """Literal influence display for one level, shape (n,).

    term1 - term2 - term3 with term1 the weighted loss derivative, term2 the
    propensity-residual augmentation, and term3 the empirical mean of term1.
    `grad_mean` is a fitted predictor or a precomputed value vector.
    """
    outer = _resolve_outer(sample, outer)
    w = population_weights(sample, ps, level)
    deriv = loss_deriv(loss, sample.outcomes - beta)
    if hasattr(grad_mean, "predict"):
        gm = np.asarray(grad_mean.predict(sample.covariates), dtype=float)
    else:
        gm = np.asarray(grad_mean, dtype=float).reshape(-1)
    if gm.shape[0] != sample.n:
        raise DimensionMismatch("gradient-mean values do not match the sample size")
    term1 = outer * w * deriv
    resid = (sample.indicator(level) - ps.probs[:, level]) / ps.trimmed(level)
    term2 = outer * resid * gm
    return term1 - term2 - term1.mean()


@dataclass(frozen=True)
class InfluenceComponents:
    """Per-level curvatures and column-centered influence values.

    The literal display's mean equals minus the augmentation-term mean, an
    exact identity; columns are centered here (shifts recorded) so the
    second moment below is the sample covariance of the display values.
    """

    curvatures: np.ndarray
    influence: np.ndarray
    centering: np.ndarray
    grad_means: tuple = ()

    def __post_init__(self):
        inf = np.asarray(self.influence, dtype=float)
        if inf.ndim != 2 or inf.shape[1] != np.asarray(self.curvatures).size:
            raise DimensionMismatch("influence matrix must be (n, n_levels)")


def build_influence(
    sample: Sample,
    loss: LossSpec,
    ps: PropensitySet,
    point: PointEstimate,
    grad_means,
    curvatures,
    outer=None,
) -> InfluenceComponents:
    """Assemble centered influence columns for every level."""
    cols = []
    shifts = []
    for level in range(sample.n_levels):
        raw = influence_values(
            sample, level, float(point.beta[level]), loss, ps, grad_means[level], outer
        )
        shift = raw.mean()
        cols.append(raw - shift)
        shifts.append(shift)
    curv = np.array([c.value if isinstance(c, CurvatureEstimate) else float(c) for c in curvatures])
    return InfluenceComponents(
        curvatures=curv,
        influence=np.column_stack(cols),
        centering=np.array(shifts),
        grad_means=tuple(grad_means),
    )


# ---------------------------------------------------------------------------
# sandwich covariance and intervals
# ---------------------------------------------------------------------------


def covariance_matrix(curvatures, influence) -> np.ndarray:
    """V = H^{-1} (n^{-1} S'S) H^{-1} with H the diagonal curvature matrix."""
    curv = np.asarray(curvatures, dtype=float).reshape(-1)
    S = np.asarray(influence, dtype=float)
    if S.ndim != 2 or S.shape[1] != curv.size:
        raise DimensionMismatch("influence matrix must be (n, n_levels)")
    if np.any(np.abs(curv) < _CURVATURE_FLOOR):
        raise SingularCurvature(f"curvature below {_CURVATURE_FLOOR}")
    second = S.T @ S / S.shape[0]
    V = second / np.outer(curv, curv)
    return 0.5 * (V + V.T)


def normal_quantile(alpha: float) -> float:
    """Two-sided standard normal critical value z_{alpha/2}."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie strictly in (0, 1)")
    return float(norm.ppf(1.0 - alpha / 2.0))


def _variance_diag(V, idx):
    v = float(V[idx, idx])
    if v < -1e-10:
        raise NegativeVariance(f"variance diagonal {v} at level {idx}")
    return max(v, 0.0)


def contrast_variance(V, contrast) -> float:
    a = np.asarray(contrast, dtype=float).reshape(-1)
    if a.shape[0] != V.shape[0]:
        raise DimensionMismatch("contrast length does not match the level count")
    v = float(a @ V @ a)
    if v < -1e-10:
        raise NegativeVariance(f"contrast variance {v}")
    return max(v, 0.0)


@dataclass(frozen=True)
class ConfidenceIntervals:
    lower: np.ndarray
    upper: np.ndarray
    alpha: float
    z: float


def component_intervals(beta, V, n_obs, alpha) -> ConfidenceIntervals:
    """Per-level intervals beta_d +/- n^{-1/2} z sqrt(V_dd)."""
    beta = np.asarray(beta, dtype=float).reshape(-1)
    z = normal_quantile(alpha)
    half = np.array(
        [z * np.sqrt(_variance_diag(V, d) / n_obs) for d in range(beta.size)]
    )
    return ConfidenceIntervals(lower=beta - half, upper=beta + half, alpha=alpha, z=z)


def contrast_interval(beta, V, n_obs, alpha, contrast):
    """(estimate, se, lower, upper) for the scalar a'beta."""
    beta = np.asarray(beta, dtype=float).reshape(-1)
    a = np.asarray(contrast, dtype=float).reshape(-1)
    z = normal_quantile(alpha)
    value = float(a @ beta)
    se = float(np.sqrt(contrast_variance(V, a) / n_obs))
    return value, se, value - z * se, value + z * se


@dataclass(frozen=True)
class CovarianceEstimate:
    """Covariance matrix with intervals at the requested level."""

    V: np.ndarray
    n_obs: int
    alpha: float
    intervals: ConfidenceIntervals
    contrast: tuple | None = None
    contrast_value: float | None = None
    contrast_se: float | None = None
    contrast_lower: float | None = None
    contrast_upper: float | None = None


def covariance_estimate(
    point: PointEstimate,
    components: InfluenceComponents,
    n_obs: int,
    alpha: float = 0.05,
    contrast=None,
) -> CovarianceEstimate:
    """Sandwich covariance plus intervals for a fitted point estimate."""
    V = covariance_matrix(components.curvatures, components.influence)
    intervals = component_intervals(point.beta, V, n_obs, alpha)
    if contrast is None:
        return CovarianceEstimate(V=V, n_obs=n_obs, alpha=alpha, intervals=intervals)
    value, se, lo, hi = contrast_interval(point.beta, V, n_obs, alpha, contrast)
    return CovarianceEstimate(
        V=V,
        n_obs=n_obs,
        alpha=alpha,
        intervals=intervals,
        contrast=tuple(float(c) for c in np.asarray(contrast).reshape(-1)),
        contrast_value=value,
        contrast_se=se,
        contrast_lower=lo,
        contrast_upper=hi,
    )


def _resolve_outer(sample: Sample, outer):
    if outer is None:
        return np.ones(sample.n)
    outer = np.asarray(outer, dtype=float).reshape(-1)
    if outer.shape[0] != sample.n:
        raise DimensionMismatch("outer weight length does not match the sample")
    return outer


def treated_outer_weights(sample: Sample, ps: PropensitySet, treated_level: int) -> np.ndarray:
    """Outer weight pi_{d'}(X) / p_hat_{d'} for treated-subgroup variance."""
    share = sample.indicator(treated_level).mean()
    if share <= 0.0:
        raise ValueError(f"no rows with treatment level {treated_level}")
    return ps.probs[:, treated_level] / share
