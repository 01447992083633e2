"""High-level orchestration: nuisance fitting plus estimation plus variance.

`AnalysisSession` caches nuisance fits for one sample so several estimands
(a mean effect and a few quantile effects, say) share the propensity
networks and the density fits.  `EffectEstimator` is the sklearn-style
facade over a single estimand for composition with that ecosystem.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .crossval import DEFAULT_GRID, CvGrid, cv_select
from .data import Sample, require_valid
from .effects import (
    EstimandSpec,
    PointEstimate,
    PropensitySet,
    estimate_ipw,
    estimate_regression_means,
    estimate_treated,
)
from .exceptions import ConfigError
from .glm import fit_linear, fit_logistic
from .losses import CHECK, SQUARED, LossSpec, check_loss, expectile_loss, loss_deriv, squared_loss, unit_scale
from .network import BERNOULLI, SQUARED_ERROR, NetworkConfig, train_propensity, train_regression
from .seeding import derive_seed
from .variance import (
    CovarianceEstimate,
    CurvatureEstimate,
    GradientRegression,
    InfluenceComponents,
    SieveBasis,
    build_influence,
    covariance_estimate,
    estimate_curvature,
    fit_outcome_density,
    treated_outer_weights,
)

# Augmentation-regression architecture used when no override is given; kept
# fixed (not cross-validated) because the target is a smooth bounded score.
DEFAULT_SCORE_CONFIG = NetworkConfig(
    widths=(16,), learning_rate=0.05, batch_size=256, epochs=300, seed=0
)


def loss_for(kind: str, tau: float | None = None, scale: float = 1.0) -> LossSpec:
    """Map an estimand kind name to its loss family."""
    if kind == "mean":
        return squared_loss(scale)
    if kind == "quantile":
        return check_loss(tau, scale)
    if kind == "expectile":
        return expectile_loss(tau, scale)
    raise ConfigError(f"unknown estimand kind {kind!r}")


@dataclass(frozen=True)
class EffectResult:
    """Everything one estimate produced, point through intervals."""

    estimand: EstimandSpec
    weighting: str
    point: PointEstimate
    covariance: CovarianceEstimate
    components: InfluenceComponents
    curvatures: tuple
    diagnostics: dict = field(default_factory=dict)

    @property
    def beta(self) -> np.ndarray:
        return self.point.beta

    @property
    def V(self) -> np.ndarray:
        return self.covariance.V


class AnalysisSession:
    """Cached nuisance fits plus the estimation pipeline for one sample.

    Parameters
    ----------
    backend : str
        ``ann`` cross-validates and trains networks; ``glm`` fits
        main-effects logistic/linear models through the same pipeline.
    sieve_diagnostic : bool
        When True (default) a squared-family estimate also evaluates the
        sieve curvature and reports the relative gap as a density check.
    """

    def __init__(
        self,
        sample: Sample,
        *,
        grid: CvGrid = DEFAULT_GRID,
        trim: float = 1e-3,
        seed: int = 0,
        backend: str = "ann",
        score_config: NetworkConfig | None = None,
        density_basis: SieveBasis | None = None,
        alpha: float = 0.05,
        sieve_diagnostic: bool = True,
        validate: bool = True,
    ):
        if backend not in ("ann", "glm"):
            raise ConfigError(f"unknown backend {backend!r}")
        if validate:
            require_valid(sample)
        self.sample = sample
        self.grid = grid
        self.trim = trim
        self.seed = seed
        self.backend = backend
        self.score_config = score_config or DEFAULT_SCORE_CONFIG
        self.density_basis = density_basis or SieveBasis()
        self.alpha = alpha
        self.sieve_diagnostic = sieve_diagnostic
        self._ps: PropensitySet | None = None
        self._regressions: dict | None = None
        self._densities: dict = {}
        self.cv_tables: dict = {}
        self.glm_flags: dict = {}

    # -- nuisances ---------------------------------------------------------

    def propensities(self) -> PropensitySet:
        if self._ps is not None:
            return self._ps
        sample = self.sample
        if self.backend == "ann":
            nets = []
            for level in range(sample.n_levels):
                chosen = cv_select(
                    sample, level, self.grid, BERNOULLI,
                    seed=derive_seed(self.seed, "ps", level),
                )
                self.cv_tables[("ps", level)] = chosen
                nets.append(train_propensity(sample, level, chosen.best))
            self._ps = PropensitySet.from_networks(sample, nets, floor=self.trim, source="ann")
        else:
            cols = []
            for level in range(sample.n_levels):
                fit = fit_logistic(sample.covariates, sample.indicator(level))
                self.glm_flags[("ps", level)] = fit.converged
                cols.append(fit.predict(sample.covariates))
            self._ps = PropensitySet(np.column_stack(cols), floor=self.trim, source="glm")
        return self._ps

    def outcome_regressions(self) -> dict:
        """Per-level conditional mean fits of Y, for the regression estimator."""
        if self._regressions is not None:
            return self._regressions
        sample = self.sample
        fits = {}
        for level in range(sample.n_levels):
            if self.backend == "ann":
                chosen = cv_select(
                    sample, level, self.grid, SQUARED_ERROR,
                    seed=derive_seed(self.seed, "reg", level),
                )
                self.cv_tables[("reg", level)] = chosen
                fits[level] = train_regression(sample, level, sample.outcomes, chosen.best)
            else:
                mask = sample.arm(level)
                fits[level] = fit_linear(sample.covariates[mask], sample.outcomes[mask])
        self._regressions = fits
        return fits

    def density(self, level: int):
        if level not in self._densities:
            self._densities[level] = fit_outcome_density(
                self.sample, level, basis=self.density_basis
            )
        return self._densities[level]

    def gradient_regression(self, level: int, beta: float, loss: LossSpec) -> GradientRegression:
        sample = self.sample
        if self.backend == "ann":
            config = NetworkConfig(
                widths=self.score_config.widths,
                activation=self.score_config.activation,
                weight_bound=self.score_config.weight_bound,
                learning_rate=self.score_config.learning_rate,
                batch_size=self.score_config.batch_size,
                epochs=self.score_config.epochs,
                seed=derive_seed(self.seed, "score", level, loss.family, loss.tau),
            )
            targets = loss_deriv(unit_scale(loss), sample.outcomes - beta)
            net = train_regression(sample, level, targets, config)
            return GradientRegression(base=net, scale=loss.scale)
        mask = sample.arm(level)
        targets = loss_deriv(unit_scale(loss), sample.outcomes - beta)
        fit = fit_linear(sample.covariates[mask], targets[mask])
        return GradientRegression(base=fit, scale=loss.scale)

    # -- estimation --------------------------------------------------------

    def estimate(self, estimand: EstimandSpec, weighting: str = "ipw") -> EffectResult:
        """Run the full pipeline for one estimand.

        weighting ``ipw`` reweights by inverse propensities; ``or`` averages
        fitted conditional means (squared family only) and reuses the shared
        efficient-influence variance evaluated at the reported point.
        """
        if weighting not in ("ipw", "or"):
            raise ConfigError(f"unknown weighting {weighting!r}")
        sample = self.sample
        loss = estimand.loss
        ps = self.propensities()

        if weighting == "or":
            if loss.family != SQUARED:
                raise ConfigError("regression weighting is defined for mean effects only")
            regs = self.outcome_regressions()
            point = estimate_regression_means(sample, regs, estimand.treated_level)
            point = PointEstimate(
                beta=point.beta,
                estimand=estimand,
                foc_residuals=point.foc_residuals,
                foc_bounds=point.foc_bounds,
                weight_sums=point.weight_sums,
            )
        elif estimand.treated_level is None:
            point = estimate_ipw(sample, loss, ps)
            point = PointEstimate(
                beta=point.beta,
                estimand=estimand,
                foc_residuals=point.foc_residuals,
                foc_bounds=point.foc_bounds,
                weight_sums=point.weight_sums,
            )
        else:
            point = estimate_treated(sample, loss, ps, estimand.treated_level)
            point = PointEstimate(
                beta=point.beta,
                estimand=estimand,
                foc_residuals=point.foc_residuals,
                foc_bounds=point.foc_bounds,
                weight_sums=point.weight_sums,
            )

        outer = (
            None
            if estimand.treated_level is None
            else treated_outer_weights(sample, ps, estimand.treated_level)
        )

        grad_means = []
        curvatures = []
        for level in range(sample.n_levels):
            beta_d = float(point.beta[level])
            grad_means.append(self.gradient_regression(level, beta_d, loss))
            needs_density = loss.family == CHECK or self.sieve_diagnostic
            density = self.density(level) if needs_density else None
            curvatures.append(
                estimate_curvature(
                    sample, level, beta_d, loss, ps, density=density, outer=outer
                )
            )

        components = build_influence(sample, loss, ps, point, grad_means, curvatures, outer)
        cov = covariance_estimate(
            point, components, sample.n, alpha=self.alpha, contrast=estimand.contrast
        )
        diagnostics = {
            "trimmed_counts": ps.trimmed_counts,
            "foc_residuals": tuple(float(v) for v in point.foc_residuals),
            "curvature_methods": tuple(c.method for c in curvatures),
            "curvature_values": tuple(float(c.value) for c in curvatures),
            "sieve_gaps": tuple(
                None if c.rel_gap is None else float(c.rel_gap) for c in curvatures
            ),
            "backend": self.backend,
            "glm_flags": dict(self.glm_flags),
        }
        return EffectResult(
            estimand=estimand,
            weighting=weighting,
            point=point,
            covariance=cov,
            components=components,
            curvatures=tuple(curvatures),
            diagnostics=diagnostics,
        )


class EffectEstimator(BaseEstimator):
    """sklearn-style estimator for one treatment effect.

    fit takes (X, d, y): covariates, integer treatment, outcome.  After
    fitting, `beta_` holds the per-level estimates, `cov_` the sandwich
    covariance, and `contrast_` the scalar summary when a contrast is set
    (the default contrasts the last level against the first).
    """

    def __init__(
        self,
        kind: str = "mean",
        tau: float = 0.5,
        treated_level: int | None = None,
        weighting: str = "ipw",
        contrast: tuple | None = "auto",
        alpha: float = 0.05,
        trim: float = 1e-3,
        backend: str = "ann",
        grid: CvGrid = DEFAULT_GRID,
        seed: int = 0,
    ):
        self.kind = kind
        self.tau = tau
        self.treated_level = treated_level
        self.weighting = weighting
        self.contrast = contrast
        self.alpha = alpha
        self.trim = trim
        self.backend = backend
        self.grid = grid
        self.seed = seed

    def fit(self, X, d, y, n_levels: int | None = None):
        sample = Sample.from_arrays(y, d, X, n_levels=n_levels)
        require_valid(sample)
        contrast = self.contrast
        if contrast == "auto":
            contrast = (-1.0,) + (0.0,) * (sample.n_levels - 2) + (1.0,)
        loss = loss_for(self.kind, self.tau if self.kind != "mean" else None)
        estimand = EstimandSpec(loss=loss, treated_level=self.treated_level, contrast=contrast)
        session = AnalysisSession(
            sample,
            grid=self.grid,
            trim=self.trim,
            seed=self.seed,
            backend=self.backend,
            alpha=self.alpha,
        )
        result = session.estimate(estimand, weighting=self.weighting)
        self.session_ = session
        self.result_ = result
        self.beta_ = result.beta
        self.cov_ = result.V
        self.intervals_ = result.covariance.intervals
        self.contrast_ = result.covariance.contrast_value
        self.contrast_se_ = result.covariance.contrast_se
        self.n_features_in_ = sample.p
        return self

    def effect(self):
        """The contrast estimate with its standard error and interval."""
        check_is_fitted(self, "result_")
        cov = self.result_.covariance
        return {
            "estimate": cov.contrast_value,
            "se": cov.contrast_se,
            "lower": cov.contrast_lower,
            "upper": cov.contrast_upper,
            "alpha": cov.alpha,
        }
