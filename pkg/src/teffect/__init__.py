"""Treatment effect estimation with neural-network nuisance functions.

Point estimates minimize inverse-probability-weighted loss functions
(squared, check, asymmetric squared), so one pipeline covers means,
quantiles, and expectiles, for the whole population or the treated
subgroup.  Confidence intervals come from a plug-in sandwich built on the
efficient influence function.  A built-in replication benchmark measures
coverage, bias, and standard-error calibration against cached Monte Carlo
truths.
"""

from .api import (
    DEFAULT_SCORE_CONFIG,
    AnalysisSession,
    EffectEstimator,
    EffectResult,
    loss_for,
)
from .crossval import (
    DEFAULT_GRID,
    DESK_GRID,
    DESK_GRID_HIGH_DIM,
    CandidateScore,
    CvGrid,
    CvResult,
    cv_select,
    desk_grid,
)
from .data import Sample, min_arm_size, require_valid, validate_sample
from .effects import (
    EstimandSpec,
    PointEstimate,
    PropensitySet,
    estimate_ipw,
    estimate_regression_means,
    estimate_treated,
    minimize_weighted_loss,
    weighted_expectile,
    weighted_mean,
    weighted_quantile,
)
from .exceptions import (
    ConfigError,
    DegenerateWeights,
    DimensionMismatch,
    EmptyArm,
    NoConvergence,
    NonFiniteLoss,
    ParseError,
    SchemaMismatch,
    SingularCurvature,
    TeffectError,
    ValidationFailed,
)
from .losses import LossSpec, check_loss, expectile_loss, loss_deriv, loss_value, squared_loss
from .network import (
    FittedNetwork,
    NetworkConfig,
    PropensityNetwork,
    RegressionNetwork,
    project_l1,
    train_propensity,
    train_regression,
)
from .sim import (
    DgpDraw,
    EstimandKey,
    SimConfig,
    SimReport,
    draw_dgp,
    oracle_estimate,
    outcome_mean,
    parse_estimand,
    run_replications,
    true_effect,
    true_propensity,
)
from .variance import (
    CovarianceEstimate,
    CurvatureEstimate,
    InfluenceComponents,
    OutcomeDensity,
    SieveBasis,
    build_influence,
    covariance_estimate,
    estimate_curvature,
    fit_outcome_density,
    influence_values,
)

__version__ = "0.1.0"

__all__ = [
    "AnalysisSession",
    "CandidateScore",
    "ConfigError",
    "CovarianceEstimate",
    "CurvatureEstimate",
    "CvGrid",
    "CvResult",
    "DEFAULT_GRID",
    "DEFAULT_SCORE_CONFIG",
    "DESK_GRID",
    "DESK_GRID_HIGH_DIM",
    "DegenerateWeights",
    "DgpDraw",
    "DimensionMismatch",
    "EffectEstimator",
    "EffectResult",
    "EmptyArm",
    "EstimandKey",
    "EstimandSpec",
    "FittedNetwork",
    "InfluenceComponents",
    "LossSpec",
    "NetworkConfig",
    "NoConvergence",
    "NonFiniteLoss",
    "OutcomeDensity",
    "ParseError",
    "PointEstimate",
    "PropensityNetwork",
    "PropensitySet",
    "RegressionNetwork",
    "Sample",
    "SchemaMismatch",
    "SieveBasis",
    "SimConfig",
    "SimReport",
    "SingularCurvature",
    "TeffectError",
    "ValidationFailed",
    "build_influence",
    "check_loss",
    "covariance_estimate",
    "cv_select",
    "desk_grid",
    "draw_dgp",
    "estimate_curvature",
    "estimate_ipw",
    "estimate_regression_means",
    "estimate_treated",
    "expectile_loss",
    "fit_outcome_density",
    "influence_values",
    "loss_deriv",
    "loss_for",
    "loss_value",
    "min_arm_size",
    "minimize_weighted_loss",
    "oracle_estimate",
    "outcome_mean",
    "parse_estimand",
    "project_l1",
    "require_valid",
    "run_replications",
    "squared_loss",
    "train_propensity",
    "train_regression",
    "true_effect",
    "true_propensity",
    "validate_sample",
    "weighted_expectile",
    "weighted_mean",
    "weighted_quantile",
]
