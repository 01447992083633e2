import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from teffect.api import (
    DEFAULT_SCORE_CONFIG,
    AnalysisSession,
    EffectEstimator,
    loss_for,
)
from teffect.crossval import CvGrid
from teffect.data import Sample
from teffect.effects import EstimandSpec
from teffect.exceptions import ConfigError, ValidationFailed
from teffect.losses import ASYMMETRIC_SQUARED, CHECK, SQUARED


def logistic_design(n=1500, seed=0):
    """Sample whose nuisances the glm backend fits correctly."""
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1, 1, size=(n, 3))
    pi = 1.0 / (1.0 + np.exp(-0.8 * X[:, 0]))
    d = (rng.uniform(size=n) < pi).astype(int)
    y = 1.0 + X[:, 0] + 2.0 * d + 0.3 * rng.standard_normal(n)
    return Sample.from_arrays(y, d, X)


TINY_GRID = CvGrid(widths=((4,),), learning_rates=(0.05,), batch_sizes=(64,), epochs=(60,))


class TestLossFor:
    def test_families(self):
        assert loss_for("mean").family == SQUARED
        assert loss_for("quantile", 0.3).family == CHECK
        assert loss_for("quantile", 0.3).tau == 0.3
        assert loss_for("expectile", 0.7).family == ASYMMETRIC_SQUARED

    def test_unknown_kind(self):
        with pytest.raises(ConfigError):
            loss_for("variance")


class TestSessionGlm:
    def test_mean_effect_recovers_truth(self):
        s = logistic_design()
        session = AnalysisSession(s, backend="glm", seed=1)
        result = session.estimate(
            EstimandSpec(loss=loss_for("mean"), contrast=(-1.0, 1.0))
        )
        cov = result.covariance
        assert abs(cov.contrast_value - 2.0) < 4.0 * cov.contrast_se
        assert cov.contrast_lower < cov.contrast_value < cov.contrast_upper

    def test_nuisances_cached(self):
        s = logistic_design(n=400)
        session = AnalysisSession(s, backend="glm")
        assert session.propensities() is session.propensities()
        assert session.outcome_regressions() is session.outcome_regressions()
        assert session.density(1) is session.density(1)

    def test_diagnostics_shape(self):
        s = logistic_design(n=600)
        session = AnalysisSession(s, backend="glm")
        result = session.estimate(EstimandSpec(loss=loss_for("mean")))
        diag = result.diagnostics
        assert diag["backend"] == "glm"
        assert diag["curvature_methods"] == ("analytic", "analytic")
        assert diag["curvature_values"] == (2.0, 2.0)
        assert len(diag["trimmed_counts"]) == 2
        assert len(diag["foc_residuals"]) == 2
        assert all(gap is not None for gap in diag["sieve_gaps"])
        assert ("ps", 0) in diag["glm_flags"] and ("ps", 1) in diag["glm_flags"]

    def test_sieve_diagnostic_can_be_disabled(self):
        s = logistic_design(n=600)
        session = AnalysisSession(s, backend="glm", sieve_diagnostic=False)
        result = session.estimate(EstimandSpec(loss=loss_for("mean")))
        assert result.diagnostics["sieve_gaps"] == (None, None)
        assert not session._densities

    def test_quantile_uses_sieve_curvature(self):
        s = logistic_design(n=800)
        session = AnalysisSession(s, backend="glm")
        result = session.estimate(EstimandSpec(loss=loss_for("quantile", 0.5)))
        assert result.diagnostics["curvature_methods"] == ("sieve", "sieve")
        assert all(v > 0 for v in result.diagnostics["curvature_values"])

    def test_treated_self_level_is_arm_summary(self):
        s = logistic_design(n=800)
        session = AnalysisSession(s, backend="glm")
        result = session.estimate(
            EstimandSpec(loss=loss_for("mean"), treated_level=1)
        )
        assert result.beta[1] == pytest.approx(s.outcomes[s.arm(1)].mean(), rel=1e-12)

    def test_regression_weighting_mean_only(self):
        s = logistic_design(n=400)
        session = AnalysisSession(s, backend="glm")
        with pytest.raises(ConfigError):
            session.estimate(EstimandSpec(loss=loss_for("quantile", 0.5)), weighting="or")

    def test_regression_weighting_close_to_ipw_here(self):
        # both nuisances are correctly specified, so the two weightings agree
        s = logistic_design()
        session = AnalysisSession(s, backend="glm")
        ipw = session.estimate(EstimandSpec(loss=loss_for("mean"), contrast=(-1, 1)))
        orw = session.estimate(
            EstimandSpec(loss=loss_for("mean"), contrast=(-1, 1)), weighting="or"
        )
        assert abs(ipw.covariance.contrast_value - orw.covariance.contrast_value) < 0.1

    def test_unknown_weighting(self):
        s = logistic_design(n=400)
        session = AnalysisSession(s, backend="glm")
        with pytest.raises(ConfigError):
            session.estimate(EstimandSpec(loss=loss_for("mean")), weighting="matching")

    def test_unknown_backend(self):
        with pytest.raises(ConfigError):
            AnalysisSession(logistic_design(n=400), backend="forest")

    def test_validation_on_by_default(self):
        bad = Sample.from_arrays(
            np.arange(40.0), np.ones(40, dtype=int), np.ones((40, 2)), n_levels=2
        )
        with pytest.raises(ValidationFailed):
            AnalysisSession(bad, backend="glm")
        AnalysisSession(bad, backend="glm", validate=False)  # opt-out succeeds


class TestSessionAnn:
    def test_full_pipeline_smoke(self):
        s = logistic_design(n=500, seed=3)
        session = AnalysisSession(s, backend="ann", grid=TINY_GRID, seed=2)
        result = session.estimate(
            EstimandSpec(loss=loss_for("mean"), contrast=(-1.0, 1.0))
        )
        assert abs(result.covariance.contrast_value - 2.0) < 0.6
        assert result.covariance.contrast_se > 0
        assert ("ps", 0) in session.cv_tables
        assert result.diagnostics["backend"] == "ann"

    def test_deterministic_under_seed(self):
        s = logistic_design(n=400, seed=4)
        runs = [
            AnalysisSession(s, backend="ann", grid=TINY_GRID, seed=7).estimate(
                EstimandSpec(loss=loss_for("mean"), contrast=(-1.0, 1.0))
            )
            for _ in range(2)
        ]
        assert runs[0].covariance.contrast_value == runs[1].covariance.contrast_value
        np.testing.assert_array_equal(runs[0].beta, runs[1].beta)


class TestEffectEstimator:
    def test_fit_exposes_sklearn_attributes(self):
        s = logistic_design()
        est = EffectEstimator(backend="glm", seed=0)
        est.fit(s.covariates, s.treatments, s.outcomes)
        assert est.beta_.shape == (2,)
        assert est.cov_.shape == (2, 2)
        assert est.n_features_in_ == 3
        assert est.contrast_ == pytest.approx(float(est.beta_[1] - est.beta_[0]))
        report = est.effect()
        assert report["lower"] < report["estimate"] < report["upper"]
        assert report["alpha"] == 0.05

    def test_effect_before_fit_raises(self):
        with pytest.raises(NotFittedError):
            EffectEstimator().effect()

    def test_clone_and_params_roundtrip(self):
        est = EffectEstimator(kind="quantile", tau=0.25, backend="glm", alpha=0.1)
        cloned = clone(est)
        assert cloned.get_params() == est.get_params()
        cloned.set_params(tau=0.75)
        assert cloned.tau == 0.75
        assert est.tau == 0.25

    def test_quantile_estimator(self):
        s = logistic_design()
        est = EffectEstimator(kind="quantile", tau=0.5, backend="glm")
        est.fit(s.covariates, s.treatments, s.outcomes)
        # the outcome shift is additive, so the median effect is also 2
        assert est.contrast_ == pytest.approx(2.0, abs=4.0 * est.contrast_se_ + 0.05)

    def test_validation_runs_in_fit(self):
        with pytest.raises(ValidationFailed):
            EffectEstimator(backend="glm").fit(
                np.ones((40, 2)), np.ones(40, dtype=int), np.arange(40.0)
            )

    def test_explicit_contrast_vector(self):
        s = logistic_design(n=800)
        est = EffectEstimator(backend="glm", contrast=(1.0, 0.0))
        est.fit(s.covariates, s.treatments, s.outcomes)
        assert est.contrast_ == pytest.approx(float(est.beta_[0]))

    def test_score_config_default_is_fixed(self):
        assert DEFAULT_SCORE_CONFIG.widths == (16,)
        assert DEFAULT_SCORE_CONFIG.epochs == 300
