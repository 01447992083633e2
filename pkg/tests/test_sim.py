import json
import os

import numpy as np
import pytest
from scipy.stats import norm

import teffect.sim as sim
from teffect.crossval import DEFAULT_GRID, DESK_GRID, DESK_GRID_HIGH_DIM, CvGrid
from teffect.exceptions import ConfigError
from teffect.losses import check_loss, expectile_loss, loss_deriv, squared_loss
from teffect.sim import (
    EstimandKey,
    SimConfig,
    _gaussian_grad_mean,
    draw_dgp,
    oracle_estimate,
    outcome_mean,
    parse_estimand,
    run_replications,
    true_effect,
    true_propensity,
)


class TestDesign:
    def test_propensity_closed_forms(self):
        X = np.array(
            [
                [1.0, 1.0, 1.0, 1.0, 1.0],  # logit 1 - 1 = 0
                [1.0, 1.0, 0.0, 0.0, 0.0],  # logit 1
                [0.0, 0.0, 1.0, 1.0, 1.0],  # logit -1
            ]
        )
        expected = [0.5, 1.0 / (1.0 + np.exp(-1.0)), 1.0 / (1.0 + np.exp(1.0))]
        np.testing.assert_allclose(true_propensity(X), expected, rtol=1e-12)

    def test_outcome_mean_closed_forms(self):
        X = np.array([[1.0, 1.0, 1.0, 0.0, 0.0]])
        assert outcome_mean(X, 1)[0] == pytest.approx(5.0 - 2.0 * np.sin(1.0), rel=1e-12)
        assert outcome_mean(X, 0)[0] == pytest.approx(3.0 + np.sin(1.0), rel=1e-12)

    def test_outcome_mean_binary_only(self):
        with pytest.raises(ValueError):
            outcome_mean(np.zeros((1, 5)), 2)

    def test_extra_covariates_are_inert(self):
        rng = np.random.default_rng(0)
        X5 = rng.uniform(-1, 1, size=(50, 5))
        X9 = np.column_stack([X5, rng.uniform(-1, 1, size=(50, 4))])
        np.testing.assert_array_equal(true_propensity(X5), true_propensity(X9))
        np.testing.assert_array_equal(outcome_mean(X5, 1), outcome_mean(X9, 1))


class TestDraw:
    def test_shapes_and_ranges(self):
        draw = draw_dgp(500, 7, seed=3)
        assert draw.sample.covariates.shape == (500, 7)
        assert np.all(np.abs(draw.sample.covariates) <= 1.0)
        assert np.all((draw.propensity > 0) & (draw.propensity < 1))
        assert set(np.unique(draw.sample.treatments)) <= {0, 1}

    def test_shared_noise_couples_the_arms(self):
        draw = draw_dgp(300, 5, seed=4)
        np.testing.assert_allclose(
            draw.y1 - draw.y0, draw.mean1 - draw.mean0, atol=1e-12
        )

    def test_observed_outcome_selects_the_arm(self):
        draw = draw_dgp(300, 5, seed=5)
        d = draw.sample.treatments
        np.testing.assert_array_equal(
            draw.sample.outcomes, np.where(d == 1, draw.y1, draw.y0)
        )

    def test_deterministic(self):
        a = draw_dgp(200, 5, seed=6)
        b = draw_dgp(200, 5, seed=6)
        np.testing.assert_array_equal(a.sample.outcomes, b.sample.outcomes)
        np.testing.assert_array_equal(a.sample.covariates, b.sample.covariates)

    def test_treatment_rate_tracks_propensity(self):
        draw = draw_dgp(20000, 5, seed=7)
        assert abs(draw.sample.treatments.mean() - draw.propensity.mean()) < 0.02

    def test_needs_five_covariates(self):
        with pytest.raises(ValueError):
            draw_dgp(100, 4, seed=0)


class TestEstimandKeys:
    def test_labels(self):
        assert EstimandKey("mean").label() == "ate"
        assert EstimandKey("mean", treated_level=1).label() == "att"
        assert EstimandKey("quantile", tau=0.5).label() == "qte_0.5"
        assert EstimandKey("expectile", tau=0.25, treated_level=1).label() == "ett_0.25"

    def test_loss_families(self):
        assert EstimandKey("mean").loss() == squared_loss()
        assert EstimandKey("quantile", tau=0.3).loss() == check_loss(0.3)
        assert EstimandKey("expectile", tau=0.9).loss() == expectile_loss(0.9)

    def test_spec_contrast(self):
        assert EstimandKey("mean").spec().contrast == (-1.0, 1.0)
        assert EstimandKey("mean").spec(n_levels=3).contrast == (-1.0, 0.0, 1.0)

    def test_parse_round_trip(self):
        for text, key in [
            ("ate", EstimandKey("mean")),
            ("att", EstimandKey("mean", treated_level=1)),
            ("qte:0.5", EstimandKey("quantile", tau=0.5)),
            ("qtt_0.25", EstimandKey("quantile", tau=0.25, treated_level=1)),
            ("ete:0.9", EstimandKey("expectile", tau=0.9)),
            ("ETT:0.1", EstimandKey("expectile", tau=0.1, treated_level=1)),
        ]:
            assert parse_estimand(text) == key

    def test_parse_rejects_garbage(self):
        for bad in ("atm", "qte", "qte:abc", "qte:1.5", "qte:0"):
            with pytest.raises(ConfigError):
                parse_estimand(bad)


SMALL_DRAWS = 200_000


class TestTruths:
    def test_mean_effect_is_exact(self):
        truth = true_effect(EstimandKey("mean"))
        assert truth.value == 2.0
        assert truth.per_level == (-1.0 / 3.0, 5.0 / 3.0)
        assert truth.method == "exact"
        assert truth.se == 0.0

    def test_mc_truth_has_provenance(self, tmp_path, monkeypatch):
        monkeypatch.setenv("TEFFECT_CACHE_DIR", str(tmp_path))
        monkeypatch.setattr(sim, "_TRUTH_CACHE", {})
        truth = true_effect(
            EstimandKey("quantile", tau=0.5), mc_seed=11, mc_draws=SMALL_DRAWS
        )
        assert truth.method == "mc"
        assert truth.seed == 11
        assert truth.draws == SMALL_DRAWS
        assert truth.se > 0
        assert len(truth.curvature) == 2 and all(c > 0 for c in truth.curvature)

    def test_mc_truth_stable_across_seeds(self, tmp_path, monkeypatch):
        monkeypatch.setenv("TEFFECT_CACHE_DIR", str(tmp_path))
        monkeypatch.setattr(sim, "_TRUTH_CACHE", {})
        key = EstimandKey("quantile", tau=0.5)
        a = true_effect(key, mc_seed=21, mc_draws=SMALL_DRAWS)
        b = true_effect(key, mc_seed=22, mc_draws=SMALL_DRAWS)
        assert abs(a.value - b.value) <= 5.0 * np.hypot(a.se, b.se)

    def test_disk_cache_round_trip(self, tmp_path, monkeypatch):
        monkeypatch.setenv("TEFFECT_CACHE_DIR", str(tmp_path))
        monkeypatch.setattr(sim, "_TRUTH_CACHE", {})
        key = EstimandKey("expectile", tau=0.75)
        first = true_effect(key, mc_seed=31, mc_draws=SMALL_DRAWS)
        disk = tmp_path / "truths.json"
        assert disk.exists()
        stored = json.loads(disk.read_text())
        tag = f"expectile:0.75:None:31:{SMALL_DRAWS}"
        assert stored[tag]["value"] == first.value

        # prove the disk copy is what a fresh process would read
        stored[tag]["value"] = 123.0
        disk.write_text(json.dumps(stored))
        monkeypatch.setattr(sim, "_TRUTH_CACHE", {})
        assert true_effect(key, mc_seed=31, mc_draws=SMALL_DRAWS).value == 123.0

    def test_treated_truth_differs_from_population(self, tmp_path, monkeypatch):
        monkeypatch.setenv("TEFFECT_CACHE_DIR", str(tmp_path))
        monkeypatch.setattr(sim, "_TRUTH_CACHE", {})
        pop = true_effect(EstimandKey("quantile", tau=0.5), mc_seed=41, mc_draws=SMALL_DRAWS)
        att = true_effect(
            EstimandKey("quantile", tau=0.5, treated_level=1), mc_seed=41, mc_draws=SMALL_DRAWS
        )
        assert pop.value != att.value


class TestGaussianGradMean:
    """The analytic conditional derivative means against dense quadrature."""

    @pytest.mark.parametrize(
        "loss",
        [squared_loss(1.5), check_loss(0.3, 2.0), expectile_loss(0.8, 1.2)],
    )
    def test_matches_quadrature(self, loss):
        base = np.linspace(-12.0, 12.0, 40001)
        for beta, m in [(0.0, 0.0), (0.7, -0.4), (-1.2, 2.0)]:
            # double node at beta so the derivative's jump costs no accuracy
            grid = np.sort(np.append(base, [beta - 1e-9, beta + 1e-9]))
            numeric = np.trapezoid(
                loss_deriv(loss, grid - beta) * norm.pdf(grid - m), grid
            )
            analytic = _gaussian_grad_mean(loss, beta, np.array([m]))[0]
            assert analytic == pytest.approx(numeric, abs=1e-6)


class TestOracle:
    def test_ate_estimate_near_truth(self):
        draw = draw_dgp(4000, 5, seed=8)
        truth = true_effect(EstimandKey("mean"))
        rec = oracle_estimate(draw, EstimandKey("mean"), truth)
        assert abs(rec["estimate"] - 2.0) < 4.0 * rec["se"]
        assert rec["lower"] < rec["estimate"] < rec["upper"]

    def test_quantile_estimate_near_truth(self, tmp_path, monkeypatch):
        monkeypatch.setenv("TEFFECT_CACHE_DIR", str(tmp_path))
        monkeypatch.setattr(sim, "_TRUTH_CACHE", {})
        key = EstimandKey("quantile", tau=0.5)
        truth = true_effect(key, mc_seed=51, mc_draws=SMALL_DRAWS)
        draw = draw_dgp(4000, 5, seed=9)
        rec = oracle_estimate(draw, key, truth)
        assert abs(rec["estimate"] - truth.value) < 4.0 * rec["se"] + truth.se

    def test_treated_mean_runs_outer_weights(self, tmp_path, monkeypatch):
        monkeypatch.setenv("TEFFECT_CACHE_DIR", str(tmp_path))
        monkeypatch.setattr(sim, "_TRUTH_CACHE", {})
        key = EstimandKey("mean", treated_level=1)
        truth = true_effect(key, mc_seed=61, mc_draws=SMALL_DRAWS)
        draw = draw_dgp(4000, 5, seed=10)
        rec = oracle_estimate(draw, key, truth)
        assert abs(rec["estimate"] - truth.value) < 4.0 * rec["se"] + truth.se


class TestSimConfig:
    def test_grid_resolution(self):
        assert SimConfig().resolved_grid() is DESK_GRID
        assert SimConfig(p=20).resolved_grid() is DESK_GRID_HIGH_DIM
        assert SimConfig(full_scale=True).resolved_grid() is DEFAULT_GRID
        assert SimConfig(p=20, full_scale=True).resolved_grid() is DEFAULT_GRID
        custom = CvGrid(widths=((4,),))
        assert SimConfig(grid=custom).resolved_grid() is custom
        assert SimConfig(p=20, grid=custom).resolved_grid() is custom

    def test_full_scale_replications(self):
        assert SimConfig().resolved_replications() == 100
        assert SimConfig(full_scale=True).resolved_replications() == 200
        assert SimConfig(full_scale=True, replications=150).resolved_replications() == 150

    def test_estimator_normalization(self):
        cfg = SimConfig(estimators=("ANN_IPW", "Oracle"))
        assert cfg.normalized_estimators() == ("ann-ipw", "oracle")

    def test_unknown_estimator_lists_valid_names(self):
        with pytest.raises(ConfigError, match="ann-ipw"):
            SimConfig(estimators=("ann-matching",)).normalized_estimators()

    def test_keys_parse(self):
        cfg = SimConfig(estimands=("ate", "qte:0.5"))
        assert cfg.keys() == (EstimandKey("mean"), EstimandKey("quantile", tau=0.5))


def quick_config(**kwargs):
    defaults = dict(
        n=400,
        p=5,
        replications=3,
        seed=2,
        estimands=("ate",),
        estimators=("glm-ipw", "oracle"),
        workers=1,
    )
    defaults.update(kwargs)
    return SimConfig(**defaults)


class TestRunReplications:
    def test_small_run_shape(self):
        report = run_replications(quick_config())
        assert len(report.records) == 3
        assert [rec["r"] for rec in report.records] == [0, 1, 2]
        assert len(report.rows) == 2
        assert report.valid
        assert report.failure_fraction == 0.0
        for row in report.rows:
            assert row.truth == 2.0
            assert row.failures == 0
            assert 0.0 <= row.rate <= 1.0
            assert row.emp_sd > 0

    def test_byte_identical_rerun(self):
        a = run_replications(quick_config())
        b = run_replications(quick_config())
        assert a.to_csv_text() == b.to_csv_text()
        assert a.records == b.records

    def test_csv_header_and_shortest_roundtrip_floats(self):
        report = run_replications(quick_config())
        text = report.to_csv_text()
        lines = text.strip().split("\n")
        assert lines[0] == "estimand,estimator,n,p,R,rate,bias,emp_sd,est_sd,truth,failures"
        first = lines[1].split(",")
        assert first[0] == "ate"
        assert float(first[6]) == report.rows[0].bias  # repr round-trips
        assert first[4] == "3"

    def test_single_replication_drops_emp_sd(self):
        report = run_replications(quick_config(replications=1))
        assert all(row.emp_sd is None for row in report.rows)
        line = report.to_csv_text().strip().split("\n")[1]
        assert ",," in line  # empty emp_sd field

    def test_failures_counted_and_invalidate(self):
        bad_grid = CvGrid(
            widths=((8,),), learning_rates=(1e6,), batch_sizes=(64,), epochs=(30,)
        )
        report = run_replications(
            quick_config(estimators=("ann-ipw",), grid=bad_grid, replications=2)
        )
        row = report.rows[0]
        assert row.failures == 2
        assert row.rate is None and row.bias is None
        assert report.failure_fraction == 1.0
        assert not report.valid
        message = report.records[0]["results"]["ann-ipw"]["ate"]["error"]
        assert "NonFiniteLoss" in message

    def test_regression_weighting_skips_quantiles(self):
        report = run_replications(
            quick_config(estimators=("glm-or",), estimands=("ate", "qte:0.5"),
                         mc_draws=SMALL_DRAWS, mc_seed=71)
        )
        assert [row.estimand for row in report.rows] == ["ate"]

    def test_output_files(self, tmp_path):
        report = run_replications(quick_config())
        csv_path = tmp_path / "report.csv"
        json_path = tmp_path / "report.json"
        report.to_csv(str(csv_path))
        report.to_json(str(json_path))
        assert csv_path.read_text() == report.to_csv_text()
        doc = json.loads(json_path.read_text())
        assert doc["valid"] is True
        assert doc["config"]["n"] == 400
        assert doc["truths"]["ate"]["method"] == "exact"
        assert len(doc["records"]) == 3

    def test_worker_count_env_cap(self, monkeypatch):
        cfg = quick_config(workers=None)
        monkeypatch.setenv("TEFFECT_THREADS", "3")
        assert sim._worker_count(cfg, 8) == 3
        assert sim._worker_count(cfg, 2) == 2  # capped by task count
        monkeypatch.delenv("TEFFECT_THREADS")
        assert sim._worker_count(quick_config(workers=2), 8) == 2
