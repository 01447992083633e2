import numpy as np
import pytest

from teffect.glm import fit_linear, fit_logistic


def logistic_data(n=500, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-2, 2, size=(n, 3))
    logits = 0.5 + X[:, 0] - 2.0 * X[:, 2]
    y = (rng.uniform(size=n) < 1.0 / (1.0 + np.exp(-logits))).astype(float)
    return X, y


class TestLogistic:
    def test_matches_sklearn_unpenalized(self):
        sklearn = pytest.importorskip("sklearn.linear_model")
        X, y = logistic_data()
        fit = fit_logistic(X, y)
        ref = sklearn.LogisticRegression(penalty=None, tol=1e-10, max_iter=1000)
        ref.fit(X, y)
        np.testing.assert_allclose(fit.coef[0], ref.intercept_[0], atol=1e-5)
        np.testing.assert_allclose(fit.coef[1:], ref.coef_[0], atol=1e-5)

    def test_converged_flag_and_score(self):
        X, y = logistic_data(seed=1)
        fit = fit_logistic(X, y)
        assert fit.converged
        assert fit.grad_norm <= 1e-8
        # converged means the mean score vanishes at the fitted coefficients
        Z = np.column_stack([np.ones(X.shape[0]), X])
        p = fit.predict(X)
        np.testing.assert_allclose(Z.T @ (y - p) / X.shape[0], 0.0, atol=1e-7)

    def test_balanced_intercept_only(self):
        X = np.zeros((10, 1))
        y = np.array([0.0, 1.0] * 5)
        fit = fit_logistic(X, y)
        np.testing.assert_allclose(fit.predict(X), 0.5, atol=1e-9)

    def test_iteration_cap_flagged_not_raised(self):
        X, y = logistic_data(seed=5)
        fit = fit_logistic(X, y, max_iter=2)
        assert not fit.converged
        assert fit.n_iter == 2
        assert np.all(np.isfinite(fit.coef))

    def test_separated_data_stays_finite(self):
        X = np.linspace(-1, 1, 40).reshape(-1, 1)
        y = (X[:, 0] > 0).astype(float)
        fit = fit_logistic(X, y, max_iter=30)
        assert np.all(np.isfinite(fit.coef))
        p = fit.predict(X)
        assert np.all((p > 0) & (p < 1))

    def test_predictions_clipped_strictly_inside_unit_interval(self):
        X = np.array([[-1e4], [1e4]])
        fit = fit_logistic(np.array([[-1.0], [1.0]]), np.array([0.0, 1.0]), max_iter=5)
        p = fit.predict(X)
        assert np.all(p > 0) and np.all(p < 1)

    def test_deterministic(self):
        X, y = logistic_data(seed=2)
        a = fit_logistic(X, y)
        b = fit_logistic(X, y)
        np.testing.assert_array_equal(a.coef, b.coef)


class TestLinear:
    def test_exact_line(self):
        X = np.arange(10.0).reshape(-1, 1)
        y = 2.0 * X[:, 0] + 1.0
        fit = fit_linear(X, y)
        np.testing.assert_allclose(fit.coef, [1.0, 2.0], atol=1e-10)
        np.testing.assert_allclose(fit.predict(X), y, atol=1e-10)

    def test_matches_normal_equations(self):
        rng = np.random.default_rng(3)
        X = rng.uniform(-1, 1, size=(100, 4))
        y = X @ np.array([1.0, -2.0, 0.5, 0.0]) + rng.standard_normal(100)
        fit = fit_linear(X, y)
        Z = np.column_stack([np.ones(100), X])
        ref = np.linalg.solve(Z.T @ Z, Z.T @ y)
        np.testing.assert_allclose(fit.coef, ref, atol=1e-10)

    def test_residuals_orthogonal_to_design(self):
        rng = np.random.default_rng(4)
        X = rng.uniform(-1, 1, size=(50, 2))
        y = rng.standard_normal(50)
        fit = fit_linear(X, y)
        resid = y - fit.predict(X)
        assert abs(resid.mean()) < 1e-12
        np.testing.assert_allclose(X.T @ resid, 0.0, atol=1e-10)
