"""Tests for ridge regression on the RBF design matrix."""

import numpy as np
import pytest
from scipy.optimize import minimize

from rfr_modeler.basis import GridSpec, eval_rows, select_centers
from rfr_modeler.errors import InvalidParams, NotEnoughSamples, SingularSystem
from rfr_modeler.regress import (
    Coefficients,
    RegressionProblem,
    fit_all,
    lambda_ladder,
    ridge_solve,
    sample_rows,
)


class TestSampleRows:
    """Test regression row sampling."""

    def test_sorted_distinct(self):
        rows = sample_rows(1000, 100, np.random.default_rng(0))
        assert rows.shape == (100,)
        assert np.all(np.diff(rows) > 0)
        assert rows.min() >= 0 and rows.max() < 1000

    def test_deterministic(self):
        a = sample_rows(1000, 50, np.random.default_rng(3))
        b = sample_rows(1000, 50, np.random.default_rng(3))
        np.testing.assert_array_equal(a, b)

    def test_too_many(self):
        with pytest.raises(NotEnoughSamples):
            sample_rows(10, 11, np.random.default_rng(0))

    def test_invalid_count(self):
        with pytest.raises(InvalidParams):
            sample_rows(10, 0, np.random.default_rng(0))


class TestRidgeSolve:
    """Test the ridge solution against its optimality conditions."""

    def test_satisfies_normal_equations(self):
        rng = np.random.default_rng(1)
        design = rng.normal(size=(50, 8))
        target = rng.normal(size=50)
        lam = 1e-3
        b = ridge_solve(design, target, lam)
        lhs = (design.T @ design + 50 * lam * np.eye(8)) @ b
        rhs = design.T @ target
        assert np.linalg.norm(lhs - rhs) <= 1e-8 * np.linalg.norm(rhs)

    def test_matches_iterative_minimizer(self):
        rng = np.random.default_rng(2)
        design = rng.normal(size=(50, 8))
        target = rng.normal(size=50)
        lam = 1e-2

        def objective(b):
            r = target - design @ b
            return r @ r / 100.0 + 0.5 * lam * b @ b

        def gradient(b):
            return -design.T @ (target - design @ b) / 50.0 + lam * b

        oracle = minimize(objective, np.zeros(8), jac=gradient, method="BFGS",
                          options={"gtol": 1e-12, "maxiter": 10_000}).x
        np.testing.assert_allclose(ridge_solve(design, target, lam), oracle, atol=1e-6)

    def test_exact_fit_without_regularization(self):
        rng = np.random.default_rng(3)
        design = rng.normal(size=(40, 5))
        truth = rng.normal(size=5)
        np.testing.assert_allclose(ridge_solve(design, design @ truth, 0.0), truth, rtol=1e-9)

    def test_rank_deficient_without_lambda(self):
        design = np.ones((10, 3))
        with pytest.raises(SingularSystem):
            ridge_solve(design, np.arange(10.0), 0.0)

    def test_rank_deficient_with_lambda(self):
        design = np.ones((10, 3))
        b = ridge_solve(design, np.ones(10), 1e-3)
        assert np.all(np.isfinite(b))
        np.testing.assert_allclose(b, b[0])

    def test_negative_lambda(self):
        with pytest.raises(InvalidParams):
            ridge_solve(np.eye(3), np.ones(3), -1.0)


class TestFitAll:
    """Test the multi-target fit."""

    def test_components_match_single_solves(self):
        rng = np.random.default_rng(4)
        design = rng.normal(size=(60, 6))
        targets = rng.normal(size=(60, 3))
        coefficients = fit_all(RegressionProblem.from_design(design, targets, 1e-4))
        assert coefficients.beta.shape == (3, 6)
        for k in range(3):
            np.testing.assert_allclose(coefficients.beta[k], ridge_solve(design, targets[:, k], 1e-4),
                                       rtol=1e-12)

    def test_residual_mse(self):
        rng = np.random.default_rng(5)
        design = rng.normal(size=(60, 4))
        targets = rng.normal(size=(60, 2))
        coefficients = fit_all(RegressionProblem.from_design(design, targets, 1e-3))
        direct = np.mean((targets - design @ coefficients.beta.T) ** 2, axis=0)
        np.testing.assert_allclose(coefficients.residual_mse, direct, rtol=1e-8)

    def test_accumulated_equals_direct(self):
        rng = np.random.default_rng(6)
        samples = rng.normal(size=(700, 2))
        targets = rng.normal(size=(700, 2))
        centers = select_centers(samples, GridSpec(delta_grid=1.0))
        blocked = RegressionProblem.from_samples(samples, targets, centers, 1e-5, block_size=64, workers=3)
        direct = RegressionProblem.from_design(eval_rows(samples, centers), targets, 1e-5)
        np.testing.assert_allclose(blocked.gram, direct.gram, rtol=1e-10, atol=1e-10)
        np.testing.assert_allclose(blocked.moment, direct.moment, rtol=1e-10, atol=1e-10)

    def test_accumulation_independent_of_workers(self):
        rng = np.random.default_rng(7)
        samples = rng.normal(size=(500, 2))
        targets = rng.normal(size=(500, 2))
        centers = select_centers(samples, GridSpec(delta_grid=1.0))
        one = RegressionProblem.from_samples(samples, targets, centers, 1e-5, block_size=32, workers=1)
        four = RegressionProblem.from_samples(samples, targets, centers, 1e-5, block_size=32, workers=4)
        np.testing.assert_array_equal(one.gram, four.gram)
        np.testing.assert_array_equal(one.moment, four.moment)

    def test_non_finite_coefficients_rejected(self):
        with pytest.raises(SingularSystem):
            Coefficients(beta=np.array([[np.nan, 1.0]]), residual_mse=np.zeros(1))


class TestLambdaLadder:
    """Test the lambda sweep."""

    def test_norm_decreases_with_lambda(self):
        rng = np.random.default_rng(8)
        design = rng.normal(size=(80, 10))
        targets = rng.normal(size=(80, 2))
        problem = RegressionProblem.from_design(design, targets, 1e-6)
        ladder = lambda_ladder(problem, [1e-6, 1e-3, 1e-1, 10.0])
        assert list(ladder.columns) == ["lambda", "coef_norm", "residual_mse"]
        assert np.all(np.diff(ladder["coef_norm"]) < 0)
        assert np.all(np.diff(ladder["residual_mse"]) > 0)

    def test_singular_entries_skipped(self):
        problem = RegressionProblem.from_design(np.ones((10, 3)), np.arange(10.0), 0.0)
        ladder = lambda_ladder(problem, [0.0, 1e-3])
        assert list(ladder["lambda"]) == [1e-3]
