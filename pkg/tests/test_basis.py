"""Tests for the lattice center selection and the Gaussian basis."""

import itertools
import math

import numpy as np
import pytest

from rfr_modeler.basis import (
    BasisLayout,
    CenterSet,
    GridSpec,
    eval_row,
    eval_rows,
    rbf_values,
    select_centers,
    sigma2,
)
from rfr_modeler.errors import InvalidParams, TooManyCenters


def brute_force_centers(samples, grid):
    """Every lattice point in the padded bounding box, filtered by distance to the nearest sample."""
    delta = grid.delta_grid
    lo = np.floor((samples.min(axis=0) - grid.radius - grid.anchor) / delta).astype(int) - 1
    hi = np.ceil((samples.max(axis=0) + grid.radius - grid.anchor) / delta).astype(int) + 1
    axes = [range(a, b + 1) for a, b in zip(lo, hi)]
    kept = []
    for index in itertools.product(*axes):
        point = grid.anchor + delta * np.array(index, dtype=float)
        diff = samples - point
        if grid.norm == "l2":
            dist = np.sqrt(np.sum(diff ** 2, axis=1)).min()
        else:
            dist = np.abs(diff).max(axis=1).min()
        if dist <= grid.radius * (1 + 1e-12):
            kept.append(point)
    kept = np.array(kept).reshape(-1, samples.shape[1])
    return kept[np.lexsort(kept.T[::-1])] if kept.size else kept


class TestSigma2:
    """Test the shared RBF width."""

    def test_reference_value(self):
        assert sigma2(3, 0.1, 1.0) == pytest.approx(1.7372, abs=1e-4)

    def test_value_at_radius_is_p(self):
        s2 = sigma2(3, 0.1, 0.5)
        assert math.exp(-(2 * 0.5) ** 2 / s2) == pytest.approx(0.1, rel=1e-12)

    def test_invalid(self):
        with pytest.raises(InvalidParams):
            sigma2(1, 0.1, 0.5)
        with pytest.raises(InvalidParams):
            sigma2(3, 1.0, 0.5)
        with pytest.raises(InvalidParams):
            sigma2(3, 0.1, 0.0)


class TestSelectCenters:
    """Test center selection against brute-force lattice enumeration."""

    @pytest.mark.parametrize("dimension,delta,norm", [
        (1, 0.3, "l2"),
        (2, 0.5, "l2"),
        (3, 0.7, "l2"),
        (2, 0.5, "linf"),
    ])
    def test_matches_brute_force(self, dimension, delta, norm):
        rng = np.random.default_rng(dimension)
        samples = rng.normal(size=(60, dimension))
        grid = GridSpec(delta_grid=delta, norm=norm)
        centers = select_centers(samples, grid, chunk_size=50)
        np.testing.assert_allclose(centers.centers, brute_force_centers(samples, grid), atol=1e-12)

    def test_single_point(self):
        centers = select_centers(np.zeros((1, 2)), GridSpec(delta_grid=1.0))
        # lattice points within distance 2 of the origin
        assert centers.count == 13
        assert centers.sigma2 == pytest.approx(sigma2(3, 0.1, 1.0))

    def test_boundary_point_is_kept(self):
        centers = select_centers(np.array([[0.5]]), GridSpec(delta_grid=0.5, m=3))
        np.testing.assert_allclose(centers.centers[:, 0], [-0.5, 0.0, 0.5, 1.0, 1.5])

    def test_anchor_shifts_lattice(self):
        centers = select_centers(np.array([[0.0]]), GridSpec(delta_grid=1.0, anchor=0.5))
        np.testing.assert_allclose(centers.centers[:, 0], [-1.5, -0.5, 0.5, 1.5])

    def test_sorted_and_unique(self):
        rng = np.random.default_rng(9)
        centers = select_centers(rng.normal(size=(500, 3)), GridSpec(delta_grid=0.5), chunk_size=1000)
        assert np.unique(centers.centers, axis=0).shape[0] == centers.count
        order = np.lexsort(centers.centers.T[::-1])
        np.testing.assert_array_equal(order, np.arange(centers.count))

    def test_cap_raises(self):
        rng = np.random.default_rng(10)
        with pytest.raises(TooManyCenters) as excinfo:
            select_centers(rng.normal(size=(200, 3)), GridSpec(delta_grid=0.25, max_centers=100))
        assert excinfo.value.cap == 100

    def test_empty_samples(self):
        centers = select_centers(np.empty((0, 2)), GridSpec(delta_grid=1.0))
        assert centers.count == 0
        assert centers.dimension == 2

    def test_invalid_norm(self):
        with pytest.raises(InvalidParams):
            GridSpec(delta_grid=1.0, norm="l1")


class TestBasisEvaluation:
    """Test design-matrix rows."""

    def test_row_layout(self):
        grid = GridSpec(delta_grid=1.0)
        centers = CenterSet(centers=np.array([[0.0, 0.0], [1.0, 0.0]]), sigma2=grid.sigma2, grid=grid)
        row = eval_row(np.array([1.0, 0.0]), centers)
        assert row.shape == (5,)
        assert row[0] == 1.0
        np.testing.assert_array_equal(row[1:3], [1.0, 0.0])
        assert row[3] == pytest.approx(math.exp(-1.0 / grid.sigma2))
        assert row[4] == 1.0

    def test_rows_match_single_row(self):
        rng = np.random.default_rng(11)
        grid = GridSpec(delta_grid=0.5)
        centers = select_centers(rng.normal(size=(30, 2)), grid)
        x = rng.normal(size=(7, 2))
        rows = eval_rows(x, centers)
        for i in range(7):
            np.testing.assert_allclose(rows[i], eval_row(x[i], centers))

    def test_no_centers(self):
        grid = GridSpec(delta_grid=1.0)
        centers = CenterSet(centers=np.empty((0, 3)), sigma2=grid.sigma2, grid=grid)
        assert rbf_values(np.zeros(3), centers).shape == (1, 0)
        assert eval_rows(np.zeros((4, 3)), centers).shape == (4, 4)

    def test_layout(self):
        layout = BasisLayout(dimension=2, n_centers=3)
        assert layout.n_columns == 6
        assert layout.column_names() == ["const", "X1", "X2", "phi1", "phi2", "phi3"]
        assert layout.linear_slice == slice(1, 3)
        assert layout.rbf_slice == slice(3, 6)
