"""Tests for finite-difference derivatives and the stride scan."""

import numpy as np
import pytest

from rfr_modeler.deriv import DerivativeConfig, StrideScan, estimate_derivative, scan_stride
from rfr_modeler.dynamics import observable_derivative, simulate
from rfr_modeler.errors import InvalidParams, SeriesTooShort
from rfr_modeler.observe import add_observation_noise


class TestStencils:
    """Test stencil exactness and edge handling."""

    def test_order6_exact_on_degree6_polynomials(self):
        rng = np.random.default_rng(0)
        dt = 0.1
        t = dt * np.arange(40)
        for _ in range(10):
            coeffs = rng.normal(size=7)
            x = np.polyval(coeffs, t)
            exact = np.polyval(np.polyder(coeffs), t)
            est = estimate_derivative(x, DerivativeConfig(order=6, l=2, dt=dt))
            np.testing.assert_allclose(est.values, exact[est.index], rtol=1e-9,
                                       atol=1e-9 * np.abs(exact).max())

    def test_order2_exact_on_quadratics(self):
        dt = 0.5
        t = dt * np.arange(20)
        est = estimate_derivative(3.0 * t ** 2 - t + 1.0, DerivativeConfig(order=2, l=3, dt=dt))
        np.testing.assert_allclose(est.values, 6.0 * t[est.index] - 1.0, rtol=1e-12)

    def test_edges_dropped(self):
        est = estimate_derivative(np.arange(50.0), DerivativeConfig(order=6, l=2, dt=1.0))
        assert est.values.shape[0] == 50 - 12
        assert est.index[0] == 6 and est.index[-1] == 43

    def test_multi_column(self):
        x = np.column_stack([np.arange(30.0), 2.0 * np.arange(30.0)])
        est = estimate_derivative(x, DerivativeConfig(order=6, l=1, dt=0.5))
        np.testing.assert_allclose(est.values, [[2.0, 4.0]] * 24)

    def test_series_too_short(self):
        with pytest.raises(SeriesTooShort):
            estimate_derivative(np.arange(12.0), DerivativeConfig(order=6, l=2, dt=1.0))

    def test_invalid_config(self):
        with pytest.raises(InvalidParams):
            DerivativeConfig(order=4)
        with pytest.raises(InvalidParams):
            DerivativeConfig(l=0)
        with pytest.raises(InvalidParams):
            DerivativeConfig(dt=0.0)


class TestStrideScan:
    """Test the derivative error scan over strides."""

    def test_noise_free_prefers_small_stride(self):
        dt = 0.01
        t = dt * np.arange(5000)
        scan = scan_stride(np.sin(t), np.cos(t), 2, range(1, 6), dt)
        assert scan.best_l == 1
        assert np.all(np.diff(scan.error_std) > 0)

    def test_noise_moves_optimum_up(self):
        dt = 0.01
        t = dt * np.arange(20_000)
        noisy = np.sin(t) + 0.01 * np.random.default_rng(0).standard_normal(t.shape[0])
        scan = scan_stride(noisy, np.cos(t), 2, range(1, 30), dt)
        assert scan.best_l > 3

    def test_frame_columns(self):
        scan = StrideScan(order=6, ls=np.array([1, 2]), error_std=np.array([0.2, 0.1]))
        assert list(scan.to_frame().columns) == ["l", "error_std"]
        assert scan.best_l == 2
        assert scan.best_error == pytest.approx(0.1)

    def test_length_mismatch(self):
        with pytest.raises(InvalidParams):
            scan_stride(np.zeros(10), np.zeros(9), 2, [1], 0.1)

    @pytest.mark.slow
    def test_noisy_ks_optimal_strides(self):
        sim = simulate("ks", duration=1000.0, dt=0.01, transient=1000.0, seed=0)
        truth = observable_derivative(sim)[:, 0]
        noisy = add_observation_noise(sim.series, 0.10, seed=0)
        scale = noisy.values[:, 0].std()
        signal = noisy.values[:, 0] / scale
        order2 = scan_stride(signal, truth / scale, 2, range(1, 16), 0.01)
        order6 = scan_stride(signal, truth / scale, 6, range(1, 16), 0.01)
        assert 4 <= order2.best_l <= 8
        assert 7 <= order6.best_l <= 12
        assert order6.best_error <= order2.best_error
