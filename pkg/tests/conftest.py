"""Shared test fixtures and utilities."""

import pytest
import tempfile
from pathlib import Path

import numpy as np

from rfr_modeler.basis import GridSpec, select_centers
from rfr_modeler.config import system_defaults, with_overrides
from rfr_modeler.deriv import DerivativeConfig, estimate_derivative
from rfr_modeler.model import RfrModel
from rfr_modeler.observe import TimeSeries, embed, standardize
from rfr_modeler.regress import RegressionProblem, fit_all


@pytest.fixture
def temp_dir():
    """Create a temporary directory for tests."""
    with tempfile.TemporaryDirectory() as tmpdir:
        yield Path(tmpdir)


@pytest.fixture
def sine_series():
    """Clean two-harmonic periodic signal, 4000 samples at dt=0.05."""
    dt = 0.05
    t = dt * np.arange(4000)
    return TimeSeries(dt=dt, values=np.sin(t) + 0.3 * np.sin(2.0 * t), names=("w1",))


@pytest.fixture
def sine_embedding(sine_series):
    """Standardized 3-dim delay embedding of the sine series plus its transform."""
    standardized, transform = standardize(sine_series)
    return embed(standardized, 3, 0.5), transform


@pytest.fixture
def tiny_model(sine_embedding):
    """Small fitted model of the sine embedding (J in the low hundreds)."""
    embedded, transform = sine_embedding
    estimate = estimate_derivative(embedded.samples, DerivativeConfig(order=6, l=1, dt=embedded.dt))
    samples = embedded.samples[estimate.index]
    centers = select_centers(samples, GridSpec(delta_grid=0.5))
    problem = RegressionProblem.from_samples(samples, estimate.values, centers, lam=1e-6, workers=2)
    return RfrModel(
        centers=centers,
        coefficients=fit_all(problem),
        standardization=transform.expand(3),
        tau=embedded.tau,
        dimension=3,
        dt=embedded.dt,
        provenance={"fit.lambda": "1e-06", "fit.delta_grid": "0.5"},
    )


@pytest.fixture
def tiny_config(temp_dir):
    """Coupled Rossler run small enough for the fast suite."""
    cfg = system_defaults("cr")
    return with_overrides(
        cfg,
        n_total=3000,
        transient=50.0,
        dimension=4,
        delta_grid=1.0,
        n_samples=2000,
        lam=1e-6,
        long_horizon=50.0,
        forecast_horizon=2.0,
        n_init=3,
        density_bins=20,
        tail_min=0.0,
        saddle_enabled=True,
        saddle_threshold=2.0,
        segment_length=2.0,
        keep_length=1.0,
        trials_max=3,
        saddle_length=6.0,
        workers=2,
        output_dir=temp_dir / "run",
    )
