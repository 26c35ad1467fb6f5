"""Tests for CSV I/O functions."""

import numpy as np
import pandas as pd
import pytest

from rfr_modeler.csv_io import (
    load_csv,
    load_embedded,
    load_sidecar,
    load_trajectory,
    prediction_frame,
    save_csv,
    save_embedded,
    save_sidecar,
    save_trajectory,
    sidecar_path,
)
from rfr_modeler.errors import CorruptFile
from rfr_modeler.observe import TimeSeries


class TestSidecar:
    """Test YAML metadata next to CSV files."""

    def test_path(self, temp_dir):
        assert sidecar_path(temp_dir / "trajectory.csv") == temp_dir / "trajectory.meta.yaml"

    def test_numpy_values(self, temp_dir):
        csv = temp_dir / "x.csv"
        save_sidecar(csv, {'mean': np.array([1.5, 2.5]), 'count': np.int64(3), 'ratio': np.float64(0.1)})
        assert load_sidecar(csv) == {'mean': [1.5, 2.5], 'count': 3, 'ratio': 0.1}

    def test_missing_sidecar(self, temp_dir):
        assert load_sidecar(temp_dir / "none.csv") == {}


class TestTrajectory:
    """Test observed trajectory files."""

    def test_round_trip(self, sine_series, temp_dir):
        path = temp_dir / "trajectory.csv"
        save_trajectory(sine_series, path, metadata={'system': 'sine', 'seed': 0})
        loaded, meta = load_trajectory(path)
        assert loaded.dt == sine_series.dt
        assert loaded.names == ("w1",)
        np.testing.assert_allclose(loaded.values, sine_series.values, rtol=1e-12, atol=1e-15)
        assert meta['system'] == 'sine'

    def test_columns(self, temp_dir):
        path = temp_dir / "trajectory.csv"
        save_trajectory(TimeSeries(dt=0.1, values=np.zeros((5, 2))), path)
        assert list(pd.read_csv(path).columns) == ['t', 'w1', 'w2']

    def test_dt_inferred_without_sidecar(self, temp_dir):
        path = temp_dir / "external.csv"
        save_csv(pd.DataFrame({'t': [0.0, 0.5, 1.0], 'w1': [1.0, 2.0, 3.0]}), path)
        loaded, meta = load_trajectory(path)
        assert loaded.dt == pytest.approx(0.5)
        assert meta == {}

    def test_missing_observables(self, temp_dir):
        path = temp_dir / "bad.csv"
        save_csv(pd.DataFrame({'t': [0.0, 1.0]}), path)
        with pytest.raises(CorruptFile):
            load_trajectory(path)

    def test_missing_time_column(self, temp_dir):
        path = temp_dir / "bad.csv"
        save_csv(pd.DataFrame({'w1': [0.0, 1.0]}), path)
        with pytest.raises(CorruptFile):
            load_csv(path, expected_cols=['t'])


class TestEmbedded:
    """Test embedded-series files."""

    def test_round_trip_with_standardization(self, sine_embedding, temp_dir):
        embedded, transform = sine_embedding
        path = temp_dir / "embedded.csv"
        save_embedded(embedded, path, standardization=transform)
        loaded, loaded_transform, meta = load_embedded(path)
        assert (loaded.dimension, loaded.lag, loaded.layout) == (3, 10, "single")
        assert loaded.tau == pytest.approx(0.5)
        np.testing.assert_allclose(loaded.samples, embedded.samples, rtol=1e-12, atol=1e-15)
        np.testing.assert_allclose(loaded_transform.std, transform.std)
        assert meta['n_obs'] == 1

    def test_without_standardization(self, sine_embedding, temp_dir):
        embedded, _ = sine_embedding
        path = temp_dir / "embedded.csv"
        save_embedded(embedded, path)
        assert load_embedded(path)[1] is None

    def test_dimension_mismatch(self, sine_embedding, temp_dir):
        embedded, _ = sine_embedding
        path = temp_dir / "embedded.csv"
        save_embedded(embedded, path, metadata={'note': 'x'})
        meta = load_sidecar(path)
        meta['dimension'] = 4
        save_sidecar(path, meta)
        with pytest.raises(CorruptFile):
            load_embedded(path)

    def test_missing_columns(self, temp_dir):
        path = temp_dir / "embedded.csv"
        save_csv(pd.DataFrame({'t': [0.0, 1.0], 'Y1': [0.0, 1.0]}), path)
        with pytest.raises(CorruptFile):
            load_embedded(path)


class TestPredictionFrame:
    """Test prediction output tables."""

    def test_columns(self):
        frame = prediction_frame(np.arange(3.0), np.zeros((3, 2)), np.ones(3))
        assert list(frame.columns) == ['t', 'X1', 'X2', 'X1_destd']
