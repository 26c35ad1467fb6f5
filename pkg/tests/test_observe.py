"""Tests for standardization, delay selection and embedding."""

import numpy as np
import pytest
from scipy import stats

from rfr_modeler.dynamics import simulate
from rfr_modeler.errors import DegenerateSeries, InsufficientLength, InvalidParams, InvalidTau
from rfr_modeler.evaluate import delay_structure_error
from rfr_modeler.observe import (
    Autocorrelation,
    Standardization,
    TimeSeries,
    add_observation_noise,
    autocorrelation,
    delay_pairs,
    embed,
    select_tau,
    split_holdout,
    standardize,
    tau_to_lag,
)


class TestStandardize:
    """Test per-observable standardization."""

    def test_zero_mean_unit_variance(self, sine_series):
        standardized, transform = standardize(sine_series.with_values(3.0 + 2.0 * sine_series.values))
        assert abs(standardized.values.mean()) < 1e-12
        assert standardized.values.std() == pytest.approx(1.0, abs=1e-12)
        assert transform.mean[0] == pytest.approx(3.0, abs=0.05)

    def test_round_trip(self, sine_series):
        standardized, transform = standardize(sine_series)
        np.testing.assert_allclose(transform.invert(standardized.values), sine_series.values, atol=1e-12)

    def test_constant_series_raises(self):
        with pytest.raises(DegenerateSeries):
            standardize(TimeSeries(dt=0.1, values=np.ones(100)))

    def test_each_observable_separately(self):
        values = np.column_stack([np.arange(10.0), 100.0 * np.arange(10.0)])
        standardized, transform = standardize(TimeSeries(dt=1.0, values=values))
        np.testing.assert_allclose(standardized.values[:, 0], standardized.values[:, 1])
        assert transform.std[1] == pytest.approx(100.0 * transform.std[0])

    def test_expand_interleaves(self):
        transform = Standardization([1.0, 2.0], [3.0, 4.0]).expand(6)
        np.testing.assert_array_equal(transform.mean, [1, 2, 1, 2, 1, 2])
        np.testing.assert_array_equal(transform.std, [3, 4, 3, 4, 3, 4])

    def test_expand_rejects_incompatible_dimension(self):
        with pytest.raises(InvalidParams):
            Standardization([1.0, 2.0], [3.0, 4.0]).expand(5)


class TestAutocorrelation:
    """Test autocorrelation and delay selection."""

    def test_starts_at_one(self, sine_series):
        acf = autocorrelation(sine_series, 5.0)
        assert acf.values[0] == 1.0
        assert acf.lags.shape[0] == 101
        assert np.all(np.abs(acf.values) <= 1.0)

    def test_cosine_shape(self):
        dt = 0.01
        t = dt * np.arange(200_000)
        acf = autocorrelation(TimeSeries(dt=dt, values=np.sin(t)), 2.0)
        assert acf(1.0) == pytest.approx(np.cos(1.0), abs=0.01)

    def test_max_lag_bounds(self, sine_series):
        with pytest.raises(InvalidParams):
            autocorrelation(sine_series, sine_series.duration / 2)

    def test_select_tau_takes_first_crossing(self):
        acf = Autocorrelation(lags=0.1 * np.arange(6), values=np.array([1.0, 0.9, 0.7, 0.52, 0.3, 0.1]))
        selection = select_tau(acf, target=0.5)
        assert selection.lag == 4
        assert selection.tau == pytest.approx(0.4)
        assert selection.correlation <= 0.5
        assert selection.crossed

    def test_select_tau_closer_bracket_opt_in(self):
        acf = Autocorrelation(lags=0.1 * np.arange(6), values=np.array([1.0, 0.9, 0.7, 0.52, 0.3, 0.1]))
        selection = select_tau(acf, target=0.5, closer=True)
        assert selection.lag == 3
        assert selection.correlation == pytest.approx(0.52)
        assert not selection.crossed

    def test_closer_bracket_keeps_first_below_when_nearer(self):
        acf = Autocorrelation(lags=0.1 * np.arange(5), values=np.array([1.0, 0.9, 0.7, 0.49, 0.2]))
        assert select_tau(acf, target=0.5, closer=True).lag == 3

    def test_select_tau_without_crossing(self):
        acf = Autocorrelation(lags=0.1 * np.arange(4), values=np.array([1.0, 0.95, 0.9, 0.85]))
        selection = select_tau(acf, target=0.5)
        assert not selection.crossed
        assert selection.lag == 3
        assert selection.warning

    def test_select_tau_warns_at_first_lag(self):
        acf = Autocorrelation(lags=0.1 * np.arange(3), values=np.array([1.0, 0.4, 0.1]))
        selection = select_tau(acf, target=0.5)
        assert selection.lag == 1
        assert selection.warning

    def test_override_reports_correlation(self):
        acf = Autocorrelation(lags=0.1 * np.arange(5), values=np.array([1.0, 0.9, 0.7, 0.49, 0.2]))
        selection = select_tau(acf, target=0.5, override=0.2)
        assert selection.lag == 2
        assert selection.correlation == pytest.approx(0.7)

    def test_tau_to_lag(self):
        assert tau_to_lag(0.12, 0.01) == 12
        assert tau_to_lag(18.0, 1.0) == 18
        with pytest.raises(InvalidTau):
            tau_to_lag(0.125, 0.01)
        with pytest.raises(InvalidTau):
            tau_to_lag(-0.1, 0.01)

    @pytest.mark.slow
    def test_ks_correlation_at_published_delay(self):
        sim = simulate("ks", duration=1e4, dt=0.01, transient=1000.0, seed=0)
        acf = autocorrelation(sim.series, 0.5)
        assert acf(0.12) == pytest.approx(0.50, abs=0.05)

    @pytest.mark.slow
    def test_mg_correlation_at_published_delay(self):
        sim = simulate("mg", duration=1e4, dt=0.01, transient=1000.0, seed=0)
        acf = autocorrelation(sim.series, 2.0)
        assert acf(0.5) == pytest.approx(0.80, abs=0.05)


class TestEmbed:
    """Test delay-coordinate embedding."""

    def test_single_layout(self):
        series = TimeSeries(dt=0.1, values=np.arange(10.0))
        embedded = embed(series, 3, 0.2)
        assert embedded.samples.shape == (6, 3)
        np.testing.assert_array_equal(embedded.samples[0], [4.0, 2.0, 0.0])
        assert embedded.times[0] == pytest.approx(0.4)
        assert embedded.lag == 2

    def test_interleaved_layout(self):
        values = np.column_stack([np.arange(10.0), 100.0 + np.arange(10.0)])
        embedded = embed(TimeSeries(dt=1.0, values=values), 4, 3.0, layout="interleaved")
        np.testing.assert_array_equal(embedded.samples[0], [3.0, 103.0, 0.0, 100.0])
        assert embedded.n_obs == 2
        assert embedded.pairs == [(0, 2), (1, 3)]

    def test_embedding_has_zero_delay_error(self, sine_embedding):
        embedded, _ = sine_embedding
        report = delay_structure_error(embedded.samples, embedded.lag, embedded.n_obs)
        assert report.quantiles['max'] < 1e-12

    def test_dimension_must_match_observables(self):
        values = np.column_stack([np.arange(10.0), np.arange(10.0)])
        with pytest.raises(InvalidParams):
            embed(TimeSeries(dt=1.0, values=values), 3, 1.0, layout="interleaved")

    def test_tau_off_grid(self):
        with pytest.raises(InvalidTau):
            embed(TimeSeries(dt=0.1, values=np.arange(10.0)), 2, 0.15)

    def test_too_short(self):
        with pytest.raises(InsufficientLength):
            embed(TimeSeries(dt=1.0, values=np.arange(5.0)), 4, 2.0)

    def test_unknown_layout(self):
        with pytest.raises(InvalidParams):
            embed(TimeSeries(dt=1.0, values=np.arange(5.0)), 2, 1.0, layout="stacked")

    def test_split_holdout(self, sine_embedding):
        embedded, _ = sine_embedding
        train, held_out = split_holdout(embedded, 0.25)
        assert held_out.n_samples == int(embedded.n_samples * 0.25)
        assert train.n_samples + held_out.n_samples == embedded.n_samples
        assert train.times[-1] < held_out.times[0]
        np.testing.assert_array_equal(held_out.samples, embedded.samples[train.n_samples:])
        assert (held_out.lag, held_out.dimension, held_out.names) == (embedded.lag, 3, embedded.names)

    def test_split_without_holdout(self, sine_embedding):
        embedded, _ = sine_embedding
        train, held_out = split_holdout(embedded, 0.0)
        assert train is embedded and held_out is embedded
        with pytest.raises(InvalidParams):
            split_holdout(embedded, 1.0)

    def test_delay_pairs(self):
        assert delay_pairs(3) == [(0, 1), (1, 2)]
        assert delay_pairs(6, 2) == [(0, 2), (1, 3), (2, 4), (3, 5)]


class TestObservationNoise:
    """Test additive observation noise."""

    def test_noise_level(self, sine_series):
        noisy = add_observation_noise(sine_series, 0.1, seed=0)
        residual = noisy.values - sine_series.values
        assert residual.std() == pytest.approx(0.1 * sine_series.values.std(), rel=0.1)

    def test_deterministic(self, sine_series):
        a = add_observation_noise(sine_series, 0.1, seed=5)
        b = add_observation_noise(sine_series, 0.1, seed=5)
        np.testing.assert_array_equal(a.values, b.values)

    def test_zero_ratio_is_identity(self, sine_series):
        np.testing.assert_array_equal(add_observation_noise(sine_series, 0.0).values, sine_series.values)

    def test_negative_ratio(self, sine_series):
        with pytest.raises(InvalidParams):
            add_observation_noise(sine_series, -0.1)

    def test_noise_is_gaussian(self, sine_series):
        noisy = add_observation_noise(sine_series, 0.1, seed=2)
        residual = (noisy.values - sine_series.values).ravel()
        sigma = 0.1 * sine_series.values.std()
        assert stats.kstest(residual / sigma, "norm").pvalue > 0.001
