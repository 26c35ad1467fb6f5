"""Model quality metrics.

- delay-structure error E(t) = max_i |X_i(t) - X_{i+I}(t + tau)|
- density overlap of X_1 between model and actual trajectories
- multi-initial-condition forecasts with a valid-time per initial state
- laminar lasting-time statistics for |x1 - x2| < C
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import pandas as pd
from tqdm import tqdm

from .csv_io import save_csv
from .errors import InsufficientLength, InvalidParams, NonFiniteState
from .model import RfrModel, predict
from .observe import EmbeddedSeries, delay_pairs
from .utils import named_seed, spawn_rngs, worker_count, write_json

logger = logging.getLogger(__name__)

QUANTILES = (0.5, 0.9, 0.95, 0.99)


@dataclass
class DelayErrorReport:
    """Per-time delay error and the first-pair discrepancy histogram."""

    errors: np.ndarray
    quantiles: Dict[str, float]
    hist_counts: np.ndarray
    hist_edges: np.ndarray

    @property
    def median(self) -> float:
        return self.quantiles['q50']


def delay_discrepancy(states: np.ndarray, lag: int, n_obs: int = 1) -> np.ndarray:
    """|X_i(t) - X_{i+I}(t + lag)| for every pair, shape (N - lag, pairs)."""
    states = np.asarray(states, dtype=float)
    n, dimension = states.shape
    if n <= lag:
        raise InsufficientLength(f"trajectory of {n} samples is not longer than the delay ({lag} samples)")
    pairs = delay_pairs(dimension, n_obs)
    if not pairs:
        return np.zeros((n - lag, 0))
    left = np.array([i for i, _ in pairs])
    right = np.array([j for _, j in pairs])
    return np.abs(states[:n - lag, left] - states[lag:, right])


def delay_structure_error(states: np.ndarray, lag: int, n_obs: int = 1,
                          bins: int = 50) -> DelayErrorReport:
    """Delay-structure check of a trajectory sampled every dt, with tau = lag * dt."""
    diff = delay_discrepancy(states, lag, n_obs)
    errors = diff.max(axis=1) if diff.shape[1] else np.zeros(diff.shape[0])
    quantiles = {f"q{int(q * 100)}": float(np.quantile(errors, q)) for q in QUANTILES}
    quantiles['max'] = float(errors.max())
    if diff.shape[1]:
        signed = states[:states.shape[0] - lag, 0] - states[lag:, n_obs]
    else:
        signed = np.zeros(errors.shape[0])
    counts, edges = np.histogram(signed, bins=bins)
    return DelayErrorReport(errors=errors, quantiles=quantiles, hist_counts=counts, hist_edges=edges)


@dataclass
class DensityComparison:
    edges: np.ndarray
    model: np.ndarray
    actual: np.ndarray
    overlap: float

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({'bin_left': self.edges[:-1], 'bin_right': self.edges[1:],
                             'model': self.model, 'actual': self.actual})


def density_compare(model_x1: np.ndarray, actual_x1: np.ndarray, bins: int = 100) -> DensityComparison:
    """Shared-bin histograms (each summing to 1) and their intersection."""
    model_x1 = np.asarray(model_x1, dtype=float).reshape(-1)
    actual_x1 = np.asarray(actual_x1, dtype=float).reshape(-1)
    if model_x1.size == 0 or actual_x1.size == 0:
        raise InsufficientLength("density comparison needs non-empty series")
    for name, x in (("model", model_x1), ("actual", actual_x1)):
        if x.size < 10 * bins:
            logger.warning(f"{name} series has {x.size} samples for {bins} bins; density is noisy")
    pooled = np.concatenate([model_x1, actual_x1])
    lo, hi = float(pooled.min()), float(pooled.max())
    if lo == hi:
        lo, hi = lo - 0.5, hi + 0.5
    edges = np.linspace(lo, hi, bins + 1)
    p = np.histogram(model_x1, bins=edges)[0] / model_x1.size
    q = np.histogram(actual_x1, bins=edges)[0] / actual_x1.size
    return DensityComparison(edges=edges, model=p, actual=q, overlap=float(np.minimum(p, q).sum()))


@dataclass
class ForecastSuite:
    """Per-initial-condition |X1 error| curves and valid times."""

    times: np.ndarray
    errors: np.ndarray
    valid_times: np.ndarray
    start_times: np.ndarray
    threshold: float
    horizon: float

    @property
    def rmse(self) -> np.ndarray:
        return np.sqrt(np.mean(self.errors ** 2, axis=0))

    def curves_frame(self) -> pd.DataFrame:
        columns = {'t': self.times, 'rmse': self.rmse}
        for i in range(self.errors.shape[0]):
            columns[f"err_{i + 1}"] = self.errors[i]
        return pd.DataFrame(columns)

    def valid_frame(self) -> pd.DataFrame:
        return pd.DataFrame({'init': np.arange(1, self.valid_times.shape[0] + 1),
                             'start_time': self.start_times, 'valid_time': self.valid_times})


def first_exceedance(times: np.ndarray, errors: np.ndarray, threshold: float, horizon: float) -> float:
    above = np.flatnonzero(~(errors <= threshold))
    return float(times[above[0]]) if above.size else float(horizon)


def forecast_suite(model: RfrModel, actual: EmbeddedSeries, n_init: int, horizon: float,
                   seed: int = 0, threshold_ratio: float = 0.5, init_noise_std: float = 0.0,
                   workers: Optional[int] = None, progress: bool = False) -> ForecastSuite:
    """Forecast from `n_init` initial states drawn from disjoint windows of `actual`.

    The valid time of a forecast is the first time |X1_model - X1_actual|
    exceeds threshold_ratio * std(X1_actual), or the horizon if it never does.
    Initial states may be perturbed by Gaussian noise of std `init_noise_std`.
    """
    steps = int(round(horizon / actual.dt))
    if steps < 1:
        raise InvalidParams(f"horizon {horizon} shorter than one sample")
    window = steps + 1
    n_slots = actual.n_samples // window
    if n_slots < n_init:
        raise InsufficientLength(
            f"actual series has room for {n_slots} disjoint windows of {horizon}, need {n_init}"
        )
    seed_seq = named_seed(seed, "forecast")
    slots = np.sort(np.random.default_rng(seed_seq).choice(n_slots, size=n_init, replace=False))
    starts = slots * window
    rngs = spawn_rngs(seed_seq, n_init, 1)
    threshold = threshold_ratio * float(np.std(actual.samples[:, 0]))
    times = actual.dt * np.arange(window)

    def run(i):
        start = starts[i]
        x0 = actual.samples[start].copy()
        if init_noise_std > 0:
            x0 = x0 + init_noise_std * rngs[i].standard_normal(x0.shape[0])
        truth = actual.samples[start:start + window, 0]
        err = np.full(window, np.inf)
        try:
            states = predict(model, x0, horizon).states
        except NonFiniteState as e:
            states = e.partial if e.partial is not None else np.empty((0, model.dimension))
            logger.debug(f"Forecast {i + 1} blew up after {states.shape[0]} samples")
        k = min(states.shape[0], window)
        err[:k] = np.abs(states[:k, 0] - truth[:k])
        return err

    with ThreadPoolExecutor(max_workers=worker_count(workers)) as executor:
        errors = np.array(list(tqdm(executor.map(run, range(n_init)), total=n_init,
                                    desc="Forecasts", disable=not progress)))

    valid = np.array([first_exceedance(times, e, threshold, horizon) for e in errors])
    logger.info(f"Forecast valid times: mean {valid.mean():.3g}, min {valid.min():.3g}")
    return ForecastSuite(times=times, errors=errors, valid_times=valid,
                         start_times=actual.times[starts], threshold=threshold, horizon=horizon)


@dataclass
class LaminarStats:
    """Lasting times of the laminar state |x1 - x2| < C."""

    threshold: float
    durations: np.ndarray
    burst_durations: np.ndarray
    edges: np.ndarray
    density: np.ndarray
    tail_slope: float
    tail_min: float

    def histogram_frame(self) -> pd.DataFrame:
        return pd.DataFrame({'bin_left': self.edges[:-1], 'bin_right': self.edges[1:],
                             'density': self.density})


def _runs(mask: np.ndarray):
    """Lengths of maximal True runs and of maximal False runs."""
    if mask.size == 0:
        return np.array([], dtype=int), np.array([], dtype=int)
    change = np.flatnonzero(np.diff(mask.astype(np.int8))) + 1
    bounds = np.concatenate([[0], change, [mask.size]])
    lengths = np.diff(bounds)
    values = mask[bounds[:-1]]
    return lengths[values], lengths[~values]


def laminar_lasting_times(x1: np.ndarray, x2: np.ndarray, threshold: float, dt: float,
                          tail_min: float = 100.0, bins: int = 50) -> LaminarStats:
    """Laminar/burst partition of a paired series and the semi-log tail slope.

    The slope is the least-squares fit of log10(density) against lasting
    time over bins whose left edge is at least `tail_min`; NaN when fewer
    than two non-empty bins fall in the window.
    """
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    if x1.shape != x2.shape:
        raise InvalidParams(f"paired series differ in length: {x1.shape} vs {x2.shape}")
    laminar, burst = _runs(np.abs(x1 - x2) < threshold)
    durations = laminar * dt
    burst_durations = burst * dt
    if durations.size:
        density, edges = np.histogram(durations, bins=bins, density=True)
    else:
        density, edges = np.array([]), np.array([0.0])

    slope = float('nan')
    if durations.size:
        centers = 0.5 * (edges[:-1] + edges[1:])
        use = (edges[:-1] >= tail_min) & (density > 0)
        if use.sum() >= 2:
            slope = float(np.polyfit(centers[use], np.log10(density[use]), 1)[0])
    return LaminarStats(threshold=threshold, durations=durations, burst_durations=burst_durations,
                        edges=edges, density=density, tail_slope=slope, tail_min=tail_min)


def delay_alignment(states: np.ndarray, lag: int, n_obs: int = 1) -> pd.DataFrame:
    """Columns X1(t), X_{1+I}(t+tau), X_{1+2I}(t+2tau), ... which coincide on exact embeddings."""
    n, dimension = states.shape
    blocks = dimension // n_obs
    count = n - (blocks - 1) * lag
    if count < 1:
        raise InsufficientLength("trajectory too short for delay alignment")
    columns = {}
    for b in range(blocks):
        idx = b * n_obs
        columns[f"X{idx + 1}(t+{b}tau)"] = states[b * lag:b * lag + count, idx]
    return pd.DataFrame(columns)


def projection(states: np.ndarray, stride: int = 1) -> pd.DataFrame:
    """First three coordinates for attractor plots."""
    cols = min(3, states.shape[1])
    return pd.DataFrame(states[::stride, :cols], columns=[f"X{i + 1}" for i in range(cols)])


@dataclass
class EvaluationSettings:
    long_horizon: float = 1000.0
    density_bins: int = 100
    error_bins: int = 50
    n_init: int = 10
    forecast_horizon: float = 5.0
    threshold_ratio: float = 0.5
    seed: int = 0
    laminar_threshold: float = 1.0
    tail_min: float = 100.0
    projection_stride: int = 10
    workers: Optional[int] = None


@dataclass
class EvaluationResult:
    delay: DelayErrorReport
    density: DensityComparison
    forecasts: ForecastSuite
    model_states: np.ndarray
    actual_states: np.ndarray
    lag: int
    n_obs: int
    blowup_time: Optional[float] = None
    laminar_model: Optional[LaminarStats] = None
    laminar_actual: Optional[LaminarStats] = None
    metrics: Dict[str, object] = field(default_factory=dict)

    def write(self, out_dir: Path) -> List[Path]:
        """Metric CSVs, plot-ready data and metrics.json under `out_dir`."""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        steps = np.arange(self.delay.errors.shape[0])
        tables = {
            'delay_error.csv': pd.DataFrame({'step': steps, 'E': self.delay.errors}),
            'delay_histogram.csv': pd.DataFrame({'bin_left': self.delay.hist_edges[:-1],
                                                 'bin_right': self.delay.hist_edges[1:],
                                                 'count': self.delay.hist_counts}),
            'density.csv': self.density.to_frame(),
            'forecast_curves.csv': self.forecasts.curves_frame(),
            'forecast_valid_times.csv': self.forecasts.valid_frame(),
            'alignment_model.csv': delay_alignment(self.model_states, self.lag, self.n_obs),
            'projection_model.csv': projection(self.model_states, self.metrics.get('projection_stride', 1)),
            'projection_actual.csv': projection(self.actual_states, self.metrics.get('projection_stride', 1)),
        }
        if self.laminar_model is not None:
            tables['laminar_model.csv'] = self.laminar_model.histogram_frame()
        if self.laminar_actual is not None:
            tables['laminar_actual.csv'] = self.laminar_actual.histogram_frame()
        paths = []
        for name, df in tables.items():
            save_csv(df, out_dir / name)
            paths.append(out_dir / name)
        paths.append(write_json(out_dir / 'metrics.json', self.metrics))
        return paths


def _destd_pair(states: np.ndarray, model: RfrModel) -> np.ndarray:
    std = model.standardization
    return states[:, :2] * std.std[:2] + std.mean[:2]


def evaluate_model(model: RfrModel, actual: EmbeddedSeries,
                   settings: EvaluationSettings = EvaluationSettings(),
                   progress: bool = False) -> EvaluationResult:
    """Long model run from the first actual state, then all metrics against `actual`."""
    lag = model.lag
    blowup_time = None
    try:
        long_states = predict(model, actual.samples[0], settings.long_horizon, progress=progress).states
    except NonFiniteState as e:
        long_states = e.partial
        blowup_time = float(long_states.shape[0] - 1) * model.dt
        logger.warning(f"Long model trajectory blew up at t~{blowup_time:g}; evaluating the finite part")
    if long_states.shape[0] <= lag:
        raise InsufficientLength("model trajectory too short to evaluate")

    delay = delay_structure_error(long_states, lag, model.n_obs, bins=settings.error_bins)
    density = density_compare(long_states[:, 0], actual.samples[:, 0], bins=settings.density_bins)
    forecasts = forecast_suite(model, actual, settings.n_init, settings.forecast_horizon,
                               seed=settings.seed, threshold_ratio=settings.threshold_ratio,
                               workers=settings.workers, progress=progress)

    laminar_model = laminar_actual = None
    if model.n_obs == 2:
        pair = _destd_pair(long_states, model)
        laminar_model = laminar_lasting_times(pair[:, 0], pair[:, 1], settings.laminar_threshold,
                                              model.dt, tail_min=settings.tail_min)
        pair = _destd_pair(actual.samples, model)
        laminar_actual = laminar_lasting_times(pair[:, 0], pair[:, 1], settings.laminar_threshold,
                                               model.dt, tail_min=settings.tail_min)

    metrics = {
        'median_E': delay.median,
        'E_quantiles': delay.quantiles,
        'density_overlap': density.overlap,
        'valid_time_mean': float(forecasts.valid_times.mean()),
        'valid_time_positive': int(np.sum(forecasts.valid_times > 0)),
        'n_init': int(settings.n_init),
        'forecast_horizon': float(settings.forecast_horizon),
        'long_horizon': float(settings.long_horizon),
        'blowup_time': blowup_time,
        'projection_stride': int(settings.projection_stride),
    }
    if laminar_model is not None:
        metrics['laminar_episodes_model'] = int(laminar_model.durations.size)
        metrics['laminar_tail_slope_model'] = laminar_model.tail_slope
        metrics['laminar_tail_slope_actual'] = laminar_actual.tail_slope
    logger.info(f"Evaluation: median E={delay.median:.4g}, overlap={density.overlap:.3f}")
    return EvaluationResult(delay=delay, density=density, forecasts=forecasts,
                            model_states=long_states, actual_states=actual.samples, lag=lag,
                            n_obs=model.n_obs, blowup_time=blowup_time,
                            laminar_model=laminar_model, laminar_actual=laminar_actual,
                            metrics=metrics)
