"""Observables: standardization, delay selection and delay-coordinate embedding."""

import logging
from dataclasses import dataclass, field, replace
from typing import List, Optional, Tuple

import numpy as np

from .errors import DegenerateSeries, InsufficientLength, InvalidParams, InvalidTau
from .utils import named_rng

logger = logging.getLogger(__name__)

LAYOUTS = ("single", "interleaved")


@dataclass
class TimeSeries:
    """Uniformly sampled observations.

    Attributes:
        dt: Sampling step (time units)
        values: Array of shape (N_T, I); a 1-D input is treated as I=1
        names: Observable names, one per column
        t0: Time of the first sample
    """

    dt: float
    values: np.ndarray
    names: Tuple[str, ...] = ()
    t0: float = 0.0

    def __post_init__(self):
        if not self.dt > 0:
            raise InvalidParams(f"dt must be positive, got {self.dt}")
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values.reshape(-1, 1)
        if values.ndim != 2:
            raise InvalidParams(f"values must be 1-D or 2-D, got shape {values.shape}")
        self.values = values
        if not self.names:
            self.names = tuple(f"w{i + 1}" for i in range(values.shape[1]))
        self.names = tuple(self.names)
        if len(self.names) != values.shape[1]:
            raise InvalidParams(f"{len(self.names)} names for {values.shape[1]} observables")

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    @property
    def n_obs(self) -> int:
        return self.values.shape[1]

    @property
    def duration(self) -> float:
        return self.n_samples * self.dt

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n_samples)

    def column(self, index: int = 0) -> np.ndarray:
        return self.values[:, index]

    def with_values(self, values: np.ndarray) -> "TimeSeries":
        return TimeSeries(dt=self.dt, values=values, names=self.names, t0=self.t0)


@dataclass
class Standardization:
    """Per-observable affine transform (x - mean) / std."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        self.mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        self.std = np.atleast_1d(np.asarray(self.std, dtype=float))
        if self.mean.shape != self.std.shape:
            raise InvalidParams("mean and std must have the same shape")
        if np.any(self.std <= 0):
            raise DegenerateSeries(f"standard deviations must be positive, got {self.std}")

    @property
    def n_obs(self) -> int:
        return self.mean.shape[0]

    def apply(self, values: np.ndarray) -> np.ndarray:
        return (np.asarray(values, dtype=float) - self.mean) / self.std

    def invert(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values, dtype=float) * self.std + self.mean

    def expand(self, dimension: int) -> "Standardization":
        """Tile onto D delay coordinates; coordinate i belongs to observable i mod I."""
        if dimension % self.n_obs:
            raise InvalidParams(f"dimension {dimension} is not a multiple of {self.n_obs} observables")
        reps = dimension // self.n_obs
        return Standardization(np.tile(self.mean, reps), np.tile(self.std, reps))


def standardize(series: TimeSeries) -> Tuple[TimeSeries, Standardization]:
    """Rescale every observable to zero mean and unit variance.

    Raises:
        DegenerateSeries: A component is constant
    """
    values = series.values
    if series.n_samples < 2:
        raise DegenerateSeries("cannot standardize fewer than 2 samples")
    flat = np.ptp(values, axis=0) == 0
    if np.any(flat):
        raise DegenerateSeries(
            f"constant observable(s): {[series.names[i] for i in np.flatnonzero(flat)]}"
        )
    transform = Standardization(values.mean(axis=0), values.std(axis=0))
    logger.debug(f"Standardization mean={transform.mean} std={transform.std}")
    return series.with_values(transform.apply(values)), transform


@dataclass
class Autocorrelation:
    """Sampled autocorrelation function; callable on arbitrary lags by linear interpolation."""

    lags: np.ndarray
    values: np.ndarray

    def __call__(self, lag):
        return np.interp(lag, self.lags, self.values)

    @property
    def dt(self) -> float:
        return float(self.lags[1] - self.lags[0]) if self.lags.shape[0] > 1 else 0.0


def autocorrelation(series: TimeSeries, max_lag: float, component: int = 0) -> Autocorrelation:
    """Biased (divide-by-N) sample autocorrelation up to `max_lag`.

    Raises:
        InvalidParams: max_lag not below half the series duration
    """
    if not 0 <= max_lag < series.duration / 2:
        raise InvalidParams(
            f"max_lag {max_lag} must be in [0, T/2) with T={series.duration:g}"
        )
    x = series.column(component)
    x = x - x.mean()
    n = x.shape[0]
    n_lags = int(np.floor(max_lag / series.dt + 1e-9)) + 1
    size = 1 << int(np.ceil(np.log2(2 * n)))
    spectrum = np.fft.rfft(x, size)
    acov = np.fft.irfft(spectrum * np.conj(spectrum), size)[:n_lags] / n
    if acov[0] <= 0:
        raise DegenerateSeries("autocorrelation of a constant series is undefined")
    values = np.clip(acov / acov[0], -1.0, 1.0)
    values[0] = 1.0
    return Autocorrelation(lags=series.dt * np.arange(n_lags), values=values)


@dataclass
class TauSelection:
    tau: float
    lag: int
    correlation: float
    crossed: bool
    warning: Optional[str] = None


def select_tau(acf: Autocorrelation, target: float = 0.5,
               override: Optional[float] = None, closer: bool = False) -> TauSelection:
    """Pick the smallest lag where the autocorrelation first drops to `target`.

    With `closer`, the sample just before the crossing wins when its
    correlation is nearer the target (never lag 0); `crossed` is then False
    if that sample is still above the target. An override is snapped to the
    sampling grid and reported with its correlation.
    """
    dt = acf.dt
    if override is not None:
        lag = tau_to_lag(override, dt)
        if lag >= acf.lags.shape[0]:
            raise InvalidTau(f"override tau {override} beyond the autocorrelation range")
        corr = float(acf.values[lag])
        return TauSelection(tau=lag * dt, lag=lag, correlation=corr, crossed=corr <= target)

    below = np.flatnonzero(acf.values <= target)
    if below.size == 0:
        lag = acf.lags.shape[0] - 1
        warning = f"autocorrelation never reaches {target} within max_lag={acf.lags[-1]:g}"
        logger.warning(warning)
        return TauSelection(tau=lag * dt, lag=lag, correlation=float(acf.values[lag]),
                            crossed=False, warning=warning)

    lag = int(below[0])
    if closer and lag > 1 and abs(acf.values[lag - 1] - target) < abs(acf.values[lag] - target):
        lag -= 1
    warning = None
    if lag == 1:
        warning = "autocorrelation drops below target at the first lag; series may be undersampled"
        logger.warning(warning)
    corr = float(acf.values[lag])
    return TauSelection(tau=lag * dt, lag=lag, correlation=corr, crossed=corr <= target, warning=warning)


def tau_to_lag(tau: float, dt: float) -> int:
    """Number of samples in `tau`; raises InvalidTau unless tau is a multiple of dt."""
    if tau < 0:
        raise InvalidTau(f"tau must be non-negative, got {tau}")
    lag = int(round(tau / dt))
    if abs(lag * dt - tau) > 1e-9 * max(abs(tau), dt):
        raise InvalidTau(f"tau={tau} is not an integer multiple of dt={dt}")
    return lag


def delay_pairs(dimension: int, n_obs: int = 1) -> List[Tuple[int, int]]:
    """Coordinate pairs (i, j) with X_i(t) = X_j(t + tau) on exact embeddings."""
    return [(i, i + n_obs) for i in range(dimension - n_obs)]


@dataclass
class EmbeddedSeries:
    """Delay-coordinate samples X(t) and their times.

    Attributes:
        samples: Array (M, D)
        times: Sample times, length M
        dimension: D
        tau: Delay in time units
        lag: Delay in samples
        dt: Sampling step
        n_obs: Observables interleaved in each delay block (1 or I)
        layout: "single" or "interleaved"
    """

    samples: np.ndarray
    times: np.ndarray
    dimension: int
    tau: float
    lag: int
    dt: float
    n_obs: int = 1
    layout: str = "single"
    names: Tuple[str, ...] = field(default=())

    def __post_init__(self):
        if not self.names:
            self.names = tuple(f"X{i + 1}" for i in range(self.dimension))

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]

    @property
    def pairs(self) -> List[Tuple[int, int]]:
        return delay_pairs(self.dimension, self.n_obs)


def holdout_size(n_samples: int, fraction: float) -> int:
    """Trailing rows held out of an embedded series of `n_samples` rows."""
    return int(n_samples * fraction)


def split_holdout(embedded: EmbeddedSeries, fraction: float) -> Tuple[EmbeddedSeries, EmbeddedSeries]:
    """Split into a leading training part and a trailing held-out part.

    With fraction 0 both parts are the full series.
    """
    if not 0 <= fraction < 1:
        raise InvalidParams(f"holdout fraction must be in [0, 1), got {fraction}")
    held = holdout_size(embedded.n_samples, fraction)
    if held == 0:
        return embedded, embedded
    cut = embedded.n_samples - held
    train = replace(embedded, samples=embedded.samples[:cut], times=embedded.times[:cut])
    held_out = replace(embedded, samples=embedded.samples[cut:], times=embedded.times[cut:])
    return train, held_out


def embed(series: TimeSeries, dimension: int, tau: float, layout: str = "single",
          component: int = 0) -> EmbeddedSeries:
    """Build delay-coordinate vectors.

    single: (w(t), w(t-tau), ..., w(t-(D-1)tau)) from column `component`.
    interleaved: (w1(t), ..., wI(t), w1(t-tau), ..., wI(t-tau), ...) over all
    I columns; D must be a multiple of I.

    Raises:
        InvalidParams: Unknown layout or D incompatible with it
        InvalidTau: tau not a positive multiple of dt (when D > 1)
        InsufficientLength: Fewer than one full delay vector available
    """
    if layout not in LAYOUTS:
        raise InvalidParams(f"unknown layout {layout!r}; expected one of {LAYOUTS}")
    if dimension < 1:
        raise InvalidParams(f"dimension must be >= 1, got {dimension}")

    if layout == "single":
        columns = series.values[:, [component]]
    else:
        columns = series.values
    n_obs = columns.shape[1]
    if dimension % n_obs:
        raise InvalidParams(f"dimension {dimension} is not a multiple of {n_obs} observables")
    blocks = dimension // n_obs

    lag = tau_to_lag(tau, series.dt)
    if blocks > 1 and lag == 0:
        raise InvalidTau("tau must be positive for D > 1")
    span = (blocks - 1) * lag
    count = series.n_samples - span
    if count < 1:
        raise InsufficientLength(
            f"series of {series.n_samples} samples too short for D={dimension}, tau={tau}"
        )

    samples = np.empty((count, dimension))
    for b in range(blocks):
        start = span - b * lag
        samples[:, b * n_obs:(b + 1) * n_obs] = columns[start:start + count]

    return EmbeddedSeries(samples=samples, times=series.times[span:], dimension=dimension,
                          tau=lag * series.dt, lag=lag, dt=series.dt, n_obs=n_obs,
                          layout=layout)


def add_observation_noise(series: TimeSeries, std_ratio: float, seed: int = 0) -> TimeSeries:
    """Add i.i.d. Gaussian noise with sigma = std_ratio * std(component).

    Uses the "noise" sub-stream of `seed`; constant components stay unchanged.
    """
    if std_ratio < 0:
        raise InvalidParams(f"std_ratio must be >= 0, got {std_ratio}")
    if std_ratio == 0:
        return series.with_values(series.values.copy())
    rng = named_rng(seed, "noise")
    sigma = std_ratio * series.values.std(axis=0)
    noise = rng.standard_normal(series.values.shape) * sigma
    logger.info(f"Adding observation noise sigma={sigma}")
    return series.with_values(series.values + noise)
