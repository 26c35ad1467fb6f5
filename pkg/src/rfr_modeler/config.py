"""Experiment configuration with dataclass, env, CLI, and YAML support."""

import logging
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Dict, Optional

import yaml

from .basis import sigma2
from .deriv import DerivativeConfig
from .dynamics import build_system
from .errors import ConfigError, InvalidParams, NotEnoughSamples, UnknownSystem
from .observe import holdout_size, tau_to_lag

logger = logging.getLogger(__name__)

SYSTEMS = ("ks", "mg", "sm", "cr", "n-ks")
PRESETS = ("full", "desk")

# Parameter sets per system; m=3, p=0.1, n=50000, N_T=1e6 for all.
SYSTEM_DEFAULTS = {
    "ks":   dict(dimension=5, tau=0.12, delta_grid=0.5,  l=1, lam=1e-7,  n_obs=1, dt=0.01, reference_correlation=0.5012),
    "mg":   dict(dimension=7, tau=0.5,  delta_grid=0.25, l=1, lam=1e-7,  n_obs=1, dt=0.01, reference_correlation=0.8011),
    "sm":   dict(dimension=6, tau=18.0, delta_grid=0.25, l=1, lam=1e-12, n_obs=1, dt=1.0,  reference_correlation=0.5357),
    "cr":   dict(dimension=6, tau=0.4,  delta_grid=0.25, l=1, lam=1e-7,  n_obs=2, dt=0.1,  reference_correlation=0.9058),
    "n-ks": dict(dimension=5, tau=0.12, delta_grid=0.5,  l=9, lam=1e-4,  n_obs=1, dt=0.01, reference_correlation=0.4265),
}

# Evaluation horizons per system, in time units
HORIZONS = {
    "ks": dict(long_horizon=1000.0, forecast_horizon=5.0),
    "mg": dict(long_horizon=1000.0, forecast_horizon=20.0),
    "sm": dict(long_horizon=10000.0, forecast_horizon=200.0),
    "cr": dict(long_horizon=1000.0, forecast_horizon=20.0),
    "n-ks": dict(long_horizon=1000.0, forecast_horizon=5.0),
}

DESK_GRID = {0.25: 0.5, 0.5: 1.0}


@dataclass
class ExperimentConfig:
    """Configuration for one modeling experiment.

    Attributes:
        system: ks, mg, sm, cr or n-ks (KS with observation noise)
        system_params: Physical parameter overrides for the simulator
        n_total: Number of observed samples N_T
        dt: Observation step
        dt_int: Integration step (None = simulator default)
        transient: Warm-up discarded before observing
        noise_std_ratio: Observation noise relative to the signal std
        dimension: Embedding dimension D
        tau: Delay time
        n_obs: Observables I (2 selects the interleaved layout)
        tau_target: Advisory autocorrelation target
        reference_correlation: Published correlation at tau, reported alongside ours
        deriv_order: Finite-difference order (2 or 6)
        l: Finite-difference stride
        delta_grid: Lattice spacing
        m: Neighborhood size
        p: RBF value at the neighborhood radius
        lam: Ridge parameter lambda
        n_samples: Regression sample count n
        norm: Center retention norm (l2 or linf)
        anchor: Lattice anchor
        max_centers: Cap on J
        long_horizon: Length of the long model run used for evaluation
        forecast_horizon: Horizon of each short forecast
        n_init: Number of forecast initial conditions
        density_bins: Bins for the X1 density comparison
        laminar_threshold: C in |x1 - x2| < C
        tail_min: Start of the laminar tail-slope window
        holdout_fraction: Trailing share of the embedded series kept out of the fit and used as actual data
        saddle_enabled: Run stagger-and-step in the pipeline
        saddle_threshold: Delay-error threshold (None = calibrate)
        segment_length: Stagger-and-step segment length
        keep_length: Kept prefix of each segment
        trials_max: Trials per segment
        saddle_length: Total patched trajectory length
        refine: Local noise search
        seed: Root seed for all sub-streams
        output_dir: Run directory
        preset: full or desk
        workers: Worker threads (None = CPU count, capped by RFR_THREADS)
        overrides: Flat keys changed from the defaults, for provenance
    """

    system: str = "ks"
    system_params: Dict[str, object] = field(default_factory=dict)
    n_total: int = 1_000_000
    dt: float = 0.01
    dt_int: Optional[float] = None
    transient: float = 1000.0
    noise_std_ratio: float = 0.0

    dimension: int = 5
    tau: float = 0.12
    n_obs: int = 1
    tau_target: float = 0.5
    reference_correlation: Optional[float] = None

    deriv_order: int = 6
    l: int = 1

    delta_grid: float = 0.5
    m: int = 3
    p: float = 0.1
    lam: float = 1e-7
    n_samples: int = 50_000
    norm: str = "l2"
    anchor: float = 0.0
    max_centers: int = 1_000_000

    long_horizon: float = 1000.0
    forecast_horizon: float = 5.0
    n_init: int = 10
    density_bins: int = 100
    laminar_threshold: float = 1.0
    tail_min: float = 100.0
    holdout_fraction: float = 0.2

    saddle_enabled: bool = False
    saddle_threshold: Optional[float] = None
    segment_length: float = 50.0
    keep_length: float = 25.0
    trials_max: int = 100
    saddle_length: float = 1000.0
    refine: bool = False

    seed: int = 0
    output_dir: Path = field(default_factory=lambda: Path("runs"))
    preset: str = "full"
    workers: Optional[int] = None
    overrides: Dict[str, object] = field(default_factory=dict)

    def __post_init__(self):
        self.output_dir = Path(self.output_dir)

    @property
    def simulator(self) -> str:
        """Simulator tag; n-ks runs the KS simulator with noisy observations."""
        return "ks" if self.system == "n-ks" else self.system

    @property
    def layout(self) -> str:
        return "interleaved" if self.n_obs > 1 else "single"

    @property
    def duration(self) -> float:
        return self.n_total * self.dt

    def to_flat(self) -> Dict[str, object]:
        """Namespaced flat mapping (system.*, observe.*, ...), YAML-safe values."""
        flat = {}
        for f in fields(self):
            if f.name in ("overrides", "system_params"):
                continue
            value = getattr(self, f.name)
            flat[FLAT_KEYS[f.name]] = str(value) if isinstance(value, Path) else value
        for name, value in sorted(self.system_params.items()):
            flat[f"system.param.{name}"] = str(value) if isinstance(value, complex) else value
        return flat

    @classmethod
    def from_flat(cls, flat: Dict[str, object]) -> "ExperimentConfig":
        kwargs = {}
        params = {}
        for key, value in flat.items():
            if key.startswith("system.param."):
                params[key[len("system.param."):]] = value
                continue
            if key not in FIELD_NAMES:
                raise ConfigError(f"unknown config key {key!r}")
            name = FIELD_NAMES[key]
            # YAML reads 1e-7 (no dot) as a string
            if isinstance(value, str) and name in _FLOAT_FIELDS:
                try:
                    value = float(value)
                except ValueError:
                    raise ConfigError(f"{key}: expected a number, got {value!r}") from None
            kwargs[name] = value
        return cls(system_params=params, **kwargs)

    @classmethod
    def from_yaml(cls, path: Path) -> "ExperimentConfig":
        """Load configuration from YAML file (flat namespaced keys)."""
        with open(path, 'r', encoding='utf-8') as f:
            data = yaml.safe_load(f) or {}
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: expected a mapping of config keys")
        overrides = data.pop("run.overrides", {}) or {}
        cfg = cls.from_flat(data)
        cfg.overrides = dict(overrides)
        return cfg

    @classmethod
    def from_env(cls) -> "ExperimentConfig":
        """Per-system defaults for RFR_SYSTEM with RFR_* overrides."""
        cfg = system_defaults(os.getenv("RFR_SYSTEM", "ks"))
        changes = {}
        if os.getenv("RFR_SEED"):
            changes["seed"] = int(os.getenv("RFR_SEED"))
        if os.getenv("RFR_OUTPUT_DIR"):
            changes["output_dir"] = Path(os.getenv("RFR_OUTPUT_DIR"))
        if os.getenv("RFR_PRESET"):
            cfg = apply_preset(cfg, os.getenv("RFR_PRESET"))
        return with_overrides(cfg, **changes)

    def to_yaml(self, path: Path):
        """Save configuration to YAML file."""
        data = self.to_flat()
        data["run.overrides"] = {k: (str(v) if isinstance(v, Path) else v)
                                 for k, v in sorted(self.overrides.items())}
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w', encoding='utf-8') as f:
            yaml.safe_dump(data, f, default_flow_style=False, sort_keys=True)

    def validate(self):
        """Check consistency before any compute.

        Raises:
            UnknownSystem, InvalidTau, InvalidParams, NotEnoughSamples, ConfigError
        """
        if self.system not in SYSTEMS:
            raise UnknownSystem(f"unknown system {self.system!r}; expected one of {SYSTEMS}")
        if self.preset not in PRESETS:
            raise ConfigError(f"unknown preset {self.preset!r}; expected one of {PRESETS}")
        system = build_system(self.simulator, self.system_params)
        dt_int = self.dt_int if self.dt_int is not None else system.default_dt_int
        ratio = round(self.dt / dt_int)
        if ratio < 1 or abs(ratio * dt_int - self.dt) > 1e-9 * self.dt:
            raise InvalidParams(f"dt={self.dt} is not a multiple of dt_int={dt_int}")
        if self.n_obs != len(system.observable_names) and self.n_obs != 1:
            raise InvalidParams(f"{self.system} has {len(system.observable_names)} observables, n_obs={self.n_obs}")
        if self.dimension % self.n_obs:
            raise InvalidParams(f"D={self.dimension} is not a multiple of I={self.n_obs}")
        lag = tau_to_lag(self.tau, self.dt)
        if lag < 1:
            raise InvalidParams("tau must be at least one sample")
        stencil = DerivativeConfig(order=self.deriv_order, l=self.l, dt=self.dt)
        sigma2(self.m, self.p, self.delta_grid)
        if self.lam < 0:
            raise InvalidParams(f"lambda must be >= 0, got {self.lam}")
        if self.noise_std_ratio < 0:
            raise InvalidParams("noise_std_ratio must be >= 0")
        if not 0 <= self.holdout_fraction < 1:
            raise InvalidParams(f"holdout_fraction must be in [0, 1), got {self.holdout_fraction}")
        embedded = self.n_total - (self.dimension // self.n_obs - 1) * lag
        usable = embedded - holdout_size(embedded, self.holdout_fraction) - 2 * stencil.half_width
        if self.n_samples > usable:
            raise NotEnoughSamples(f"n={self.n_samples} exceeds the {usable} usable samples")
        if not 0 < self.keep_length <= self.segment_length / 2:
            raise InvalidParams("keep_length must be in (0, segment_length/2]")
        if self.saddle_threshold is not None and not self.saddle_threshold > 0:
            raise InvalidParams("saddle threshold must be positive")
        logger.debug(f"Config valid: {self.system} D={self.dimension} tau={self.tau} lag={lag}")


FLAT_KEYS = {
    "system": "system.name",
    "n_total": "system.n_total",
    "dt": "system.dt",
    "dt_int": "system.dt_int",
    "transient": "system.transient",
    "noise_std_ratio": "system.noise_std_ratio",
    "dimension": "observe.dimension",
    "tau": "observe.tau",
    "n_obs": "observe.n_obs",
    "tau_target": "observe.tau_target",
    "reference_correlation": "observe.reference_correlation",
    "deriv_order": "deriv.order",
    "l": "deriv.stride",
    "delta_grid": "fit.delta_grid",
    "m": "fit.m",
    "p": "fit.p",
    "lam": "fit.lambda",
    "n_samples": "fit.n_samples",
    "norm": "fit.norm",
    "anchor": "fit.anchor",
    "max_centers": "fit.max_centers",
    "long_horizon": "evaluate.long_horizon",
    "forecast_horizon": "evaluate.forecast_horizon",
    "n_init": "evaluate.n_init",
    "density_bins": "evaluate.density_bins",
    "laminar_threshold": "evaluate.laminar_threshold",
    "tail_min": "evaluate.tail_min",
    "holdout_fraction": "evaluate.holdout_fraction",
    "saddle_enabled": "saddle.enabled",
    "saddle_threshold": "saddle.threshold",
    "segment_length": "saddle.segment_length",
    "keep_length": "saddle.keep_length",
    "trials_max": "saddle.trials_max",
    "saddle_length": "saddle.total_length",
    "refine": "saddle.refine",
    "seed": "run.seed",
    "output_dir": "run.output_dir",
    "preset": "run.preset",
    "workers": "run.workers",
}
FIELD_NAMES = {v: k for k, v in FLAT_KEYS.items()}
_FLOAT_FIELDS = {f.name for f in fields(ExperimentConfig) if f.type in (float, Optional[float])}


def system_defaults(system: str) -> ExperimentConfig:
    """Full-scale parameter set for a system tag."""
    if system not in SYSTEM_DEFAULTS:
        raise UnknownSystem(f"unknown system {system!r}; expected one of {SYSTEMS}")
    values = dict(SYSTEM_DEFAULTS[system])
    values.update(HORIZONS[system])
    return ExperimentConfig(
        system=system,
        noise_std_ratio=0.10 if system == "n-ks" else 0.0,
        n_total=1_000_000,
        n_samples=50_000,
        m=3,
        p=0.1,
        output_dir=Path("runs") / system,
        **values,
    )


def apply_preset(cfg: ExperimentConfig, preset: str) -> ExperimentConfig:
    """desk: N_T=1e5, n=1e4, delta_grid one notch up, transient 100."""
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}; expected one of {PRESETS}")
    if preset == "full":
        return replace(cfg, preset="full")
    return replace(
        cfg,
        preset="desk",
        n_total=100_000,
        n_samples=10_000,
        delta_grid=DESK_GRID.get(cfg.delta_grid, cfg.delta_grid),
        transient=100.0,
    )


def with_overrides(cfg: ExperimentConfig, **changes) -> ExperimentConfig:
    """Apply field changes, recording each under its flat key."""
    unknown = [k for k in changes if k not in FLAT_KEYS]
    if unknown:
        raise ConfigError(f"unknown config fields {unknown}")
    if not changes:
        return cfg
    updated = replace(cfg, **changes)
    updated.overrides = dict(cfg.overrides)
    for name, value in changes.items():
        updated.overrides[FLAT_KEYS[name]] = str(value) if isinstance(value, Path) else value
    return updated
