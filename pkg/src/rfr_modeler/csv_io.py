"""CSV I/O for trajectories, embeddings and metric tables, with YAML sidecars."""

import logging
from pathlib import Path
from typing import Dict, Optional, Tuple

import numpy as np
import pandas as pd
import yaml

from .errors import CorruptFile
from .observe import EmbeddedSeries, Standardization, TimeSeries

logger = logging.getLogger(__name__)


def save_csv(df: pd.DataFrame, output_path: Path):
    """Save DataFrame to CSV."""
    output_path = Path(output_path)
    output_path.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(output_path, index=False)


def load_csv(csv_path: Path, expected_cols: Optional[list] = None) -> pd.DataFrame:
    """Load CSV file, checking that `expected_cols` are present."""
    df = pd.read_csv(csv_path)
    if expected_cols:
        missing = [c for c in expected_cols if c not in df.columns]
        if missing:
            raise CorruptFile(f"{csv_path}: missing columns {missing}")
    return df


def sidecar_path(csv_path: Path) -> Path:
    csv_path = Path(csv_path)
    return csv_path.with_name(f"{csv_path.stem}.meta.yaml")


def _plain(value):
    """Convert numpy scalars/arrays so yaml.safe_dump accepts them."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, complex):
        return str(value)
    return value


def save_sidecar(csv_path: Path, metadata: Dict) -> Path:
    path = sidecar_path(csv_path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        yaml.safe_dump(_plain(metadata), f, sort_keys=True)
    return path


def load_sidecar(csv_path: Path) -> Dict:
    path = sidecar_path(csv_path)
    if not path.exists():
        return {}
    with open(path, 'r', encoding='utf-8') as f:
        return yaml.safe_load(f) or {}


def _dt_from_times(times: np.ndarray, source: Path) -> float:
    if times.shape[0] < 2:
        raise CorruptFile(f"{source}: need at least 2 rows to infer dt")
    return float(times[1] - times[0])


def save_trajectory(series: TimeSeries, output_path: Path, metadata: Optional[Dict] = None) -> Path:
    """Write `t,w1[,w2,...]` plus a sidecar with the generating metadata."""
    columns = {'t': series.times}
    for i in range(series.n_obs):
        columns[f"w{i + 1}"] = series.values[:, i]
    save_csv(pd.DataFrame(columns), output_path)
    meta = dict(metadata or {})
    meta.update({'dt': series.dt, 'observables': list(series.names)})
    save_sidecar(output_path, meta)
    logger.info(f"Wrote {series.n_samples} samples to {output_path}")
    return Path(output_path)


def load_trajectory(csv_path: Path) -> Tuple[TimeSeries, Dict]:
    df = load_csv(csv_path, expected_cols=['t'])
    value_cols = [c for c in df.columns if c.startswith('w')]
    if not value_cols:
        raise CorruptFile(f"{csv_path}: no observable columns (w1, w2, ...)")
    meta = load_sidecar(csv_path)
    times = df['t'].to_numpy(dtype=float)
    dt = float(meta.get('dt', 0.0)) or _dt_from_times(times, csv_path)
    names = tuple(meta.get('observables') or value_cols)
    series = TimeSeries(dt=dt, values=df[value_cols].to_numpy(dtype=float), names=names,
                        t0=float(times[0]) if times.shape[0] else 0.0)
    return series, meta


def save_embedded(embedded: EmbeddedSeries, output_path: Path,
                  standardization: Optional[Standardization] = None,
                  metadata: Optional[Dict] = None) -> Path:
    """Write `t,X1..XD`; the sidecar holds tau, layout and the standardization."""
    columns = {'t': embedded.times}
    for i in range(embedded.dimension):
        columns[f"X{i + 1}"] = embedded.samples[:, i]
    save_csv(pd.DataFrame(columns), output_path)
    meta = dict(metadata or {})
    meta.update({
        'dt': embedded.dt,
        'tau': embedded.tau,
        'lag': embedded.lag,
        'dimension': embedded.dimension,
        'n_obs': embedded.n_obs,
        'layout': embedded.layout,
    })
    if standardization is not None:
        meta['standardization'] = {'mean': standardization.mean, 'std': standardization.std}
    save_sidecar(output_path, meta)
    return Path(output_path)


def load_embedded(csv_path: Path) -> Tuple[EmbeddedSeries, Optional[Standardization], Dict]:
    meta = load_sidecar(csv_path)
    df = load_csv(csv_path, expected_cols=['t', 'X1'])
    x_cols = [c for c in df.columns if c.startswith('X') and c[1:].isdigit()]
    x_cols.sort(key=lambda c: int(c[1:]))
    times = df['t'].to_numpy(dtype=float)
    dt = float(meta.get('dt', 0.0)) or _dt_from_times(times, csv_path)
    dimension = int(meta.get('dimension', len(x_cols)))
    if dimension != len(x_cols):
        raise CorruptFile(f"{csv_path}: sidecar says D={dimension} but file has {len(x_cols)} columns")
    lag = int(meta.get('lag', 0))
    embedded = EmbeddedSeries(
        samples=df[x_cols].to_numpy(dtype=float),
        times=times,
        dimension=dimension,
        tau=float(meta.get('tau', lag * dt)),
        lag=lag,
        dt=dt,
        n_obs=int(meta.get('n_obs', 1)),
        layout=str(meta.get('layout', 'single')),
    )
    standardization = None
    if 'standardization' in meta:
        standardization = Standardization(meta['standardization']['mean'],
                                          meta['standardization']['std'])
    return embedded, standardization, meta


def prediction_frame(times: np.ndarray, states: np.ndarray, x1_destd: np.ndarray) -> pd.DataFrame:
    """Columns `t,X1..XD,X1_destd`."""
    columns = {'t': times}
    for i in range(states.shape[1]):
        columns[f"X{i + 1}"] = states[:, i]
    columns['X1_destd'] = x1_destd
    return pd.DataFrame(columns)
