"""Central finite-difference derivative estimation with stride l."""

import logging
from dataclasses import dataclass
from typing import Iterable

import numpy as np
import pandas as pd
from tqdm import tqdm

from .errors import InvalidParams, SeriesTooShort

logger = logging.getLogger(__name__)

# order -> (offsets in units of l, weights, denominator)
STENCILS = {
    2: ((-1, 1), (-1.0, 1.0), 2.0),
    6: ((-3, -2, -1, 1, 2, 3), (-1.0, 9.0, -45.0, 45.0, -9.0, 1.0), 60.0),
}


@dataclass(frozen=True)
class DerivativeConfig:
    """Stencil order (2 or 6), stride l in samples, and sampling step dt."""

    order: int = 6
    l: int = 1
    dt: float = 0.01

    def __post_init__(self):
        if self.order not in STENCILS:
            raise InvalidParams(f"derivative order must be one of {sorted(STENCILS)}, got {self.order}")
        if self.l < 1:
            raise InvalidParams(f"stride l must be >= 1, got {self.l}")
        if not self.dt > 0:
            raise InvalidParams(f"dt must be positive, got {self.dt}")

    @property
    def half_width(self) -> int:
        return (self.order // 2) * self.l


@dataclass
class DerivativeEstimate:
    """Derivatives at interior points; `index` gives their positions in the input."""

    values: np.ndarray
    index: np.ndarray


def estimate_derivative(series: np.ndarray, cfg: DerivativeConfig) -> DerivativeEstimate:
    """Differentiate each column of `series` with the configured central stencil.

    Points whose full stencil is unavailable are dropped.

    Raises:
        SeriesTooShort: len(series) <= order * l
    """
    x = np.asarray(series, dtype=float)
    n = x.shape[0]
    h = cfg.half_width
    if n <= 2 * h:
        raise SeriesTooShort(
            f"series of {n} samples too short for order {cfg.order} with stride {cfg.l}"
        )
    offsets, weights, denom = STENCILS[cfg.order]
    out = np.zeros((n - 2 * h,) + x.shape[1:])
    for off, w in zip(offsets, weights):
        shift = off * cfg.l
        out += w * x[h + shift:n - h + shift]
    out /= denom * cfg.l * cfg.dt
    return DerivativeEstimate(values=out, index=np.arange(h, n - h))


@dataclass
class StrideScan:
    order: int
    ls: np.ndarray
    error_std: np.ndarray

    @property
    def best_l(self) -> int:
        return int(self.ls[int(np.argmin(self.error_std))])

    @property
    def best_error(self) -> float:
        return float(np.min(self.error_std))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"l": self.ls, "error_std": self.error_std})


def scan_stride(noisy: np.ndarray, truth: np.ndarray, order: int, l_range: Iterable[int],
                dt: float, progress: bool = False) -> StrideScan:
    """Standard deviation of (estimate - truth) for each stride l.

    Args:
        noisy: Observed scalar series (possibly with noise)
        truth: Exact derivative at every sample of `noisy`
        order: Stencil order
        l_range: Strides to try
        dt: Sampling step
    """
    noisy = np.asarray(noisy, dtype=float).reshape(-1)
    truth = np.asarray(truth, dtype=float).reshape(-1)
    if noisy.shape != truth.shape:
        raise InvalidParams(f"series and truth lengths differ: {noisy.shape} vs {truth.shape}")
    ls = np.array(sorted(set(int(l) for l in l_range)))
    errors = np.empty(ls.shape[0])
    for i, l in enumerate(tqdm(ls, desc=f"Stride scan (order {order})", disable=not progress)):
        est = estimate_derivative(noisy, DerivativeConfig(order=order, l=int(l), dt=dt))
        errors[i] = np.std(est.values - truth[est.index])
    scan = StrideScan(order=order, ls=ls, error_std=errors)
    logger.info(f"Order {order}: minimum error std {scan.best_error:.4g} at l={scan.best_l}")
    return scan
