"""Gaussian radial basis on a lattice of centers near the data."""

import itertools
import logging
import math
from dataclasses import dataclass
from typing import List

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist
from tqdm import tqdm

from .errors import InvalidParams, TooManyCenters

logger = logging.getLogger(__name__)

NORMS = ("l2", "linf")
DEFAULT_MAX_CENTERS = 1_000_000

# relative slack on the retention radius so lattice points at exactly (m-1)*delta survive round-off
RADIUS_TOLERANCE = 1e-12


def sigma2(m: int, p: float, delta_grid: float) -> float:
    """Shared RBF width: ((m-1) delta_grid)^2 / (-ln p).

    With this width a center at distance (m-1)*delta_grid contributes exactly p.
    """
    if m < 2:
        raise InvalidParams(f"m must be >= 2, got {m}")
    if not 0 < p < 1:
        raise InvalidParams(f"p must be in (0, 1), got {p}")
    if not delta_grid > 0:
        raise InvalidParams(f"delta_grid must be positive, got {delta_grid}")
    return ((m - 1) * delta_grid) ** 2 / (-math.log(p))


@dataclass(frozen=True)
class GridSpec:
    """Lattice of spacing delta_grid anchored at `anchor` on every axis.

    Attributes:
        delta_grid: Lattice spacing in standardized units
        m: Neighborhood size; centers need data within (m-1)*delta_grid
        p: RBF value at the neighborhood radius
        anchor: Lattice offset (0 puts a lattice point at the origin)
        norm: "l2" or "linf" for the retention test
        max_centers: Cap on J
    """

    delta_grid: float
    m: int = 3
    p: float = 0.1
    anchor: float = 0.0
    norm: str = "l2"
    max_centers: int = DEFAULT_MAX_CENTERS

    def __post_init__(self):
        if self.norm not in NORMS:
            raise InvalidParams(f"norm must be one of {NORMS}, got {self.norm!r}")
        sigma2(self.m, self.p, self.delta_grid)

    @property
    def radius(self) -> float:
        return (self.m - 1) * self.delta_grid

    @property
    def sigma2(self) -> float:
        return sigma2(self.m, self.p, self.delta_grid)


@dataclass
class CenterSet:
    centers: np.ndarray
    sigma2: float
    grid: GridSpec

    @property
    def count(self) -> int:
        return self.centers.shape[0]

    @property
    def dimension(self) -> int:
        return self.centers.shape[1]


@dataclass(frozen=True)
class BasisLayout:
    """Column order [1, X_1..X_D, phi_1..phi_J]."""

    dimension: int
    n_centers: int

    @property
    def n_columns(self) -> int:
        return 1 + self.dimension + self.n_centers

    @property
    def linear_slice(self) -> slice:
        return slice(1, 1 + self.dimension)

    @property
    def rbf_slice(self) -> slice:
        return slice(1 + self.dimension, self.n_columns)

    def column_names(self) -> List[str]:
        return (["const"] + [f"X{i + 1}" for i in range(self.dimension)]
                + [f"phi{j + 1}" for j in range(self.n_centers)])


def _neighbor_offsets(dimension: int, reach: int, radius_cells: float, norm: str) -> np.ndarray:
    """Integer offsets from an occupied cell to lattice points that can lie within reach."""
    axis = range(-reach, reach + 1)
    offsets = np.array(list(itertools.product(axis, repeat=dimension)), dtype=np.int64)
    gap = np.maximum(np.abs(offsets) - 1, 0).astype(float)
    if norm == "l2":
        keep = np.sum(gap ** 2, axis=1) <= radius_cells ** 2 * (1 + RADIUS_TOLERANCE)
    else:
        keep = np.max(gap, axis=1) <= radius_cells * (1 + RADIUS_TOLERANCE)
    return offsets[keep]


def select_centers(samples: np.ndarray, grid: GridSpec, chunk_size: int = 2_000_000,
                   progress: bool = False) -> CenterSet:
    """Lattice points with at least one sample within (m-1)*delta_grid.

    Candidates come from expanding each occupied grid cell by its
    neighborhood; the full lattice is never enumerated. Centers are
    returned in lexicographic order of their lattice indices.

    Raises:
        TooManyCenters: J exceeds grid.max_centers
    """
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 2:
        raise InvalidParams(f"samples must be 2-D, got shape {samples.shape}")
    dimension = samples.shape[1]
    s2 = grid.sigma2
    if samples.shape[0] == 0:
        return CenterSet(centers=np.empty((0, dimension)), sigma2=s2, grid=grid)

    delta = grid.delta_grid
    radius = grid.radius * (1 + RADIUS_TOLERANCE)
    reach = grid.m
    offsets = _neighbor_offsets(dimension, reach, grid.m - 1, grid.norm)

    cells = np.unique(np.floor((samples - grid.anchor) / delta).astype(np.int64), axis=0)
    tree = cKDTree(samples)
    p_norm = 2 if grid.norm == "l2" else np.inf
    logger.info(f"Selecting centers: {cells.shape[0]} occupied cells, {offsets.shape[0]} offsets, "
                f"delta_grid={delta}, radius={grid.radius}")

    per_chunk = max(1, chunk_size // offsets.shape[0])
    kept: List[np.ndarray] = []
    kept_total = 0
    starts = range(0, cells.shape[0], per_chunk)
    for start in tqdm(starts, desc="Selecting centers", disable=not progress):
        block = cells[start:start + per_chunk]
        candidates = np.unique((block[:, None, :] + offsets[None, :, :]).reshape(-1, dimension), axis=0)
        distance, _ = tree.query(grid.anchor + candidates * delta, k=1, p=p_norm,
                                 distance_upper_bound=radius)
        hits = candidates[distance <= radius]
        kept.append(hits)
        kept_total += hits.shape[0]
        if kept_total > grid.max_centers:
            merged = np.unique(np.concatenate(kept), axis=0)
            kept = [merged]
            kept_total = merged.shape[0]
            if kept_total > grid.max_centers:
                raise TooManyCenters(kept_total, grid.max_centers)

    index = np.unique(np.concatenate(kept), axis=0)
    if index.shape[0] > grid.max_centers:
        raise TooManyCenters(index.shape[0], grid.max_centers)
    centers = grid.anchor + index * delta
    logger.info(f"Selected J={centers.shape[0]} centers (sigma2={s2:.6g})")
    return CenterSet(centers=centers, sigma2=s2, grid=grid)


def rbf_values(x: np.ndarray, centers: CenterSet) -> np.ndarray:
    """phi_j(x) = exp(-||x - c_j||^2 / sigma2) for each row of x, shape (n, J)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if centers.count == 0:
        return np.empty((x.shape[0], 0))
    return np.exp(-cdist(x, centers.centers, 'sqeuclidean') / centers.sigma2)


def eval_rows(x: np.ndarray, centers: CenterSet) -> np.ndarray:
    """Design-matrix rows [1, x, phi(x)] for each row of x."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    n = x.shape[0]
    return np.hstack([np.ones((n, 1)), x, rbf_values(x, centers)])


def eval_row(x: np.ndarray, centers: CenterSet) -> np.ndarray:
    return eval_rows(np.asarray(x, dtype=float).reshape(1, -1), centers)[0]
