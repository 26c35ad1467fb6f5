"""Learned vector field F(X), model trajectories, and the binary model file."""

import logging
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional

import numpy as np

from .basis import BasisLayout, CenterSet, GridSpec, eval_rows, rbf_values
from .dynamics import OdeSystem, integrate
from .errors import CorruptFile, FormatVersionMismatch, InvalidParams, NonFiniteState
from .observe import Standardization
from .regress import Coefficients

logger = logging.getLogger(__name__)

MAGIC = b"RFR1"
FORMAT_VERSION = "1.0"
MAX_HALVINGS = 3


@dataclass
class RfrModel:
    """dX/dt = F(X) in standardized delay coordinates.

    Attributes:
        centers: RBF centers and width
        coefficients: beta, one row of length 1+D+J per component
        standardization: Per-observable transform of the training data
        tau: Delay in time units
        dimension: D
        dt: Observation step; default integration step
        n_obs: Observables per delay block (1, or 2 for the interleaved layout)
        layout: Embedding layout name
        provenance: Config snapshot as string key-value pairs
    """

    centers: CenterSet
    coefficients: Coefficients
    standardization: Standardization
    tau: float
    dimension: int
    dt: float
    n_obs: int = 1
    layout: str = "single"
    provenance: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        expected = (self.dimension, self.basis_layout.n_columns)
        if self.coefficients.beta.shape != expected:
            raise InvalidParams(
                f"coefficient shape {self.coefficients.beta.shape} does not match layout {expected}"
            )

    @property
    def basis_layout(self) -> BasisLayout:
        return BasisLayout(dimension=self.dimension, n_centers=self.centers.count)

    @property
    def lag(self) -> int:
        return int(round(self.tau / self.dt))

    def eval_F(self, x: np.ndarray) -> np.ndarray:
        """F_k(x) = beta_0 + sum_d beta_d x_d + sum_j beta_{D+j} phi_j(x) for every k."""
        beta = self.coefficients.beta
        x = np.asarray(x, dtype=float)
        layout = self.basis_layout
        out = beta[:, 0] + beta[:, layout.linear_slice] @ x
        if self.centers.count:
            out = out + beta[:, layout.rbf_slice] @ rbf_values(x, self.centers)[0]
        return out

    def eval_F_many(self, x: np.ndarray) -> np.ndarray:
        return eval_rows(x, self.centers) @ self.coefficients.beta.T

    def as_system(self) -> OdeSystem:
        return OdeSystem(name="model", dimension=self.dimension, rhs=self.eval_F,
                         params={"J": self.centers.count})

    def destandardize_x1(self, states: np.ndarray) -> np.ndarray:
        return states[:, 0] * self.standardization.std[0] + self.standardization.mean[0]


@dataclass
class Prediction:
    times: np.ndarray
    states: np.ndarray
    x1_destd: np.ndarray
    dt_int: float


def _output_ratio(dt: float, dt_int: float) -> int:
    ratio = int(round(dt / dt_int))
    if ratio < 1 or abs(ratio * dt_int - dt) > 1e-9 * dt:
        raise InvalidParams(f"model dt {dt} must be an integer multiple of dt_int {dt_int}")
    return ratio


def integrate_model(model: RfrModel, x0: np.ndarray, steps: int, dt_int: float,
                    record_every: int = 1, progress: bool = False) -> np.ndarray:
    """Plain RK4 integration of the model; no step-size retries."""
    return integrate(model.as_system(), x0, dt_int, steps, record_every=record_every,
                     progress=progress)


def predict(model: RfrModel, x0: np.ndarray, horizon: float, dt_int: Optional[float] = None,
            max_halvings: int = MAX_HALVINGS, progress: bool = False) -> Prediction:
    """Integrate the model from x0 for `horizon` time units.

    Output is sampled every model.dt. On blow-up the internal step is
    halved (up to `max_halvings` times) before NonFiniteState is re-raised
    with the partial trajectory at output spacing.
    """
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.shape[0] != model.dimension:
        raise InvalidParams(f"initial state has length {x0.shape[0]}, model needs {model.dimension}")
    if not np.all(np.isfinite(x0)):
        raise InvalidParams("initial state is not finite")
    n_out = int(round(horizon / model.dt))
    if n_out < 1:
        raise InvalidParams(f"horizon {horizon} shorter than one model step {model.dt}")

    step = float(dt_int if dt_int is not None else model.dt)
    for attempt in range(max_halvings + 1):
        ratio = _output_ratio(model.dt, step)
        try:
            states = integrate_model(model, x0, n_out * ratio, step, record_every=ratio,
                                     progress=progress)
            break
        except NonFiniteState as e:
            if attempt == max_halvings:
                logger.warning(f"Model trajectory blew up at t={e.step * step:g} even with dt_int={step:g}")
                raise
            logger.info(f"Non-finite model state with dt_int={step:g}; halving")
            step /= 2.0

    times = model.dt * np.arange(states.shape[0])
    return Prediction(times=times, states=states, x1_destd=model.destandardize_x1(states), dt_int=step)


# Binary container: MAGIC, version, tagged sections, CRC-32 trailer.

def _pack_str(text: str) -> bytes:
    raw = text.encode('utf-8')
    return struct.pack('<H', len(raw)) + raw


def _section(tag: bytes, payload: bytes) -> bytes:
    return tag + struct.pack('<Q', len(payload)) + payload


def _f8(array: np.ndarray) -> bytes:
    return np.ascontiguousarray(array, dtype='<f8').tobytes()


def _provenance_text(provenance: Dict[str, str]) -> bytes:
    lines = []
    for key, value in sorted(provenance.items()):
        key, value = str(key), str(value)
        if not key or "=" in key or "\n" in key or "\n" in value:
            raise InvalidParams(f"provenance entry {key!r} cannot be stored as a key=value line")
        lines.append(f"{key}={value}\n")
    return "".join(lines).encode('utf-8')


def encode_model(model: RfrModel) -> bytes:
    grid = model.centers.grid
    d, j = model.dimension, model.centers.count
    std = model.standardization
    body = [
        MAGIC,
        _pack_str(FORMAT_VERSION),
        _section(b"STDZ", struct.pack('<I', std.n_obs) + _f8(std.mean) + _f8(std.std)),
        _section(b"LAYT", struct.pack('<IIIdd', d, model.n_obs, j, model.tau, model.dt)
                 + _pack_str(model.layout)),
        _section(b"GRID", struct.pack('<dIddQ', grid.delta_grid, grid.m, grid.p, grid.anchor,
                                      grid.max_centers) + _pack_str(grid.norm)),
        _section(b"SIG2", struct.pack('<d', model.centers.sigma2)),
        _section(b"CNTR", _f8(model.centers.centers.reshape(j, d))),
        _section(b"COEF", _f8(model.coefficients.beta) + _f8(model.coefficients.residual_mse)),
        _section(b"PROV", _provenance_text(model.provenance)),
    ]
    blob = b"".join(body)
    return blob + struct.pack('<I', zlib.crc32(blob) & 0xFFFFFFFF)


def save(model: RfrModel, path: Path) -> Path:
    """Write the model file; identical models give identical bytes."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_model(model))
    logger.info(f"Saved model (D={model.dimension}, J={model.centers.count}) to {path}")
    return path


class _Reader:
    def __init__(self, data: bytes, offset: int = 0):
        self.data = data
        self.offset = offset

    def take(self, size: int) -> bytes:
        if self.offset + size > len(self.data):
            raise CorruptFile("model file truncated")
        chunk = self.data[self.offset:self.offset + size]
        self.offset += size
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def string(self) -> str:
        (length,) = self.unpack('<H')
        return self.take(length).decode('utf-8')

    def floats(self, count: int) -> np.ndarray:
        return np.frombuffer(self.take(8 * count), dtype='<f8').astype(float)


def decode_model(data: bytes) -> RfrModel:
    if len(data) < len(MAGIC) + 6:
        raise CorruptFile("model file truncated")
    if data[:len(MAGIC)] != MAGIC:
        raise CorruptFile("not a model file (bad magic)")
    blob, trailer = data[:-4], data[-4:]
    (crc,) = struct.unpack('<I', trailer)
    if zlib.crc32(blob) & 0xFFFFFFFF != crc:
        raise CorruptFile("model file checksum mismatch (truncated or corrupted)")

    reader = _Reader(blob, len(MAGIC))
    version = reader.string()
    if version != FORMAT_VERSION:
        raise FormatVersionMismatch(version, FORMAT_VERSION)

    sections = {}
    while reader.offset < len(blob):
        tag = reader.take(4)
        (size,) = reader.unpack('<Q')
        sections[tag] = _Reader(reader.take(size))
    missing = {b"STDZ", b"LAYT", b"GRID", b"SIG2", b"CNTR", b"COEF", b"PROV"} - set(sections)
    if missing:
        raise CorruptFile(f"model file missing sections {sorted(t.decode() for t in missing)}")

    s = sections[b"STDZ"]
    (n_obs_std,) = s.unpack('<I')
    standardization = Standardization(s.floats(n_obs_std), s.floats(n_obs_std))

    s = sections[b"LAYT"]
    d, n_obs, j, tau, dt = s.unpack('<IIIdd')
    layout = s.string()

    s = sections[b"GRID"]
    delta, m, p, anchor, cap = s.unpack('<dIddQ')
    grid = GridSpec(delta_grid=delta, m=m, p=p, anchor=anchor, norm=s.string(), max_centers=cap)

    (s2,) = sections[b"SIG2"].unpack('<d')
    centers = sections[b"CNTR"].floats(j * d).reshape(j, d)
    s = sections[b"COEF"]
    beta = s.floats(d * (1 + d + j)).reshape(d, 1 + d + j)
    residual = s.floats(d)

    provenance = {}
    for line in sections[b"PROV"].data.decode('utf-8').split('\n'):
        if line:
            key, _, value = line.partition('=')
            provenance[key] = value

    return RfrModel(
        centers=CenterSet(centers=centers, sigma2=s2, grid=grid),
        coefficients=Coefficients(beta=beta, residual_mse=residual),
        standardization=standardization,
        tau=tau, dimension=d, dt=dt, n_obs=n_obs, layout=layout, provenance=provenance,
    )


def load(path: Path) -> RfrModel:
    """Read a model file.

    Raises:
        CorruptFile: Bad magic, truncation or checksum mismatch
        FormatVersionMismatch: File written by an incompatible format version
    """
    return decode_model(Path(path).read_bytes())
