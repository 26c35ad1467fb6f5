"""Utility functions and helpers."""

import hashlib
import json
import logging
import math
import os
import zlib
from pathlib import Path
from typing import Optional

import numpy as np


def setup_logging(level: int = logging.INFO) -> None:
    """Configure logging with proper formatting.

    Args:
        level: Logging level (default: INFO)
    """
    logging.basicConfig(
        level=level,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S'
    )


def file_sha1(file_path: Path) -> str:
    """Compute SHA1 hash of a file."""
    sha1 = hashlib.sha1()
    with open(file_path, 'rb') as f:
        while chunk := f.read(8192):
            sha1.update(chunk)
    return sha1.hexdigest()


def json_safe(value):
    """Replace NaN and infinities with None, recursively; numpy scalars become Python ones."""
    if isinstance(value, dict):
        return {k: json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [json_safe(v) for v in value]
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def write_json(path: Path, data: dict) -> Path:
    """Write strict JSON (non-finite numbers as null)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(json_safe(data), f, indent=2, sort_keys=True, allow_nan=False)
    return path


def worker_count(requested: Optional[int] = None) -> int:
    """Number of worker threads, capped by the RFR_THREADS environment variable.

    Args:
        requested: Explicit request (None = os.cpu_count())

    Returns:
        Positive worker count
    """
    count = requested if requested is not None else (os.cpu_count() or 1)
    cap = os.getenv("RFR_THREADS")
    if cap:
        try:
            count = min(count, int(cap))
        except ValueError:
            logging.getLogger(__name__).warning(f"Ignoring non-integer RFR_THREADS={cap!r}")
    return max(1, count)


def named_seed(root_seed: int, name: str) -> np.random.SeedSequence:
    """Seed sequence for a named sub-stream of the root seed.

    The same (root_seed, name) pair always yields the same stream, and
    different names give independent streams.
    """
    return np.random.SeedSequence([int(root_seed), zlib.crc32(name.encode('utf-8'))])


def named_rng(root_seed: int, name: str) -> np.random.Generator:
    """Generator for a named sub-stream (simulate, sample_rows, saddle, forecast, ...)."""
    return np.random.default_rng(named_seed(root_seed, name))


def child_seed(seed_seq: np.random.SeedSequence, *keys: int) -> np.random.SeedSequence:
    """Deterministic child of `seed_seq` addressed by integer keys.

    Unlike `SeedSequence.spawn` this does not mutate the parent, so the
    same keys always give the same child.
    """
    return np.random.SeedSequence(
        entropy=seed_seq.entropy,
        spawn_key=tuple(seed_seq.spawn_key) + tuple(int(k) for k in keys),
    )


def spawn_rngs(seed_seq: np.random.SeedSequence, count: int, *prefix: int) -> list:
    """Pre-split generators so parallel and serial consumers see identical streams."""
    return [np.random.default_rng(child_seed(seed_seq, *prefix, i)) for i in range(count)]
