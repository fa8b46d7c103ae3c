"""Per-element log-weight streams.

Layout (little-endian): magic "HANWGT01", J, h, Δτ (float64), L, k, l,
μ_A index, ν_A index (int32), seed, N_s (int64), then N_s float64 log-weights.
"""

import struct
from pathlib import Path
from typing import Any, Dict, Tuple

import numpy as np

from ..interface.base_lattice import ModelParams
from ..interface.errors import MissingInputError, NumericalError

MAGIC = b"HANWGT01"
HEADER = struct.Struct("<8sdddiiiiiqq")


def stream_name(params: ModelParams, mu: int, nu: int) -> str:
    return f"{params.tag()}_mu{mu}_nu{nu}.wgt"


def write_weight_stream(path: Path, params: ModelParams, mu: int, nu: int, seed: int, log_weights: np.ndarray) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lw = np.ascontiguousarray(log_weights, dtype="<f8")
    header = HEADER.pack(MAGIC, params.J, params.h, params.dtau, params.L, params.k, params.l, mu, nu, seed, lw.size)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as f:
        f.write(header)
        f.write(lw.tobytes())
    tmp.replace(path)
    return path


def read_weight_stream(path: Path) -> Tuple[Dict[str, Any], np.ndarray]:
    path = Path(path)
    if not path.exists():
        raise MissingInputError(f"weight stream not found: {path}")
    blob = path.read_bytes()
    if len(blob) < HEADER.size:
        raise NumericalError(f"{path} is truncated")
    magic, J, h, dtau, L, k, l, mu, nu, seed, n = HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise NumericalError(f"{path} is not a weight stream (magic {magic!r})")
    expected = HEADER.size + 8 * n
    if len(blob) != expected:
        raise NumericalError(f"{path} holds {len(blob)} bytes, header promises {expected}")
    weights = np.frombuffer(blob, dtype="<f8", count=n, offset=HEADER.size).astype(np.float64)
    header = {"J": J, "h": h, "dtau": dtau, "L": L, "k": k, "l": l, "mu": mu, "nu": nu, "seed": seed, "n": n}
    return header, weights
