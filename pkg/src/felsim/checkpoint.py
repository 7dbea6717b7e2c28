"""FELM model checkpoint format (bit-exact).

Layout: magic bytes ``FELM``, format version (u32 LE), layer count
(u32 LE), each layer width (u32 LE), then every parameter as little-endian
IEEE-754 float64 in the documented flattening order.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import CheckpointError
from .nn import MlpModel, param_count

MAGIC = b"FELM"
FORMAT_VERSION = 1


def save_checkpoint(model: MlpModel, path) -> None:
    dims = model.layer_dims
    header = MAGIC + struct.pack("<II", FORMAT_VERSION, len(dims))
    header += struct.pack(f"<{len(dims)}I", *dims)
    body = np.ascontiguousarray(model.params, dtype="<f8").tobytes()
    Path(path).write_bytes(header + body)


def load_checkpoint(path) -> MlpModel:
    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a FELM checkpoint")
    version, n_dims = struct.unpack("<II", raw[4:12])
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}")
    dims_end = 12 + 4 * n_dims
    if len(raw) < dims_end:
        raise CheckpointError(f"{path}: truncated header")
    dims = list(struct.unpack(f"<{n_dims}I", raw[12:dims_end]))
    n_params = param_count(dims)
    expected = dims_end + 8 * n_params
    if len(raw) != expected:
        raise CheckpointError(
            f"{path}: expected {expected} bytes for dims {dims}, got {len(raw)}")
    params = np.frombuffer(raw[dims_end:], dtype="<f8").astype(np.float64)
    return MlpModel(dims, params)
