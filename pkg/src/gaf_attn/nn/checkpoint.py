"""Binary parameter checkpoints.

Layout, little-endian::

    b"GAFM" | u32 version | u32 config_len | config JSON (UTF-8)
    u32 n_tensors | per tensor: u32 ndim, ndim x u32 dims, float64 data
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import CheckpointError

MAGIC = b"GAFM"
VERSION = 1


def save_params(path: str | Path, config: dict, params: list[np.ndarray]) -> Path:
    path = Path(path)
    blob = json.dumps(config, sort_keys=True).encode("utf-8")
    parts = [MAGIC, struct.pack("<II", VERSION, len(blob)), blob, struct.pack("<I", len(params))]
    for arr in params:
        arr = np.asarray(arr)
        parts.append(struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    path.write_bytes(b"".join(parts))
    return path


def load_params(path: str | Path) -> tuple[dict, list[np.ndarray]]:
    raw = Path(path).read_bytes()
    try:
        if raw[:4] != MAGIC:
            raise CheckpointError(f"{path}: not a GAFM checkpoint")
        version, n = struct.unpack_from("<II", raw, 4)
        if version != VERSION:
            raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
        pos = 12
        config = json.loads(raw[pos : pos + n].decode("utf-8"))
        pos += n
        (count,) = struct.unpack_from("<I", raw, pos)
        pos += 4
        arrays = []
        for _ in range(count):
            (ndim,) = struct.unpack_from("<I", raw, pos)
            pos += 4
            shape = struct.unpack_from(f"<{ndim}I", raw, pos)
            pos += 4 * ndim
            size = int(np.prod(shape)) if ndim else 1
            data = np.frombuffer(raw, dtype="<f8", count=size, offset=pos)
            pos += 8 * size
            arrays.append(data.reshape(shape).astype(np.float64))
    except (struct.error, ValueError) as exc:
        raise CheckpointError(f"{path}: corrupt checkpoint ({exc})") from exc
    if pos != len(raw):
        raise CheckpointError(f"{path}: trailing bytes after last tensor")
    return config, arrays
