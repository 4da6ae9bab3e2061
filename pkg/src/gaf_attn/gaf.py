"""Gramian Angular Field encoding of EEG segments.

Each channel is rescaled to [-1, 1], read as the cosine of a polar angle,
and turned into a k x k matrix of pairwise angle differences (GADF) or sums
(GASF). The 14 channel matrices are stacked into one image. Images keep
their native size; nothing is padded.
"""

from __future__ import annotations

import json
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .dataset import Dataset, EegSegment
from .errors import ArgumentError, EncodeError

CLAMP_TOLERANCE = 1e-12
GAFI_MAGIC = b"GAFI"
GAFI_VERSION = 1
_GAFI_HEADER = struct.Struct("<4sIIId")


class Encoder(str, Enum):
    GADF = "gadf"
    GASF = "gasf"


class PolarSeries(NamedTuple):
    phi: np.ndarray
    r: np.ndarray


@dataclass(frozen=True)
class EncodeOptions:
    encoder: Encoder = Encoder.GADF
    paa_target: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "encoder", Encoder(self.encoder))
        if self.paa_target is not None and self.paa_target < 2:
            raise EncodeError(f"paa_target must be >= 2, got {self.paa_target}")

    def to_dict(self) -> dict:
        return {"encoder": self.encoder.value, "paa_target": self.paa_target}


@dataclass(frozen=True, eq=False)
class GadfImage:
    """Stacked channel matrices, ``data`` shaped (channels, k, k)."""

    data: np.ndarray
    target: float | None = None
    subject_id: int | None = None
    trial_id: int | None = None

    @property
    def size(self) -> int:
        return self.data.shape[-1]

    @property
    def n_channels(self) -> int:
        return self.data.shape[0]


def rescale(series: Sequence[float]) -> np.ndarray:
    """Min-max rescale to [-1, 1].

    ``((x - max) + (x - min)) / (max - min)``. A constant series maps to all
    zeros. Results are clamped to [-1, 1] to absorb rounding overshoot.
    """
    x = np.asarray(series, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise EncodeError("series must be a non-empty 1-D sequence")
    if not np.all(np.isfinite(x)):
        raise EncodeError("series contains non-finite values")
    hi, lo = x.max(), x.min()
    if hi == lo:
        return np.zeros_like(x)
    return np.clip(((x - hi) + (x - lo)) / (hi - lo), -1.0, 1.0)


def to_polar(rescaled: Sequence[float]) -> PolarSeries:
    x = np.asarray(rescaled, dtype=np.float64)
    k = x.size
    return PolarSeries(np.arccos(np.clip(x, -1.0, 1.0)), np.arange(1, k + 1) / k)


def gadf_matrix(rescaled: Sequence[float]) -> np.ndarray:
    """``sin(phi_i - phi_j)`` for every pair of time steps."""
    phi = to_polar(rescaled).phi
    return np.sin(phi[:, None] - phi[None, :])


def gasf_matrix(rescaled: Sequence[float]) -> np.ndarray:
    """``cos(phi_i + phi_j)`` for every pair of time steps."""
    phi = to_polar(rescaled).phi
    return np.cos(phi[:, None] + phi[None, :])


def paa_reduce(series: Sequence[float], target_len: int) -> np.ndarray:
    """Piecewise aggregate approximation down to ``target_len`` bin means.

    Bin ``b`` covers indices ``[floor(b*k/T), floor((b+1)*k/T))``. Series no
    longer than ``target_len`` are returned unchanged.
    """
    if target_len < 1:
        raise EncodeError(f"PAA target length must be >= 1, got {target_len}")
    x = np.asarray(series, dtype=np.float64)
    k = x.size
    if target_len >= k:
        return x.copy()
    edges = (np.arange(target_len + 1) * k) // target_len
    sums = np.add.reduceat(x, edges[:-1])
    return sums / np.diff(edges)


def encode_channel(series: Sequence[float], options: EncodeOptions = EncodeOptions()) -> np.ndarray:
    x = np.asarray(series, dtype=np.float64)
    if options.paa_target is not None:
        x = paa_reduce(x, options.paa_target)
    scaled = rescale(x)
    if options.encoder is Encoder.GASF:
        return gasf_matrix(scaled)
    return gadf_matrix(scaled)


def encode_trial(segment: EegSegment, options: EncodeOptions = EncodeOptions()) -> GadfImage:
    data = np.asarray(segment.data, dtype=np.float64)
    k = data.shape[1]
    if options.paa_target is not None:
        k = min(k, options.paa_target)
    if k < 2:
        raise EncodeError(f"segment too short to encode: k={k} after reduction, need >= 2")
    stacked = np.stack([encode_channel(row, options) for row in data])
    return GadfImage(stacked, segment.score, segment.subject_id, segment.trial_id)


def _encode_index(args):
    dataset, index, options = args
    return encode_trial(dataset.segment(index), options)


def encode_dataset(
    dataset: Dataset, options: EncodeOptions = EncodeOptions(), workers: int = 1
) -> list[GadfImage]:
    """Encode every trial's listening segment, in dataset order."""
    if workers <= 1:
        return [encode_trial(dataset.segment(i), options) for i in range(len(dataset))]
    jobs = [(dataset, i, options) for i in range(len(dataset))]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_encode_index, jobs, chunksize=max(1, len(jobs) // (4 * workers))))


# ---------------------------------------------------------------------------
# Export
# ---------------------------------------------------------------------------


def to_pixels(values: np.ndarray) -> np.ndarray:
    """Map [-1, 1] to 0..255, rounding half away from zero."""
    scaled = (np.clip(np.asarray(values, dtype=np.float64), -1.0, 1.0) + 1.0) * 127.5
    return np.floor(scaled + 0.5).astype(np.uint8)


def export_pgm(image: GadfImage, channel: int, path: str | Path) -> Path:
    if not 0 <= channel < image.n_channels:
        raise ArgumentError(f"channel {channel} out of range [0, {image.n_channels})")
    k = image.size
    path = Path(path)
    header = f"P5\n{k} {k}\n255\n".encode("ascii")
    try:
        path.write_bytes(header + to_pixels(image.data[channel]).tobytes())
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def write_gafi(image: GadfImage, path: str | Path) -> Path:
    """Binary cache: little-endian header then float32 channels, row-major."""
    path = Path(path)
    score = float("nan") if image.target is None else float(image.target)
    header = _GAFI_HEADER.pack(GAFI_MAGIC, GAFI_VERSION, image.size, image.n_channels, score)
    path.write_bytes(header + np.ascontiguousarray(image.data, dtype="<f4").tobytes())
    return path


def read_gafi(path: str | Path, subject_id: int | None = None, trial_id: int | None = None) -> GadfImage:
    raw = Path(path).read_bytes()
    if len(raw) < _GAFI_HEADER.size:
        raise EncodeError(f"{path}: truncated GAFI header")
    magic, version, k, channels, score = _GAFI_HEADER.unpack_from(raw)
    if magic != GAFI_MAGIC:
        raise EncodeError(f"{path}: bad magic {magic!r}")
    if version != GAFI_VERSION:
        raise EncodeError(f"{path}: unsupported GAFI version {version}")
    body = raw[_GAFI_HEADER.size :]
    if len(body) != channels * k * k * 4:
        raise EncodeError(f"{path}: payload size does not match header")
    data = np.frombuffer(body, dtype="<f4").reshape(channels, k, k).astype(np.float32)
    return GadfImage(data, None if np.isnan(score) else score, subject_id, trial_id)


def cache_name(subject_id: int, trial_id: int) -> str:
    return f"subject_{subject_id}_trial_{trial_id}.gafi"


def save_cache(images: Sequence[GadfImage], path: str | Path, meta: dict | None = None) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    entries = []
    for img in images:
        name = cache_name(img.subject_id, img.trial_id)
        write_gafi(img, path / name)
        entries.append({"subject_id": img.subject_id, "trial_id": img.trial_id, "file": name})
    index = {"meta": meta or {}, "images": entries}
    (path / "index.json").write_text(json.dumps(index, indent=2, sort_keys=True) + "\n")
    return path


def load_cache(path: str | Path) -> tuple[list[GadfImage], dict]:
    path = Path(path)
    index = json.loads((path / "index.json").read_text())
    images = [
        read_gafi(path / e["file"], e["subject_id"], e["trial_id"]) for e in index["images"]
    ]
    return images, index.get("meta", {})

