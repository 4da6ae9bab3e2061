"""Variable-input-size 2D CNN regressor for stacked GADF images.

Four conv blocks (3x3 same-padded conv, ReLU, 2x2 max pool) where the last
block pools adaptively onto an S x S grid, followed by dense layers
128 -> 16 -> 1 with dropout after the first. The output head is linear.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CheckpointError, ConfigError, ShapeError
from .gaf import GadfImage
from .nn import (
    AdaptiveMaxPool2d,
    Conv2d,
    Dense,
    Dropout,
    Flatten,
    MaxPool2d,
    ReLU,
    Sequential,
    load_params,
    save_params,
)

FC_SIZES = (128, 16, 1)
_DTYPES = {"float32": np.float32, "float64": np.float64}


@dataclass(frozen=True)
class AttnCnnConfig:
    conv_filters: tuple[int, ...] = (32, 64, 128, 128)
    kernel: tuple[int, int] = (3, 3)
    pool: tuple[int, int] = (2, 2)
    adaptive_grid: int = 4
    fc_sizes: tuple[int, ...] = FC_SIZES
    # Light dropout: at 0.5 the train/eval mismatch under batch size 1 keeps
    # the net from fitting even 8 trials within the decayed lr budget.
    dropout_rate: float = 0.05
    in_channels: int = 14
    seed: int = 0
    precision: str = "float32"

    def __post_init__(self):
        for name in ("conv_filters", "kernel", "pool", "fc_sizes"):
            object.__setattr__(self, name, tuple(int(v) for v in getattr(self, name)))

    def errors(self) -> list[str]:
        problems = []
        f = self.conv_filters
        if len(f) != 4:
            problems.append(f"conv_filters needs 4 entries, got {len(f)}")
        if any(v < 1 for v in f):
            problems.append("conv_filters must be positive")
        if any(b < a for a, b in zip(f, f[1:])):
            problems.append("conv_filters must be non-decreasing with depth")
        if len(self.kernel) != 2 or self.kernel[0] != self.kernel[1] or self.kernel[0] % 2 == 0:
            problems.append(f"kernel must be square and odd, got {self.kernel}")
        if len(self.pool) != 2 or self.pool[0] != self.pool[1] or self.pool[0] < 2:
            problems.append(f"pool must be square and >= 2, got {self.pool}")
        if self.adaptive_grid < 1:
            problems.append("adaptive_grid must be >= 1")
        if self.fc_sizes != FC_SIZES:
            problems.append(f"fc_sizes is fixed to {FC_SIZES}, got {self.fc_sizes}")
        if not 0.0 <= self.dropout_rate < 1.0:
            problems.append(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.in_channels < 1:
            problems.append("in_channels must be >= 1")
        if self.precision not in _DTYPES:
            problems.append(f"precision must be one of {sorted(_DTYPES)}, got {self.precision!r}")
        return problems

    def validate(self) -> None:
        problems = self.errors()
        if problems:
            raise ConfigError("; ".join(problems))

    @property
    def dtype(self):
        return _DTYPES[self.precision]

    @property
    def flatten_size(self) -> int:
        return self.conv_filters[-1] * self.adaptive_grid**2

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in dataclasses.asdict(self).items()}

    @classmethod
    def from_dict(cls, d: dict) -> "AttnCnnConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)


class AttnCnn:
    def __init__(self, config: AttnCnnConfig):
        config.validate()
        self.config = config
        rng = np.random.default_rng(config.seed)
        dtype = config.dtype
        k = config.kernel[0]
        layers = []
        prev = config.in_channels
        for b, filters in enumerate(config.conv_filters):
            layers.append(Conv2d(prev, filters, k, padding=k // 2, rng=rng, dtype=dtype))
            layers.append(ReLU())
            if b < 3:
                layers.append(MaxPool2d(config.pool[0]))
            else:
                layers.append(AdaptiveMaxPool2d(config.adaptive_grid))
            prev = filters
        layers.append(Flatten())
        fc1, fc2, fc3 = config.fc_sizes
        layers += [
            Dense(config.flatten_size, fc1, rng=rng, dtype=dtype),
            ReLU(),
            Dropout(config.dropout_rate),
            Dense(fc1, fc2, rng=rng, dtype=dtype),
            ReLU(),
            Dense(fc2, fc3, rng=rng, dtype=dtype),
        ]
        layers[0].needs_input_grad = False
        self.net = Sequential(layers)

    @property
    def layers(self):
        return self.net.layers

    def parameters(self):
        return self.net.parameters()

    def zero_grad(self) -> None:
        self.net.zero_grad()

    def count_params(self) -> int:
        return sum(p.size for p in self.parameters())

    def _as_input(self, image) -> np.ndarray:
        data = image.data if isinstance(image, GadfImage) else image
        x = np.asarray(data, dtype=self.config.dtype)
        if x.ndim != 3 or x.shape[0] != self.config.in_channels:
            raise ShapeError(
                f"model expects ({self.config.in_channels}, k, k) input, got {x.shape}"
            )
        return x

    def forward(self, image, train: bool = False, rng=None) -> np.ndarray:
        """Full network pass; ``image`` is a GadfImage or a (C, k, k) array.

        Returns the length-1 output array (kept as an array so ``backward``
        can be fed the loss gradient directly).
        """
        x = self._as_input(image)
        try:
            return self.net.forward(x, train=train, rng=rng)
        except ShapeError as exc:
            raise ShapeError(f"input {x.shape[1:]} collapses before the adaptive pool: {exc}") from exc

    def backward(self, grad) -> np.ndarray:
        return self.net.backward(np.asarray(grad, dtype=self.config.dtype).reshape(-1))

    def predict(self, image) -> float:
        """Eval-mode scalar prediction (unclamped)."""
        return float(self.forward(image, train=False)[0])

    def __call__(self, image, train=False, rng=None):
        return self.forward(image, train=train, rng=rng)


def build_model(config: AttnCnnConfig = AttnCnnConfig()) -> AttnCnn:
    return AttnCnn(config)


def count_params(model: AttnCnn) -> int:
    return model.count_params()


def save_checkpoint(model: AttnCnn, path: str | Path, extra: dict | None = None) -> Path:
    echo = {"model": model.config.to_dict(), "extra": extra or {}}
    return save_params(path, echo, [p.data for p in model.parameters()])


def load_checkpoint(path: str | Path) -> tuple[AttnCnn, dict]:
    echo, arrays = load_params(path)
    if "model" not in echo:
        raise CheckpointError(f"{path}: checkpoint lacks a model config")
    model = build_model(AttnCnnConfig.from_dict(echo["model"]))
    params = model.parameters()
    if len(params) != len(arrays):
        raise CheckpointError(
            f"{path}: {len(arrays)} tensors stored, architecture needs {len(params)}"
        )
    for i, (p, arr) in enumerate(zip(params, arrays)):
        if p.shape != arr.shape:
            raise CheckpointError(f"{path}: tensor {i} has shape {arr.shape}, expected {p.shape}")
        p.data[...] = arr
    return model, echo.get("extra", {})
