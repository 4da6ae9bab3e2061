"""Layers for single-image (batch size 1) networks.

Activations are plain arrays shaped (C, H, W) for the convolutional part and
(n,) for dense layers. Each layer caches what its backward pass needs during
``forward`` and adds parameter gradients into ``Tensor.grad`` on
``backward``; call ``zero_grad`` between steps.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ConfigError, ShapeError
from .tensor import Tensor


class Layer:
    def forward(self, x: np.ndarray, train: bool = False, rng: np.random.Generator | None = None):
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def parameters(self) -> list[Tensor]:
        return []

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def __call__(self, x, train=False, rng=None):
        return self.forward(x, train=train, rng=rng)


def he_normal(rng: np.random.Generator, shape, fan_in: int, dtype) -> np.ndarray:
    return (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(dtype)


class Conv2d(Layer):
    """Stride-1 cross-correlation with symmetric zero padding."""

    def __init__(self, in_channels, out_channels, kernel_size=3, padding=1, rng=None, dtype=np.float64):
        # the first layer of a network can skip the input gradient
        self.needs_input_grad = True
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = (kernel_size, kernel_size) if np.isscalar(kernel_size) else tuple(kernel_size)
        self.padding = padding
        kh, kw = self.kernel_size
        fan_in = in_channels * kh * kw
        rng = np.random.default_rng() if rng is None else rng
        self.weight = Tensor(he_normal(rng, (out_channels, in_channels, kh, kw), fan_in, dtype))
        self.bias = Tensor(np.zeros(out_channels, dtype=dtype))

    def parameters(self):
        return [self.weight, self.bias]

    def forward(self, x, train=False, rng=None):
        if x.ndim != 3 or x.shape[0] != self.in_channels:
            raise ShapeError(f"conv expects ({self.in_channels}, H, W), got {x.shape}")
        p = self.padding
        kh, kw = self.kernel_size
        xp = np.pad(x, ((0, 0), (p, p), (p, p))) if p else x
        c, hp, wp = xp.shape
        ho, wo = hp - kh + 1, wp - kw + 1
        if ho < 1 or wo < 1:
            raise ShapeError(f"input {x.shape[1:]} too small for kernel {self.kernel_size}")
        win = sliding_window_view(xp, (kh, kw), axis=(1, 2))
        cols = win.transpose(0, 3, 4, 1, 2).reshape(c * kh * kw, ho * wo)
        w = self.weight.data.reshape(self.out_channels, -1)
        out = w @ cols + self.bias.data[:, None]
        self._cache = (cols, xp.shape, ho, wo)
        return out.reshape(self.out_channels, ho, wo)

    def backward(self, grad):
        cols, (c, hp, wp), ho, wo = self._cache
        kh, kw = self.kernel_size
        g = grad.reshape(self.out_channels, ho * wo)
        self.weight.accumulate((g @ cols.T).reshape(self.weight.shape))
        self.bias.accumulate(g.sum(axis=1))
        if not self.needs_input_grad:
            return None
        w = self.weight.data.reshape(self.out_channels, -1)
        dcols = (w.T @ g).reshape(c, kh, kw, ho, wo)
        dxp = np.zeros((c, hp, wp), dtype=grad.dtype)
        for i in range(kh):
            for j in range(kw):
                dxp[:, i : i + ho, j : j + wo] += dcols[:, i, j]
        p = self.padding
        return dxp[:, p : hp - p, p : wp - p] if p else dxp


class ReLU(Layer):
    def forward(self, x, train=False, rng=None):
        self._mask = x > 0
        return x * self._mask

    def backward(self, grad):
        return grad * self._mask


class MaxPool2d(Layer):
    """Non-overlapping max pooling; odd trailing rows/columns are dropped.

    Gradients go to the first maximum in row-major order within each window.
    """

    def __init__(self, kernel_size=2):
        self.k = kernel_size

    def forward(self, x, train=False, rng=None):
        c, h, w = x.shape
        k = self.k
        if h < k or w < k:
            raise ShapeError(f"max pool {k}x{k} needs H, W >= {k}, got {h}x{w}")
        ho, wo = h // k, w // k
        win = (
            x[:, : ho * k, : wo * k]
            .reshape(c, ho, k, wo, k)
            .transpose(0, 1, 3, 2, 4)
            .reshape(c, ho, wo, k * k)
        )
        idx = np.argmax(win, axis=-1)
        self._cache = (x.shape, idx)
        return np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]

    def backward(self, grad):
        (c, h, w), idx = self._cache
        k = self.k
        ho, wo = idx.shape[1:]
        d = np.zeros((c, ho, wo, k * k), dtype=grad.dtype)
        np.put_along_axis(d, idx[..., None], grad[..., None], axis=-1)
        dx = np.zeros((c, h, w), dtype=grad.dtype)
        dx[:, : ho * k, : wo * k] = (
            d.reshape(c, ho, wo, k, k).transpose(0, 1, 3, 2, 4).reshape(c, ho * k, wo * k)
        )
        return dx


def adaptive_bins(n: int, s: int) -> list[tuple[int, int]]:
    """Bin ``i`` spans ``[floor(i*n/s), ceil((i+1)*n/s))``."""
    return [(i * n // s, -(-(i + 1) * n // s)) for i in range(s)]


class AdaptiveMaxPool2d(Layer):
    """Max pooling onto a fixed S x S grid for any input size."""

    def __init__(self, output_size=4):
        self.s = output_size

    def forward(self, x, train=False, rng=None):
        c, h, w = x.shape
        if h < 1 or w < 1:
            raise ShapeError(f"adaptive pool got empty input {x.shape}")
        s = self.s
        flat = x.reshape(c, h * w)
        out = np.empty((c, s, s), dtype=x.dtype)
        idx = np.empty((c, s, s), dtype=np.int64)
        for i, (r0, r1) in enumerate(adaptive_bins(h, s)):
            for j, (c0, c1) in enumerate(adaptive_bins(w, s)):
                win = x[:, r0:r1, c0:c1].reshape(c, -1)
                a = np.argmax(win, axis=1)
                bw = c1 - c0
                pos = (r0 + a // bw) * w + c0 + a % bw
                idx[:, i, j] = pos
                out[:, i, j] = flat[np.arange(c), pos]
        self._cache = (x.shape, idx)
        return out

    def backward(self, grad):
        (c, h, w), idx = self._cache
        dx = np.zeros((c, h * w), dtype=grad.dtype)
        rows = np.broadcast_to(np.arange(c)[:, None, None], idx.shape)
        np.add.at(dx, (rows.ravel(), idx.ravel()), grad.ravel())
        return dx.reshape(c, h, w)


class Flatten(Layer):
    def forward(self, x, train=False, rng=None):
        self._shape = x.shape
        return x.reshape(-1)

    def backward(self, grad):
        return grad.reshape(self._shape)


class Dense(Layer):
    """``y = W x + b`` with ``W`` shaped (out_features, in_features)."""

    def __init__(self, in_features, out_features, rng=None, dtype=np.float64):
        self.in_features = in_features
        self.out_features = out_features
        rng = np.random.default_rng() if rng is None else rng
        self.weight = Tensor(he_normal(rng, (out_features, in_features), in_features, dtype))
        self.bias = Tensor(np.zeros(out_features, dtype=dtype))

    def parameters(self):
        return [self.weight, self.bias]

    def forward(self, x, train=False, rng=None):
        if x.shape != (self.in_features,):
            raise ShapeError(f"dense expects ({self.in_features},), got {x.shape}")
        self._x = x
        return self.weight.data @ x + self.bias.data

    def backward(self, grad):
        self.weight.accumulate(np.outer(grad, self._x))
        self.bias.accumulate(grad)
        return self.weight.data.T @ grad


class Dropout(Layer):
    """Inverted dropout: identity in eval mode."""

    def __init__(self, rate=0.5):
        if not 0.0 <= rate < 1.0:
            raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate

    def forward(self, x, train=False, rng=None):
        if not train or self.rate == 0.0:
            self._mask = None
            return x
        if rng is None:
            raise ConfigError("dropout in train mode needs an rng")
        keep = rng.random(x.shape) >= self.rate
        self._mask = (keep / (1.0 - self.rate)).astype(x.dtype)
        return x * self._mask

    def backward(self, grad):
        return grad if self._mask is None else grad * self._mask


class Sequential(Layer):
    def __init__(self, layers):
        self.layers = list(layers)

    def parameters(self):
        return [p for layer in self.layers for p in layer.parameters()]

    def forward(self, x, train=False, rng=None):
        for layer in self.layers:
            x = layer.forward(x, train=train, rng=rng)
        return x

    def backward(self, grad):
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad
