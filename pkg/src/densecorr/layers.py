"""Differentiable layers with explicit forward/backward passes.

Every ``*_forward`` returns ``(output, cache)``; the matching ``*_backward``
consumes that cache and returns gradients. Forward passes are pure functions
of their inputs, so batch items never interact.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .exceptions import ShapeError
from .tensor import as_tensor

L2_EPS = 1e-12


@dataclass
class ConvParams:
    """Weights ``(out_c, in_c, kh, kw)``, bias ``(out_c,)``, stride and zero padding."""

    weights: np.ndarray
    bias: np.ndarray
    stride: int = 1
    pad: int = 0

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64).reshape(-1)
        if self.weights.ndim != 4:
            raise ShapeError(f"conv weights must be 4-D, got {self.weights.shape}")
        out_c, _, kh, kw = self.weights.shape
        if kh % 2 == 0 or kw % 2 == 0:
            raise ShapeError(f"kernel dims must be odd, got {kh}x{kw}")
        if self.bias.shape != (out_c,):
            raise ShapeError(f"bias shape {self.bias.shape} != ({out_c},)")
        if self.stride < 1 or self.pad < 0:
            raise ShapeError("stride must be >= 1 and pad >= 0")

    @property
    def kernel_size(self):
        return self.weights.shape[2:]


class ConvCache(NamedTuple):
    windows: np.ndarray  # (n, c, oh, ow, kh, kw) view into the padded input
    x_shape: tuple
    params: ConvParams
    out_shape: tuple


def conv_output_shape(x_shape, p: ConvParams):
    n, _, h, w = x_shape
    kh, kw = p.kernel_size
    oh = (h + 2 * p.pad - kh) // p.stride + 1
    ow = (w + 2 * p.pad - kw) // p.stride + 1
    return n, p.weights.shape[0], oh, ow


def conv2d_forward(x, p: ConvParams):
    """Cross-correlation with stride and zero padding."""
    x = as_tensor(x)
    if x.shape[1] != p.weights.shape[1]:
        raise ShapeError(
            f"input has {x.shape[1]} channels, kernel expects {p.weights.shape[1]}"
        )
    out_shape = conv_output_shape(x.shape, p)
    if out_shape[2] < 1 or out_shape[3] < 1:
        raise ShapeError(f"input {x.shape} too small for kernel {p.kernel_size}")
    kh, kw = p.kernel_size
    xp = np.pad(x, ((0, 0), (0, 0), (p.pad, p.pad), (p.pad, p.pad)))
    s = p.stride
    windows = sliding_window_view(xp, (kh, kw), axis=(2, 3))
    windows = windows[:, :, : s * (out_shape[2] - 1) + 1 : s, : s * (out_shape[3] - 1) + 1 : s]
    out = np.tensordot(windows, p.weights, axes=([1, 4, 5], [1, 2, 3]))
    out = out.transpose(0, 3, 1, 2) + p.bias[None, :, None, None]
    return np.ascontiguousarray(out), ConvCache(windows, x.shape, p, out_shape)


def conv2d_backward(dv, cache: ConvCache):
    """Return ``(dx, dW, db)`` for the forward pass that produced ``cache``."""
    dv = as_tensor(dv)
    if dv.shape != cache.out_shape:
        raise ShapeError(f"upstream gradient {dv.shape} != output {cache.out_shape}")
    p = cache.params
    n, c, h, w = cache.x_shape
    kh, kw = p.kernel_size
    s = p.stride
    _, _, oh, ow = dv.shape

    dW = np.tensordot(dv, cache.windows, axes=([0, 2, 3], [0, 2, 3]))
    db = dv.sum(axis=(0, 2, 3))

    # (n, oh, ow, c, kh, kw)
    dcols = np.tensordot(dv, p.weights, axes=([1], [0]))
    dxp = np.zeros((n, c, h + 2 * p.pad, w + 2 * p.pad))
    for i in range(kh):
        for j in range(kw):
            dxp[:, :, i : i + s * (oh - 1) + 1 : s, j : j + s * (ow - 1) + 1 : s] += (
                dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
            )
    dx = dxp[:, :, p.pad : p.pad + h, p.pad : p.pad + w]
    return np.ascontiguousarray(dx), dW, db


def relu_forward(x):
    x = as_tensor(x)
    return np.maximum(x, 0.0), x


def relu_backward(dv, cache):
    dv = as_tensor(dv)
    if dv.shape != cache.shape:
        raise ShapeError(f"upstream gradient {dv.shape} != input {cache.shape}")
    return dv * (cache > 0)


def maxpool2x2_forward(x):
    """2x2 max pooling with stride 2. Ties route to the first element in raster order."""
    x = as_tensor(x)
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"maxpool2x2 needs even spatial dims, got {h}x{w}")
    blocks = x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
    blocks = blocks.reshape(n, c, h // 2, w // 2, 4)
    arg = blocks.argmax(axis=-1)
    out = np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]
    return out, (arg, x.shape)


def maxpool2x2_backward(dv, cache):
    arg, x_shape = cache
    dv = as_tensor(dv)
    n, c, h, w = x_shape
    if dv.shape != (n, c, h // 2, w // 2):
        raise ShapeError(f"upstream gradient {dv.shape} != pooled shape")
    blocks = np.zeros((n, c, h // 2, w // 2, 4))
    np.put_along_axis(blocks, arg[..., None], dv[..., None], axis=-1)
    dx = blocks.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
    return dx.reshape(n, c, h, w)


def channel_l2_normalize_forward(x, eps: float = L2_EPS):
    """Scale each (n, h, w) channel vector by ``1 / sqrt(|v|^2 + eps)``."""
    x = as_tensor(x)
    if x.shape[1] < 1:
        raise ShapeError("channel normalization needs at least one channel")
    r = np.sqrt(np.sum(x * x, axis=1, keepdims=True) + eps)
    return x / r, (x, r)


def channel_l2_normalize_backward(dv, cache):
    x, r = cache
    dv = as_tensor(dv)
    if dv.shape != x.shape:
        raise ShapeError(f"upstream gradient {dv.shape} != input {x.shape}")
    proj = np.sum(x * dv, axis=1, keepdims=True)
    return dv / r - x * proj / r**3
