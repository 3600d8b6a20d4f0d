"""Convolutional spatial transformer.

Every output location resamples its own local neighbourhood of the input with
an independent 2x2 affine map, expressed in coordinates whose origin is the
centre of the kernel. The ``k x k`` resampled patches are tiled without overlap
into a ``(h*k, w*k)`` buffer and combined by a ``k x k`` convolution with
stride ``k``, so the output keeps the input's spatial size.

Coordinate convention: ``x`` is the column index (increasing to the right),
``y`` the row index (increasing downwards). Source coordinates are
``xs = t11*xt + t12*yt`` and ``ys = t21*xt + t22*yt``.

Bilinear sampling uses the separable kernel ``max(0, 1-|dx|) * max(0, 1-|dy|)``
with zeros outside the sampled array. At sample points that land exactly on
an integer coordinate the derivative of ``|.|`` is taken from the right.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError, ShapeError
from .layers import ConvParams, conv2d_backward, conv2d_forward
from .tensor import as_tensor

DEFAULT_KERNEL = 3
IDENTITY_THETA = np.array([1.0, 0.0, 0.0, 1.0])


@dataclass(frozen=True)
class SampleGrid:
    """Target lattice ``(xt, yt)`` and its affine image ``(xs, ys)``, each ``(k, k)``.

    Rows index ``yt`` and columns index ``xt``, both ascending.
    """

    xt: np.ndarray
    yt: np.ndarray
    xs: np.ndarray
    ys: np.ndarray

    @property
    def kernel_size(self) -> int:
        return self.xt.shape[0]


def _check_kernel(k: int) -> int:
    if int(k) != k or k < 1 or k % 2 == 0:
        raise ConfigError(f"kernel size must be a positive odd integer, got {k}")
    return int(k)


def target_offsets(k: int) -> np.ndarray:
    k = _check_kernel(k)
    half = (k - 1) // 2
    return np.arange(-half, half + 1, dtype=np.float64)


def affine_grid(theta, k: int = DEFAULT_KERNEL) -> SampleGrid:
    theta = np.asarray(theta, dtype=np.float64).reshape(2, 2)
    offs = target_offsets(k)
    yt, xt = np.meshgrid(offs, offs, indexing="ij")
    xs = theta[0, 0] * xt + theta[0, 1] * yt
    ys = theta[1, 0] * xt + theta[1, 1] * yt
    return SampleGrid(xt, yt, xs, ys)


def scatter_rows(index, values, n_rows):
    """Sum rows of ``values`` (``(m, c)``) into an ``(n_rows, c)`` array at ``index``.

    Equivalent to ``np.add.at`` but much faster; accumulation order is fixed.
    """
    c = values.shape[1]
    flat = (index[:, None] * c + np.arange(c)).reshape(-1)
    return np.bincount(flat, weights=values.reshape(-1), minlength=n_rows * c).reshape(n_rows, c)


def _corners(px, py):
    """Integer corner offsets, bilinear weights and their coordinate derivatives.

    Returns four tuples ``(dy, dx, w, dw_dpx, dw_dpy)`` for the corners
    ``(y0, x0), (y0, x0+1), (y0+1, x0), (y0+1, x0+1)``.
    """
    x0 = np.floor(px)
    y0 = np.floor(py)
    fx = px - x0
    fy = py - y0
    gx = 1.0 - fx
    gy = 1.0 - fy
    x0 = x0.astype(np.intp)
    y0 = y0.astype(np.intp)
    one = np.ones_like(fx)
    return x0, y0, (
        (0, 0, gx * gy, -gy * one, -gx * one),
        (0, 1, fx * gy, gy * one, -fx * one),
        (1, 0, gx * fy, -fy * one, gx * one),
        (1, 1, fx * fy, fy * one, fx * one),
    )


@dataclass
class SamplerCache:
    U_shape: tuple
    grid: SampleGrid
    px: np.ndarray
    py: np.ndarray
    rows: list
    cols: list
    valid: list
    weights: list
    dw_dpx: list
    dw_dpy: list
    values: list


def bilinear_sample_forward(U, grid: SampleGrid, origin=None):
    """Sample ``U`` of shape ``(c, h, w)`` at the source points of ``grid``.

    ``origin`` is the ``(row, col)`` of ``U`` that corresponds to the kernel
    centre; by default the centre of ``U``. Returns ``V`` of shape
    ``(c, k, k)`` and a cache for the backward passes.
    """
    U = np.asarray(U, dtype=np.float64)
    if U.ndim != 3:
        raise ShapeError(f"U must be (c, h, w), got {U.shape}")
    c, h, w = U.shape
    if origin is None:
        origin = ((h - 1) / 2.0, (w - 1) / 2.0)
    py = grid.ys + origin[0]
    px = grid.xs + origin[1]
    x0, y0, corners = _corners(px, py)
    V = np.zeros((c,) + px.shape)
    cache = SamplerCache(U.shape, grid, px, py, [], [], [], [], [], [], [])
    for dy, dx, wgt, dpx, dpy in corners:
        r = y0 + dy
        q = x0 + dx
        ok = (r >= 0) & (r < h) & (q >= 0) & (q < w)
        vals = U[:, np.clip(r, 0, h - 1), np.clip(q, 0, w - 1)] * ok
        V += vals * wgt
        cache.rows.append(r)
        cache.cols.append(q)
        cache.valid.append(ok)
        cache.weights.append(wgt)
        cache.dw_dpx.append(dpx)
        cache.dw_dpy.append(dpy)
        cache.values.append(vals)
    return V, cache


def bilinear_sample_backward_input(dV, cache: SamplerCache):
    dV = np.asarray(dV, dtype=np.float64)
    c, h, w = cache.U_shape
    if dV.shape != (c,) + cache.px.shape:
        raise ShapeError(f"upstream gradient {dV.shape} does not match samples")
    dU = np.zeros((h * w, c))
    for r, q, ok, wgt in zip(cache.rows, cache.cols, cache.valid, cache.weights):
        dU += scatter_rows((r * w + q)[ok], (dV * wgt)[:, ok].T, h * w)
    return dU.T.reshape(c, h, w)


def bilinear_sample_backward_coords(dV, cache: SamplerCache):
    """Gradients with respect to the sample coordinates ``(xs, ys)``."""
    dV = np.asarray(dV, dtype=np.float64)
    dpx = np.zeros_like(cache.px)
    dpy = np.zeros_like(cache.py)
    for vals, gx, gy in zip(cache.values, cache.dw_dpx, cache.dw_dpy):
        s = np.sum(dV * vals, axis=0)
        dpx += s * gx
        dpy += s * gy
    return dpx, dpy


def bilinear_sample_backward_theta(dV, cache: SamplerCache):
    """Gradient with respect to ``(t11, t12, t21, t22)`` via ``xs = t11*xt + t12*yt``."""
    dxs, dys = bilinear_sample_backward_coords(dV, cache)
    g = cache.grid
    return np.array(
        [np.sum(dxs * g.xt), np.sum(dxs * g.yt), np.sum(dys * g.xt), np.sum(dys * g.yt)]
    )


def _check_theta_field(x, theta_field):
    theta_field = as_tensor(theta_field)
    n, _, h, w = x.shape
    if theta_field.shape != (n, 4, h, w):
        raise ShapeError(f"theta field {theta_field.shape} != ({n}, 4, {h}, {w})")
    return theta_field


def _check_combine(combine: ConvParams, k: int, channels: int):
    kh, kw = combine.kernel_size
    if (kh, kw) != (k, k):
        raise ConfigError(f"combine kernel {kh}x{kw} must be {k}x{k}")
    if combine.stride != k:
        raise ConfigError(f"combine stride {combine.stride} must equal kernel size {k}")
    if combine.pad != 0:
        raise ConfigError("combine convolution must not pad")
    if combine.weights.shape[1] != channels:
        raise ShapeError("combine kernel input channels do not match input")


@dataclass
class TransformerCache:
    x_shape: tuple
    k: int
    xt: np.ndarray
    yt: np.ndarray
    lin: list
    valid: list
    weights: list
    dw_dpx: list
    dw_dpy: list
    values: list
    conv_cache: object


def conv_spatial_transformer_forward(x, theta_field, combine: ConvParams, k: int = DEFAULT_KERNEL):
    """Apply a per-location affine resampling followed by the stride-``k`` combine.

    Each location reads from a ``(2k-1) x (2k-1)`` context window centred on
    it; samples outside the window (or outside the zero-padded image) get
    zero weight.
    """
    k = _check_kernel(k)
    x = as_tensor(x)
    theta_field = _check_theta_field(x, theta_field)
    _check_combine(combine, k, x.shape[1])
    n, c, h, w = x.shape
    r = k - 1
    P = 2 * k - 1
    Hp, Wp = h + 2 * r, w + 2 * r
    xp = np.pad(x, ((0, 0), (0, 0), (r, r), (r, r))).transpose(0, 2, 3, 1).reshape(-1, c)

    offs = target_offsets(k)
    yt = offs[:, None] * np.ones((1, k))
    xt = np.ones((k, 1)) * offs[None, :]
    # (n, h, w, 1, 1) parameters against (k, k) targets -> (n, h, w, k, k)
    t = theta_field.transpose(0, 2, 3, 1)[..., None, None]
    xs = t[..., 0, :, :] * xt + t[..., 1, :, :] * yt
    ys = t[..., 2, :, :] * xt + t[..., 3, :, :] * yt
    # patch-frame coordinates; the context window spans [0, P-1]
    x0, y0, corners = _corners(xs + r, ys + r)

    bi = np.arange(n)[:, None, None, None, None]
    ii = np.arange(h)[None, :, None, None, None]
    jj = np.arange(w)[None, None, :, None, None]

    V = np.zeros((n, h, w, k, k, c))
    cache = TransformerCache(x.shape, k, xt, yt, [], [], [], [], [], [], None)
    for dy, dx, wgt, dpx, dpy in corners:
        pr = y0 + dy
        pc = x0 + dx
        ok = (pr >= 0) & (pr < P) & (pc >= 0) & (pc < P)
        lin = (bi * Hp + ii + np.clip(pr, 0, P - 1)) * Wp + jj + np.clip(pc, 0, P - 1)
        vals = xp[lin] * ok[..., None]
        V += vals * wgt[..., None]
        cache.lin.append(lin)
        cache.valid.append(ok)
        cache.weights.append(wgt)
        cache.dw_dpx.append(dpx)
        cache.dw_dpy.append(dpy)
        cache.values.append(vals)

    tiled = np.ascontiguousarray(V.transpose(0, 5, 1, 3, 2, 4)).reshape(n, c, h * k, w * k)
    out, conv_cache = conv2d_forward(tiled, combine)
    cache.conv_cache = conv_cache
    return out, cache


def conv_spatial_transformer_backward(dout, cache: TransformerCache):
    """Return ``(dx, dtheta_field, dW_combine, db_combine)``."""
    n, c, h, w = cache.x_shape
    k = cache.k
    r = k - 1
    Hp, Wp = h + 2 * r, w + 2 * r
    dtiled, dW, db = conv2d_backward(dout, cache.conv_cache)
    dV = dtiled.reshape(n, c, h, k, w, k).transpose(0, 2, 4, 3, 5, 1)

    dxp = np.zeros((n * Hp * Wp, c))
    dpx = np.zeros((n, h, w, k, k))
    dpy = np.zeros((n, h, w, k, k))
    for lin, ok, wgt, gx, gy, vals in zip(
        cache.lin, cache.valid, cache.weights, cache.dw_dpx, cache.dw_dpy, cache.values
    ):
        dxp += scatter_rows(lin[ok], (dV * wgt[..., None])[ok], dxp.shape[0])
        s = np.sum(dV * vals, axis=-1)
        dpx += s * gx
        dpy += s * gy

    dx = dxp.reshape(n, Hp, Wp, c).transpose(0, 3, 1, 2)[:, :, r : r + h, r : r + w]
    xt, yt = cache.xt, cache.yt
    dtheta = np.stack(
        [
            np.sum(dpx * xt, axis=(-2, -1)),
            np.sum(dpx * yt, axis=(-2, -1)),
            np.sum(dpy * xt, axis=(-2, -1)),
            np.sum(dpy * yt, axis=(-2, -1)),
        ],
        axis=1,
    )
    return np.ascontiguousarray(dx), dtheta, dW, db


def identity_combine(channels: int, k: int = DEFAULT_KERNEL) -> ConvParams:
    """Combine kernel that copies each patch's centre sample (the identity pipeline)."""
    k = _check_kernel(k)
    W = np.zeros((channels, channels, k, k))
    W[np.arange(channels), np.arange(channels), k // 2, k // 2] = 1.0
    return ConvParams(W, np.zeros(channels), stride=k, pad=0)


def init_theta_predictor(in_channels: int, kernel: int = 3) -> ConvParams:
    """Zero weights and bias ``(1, 0, 0, 1)``: emits the identity map everywhere."""
    return ConvParams(
        np.zeros((4, in_channels, kernel, kernel)),
        IDENTITY_THETA.copy(),
        stride=1,
        pad=kernel // 2,
    )


def theta_predictor_forward(x, p: ConvParams):
    out, cache = conv2d_forward(x, p)
    if out.shape[2:] != as_tensor(x).shape[2:]:
        raise ShapeError("theta predictor must preserve spatial dims (use 'same' padding)")
    return out, cache


def theta_predictor_backward(dtheta, cache):
    return conv2d_backward(dtheta, cache)
