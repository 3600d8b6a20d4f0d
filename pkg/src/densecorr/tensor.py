"""Dense 4-D tensors in (batch, channel, height, width) layout.

Tensors are plain ``float64`` numpy arrays; the helpers here validate shapes
and provide the binary CNT1 fixture format::

    b"CNT1" | u32 n | u32 c | u32 h | u32 w | n*c*h*w little-endian f64

All operations return fresh arrays and never mutate their inputs.
"""

from __future__ import annotations

import io
import struct
from typing import BinaryIO

import numpy as np

from .exceptions import AxisError, ShapeError, SizeError

MAGIC = b"CNT1"
_HEADER = struct.Struct("<4s4I")
AXIS_NAMES = {"batch": 0, "channel": 1, "height": 2, "width": 3}

_OPS = {"add": np.add, "sub": np.subtract, "mul": np.multiply}


def _check_shape(shape) -> tuple:
    shape = tuple(int(s) for s in shape)
    if len(shape) != 4:
        raise ShapeError(f"expected 4 dims (n, c, h, w), got {shape}")
    if any(s < 0 for s in shape):
        raise ShapeError(f"negative dimension in {shape}")
    total = 1
    for s in shape:
        total *= s
    if total > np.iinfo(np.intp).max // 8:
        raise SizeError(f"tensor of shape {shape} exceeds addressable size")
    return shape


def zeros(shape) -> np.ndarray:
    return np.zeros(_check_shape(shape), dtype=np.float64)


def as_tensor(a) -> np.ndarray:
    """Return ``a`` as a contiguous float64 4-D array (copying only if needed)."""
    arr = np.ascontiguousarray(a, dtype=np.float64)
    if arr.ndim != 4:
        raise ShapeError(f"expected a 4-D tensor, got ndim={arr.ndim}")
    return arr


def elementwise(op: str, a, b) -> np.ndarray:
    """Apply ``add``, ``sub`` or ``mul`` entrywise to equal-shape tensors."""
    try:
        fn = _OPS[op]
    except KeyError:
        raise ValueError(f"unknown op {op!r}; expected one of {sorted(_OPS)}") from None
    a = as_tensor(a)
    b = as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch {a.shape} vs {b.shape}")
    return fn(a, b)


def add(a, b):
    return elementwise("add", a, b)


def sub(a, b):
    return elementwise("sub", a, b)


def mul(a, b):
    return elementwise("mul", a, b)


def _normalize_axes(axes) -> tuple:
    if axes is None or axes == "all":
        return (0, 1, 2, 3)
    if isinstance(axes, (int, str)):
        axes = (axes,)
    out = []
    for ax in axes:
        if isinstance(ax, str):
            if ax not in AXIS_NAMES:
                raise AxisError(f"unknown axis name {ax!r}")
            ax = AXIS_NAMES[ax]
        if isinstance(ax, bool) or not isinstance(ax, (int, np.integer)) or not 0 <= ax < 4:
            raise AxisError(f"invalid axis {ax!r} for a 4-D tensor")
        out.append(int(ax))
    return tuple(sorted(set(out)))


def reduce_sum(a, axes="all") -> np.ndarray:
    """Sum over ``axes``; reduced dims are kept with size 1.

    ``axes`` may be ``"all"``, an int in ``0..3``, one of the names
    ``batch/channel/height/width``, or a sequence of those.
    """
    a = as_tensor(a)
    return a.sum(axis=_normalize_axes(axes), keepdims=True)


def write_cnt1(fh: BinaryIO, a) -> int:
    """Serialize a tensor to an open binary stream; returns bytes written."""
    a = as_tensor(a)
    header = _HEADER.pack(MAGIC, *a.shape)
    body = a.astype("<f8", copy=False).tobytes(order="C")
    fh.write(header)
    fh.write(body)
    return len(header) + len(body)


def read_cnt1(fh: BinaryIO) -> np.ndarray:
    header = fh.read(_HEADER.size)
    if len(header) != _HEADER.size:
        raise ShapeError("truncated CNT1 header")
    magic, n, c, h, w = _HEADER.unpack(header)
    if magic != MAGIC:
        raise ShapeError(f"bad magic {magic!r}, expected {MAGIC!r}")
    count = n * c * h * w
    body = fh.read(8 * count)
    if len(body) != 8 * count:
        raise ShapeError("truncated CNT1 payload")
    return np.frombuffer(body, dtype="<f8").astype(np.float64).reshape(n, c, h, w)


def to_bytes(a) -> bytes:
    buf = io.BytesIO()
    write_cnt1(buf, a)
    return buf.getvalue()


def from_bytes(data: bytes) -> np.ndarray:
    return read_cnt1(io.BytesIO(data))


def save(path, a) -> None:
    with open(path, "wb") as fh:
        write_cnt1(fh, a)


def load(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return read_cnt1(fh)
