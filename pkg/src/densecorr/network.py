"""Small fully convolutional feature network shared by both images.

Architecture (stride 2 overall)::

    conv3x3(3->16) relu maxpool2x2 conv3x3(16->32) relu conv3x3(32->64)
    [convolutional spatial transformer] channel-wise L2 normalization

All parameters live in one ordered dict, so both branches of a pair
accumulate gradients into the same arrays.
"""

from __future__ import annotations

import io
import json
import struct
from collections import OrderedDict

import numpy as np

from . import tensor
from .exceptions import CheckpointError, ShapeError
from .layers import (
    ConvParams,
    channel_l2_normalize_backward,
    channel_l2_normalize_forward,
    conv2d_backward,
    conv2d_forward,
    maxpool2x2_backward,
    maxpool2x2_forward,
    relu_backward,
    relu_forward,
)
from .transformer import (
    DEFAULT_KERNEL,
    conv_spatial_transformer_backward,
    conv_spatial_transformer_forward,
    identity_combine,
    init_theta_predictor,
    theta_predictor_backward,
    theta_predictor_forward,
)

CHECKPOINT_FORMAT = "densecorr-checkpoint-v1"
_LEN = struct.Struct("<Q")


class FeatureNetwork:
    """Three conv layers, optional convolutional spatial transformer, unit-norm output.

    Parameters
    ----------
    channels : tuple of int
        Output channels of the three conv layers.
    in_channels : int
    spatial_transformer : bool
    st_kernel : int
        Kernel size of the spatial transformer (and stride of its combine conv).
    seed : int
        Seed for He-normal weight initialization.
    """

    stride = 2

    def __init__(self, channels=(16, 32, 64), in_channels=3, spatial_transformer=False,
                 st_kernel=DEFAULT_KERNEL, seed=0):
        self.channels = tuple(int(c) for c in channels)
        self.in_channels = int(in_channels)
        self.spatial_transformer = bool(spatial_transformer)
        self.st_kernel = int(st_kernel)
        self.seed = seed
        self.forward_count = 0
        self.backward_count = 0
        self.params = OrderedDict()

        rng = np.random.default_rng(seed)
        c_in = self.in_channels
        for i, c_out in enumerate(self.channels, start=1):
            fan_in = c_in * 9
            self.params[f"conv{i}.weight"] = rng.normal(0.0, np.sqrt(2.0 / fan_in), (c_out, c_in, 3, 3))
            self.params[f"conv{i}.bias"] = np.zeros(c_out)
            c_in = c_out
        if self.spatial_transformer:
            theta = init_theta_predictor(c_in)
            combine = identity_combine(c_in, self.st_kernel)
            self.params["theta.weight"] = theta.weights
            self.params["theta.bias"] = theta.bias
            self.params["combine.weight"] = combine.weights
            self.params["combine.bias"] = combine.bias

    @property
    def feature_dim(self) -> int:
        return self.channels[-1]

    def config(self) -> dict:
        return {
            "channels": list(self.channels),
            "in_channels": self.in_channels,
            "spatial_transformer": self.spatial_transformer,
            "st_kernel": self.st_kernel,
            "seed": self.seed,
        }

    def _conv(self, name, stride=1, pad=1):
        return ConvParams(self.params[f"{name}.weight"], self.params[f"{name}.bias"], stride, pad)

    def zero_grads(self) -> OrderedDict:
        return OrderedDict((k, np.zeros_like(v)) for k, v in self.params.items())

    def forward(self, images):
        """Map ``(n, c, h, w)`` images to unit-norm features ``(n, d, h/2, w/2)``."""
        x = tensor.as_tensor(images)
        n, c, h, w = x.shape
        if c != self.in_channels:
            raise ShapeError(f"network expects {self.in_channels} input channels, got {c}")
        if h < 2 or w < 2 or h % 2 or w % 2:
            raise ShapeError(f"image dims must be even and >= 2, got {h}x{w}")
        self.forward_count += 1
        caches = {}
        x, caches["conv1"] = conv2d_forward(x, self._conv("conv1"))
        x, caches["relu1"] = relu_forward(x)
        x, caches["pool1"] = maxpool2x2_forward(x)
        x, caches["conv2"] = conv2d_forward(x, self._conv("conv2"))
        x, caches["relu2"] = relu_forward(x)
        x, caches["conv3"] = conv2d_forward(x, self._conv("conv3"))
        if self.spatial_transformer:
            theta, caches["theta"] = theta_predictor_forward(x, self._conv("theta"))
            combine = self._conv("combine", stride=self.st_kernel, pad=0)
            x, caches["st"] = conv_spatial_transformer_forward(x, theta, combine, self.st_kernel)
        x, caches["l2"] = channel_l2_normalize_forward(x)
        return x, caches

    def backward(self, dfeat, caches, grads=None) -> OrderedDict:
        """Accumulate parameter gradients of ``sum(dfeat * features)`` into ``grads``."""
        if grads is None:
            grads = self.zero_grads()
        self.backward_count += 1
        dx = channel_l2_normalize_backward(dfeat, caches["l2"])
        if self.spatial_transformer:
            dx, dtheta, dW, db = conv_spatial_transformer_backward(dx, caches["st"])
            grads["combine.weight"] += dW
            grads["combine.bias"] += db
            dx_theta, dW, db = theta_predictor_backward(dtheta, caches["theta"])
            grads["theta.weight"] += dW
            grads["theta.bias"] += db
            dx = dx + dx_theta
        dx = self._conv_back("conv3", dx, caches, grads)
        dx = relu_backward(dx, caches["relu2"])
        dx = self._conv_back("conv2", dx, caches, grads)
        dx = maxpool2x2_backward(dx, caches["pool1"])
        dx = relu_backward(dx, caches["relu1"])
        self._conv_back("conv1", dx, caches, grads)
        return grads

    @staticmethod
    def _conv_back(name, dx, caches, grads):
        dx, dW, db = conv2d_backward(dx, caches[name])
        grads[f"{name}.weight"] += dW
        grads[f"{name}.bias"] += db
        return dx

    # checkpoints ---------------------------------------------------------

    def to_bytes(self) -> bytes:
        blob = io.BytesIO()
        index = []
        for name, value in self.params.items():
            offset = blob.tell()
            tensor.write_cnt1(blob, value.reshape((1,) * (4 - value.ndim) + value.shape))
            index.append({"name": name, "offset": offset, "shape": list(value.shape)})
        header = json.dumps(
            {"format": CHECKPOINT_FORMAT, "config": self.config(), "tensors": index},
            sort_keys=True,
        ).encode("utf-8")
        return _LEN.pack(len(header)) + header + blob.getvalue()

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    def load_state(self, data: bytes) -> "FeatureNetwork":
        """Overwrite parameters from checkpoint bytes; names and shapes must match exactly."""
        header, blob = _split_checkpoint(data)
        entries = {e["name"]: e for e in header["tensors"]}
        missing = [k for k in self.params if k not in entries]
        if missing:
            raise CheckpointError(f"checkpoint lacks tensor {missing[0]!r}")
        unexpected = [k for k in entries if k not in self.params]
        if unexpected:
            raise CheckpointError(f"checkpoint has unexpected tensor {unexpected[0]!r}")
        loaded = OrderedDict()
        for name, current in self.params.items():
            e = entries[name]
            if tuple(e["shape"]) != current.shape:
                raise CheckpointError(
                    f"tensor {name!r}: checkpoint shape {tuple(e['shape'])} != model shape {current.shape}"
                )
            try:
                arr = tensor.from_bytes(blob[e["offset"]:])
            except ShapeError as exc:
                raise CheckpointError(f"tensor {name!r}: {exc}") from exc
            loaded[name] = arr.reshape(current.shape)
        self.params = loaded
        return self

    @classmethod
    def load(cls, path) -> "FeatureNetwork":
        with open(path, "rb") as fh:
            data = fh.read()
        header, _ = _split_checkpoint(data)
        net = cls(**header["config"])
        return net.load_state(data)


def _split_checkpoint(data: bytes):
    if len(data) < _LEN.size:
        raise CheckpointError("checkpoint too short")
    (n,) = _LEN.unpack_from(data)
    try:
        header = json.loads(data[_LEN.size : _LEN.size + n].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"unreadable checkpoint header: {exc}") from exc
    if header.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"unknown checkpoint format {header.get('format')!r}")
    return header, data[_LEN.size + n :]
