"""Central finite-difference checks for every differentiable operation.

Each check builds a random instance, contracts the operation's output with a
random cotangent ``G`` to get a scalar, and compares the analytic gradient of
``sum(G * out)`` against central differences with step ``1e-5``. Inputs are
drawn away from kinks (ReLU at 0, pooling ties, integer sample coordinates,
the hinge at ``d = m``) so the finite differences are meaningful.

Error metric: ``max|analytic - numeric| / max(max|analytic|, max|numeric|)``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .correspondences import CorrespondenceSet
from .featuremap import FeatureMap
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
from .loss import LossConfig, contrastive_loss_backward, contrastive_loss_forward
from .transformer import (
    IDENTITY_THETA,
    affine_grid,
    bilinear_sample_backward_input,
    bilinear_sample_backward_theta,
    bilinear_sample_forward,
    conv_spatial_transformer_backward,
    conv_spatial_transformer_forward,
    theta_predictor_backward,
    theta_predictor_forward,
)

STEP = 1e-5
TOLERANCE = 1e-5
KINK_GAP = 1e-3


def numerical_gradient(f, x: np.ndarray, step: float = STEP) -> np.ndarray:
    """Central differences of scalar ``f()`` w.r.t. every entry of ``x`` (perturbed in place)."""
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    g = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        fp = f()
        flat[i] = orig - step
        fm = f()
        flat[i] = orig
        g[i] = (fp - fm) / (2 * step)
    return grad


def relative_error(analytic, numeric) -> float:
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = max(np.max(np.abs(analytic), initial=0.0), np.max(np.abs(numeric), initial=0.0))
    if scale == 0:
        return 0.0
    return float(np.max(np.abs(analytic - numeric)) / scale)


def _shape(rng, max_c=4, max_hw=8, even=False, min_c=1):
    n = int(rng.integers(1, 3))
    c = int(rng.integers(min_c, max_c + 1))
    h = int(rng.integers(2, max_hw + 1))
    w = int(rng.integers(2, max_hw + 1))
    if even:
        h, w = 2 * (h // 2), 2 * (w // 2)
    return n, c, h, w


def check_conv2d(rng):
    n, c, h, w = _shape(rng, max_c=3, max_hw=7)
    k = int(rng.choice([1, 3]))
    stride = int(rng.integers(1, 3))
    pad = int(rng.integers(0, k // 2 + 1))
    h, w = max(h, k), max(w, k)
    x = rng.normal(size=(n, c, h, w))
    W = rng.normal(size=(int(rng.integers(1, 4)), c, k, k))
    b = rng.normal(size=W.shape[0])
    out, cache = conv2d_forward(x, ConvParams(W, b, stride, pad))
    G = rng.normal(size=out.shape)
    dx, dW, db = conv2d_backward(G, cache)
    f = lambda: np.sum(G * conv2d_forward(x, ConvParams(W, b, stride, pad))[0])
    return max(
        relative_error(dx, numerical_gradient(f, x)),
        relative_error(dW, numerical_gradient(f, W)),
        relative_error(db, numerical_gradient(f, b)),
    )


def check_relu(rng):
    x = rng.normal(size=_shape(rng))
    x = np.where(np.abs(x) < KINK_GAP, KINK_GAP * np.sign(x + 1e-300) * 2, x)
    out, cache = relu_forward(x)
    G = rng.normal(size=out.shape)
    f = lambda: np.sum(G * relu_forward(x)[0])
    return relative_error(relu_backward(G, cache), numerical_gradient(f, x))


def check_maxpool(rng):
    shape = _shape(rng, even=True)
    # distinct values spaced well beyond the FD step: no ties, no argmax flips
    x = (rng.permutation(int(np.prod(shape))) * 0.01 + rng.uniform(0, 1e-3)).reshape(shape)
    out, cache = maxpool2x2_forward(x)
    G = rng.normal(size=out.shape)
    f = lambda: np.sum(G * maxpool2x2_forward(x)[0])
    return relative_error(maxpool2x2_backward(G, cache), numerical_gradient(f, x))


def check_l2_normalize(rng):
    # one channel maps to sign(x): the gradient vanishes identically
    x = rng.normal(size=_shape(rng, max_c=8, min_c=2))
    out, cache = channel_l2_normalize_forward(x)
    G = rng.normal(size=out.shape)
    f = lambda: np.sum(G * channel_l2_normalize_forward(x)[0])
    return relative_error(channel_l2_normalize_backward(G, cache), numerical_gradient(f, x))


def _theta_near_identity(rng, k, size=(), spread=0.3):
    """Affine parameters whose moving sample points all stay ``KINK_GAP`` away from integers."""
    offs = np.arange(k) - (k - 1) / 2
    yt, xt = np.meshgrid(offs, offs, indexing="ij")
    moving = (xt != 0) | (yt != 0)
    while True:
        theta = IDENTITY_THETA.reshape((4,) + (1,) * len(size)) + spread * rng.normal(size=(4,) + size)
        t = theta.reshape(4, -1)
        xs = t[0][:, None, None] * xt + t[1][:, None, None] * yt
        ys = t[2][:, None, None] * xt + t[3][:, None, None] * yt
        frac = np.concatenate([np.abs(xs - np.round(xs))[:, moving], np.abs(ys - np.round(ys))[:, moving]])
        if frac.size == 0 or frac.min() > KINK_GAP:
            return theta


def check_sampler_input(rng):
    c, h, w = int(rng.integers(1, 4)), int(rng.integers(3, 8)), int(rng.integers(3, 8))
    U = rng.normal(size=(c, h, w))
    theta = _theta_near_identity(rng, 3)
    grid = affine_grid(theta, 3)
    V, cache = bilinear_sample_forward(U, grid)
    G = rng.normal(size=V.shape)
    f = lambda: np.sum(G * bilinear_sample_forward(U, grid)[0])
    return relative_error(bilinear_sample_backward_input(G, cache), numerical_gradient(f, U))


def check_sampler_theta(rng):
    c, h, w = int(rng.integers(1, 4)), int(rng.integers(3, 8)), int(rng.integers(3, 8))
    U = rng.normal(size=(c, h, w))
    theta = _theta_near_identity(rng, 3)
    V, cache = bilinear_sample_forward(U, affine_grid(theta, 3))
    G = rng.normal(size=V.shape)
    f = lambda: np.sum(G * bilinear_sample_forward(U, affine_grid(theta, 3))[0])
    return relative_error(bilinear_sample_backward_theta(G, cache), numerical_gradient(f, theta))


def check_spatial_transformer(rng):
    n, c = int(rng.integers(1, 3)), int(rng.integers(1, 3))
    h, w = int(rng.integers(2, 5)), int(rng.integers(2, 5))
    k = 3
    x = rng.normal(size=(n, c, h, w))
    theta = np.moveaxis(_theta_near_identity(rng, k, size=(n, h, w)), 0, 1).copy()
    W = rng.normal(size=(int(rng.integers(1, 3)), c, k, k))
    b = rng.normal(size=W.shape[0])

    def run():
        return conv_spatial_transformer_forward(x, theta, ConvParams(W, b, k, 0), k)

    out, cache = run()
    G = rng.normal(size=out.shape)
    dx, dtheta, dW, db = conv_spatial_transformer_backward(G, cache)
    f = lambda: np.sum(G * run()[0])
    return max(
        relative_error(dx, numerical_gradient(f, x)),
        relative_error(dtheta, numerical_gradient(f, theta)),
        relative_error(dW, numerical_gradient(f, W)),
        relative_error(db, numerical_gradient(f, b)),
    )


def check_theta_predictor(rng):
    n, c, h, w = _shape(rng, max_c=3, max_hw=6)
    x = rng.normal(size=(n, c, h, w))
    W = 0.1 * rng.normal(size=(4, c, 3, 3))
    b = IDENTITY_THETA + 0.1 * rng.normal(size=4)
    p = lambda: ConvParams(W, b, 1, 1)
    out, cache = theta_predictor_forward(x, p())
    G = rng.normal(size=out.shape)
    dx, dW, db = theta_predictor_backward(G, cache)
    f = lambda: np.sum(G * theta_predictor_forward(x, p())[0])
    return max(
        relative_error(dx, numerical_gradient(f, x)),
        relative_error(dW, numerical_gradient(f, W)),
        relative_error(db, numerical_gradient(f, b)),
    )


def check_contrastive_loss(rng):
    d = int(rng.integers(2, 9))
    stride = int(rng.integers(1, 5))
    h, w = int(rng.integers(4, 13)), int(rng.integers(4, 13))
    gh, gw = -(-h // stride), -(-w // stride)
    f1 = rng.normal(size=(1, d, gh, gw))
    f2 = rng.normal(size=(1, d, gh, gw))
    n = int(rng.integers(2, 12))
    while True:
        pairs = CorrespondenceSet(
            rng.uniform(0, w - 1, n), rng.uniform(0, h - 1, n),
            rng.uniform(0, w - 1, n), rng.uniform(0, h - 1, n),
            rng.integers(0, 2, n), (h, w), (h, w),
        )
        F1, F2 = FeatureMap(f1, stride, (h, w)), FeatureMap(f2, stride, (h, w))
        _, cache = contrastive_loss_forward(F1, F2, pairs, LossConfig(1.0))
        margin = float(np.median(cache.dist)) + 0.1
        neg = pairs.s == 0
        if np.all(np.abs(cache.dist[neg] - margin) > KINK_GAP) and np.all(cache.dist[neg] > KINK_GAP):
            break
    cfg = LossConfig(margin)
    _, cache = contrastive_loss_forward(F1, F2, pairs, cfg)
    d1, d2 = contrastive_loss_backward(cache)
    f = lambda: contrastive_loss_forward(FeatureMap(f1, stride, (h, w)), FeatureMap(f2, stride, (h, w)),
                                         pairs, cfg)[0]
    return max(relative_error(d1, numerical_gradient(f, f1)), relative_error(d2, numerical_gradient(f, f2)))


CHECKS = {
    "conv2d": check_conv2d,
    "relu": check_relu,
    "maxpool2x2": check_maxpool,
    "l2_normalize": check_l2_normalize,
    "bilinear_sampler_input": check_sampler_input,
    "bilinear_sampler_theta": check_sampler_theta,
    "conv_spatial_transformer": check_spatial_transformer,
    "theta_predictor": check_theta_predictor,
    "contrastive_loss": check_contrastive_loss,
}


@dataclass
class CheckResult:
    name: str
    max_error: float
    worst_seed: int
    seconds: float

    @property
    def passed(self) -> bool:
        return self.max_error < TOLERANCE


def run_suite(seeds=range(100), names=None) -> list:
    results = []
    order = list(CHECKS)
    for name in names or order:
        fn = CHECKS[name]
        start = time.perf_counter()
        worst, worst_seed = 0.0, -1
        for seed in seeds:
            err = fn(np.random.default_rng([seed, order.index(name)]))
            if err >= worst:
                worst, worst_seed = err, seed
        results.append(CheckResult(name, worst, worst_seed, time.perf_counter() - start))
    return results
