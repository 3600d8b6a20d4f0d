"""Deterministic synthetic image pairs and two-view scenes with exact ground truth."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import ndimage

from . import tensor
from .correspondences import CorrespondenceSet, read_correspondences, write_correspondences
from .exceptions import ConfigError, GenerationError
from .geometry import CalibratedPair, rotation_about

MIN_TEXTURE = 32
DEFAULT_CORRESPONDENCES = 1000
MAX_CORRESPONDENCES = 3000
MIN_INSIDE_FRACTION = 0.6
WARP_KINDS = ("translation", "affine", "homography")
# lattice periods (px) and amplitudes of the value-noise octaves
OCTAVES = ((8, 1.0), (4, 0.7), (2, 0.5))


def _value_noise(h, w, rng):
    img = np.zeros((h, w))
    for period, amp in OCTAVES:
        gh = h // period + 3
        gw = w // period + 3
        lattice = rng.random((gh, gw))
        up = ndimage.zoom(lattice, period, order=3, mode="nearest")
        oy, ox = rng.integers(0, period, size=2)
        img += amp * up[oy : oy + h, ox : ox + w]
    lo, hi = img.min(), img.max()
    return (img - lo) / (hi - lo)


def generate_texture(shape, seed, channels: int = 3) -> np.ndarray:
    """Multi-octave value noise of shape ``(channels, h, w)`` with values in ``[0, 1]``."""
    h, w = (int(v) for v in shape)
    if h < MIN_TEXTURE or w < MIN_TEXTURE:
        raise ConfigError(f"texture must be at least {MIN_TEXTURE}x{MIN_TEXTURE}, got {h}x{w}")
    rng = np.random.default_rng(seed)
    return np.stack([_value_noise(h, w, rng) for _ in range(channels)])


@dataclass
class WarpSpec:
    """Random warp family plus rendering settings for one image pair."""

    kind: str = "affine"
    image_shape: tuple = (48, 48)
    max_translation: float = 6.0
    max_rotation_deg: float = 15.0
    scale_range: tuple = (0.9, 1.1)
    max_shear: float = 0.05
    max_perspective: float = 5e-4
    noise_sigma: float = 0.02
    # per-channel photometric change applied to image 2: gain * value + offset
    gain_range: tuple = (1.0, 1.0)
    max_offset: float = 0.0
    n_correspondences: int = DEFAULT_CORRESPONDENCES
    channels: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.kind not in WARP_KINDS:
            raise ConfigError(f"warp kind must be one of {WARP_KINDS}, got {self.kind!r}")
        if not 1 <= self.n_correspondences <= MAX_CORRESPONDENCES:
            raise ConfigError(f"n_correspondences must lie in [1, {MAX_CORRESPONDENCES}]")
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be non-negative")
        self.image_shape = tuple(int(v) for v in self.image_shape)
        self.scale_range = tuple(float(v) for v in self.scale_range)
        self.gain_range = tuple(float(v) for v in self.gain_range)


@dataclass
class ImagePair:
    img1: np.ndarray
    img2: np.ndarray
    pairs: CorrespondenceSet
    warp: np.ndarray  # 3x3 map from image-1 pixels to image-2 pixels
    meta: dict = field(default_factory=dict)


def apply_warp(H, x, y):
    pts = np.stack([np.asarray(x, float), np.asarray(y, float), np.ones(np.size(x))])
    q = np.asarray(H) @ pts
    return q[0] / q[2], q[1] / q[2]


def _draw_warp(spec: WarpSpec, rng) -> np.ndarray:
    h, w = spec.image_shape
    tx, ty = rng.uniform(-spec.max_translation, spec.max_translation, size=2)
    center = np.array([[1.0, 0.0, (w - 1) / 2], [0.0, 1.0, (h - 1) / 2], [0.0, 0.0, 1.0]])
    uncenter = np.array([[1.0, 0.0, -(w - 1) / 2], [0.0, 1.0, -(h - 1) / 2], [0.0, 0.0, 1.0]])
    shift = np.array([[1.0, 0.0, tx], [0.0, 1.0, ty], [0.0, 0.0, 1.0]])
    if spec.kind == "translation":
        return shift
    a = np.radians(rng.uniform(-spec.max_rotation_deg, spec.max_rotation_deg))
    s = rng.uniform(*spec.scale_range)
    sh = rng.uniform(-spec.max_shear, spec.max_shear)
    A = np.eye(3)
    A[:2, :2] = s * np.array([[np.cos(a), -np.sin(a)], [np.sin(a), np.cos(a)]]) @ np.array([[1.0, sh], [0.0, 1.0]])
    if spec.kind == "homography":
        A[2, :2] = rng.uniform(-spec.max_perspective, spec.max_perspective, size=2)
    return shift @ center @ A @ uncenter


def warp_image(canvas, margin, H, out_shape):
    """Bilinearly resample ``canvas`` (image 1 padded by ``margin``) into the frame of image 2."""
    h, w = out_shape
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    sx, sy = apply_warp(np.linalg.inv(H), xx.ravel(), yy.ravel())
    coords = np.stack([sy + margin, sx + margin])
    return np.stack([
        ndimage.map_coordinates(c, coords, order=1, mode="nearest").reshape(h, w) for c in canvas
    ])


def generate_pair(spec: WarpSpec, max_tries: int = 20) -> ImagePair:
    """Render a textured image, warp it, and sample exact correspondences.

    The warp is redrawn until at least 60% of uniformly sampled image-1 points
    land inside image 2.
    """
    h, w = spec.image_shape
    rng = np.random.default_rng(spec.seed)
    margin = max(h, w) // 2 + int(np.ceil(spec.max_translation))
    canvas = generate_texture((h + 2 * margin, w + 2 * margin), rng.integers(2**63), spec.channels)
    img1 = canvas[:, margin : margin + h, margin : margin + w].copy()
    n = spec.n_correspondences

    for _ in range(max_tries):
        H = _draw_warp(spec, rng)
        n_draw = max(4 * n, 64)
        x = rng.uniform(0, w - 1, size=n_draw)
        y = rng.uniform(0, h - 1, size=n_draw)
        xp, yp = apply_warp(H, x, y)
        inside = (xp >= 0) & (xp <= w - 1) & (yp >= 0) & (yp <= h - 1)
        if inside.mean() >= MIN_INSIDE_FRACTION and inside.sum() >= n:
            break
    else:
        raise GenerationError(f"no warp kept {MIN_INSIDE_FRACTION:.0%} of points inside after {max_tries} tries")

    keep = np.flatnonzero(inside)[:n]
    img2 = warp_image(canvas, margin, H, (h, w))
    gain = rng.uniform(*spec.gain_range, size=(spec.channels, 1, 1))
    offset = rng.uniform(-spec.max_offset, spec.max_offset, size=(spec.channels, 1, 1))
    if spec.gain_range != (1.0, 1.0) or spec.max_offset > 0:
        img2 = gain * img2 + offset
    if spec.noise_sigma > 0:
        img2 = img2 + rng.normal(0.0, spec.noise_sigma, size=img2.shape)
    pairs = CorrespondenceSet(x[keep], y[keep], xp[keep], yp[keep],
                              np.ones(keep.size, dtype=np.int64), (h, w), (h, w))
    meta = {"spec": _jsonable(asdict(spec)), "warp": H.tolist()}
    return ImagePair(img1, img2, pairs, H, meta)


def generate_dataset(n_pairs: int, spec: WarpSpec) -> list:
    """``n_pairs`` independent pairs; pair ``i`` uses seed ``(spec.seed, i)``."""
    out = []
    for i in range(n_pairs):
        seed = int(np.random.SeedSequence([spec.seed, i]).generate_state(1)[0])
        out.append(generate_pair(_replace(spec, seed=seed)))
    return out


def _replace(spec, **kw):
    d = asdict(spec)
    d.update(kw)
    return WarpSpec(**d)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def save_bundle(path, pair: ImagePair) -> None:
    """Write ``img1.cnt1``, ``img2.cnt1``, ``pairs.txt`` and ``meta.json`` into ``path``."""
    os.makedirs(path, exist_ok=True)
    tensor.save(os.path.join(path, "img1.cnt1"), pair.img1[None])
    tensor.save(os.path.join(path, "img2.cnt1"), pair.img2[None])
    write_correspondences(os.path.join(path, "pairs.txt"), pair.pairs)
    with open(os.path.join(path, "meta.json"), "w", encoding="utf-8") as fh:
        json.dump(_jsonable(pair.meta), fh, indent=2, sort_keys=True)


def load_bundle(path) -> ImagePair:
    img1 = tensor.load(os.path.join(path, "img1.cnt1"))[0]
    img2 = tensor.load(os.path.join(path, "img2.cnt1"))[0]
    with open(os.path.join(path, "meta.json"), encoding="utf-8") as fh:
        meta = json.load(fh)
    shape1, shape2 = img1.shape[1:], img2.shape[1:]
    pairs = read_correspondences(os.path.join(path, "pairs.txt"), shape1, shape2)
    warp = np.asarray(meta["warp"]) if "warp" in meta else None
    return ImagePair(img1, img2, pairs, warp, meta)


# two-view scenes -----------------------------------------------------------

DEFAULT_K = np.array([[500.0, 0.0, 320.0], [0.0, 500.0, 240.0], [0.0, 0.0, 1.0]])
DEFAULT_IMAGE = (480, 640)


@dataclass
class TwoViewScene:
    pairs: CalibratedPair
    px1: np.ndarray
    px2: np.ndarray
    R: np.ndarray
    t: np.ndarray
    K: np.ndarray
    points: np.ndarray

    def meta(self) -> dict:
        return {"R": self.R.reshape(-1).tolist(), "t": self.t.tolist(), "K": self.K.reshape(-1).tolist()}


def random_motion(rng, max_angle_deg=10.0):
    axis = rng.normal(size=3)
    R = rotation_about(axis, rng.uniform(-max_angle_deg, max_angle_deg))
    t = rng.normal(size=3)
    return R, t / np.linalg.norm(t)


def generate_two_view_scene(n_points, motion=None, K=None, seed=0, noise_px=0.0,
                            depth_range=(4.0, 12.0), image_shape=DEFAULT_IMAGE) -> TwoViewScene:
    """Random points in camera 1's frustum seen by two calibrated cameras.

    ``motion`` is ``(R, t)`` with ``X2 = R @ X1 + t``; ``None`` draws a random
    rotation (up to 10 degrees) and unit translation. Points behind either
    camera are redrawn. Noise is Gaussian in pixels.
    """
    if n_points < 8:
        raise ConfigError(f"need at least 8 points, got {n_points}")
    rng = np.random.default_rng(seed)
    K = DEFAULT_K if K is None else np.asarray(K, dtype=np.float64)
    if motion is None:
        R, t = random_motion(rng)
    else:
        R = np.asarray(motion[0], dtype=np.float64)
        t = np.asarray(motion[1], dtype=np.float64)
        if np.linalg.norm(t) > 0:
            t = t / np.linalg.norm(t)
    h, w = image_shape
    Kinv = np.linalg.inv(K)
    points = np.empty((0, 3))
    for _ in range(1000):
        need = n_points - len(points)
        if need <= 0:
            break
        uv = np.stack([rng.uniform(0, w, need), rng.uniform(0, h, need), np.ones(need)], axis=1)
        X = (uv @ Kinv.T) * rng.uniform(*depth_range, size=(need, 1))
        X2 = X @ R.T + t
        points = np.vstack([points, X[X2[:, 2] > 0.1 * depth_range[0]]])
    points = points[:n_points]
    X2 = points @ R.T + t
    n1 = points[:, :2] / points[:, 2:3]
    n2 = X2[:, :2] / X2[:, 2:3]
    px1 = np.hstack([n1, np.ones((n_points, 1))]) @ K.T
    px2 = np.hstack([n2, np.ones((n_points, 1))]) @ K.T
    px1, px2 = px1[:, :2], px2[:, :2]
    if noise_px > 0:
        px1 = px1 + rng.normal(0.0, noise_px, size=px1.shape)
        px2 = px2 + rng.normal(0.0, noise_px, size=px2.shape)
        pairs = CalibratedPair.from_pixels(px1, px2, K)
    else:
        pairs = CalibratedPair(n1, n2, K)
    return TwoViewScene(pairs, px1, px2, R, t, K, points)
