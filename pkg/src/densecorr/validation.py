"""Input checks shared by the estimator and the CLI."""

from __future__ import annotations

import numpy as np

from .correspondences import CorrespondenceSet
from .exceptions import ConfigError, ShapeError


def check_image(image, channels=None) -> np.ndarray:
    """Return a finite float64 ``(c, h, w)`` image (a leading batch of 1 is dropped)."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 4 and image.shape[0] == 1:
        image = image[0]
    if image.ndim == 2:
        image = image[None]
    if image.ndim != 3:
        raise ShapeError(f"expected an image of shape (c, h, w), got {image.shape}")
    if channels is not None and image.shape[0] != channels:
        raise ShapeError(f"expected {channels} channels, got {image.shape[0]}")
    if not np.all(np.isfinite(image)):
        raise ValueError("image contains NaN or Inf")
    return image


def check_images(images, channels=None) -> list:
    if isinstance(images, np.ndarray) and images.ndim == 4:
        images = list(images)
    elif isinstance(images, np.ndarray) and images.ndim in (2, 3):
        images = [images]
    return [check_image(im, channels) for im in images]


def check_keypoints(keypoints) -> np.ndarray:
    kp = np.asarray(keypoints, dtype=np.float64)
    if kp.ndim != 2 or kp.shape[1] != 2:
        raise ShapeError(f"keypoints must be (n, 2), got {kp.shape}")
    return kp


def check_pair_dataset(X, channels=None) -> list:
    """Normalize training input to ``[(img1, img2, CorrespondenceSet), ...]``.

    Accepts objects with ``img1/img2/pairs`` attributes (e.g. synthetic
    ``ImagePair``) or plain 3-tuples.
    """
    if X is None or len(X) == 0:
        raise ConfigError("need at least one image pair")
    out = []
    for item in X:
        if hasattr(item, "img1"):
            img1, img2, pairs = item.img1, item.img2, item.pairs
        else:
            img1, img2, pairs = item
        if not isinstance(pairs, CorrespondenceSet):
            raise TypeError(f"expected a CorrespondenceSet, got {type(pairs).__name__}")
        out.append((check_image(img1, channels), check_image(img2, channels), pairs))
    return out
