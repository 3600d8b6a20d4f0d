"""Percentage of correct keypoints (PCK) at fixed, normalized and swept thresholds."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError, ShapeError

NORMS = ("max_dim", "diagonal")


@dataclass(frozen=True)
class PckCurve:
    thresholds: np.ndarray
    accuracy: np.ndarray

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("threshold,accuracy\n")
            for t, a in zip(self.thresholds, self.accuracy):
                fh.write(f"{t:g},{float(a)!r}\n")


def _errors(pred, gt) -> np.ndarray:
    pred = np.asarray(pred, dtype=np.float64).reshape(-1, 2)
    gt = np.asarray(gt, dtype=np.float64).reshape(-1, 2)
    if pred.shape != gt.shape:
        raise ShapeError(f"pred has {len(pred)} points, gt has {len(gt)}")
    if len(pred) == 0:
        raise ShapeError("PCK needs at least one keypoint")
    return np.hypot(pred[:, 0] - gt[:, 0], pred[:, 1] - gt[:, 1])


def pck(pred, gt, threshold: float) -> float:
    """Fraction of predictions strictly closer than ``threshold`` pixels to the truth."""
    err = _errors(pred, gt)
    return float(np.count_nonzero(err < threshold)) / err.size


def normalizer(image_shape, norm: str = "max_dim") -> float:
    h, w = image_shape
    if norm == "max_dim":
        return float(max(w, h))
    if norm == "diagonal":
        return float(np.sqrt(w * w + h * h))
    raise ConfigError(f"norm must be one of {NORMS}, got {norm!r}")


def pck_alpha(pred, gt, alpha: float, image_shape, norm: str = "max_dim") -> float:
    """PCK with threshold ``alpha * L``; ``L`` is ``max(w, h)`` or the image diagonal."""
    if not 0 < alpha < 1:
        raise ConfigError(f"alpha must lie in (0, 1), got {alpha}")
    return pck(pred, gt, alpha * normalizer(image_shape, norm))


def pck_curve(pred, gt, t_min: float = 1, t_max: float = 100, step: float = 1) -> PckCurve:
    if t_min > t_max or step <= 0:
        raise ConfigError(f"invalid threshold range [{t_min}, {t_max}] step {step}")
    err = np.sort(_errors(pred, gt))
    n_steps = int(np.floor((t_max - t_min) / step + 1e-9)) + 1
    thresholds = t_min + step * np.arange(n_steps)
    # count of errors strictly below each threshold
    accuracy = np.searchsorted(err, thresholds, side="left") / err.size
    return PckCurve(thresholds, accuracy)
