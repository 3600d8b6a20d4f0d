"""Momentum-SGD training of the shared-weight feature network."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .correspondences import CorrespondenceSet
from .exceptions import ConfigError, TrainingError
from .featuremap import FeatureMap
from .loss import (
    DEFAULT_MARGIN,
    DEFAULT_MINING_RADIUS,
    LossConfig,
    contrastive_loss_backward,
    contrastive_loss_forward,
    mine_hard_negatives,
    random_negatives,
)

logger = logging.getLogger(__name__)

NEGATIVE_MODES = ("hard", "random")


@dataclass
class TrainConfig:
    lr: float = 0.03
    momentum: float = 0.9
    steps: int = 200
    batch_size: int = 1
    margin: float = DEFAULT_MARGIN
    negatives: str = "hard"
    spatial_transformer: bool = False
    seed: int = 0
    mining_radius: float = DEFAULT_MINING_RADIUS
    # positives drawn per pair and step; None uses every stored correspondence
    n_correspondences: int = None

    def __post_init__(self):
        if not self.lr >= 0:
            raise ConfigError("lr must be non-negative")
        if self.steps < 1 or self.batch_size < 1:
            raise ConfigError("steps and batch_size must be >= 1")
        if self.negatives not in NEGATIVE_MODES:
            raise ConfigError(f"negatives must be one of {NEGATIVE_MODES}")
        LossConfig(self.margin)


@dataclass
class StepRecord:
    step: int
    loss: float
    n_pos: int
    n_neg: int


@dataclass
class TrainResult:
    net: object
    trace: list = field(default_factory=list)

    @property
    def losses(self) -> np.ndarray:
        return np.array([r.loss for r in self.trace])

    def write_trace(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("step,loss,n_pos,n_neg\n")
            for r in self.trace:
                fh.write(f"{r.step},{r.loss!r},{r.n_pos},{r.n_neg}\n")


def _as_pair(item):
    if hasattr(item, "img1"):
        return item.img1, item.img2, item.pairs
    img1, img2, pairs = item
    return img1, img2, pairs


def _negatives(cfg, F1, F2, positives, step, pair_id):
    if cfg.negatives == "hard":
        return mine_hard_negatives(F1, F2, positives, cfg.mining_radius)
    return random_negatives(positives, cfg.mining_radius, [cfg.seed, step, pair_id])


def pair_loss_and_grads(net, img1, img2, positives, cfg, grads, step=0, pair_id=0, scale=1.0):
    """One Siamese forward/backward on a pair; gradients of ``scale * loss`` go into ``grads``."""
    f1, cache1 = net.forward(np.asarray(img1)[None])
    f2, cache2 = net.forward(np.asarray(img2)[None])
    F1 = FeatureMap(f1, net.stride, img1.shape[-2:])
    F2 = FeatureMap(f2, net.stride, img2.shape[-2:])
    negatives = _negatives(cfg, F1, F2, positives, step, pair_id)
    batch = positives.concat(negatives)
    loss, lcache = contrastive_loss_forward(F1, F2, batch, LossConfig(cfg.margin))
    if not np.isfinite(loss):
        raise TrainingError(f"non-finite loss {loss} at step {step}, pair {pair_id}", step, pair_id)
    dF1, dF2 = contrastive_loss_backward(lcache, scale)
    net.backward(dF1, cache1, grads)
    net.backward(dF2, cache2, grads)
    return loss, len(positives), len(negatives)


def train(net, dataset, cfg: TrainConfig, callback=None) -> TrainResult:
    """Train ``net`` in place on a list of image pairs.

    Each step draws ``batch_size`` pairs, runs both images through the same
    parameters, adds hard or random negatives to the positives, and takes one
    momentum-SGD step on the mean loss. Pair and subsample choices at step
    ``i`` come from a stream seeded by ``(seed, i)``.
    """
    if len(dataset) == 0:
        raise ConfigError("dataset is empty")
    velocity = {k: np.zeros_like(v) for k, v in net.params.items()}
    result = TrainResult(net)
    for step in range(cfg.steps):
        rng = np.random.default_rng([cfg.seed, step])
        ids = rng.integers(0, len(dataset), size=cfg.batch_size)
        grads = net.zero_grads()
        total, n_pos, n_neg = 0.0, 0, 0
        for pid in ids:
            img1, img2, positives = _as_pair(dataset[int(pid)])
            positives = positives.subset(positives.s == 1)
            if cfg.n_correspondences is not None and len(positives) > cfg.n_correspondences:
                pick = np.sort(rng.choice(len(positives), cfg.n_correspondences, replace=False))
                positives = positives.subset(pick)
            loss, p, q = pair_loss_and_grads(net, img1, img2, positives, cfg, grads, step, int(pid),
                                             1.0 / cfg.batch_size)
            total += loss / cfg.batch_size
            n_pos += p
            n_neg += q
        for k, g in grads.items():
            velocity[k] = cfg.momentum * velocity[k] - cfg.lr * g
            net.params[k] = net.params[k] + velocity[k]
        result.trace.append(StepRecord(step, total, n_pos, n_neg))
        if callback is not None:
            callback(result.trace[-1])
        logger.debug("step %d loss %.5f pos %d neg %d", step, total, n_pos, n_neg)
    return result


def smoothed(values, window: int = 20) -> np.ndarray:
    """Trailing moving average (valid part only)."""
    values = np.asarray(values, dtype=np.float64)
    if values.size < window:
        return np.array([values.mean()]) if values.size else values
    c = np.cumsum(np.insert(values, 0, 0.0))
    return (c[window:] - c[:-window]) / window
