"""Correspondence contrastive loss and negative sampling.

For ``N`` labelled pairs with feature distance ``d_i``::

    L = 1/(2N) * sum_i [ s_i * d_i**2 + (1 - s_i) * max(0, m - d_i)**2 ]

Features are read from dense maps by bilinear interpolation, so gradients flow
back to the four grid sites around each point.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .correspondences import CorrespondenceSet
from .exceptions import ConfigError
from .featuremap import FeatureMap, LookupCache, lookup, lookup_backward, nearest_sites

DEFAULT_MARGIN = 1.0
DEFAULT_MINING_RADIUS = 16.0


@dataclass(frozen=True)
class LossConfig:
    margin: float = DEFAULT_MARGIN

    def __post_init__(self):
        if not self.margin > 0:
            raise ConfigError(f"margin must be positive, got {self.margin}")


class LossCache(NamedTuple):
    diff: np.ndarray
    dist: np.ndarray
    s: np.ndarray
    margin: float
    cache1: LookupCache
    cache2: LookupCache


def pair_distances(F1: FeatureMap, F2: FeatureMap, pairs: CorrespondenceSet):
    f1, c1 = lookup(F1, pairs.x, pairs.y)
    f2, c2 = lookup(F2, pairs.xp, pairs.yp)
    diff = f1 - f2
    return diff, np.sqrt(np.sum(diff * diff, axis=1)), c1, c2


def contrastive_loss_forward(F1: FeatureMap, F2: FeatureMap, pairs: CorrespondenceSet,
                             cfg: LossConfig = LossConfig()):
    """Return ``(loss, cache)``; ``N`` counts every record in ``pairs``."""
    if len(pairs) == 0:
        raise ConfigError("contrastive loss needs at least one pair")
    diff, dist, c1, c2 = pair_distances(F1, F2, pairs)
    s = pairs.s.astype(np.float64)
    hinge = np.maximum(0.0, cfg.margin - dist)
    loss = np.sum(s * dist**2 + (1.0 - s) * hinge**2) / (2.0 * len(pairs))
    return float(loss), LossCache(diff, dist, s, cfg.margin, c1, c2)


def contrastive_loss_backward(cache: LossCache, scale: float = 1.0):
    """Gradients ``(dF1, dF2)`` as ``(1, d, gh, gw)`` arrays.

    An active negative pair at zero distance has no defined direction and
    contributes zero gradient.
    """
    n = cache.s.size
    dist = cache.dist
    active = (cache.s == 0) & (dist < cache.margin) & (dist > 0)
    coef = cache.s.copy()
    safe = np.where(active, dist, 1.0)
    coef = np.where(active, -(cache.margin - dist) / safe, coef)
    dfeat = (scale / n) * coef[:, None] * cache.diff
    return lookup_backward(dfeat, cache.cache1), lookup_backward(-dfeat, cache.cache2)


def mine_hard_negatives(F1: FeatureMap, F2: FeatureMap, positives: CorrespondenceSet,
                        radius_px: float = DEFAULT_MINING_RADIUS) -> CorrespondenceSet:
    """Nearest grid site in ``F2`` for each positive query; keep it when it is far from the truth.

    A query at ``(x, y)`` whose nearest neighbour lies more than ``radius_px``
    pixels from its true match ``(xp, yp)`` yields the negative
    ``(x, y, nn_x, nn_y, 0)``. Ties go to the lowest grid index.
    """
    if F1.site_vectors().size == 0 or F2.site_vectors().size == 0:
        raise ConfigError("cannot mine on an empty feature map")
    if np.any(positives.s != 1):
        raise ConfigError("mining expects positive pairs only")
    queries, _ = lookup(F1, positives.x, positives.y)
    nn = nearest_sites(queries, F2)
    nn_xy = F2.site_coords(nn.index)
    err = np.hypot(nn_xy[:, 0] - positives.xp, nn_xy[:, 1] - positives.yp)
    far = err > radius_px
    return CorrespondenceSet(
        positives.x[far], positives.y[far], nn_xy[far, 0], nn_xy[far, 1],
        np.zeros(int(far.sum()), dtype=np.int64), positives.shape1, positives.shape2,
    )


def random_negatives(positives: CorrespondenceSet, min_dist_px: float, rng_seed,
                     shape2=None, max_rounds: int = 1000) -> CorrespondenceSet:
    """One random pixel of image 2 per positive, strictly farther than ``min_dist_px`` from the truth."""
    shape2 = shape2 or positives.shape2
    if shape2 is None:
        raise ConfigError("image 2 shape is required for random negatives")
    h, w = shape2
    n = len(positives)
    # the farthest pixel from any point is one of the corners
    corners = np.array([[0, 0], [w - 1, 0], [0, h - 1], [w - 1, h - 1]], dtype=np.float64)
    reach = np.max(
        np.hypot(corners[None, :, 0] - positives.xp[:, None], corners[None, :, 1] - positives.yp[:, None]),
        axis=1,
    ) if n else np.zeros(0)
    if np.any(reach <= min_dist_px):
        raise ConfigError(f"no pixel lies more than {min_dist_px}px from some ground-truth point")

    rng = np.random.default_rng(rng_seed)
    xs = np.empty(n)
    ys = np.empty(n)
    todo = np.arange(n)
    for _ in range(max_rounds):
        if todo.size == 0:
            break
        cx = rng.integers(0, w, size=todo.size).astype(np.float64)
        cy = rng.integers(0, h, size=todo.size).astype(np.float64)
        ok = np.hypot(cx - positives.xp[todo], cy - positives.yp[todo]) > min_dist_px
        xs[todo[ok]] = cx[ok]
        ys[todo[ok]] = cy[ok]
        todo = todo[~ok]
    if todo.size:
        raise ConfigError("rejection sampling for random negatives did not converge")
    return CorrespondenceSet(positives.x, positives.y, xs, ys, np.zeros(n, dtype=np.int64),
                             positives.shape1, shape2)
