"""Single-pass dense feature extraction and nearest-neighbour correspondence search."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .correspondences import CorrespondenceSet
from .exceptions import ConfigError, ShapeError
from .featuremap import FeatureMap, lookup, nearest_sites

DEFAULT_RATIO = 0.8


def extract_features(net, image) -> FeatureMap:
    """Run ``net`` once over a whole ``(c, h, w)`` image.

    The cost is one forward pass per image no matter how many keypoints are
    queried afterwards.
    """
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 3:
        image = image[None]
    if image.ndim != 4 or image.shape[0] != 1:
        raise ShapeError(f"expected a single (c, h, w) image, got {image.shape}")
    h, w = image.shape[2:]
    if min(h, w) < 2 * net.stride:
        raise ShapeError(f"image {h}x{w} is smaller than the network minimum")
    feats, _ = net.forward(image)
    return FeatureMap(feats, net.stride, (h, w))


@dataclass
class MatchResult:
    """Per-keypoint prediction: query ``(x, y)``, predicted ``(xp, yp)``, distances ``d1 <= d2``."""

    x: np.ndarray
    y: np.ndarray
    xp: np.ndarray
    yp: np.ndarray
    d1: np.ndarray
    d2: np.ndarray
    degenerate: np.ndarray

    def __len__(self):
        return self.x.size

    @property
    def pred(self):
        return np.stack([self.xp, self.yp], axis=1)

    def subset(self, mask) -> "MatchResult":
        return MatchResult(*(getattr(self, f)[mask] for f in
                             ("x", "y", "xp", "yp", "d1", "d2", "degenerate")))

    def to_correspondences(self, shape1=None, shape2=None) -> CorrespondenceSet:
        pairs = CorrespondenceSet(self.x, self.y, self.xp, self.yp, np.ones(len(self), dtype=np.int64),
                                  shape1, shape2)
        pairs.extra.update(d1=self.d1, d2=self.d2)
        return pairs


def match_keypoints(query_map: FeatureMap, ref_map: FeatureMap, keypoints) -> MatchResult:
    """Predict a correspondence for each ``(x, y)`` keypoint by exhaustive grid search."""
    if ref_map.site_vectors().size == 0:
        raise ConfigError("reference feature map is empty")
    keypoints = np.asarray(keypoints, dtype=np.float64).reshape(-1, 2)
    feats, _ = lookup(query_map, keypoints[:, 0], keypoints[:, 1])
    nn = nearest_sites(feats, ref_map)
    xy = ref_map.site_coords(nn.index)
    return MatchResult(keypoints[:, 0].copy(), keypoints[:, 1].copy(), xy[:, 0], xy[:, 1],
                       nn.d1, nn.d2, np.zeros(len(keypoints), dtype=bool))


def ratio_test_filter(matches: MatchResult, ratio: float = DEFAULT_RATIO) -> MatchResult:
    """Keep matches with ``d1 < ratio * d2``.

    When ``d2 == 0`` the match is kept only if ``d1 == 0`` and is flagged as
    degenerate.
    """
    if not 0 < ratio < 1:
        raise ConfigError(f"ratio must lie in (0, 1), got {ratio}")
    zero = matches.d2 == 0
    keep = np.where(zero, matches.d1 == 0, matches.d1 < ratio * matches.d2)
    out = matches.subset(keep)
    out.degenerate = out.degenerate | (out.d2 == 0)
    return out


def match_pair(net, img1, img2, keypoints) -> MatchResult:
    """Extract both maps (two forward passes) and match ``keypoints`` from image 1 into image 2."""
    return match_keypoints(extract_features(net, img1), extract_features(net, img2), keypoints)


def pair_pck(net, pair, threshold: float = 10.0, max_keypoints=None) -> float:
    """PCK@threshold of nearest-neighbour predictions against a pair's ground truth."""
    from .evaluation import pck

    gt = pair.pairs.subset(pair.pairs.s == 1)
    if max_keypoints is not None:
        gt = gt.subset(slice(0, max_keypoints))
    result = match_pair(net, pair.img1, pair.img2, gt.pts1)
    return pck(result.pred, gt.pts2, threshold)
