"""Dense feature maps with sub-pixel lookup and exhaustive nearest-site search."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .exceptions import ConfigError, DomainError, ShapeError
from .tensor import as_tensor
from .transformer import scatter_rows

NEAR_TIE_RTOL = 1e-10
SEARCH_CHUNK = 512


@dataclass
class FeatureMap:
    """Features ``(1, d, gh, gw)`` sampled every ``stride`` pixels of an ``(h, w)`` image.

    Grid site ``(i, j)`` sits at pixel ``(x, y) = (stride * j, stride * i)``.
    """

    features: np.ndarray
    stride: int
    image_shape: tuple

    def __post_init__(self):
        self.features = as_tensor(self.features)
        if self.features.shape[0] != 1:
            raise ShapeError("a FeatureMap holds a single image (batch size 1)")
        h, w = self.image_shape
        gh, gw = self.grid_shape
        if (gh, gw) != (-(-h // self.stride), -(-w // self.stride)):
            raise ShapeError(
                f"grid {gh}x{gw} violates stride contract for image {h}x{w}, stride {self.stride}"
            )

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def grid_shape(self) -> tuple:
        return self.features.shape[2:]

    def site_vectors(self) -> np.ndarray:
        """All grid features as ``(gh*gw, d)`` in raster order."""
        d = self.dim
        return self.features[0].reshape(d, -1).T

    def site_coords(self, index) -> np.ndarray:
        """Pixel ``(x, y)`` of linear grid indices."""
        gw = self.grid_shape[1]
        index = np.asarray(index)
        return np.stack([(index % gw) * self.stride, (index // gw) * self.stride], axis=-1).astype(
            np.float64
        )


class LookupCache(NamedTuple):
    grid_shape: tuple
    index: np.ndarray  # (N, 4) linear site indices
    weight: np.ndarray  # (N, 4)


def _lookup_weights(fmap: FeatureMap, x, y):
    h, w = fmap.image_shape
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if np.any((x < 0) | (x >= w) | (y < 0) | (y >= h)):
        raise DomainError(f"lookup outside image of size {h}x{w}")
    gh, gw = fmap.grid_shape
    gx = np.minimum(x / fmap.stride, gw - 1)
    gy = np.minimum(y / fmap.stride, gh - 1)
    x0 = np.clip(np.floor(gx).astype(np.intp), 0, max(gw - 2, 0))
    y0 = np.clip(np.floor(gy).astype(np.intp), 0, max(gh - 2, 0))
    x1 = np.minimum(x0 + 1, gw - 1)
    y1 = np.minimum(y0 + 1, gh - 1)
    fx = gx - x0
    fy = gy - y0
    index = np.stack([y0 * gw + x0, y0 * gw + x1, y1 * gw + x0, y1 * gw + x1], axis=1)
    weight = np.stack([(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy], axis=1)
    return index, weight


def lookup(fmap: FeatureMap, x, y):
    """Bilinearly interpolated features at pixel coordinates; returns ``(N, d)`` and a cache."""
    index, weight = _lookup_weights(fmap, x, y)
    sites = fmap.site_vectors()
    feats = np.einsum("nk,nkd->nd", weight, sites[index])
    return feats, LookupCache(fmap.grid_shape, index, weight)


def lookup_backward(dfeat, cache: LookupCache) -> np.ndarray:
    """Scatter ``(N, d)`` feature gradients back onto a ``(1, d, gh, gw)`` map."""
    gh, gw = cache.grid_shape
    dfeat = np.asarray(dfeat, dtype=np.float64)
    d = dfeat.shape[1]
    vals = (cache.weight[:, :, None] * dfeat[:, None, :]).reshape(-1, d)
    dsites = scatter_rows(cache.index.reshape(-1), vals, gh * gw)
    return dsites.T.reshape(1, d, gh, gw)


def feature_at(fmap: FeatureMap, x: float, y: float) -> np.ndarray:
    """Feature vector at one sub-pixel location."""
    return lookup(fmap, [x], [y])[0][0]


class NearestSites(NamedTuple):
    index: np.ndarray  # (N,) linear grid index of the nearest site
    d1: np.ndarray
    d2: np.ndarray


def nearest_sites(queries, fmap: FeatureMap, chunk: int = SEARCH_CHUNK) -> NearestSites:
    """Exhaustive Euclidean search over all grid sites of ``fmap``.

    Ties go to the lowest linear grid index. ``d2`` is the second-smallest
    distance (``inf`` when the map has a single site). Sites are ranked with
    the expansion ``|s|^2 - 2 q.s``; the reported distances are then
    recomputed directly from the differences.
    """
    sites = fmap.site_vectors()
    if sites.shape[0] == 0:
        raise ConfigError("cannot search an empty feature map")
    queries = np.asarray(queries, dtype=np.float64).reshape(-1, sites.shape[1])
    n = queries.shape[0]
    sq = np.einsum("sd,sd->s", sites, sites)
    index = np.empty(n, dtype=np.intp)
    second = np.full(n, -1, dtype=np.intp)
    for start in range(0, n, chunk):
        q = queries[start : start + chunk]
        score = sq[None, :] - 2.0 * (q @ sites.T)
        if sites.shape[0] == 1:
            index[start : start + chunk] = 0
            continue
        best = np.argmin(score, axis=1)
        rows = np.arange(score.shape[0])
        s1 = score[rows, best]
        score[rows, best] = np.inf
        nxt = np.argmin(score, axis=1)
        s2 = score[rows, nxt]
        score[rows, best] = s1
        # rounding in the expansion can reorder near-ties; settle those exactly
        tol = NEAR_TIE_RTOL * (np.einsum("nd,nd->n", q, q) + sq.max())
        near = score <= (s2 + tol)[:, None]
        for r in np.flatnonzero((near.sum(axis=1) > 2) | (s2 - s1 <= tol)):
            cols = np.flatnonzero(near[r])
            dist = np.linalg.norm(q[r] - sites[cols], axis=1)
            order = np.lexsort((cols, dist))
            best[r], nxt[r] = cols[order[0]], cols[order[1]]
        index[start : start + chunk] = best
        second[start : start + chunk] = nxt
    d1 = np.linalg.norm(queries - sites[index], axis=1)
    d2 = np.full(n, np.inf)
    if sites.shape[0] > 1:
        d2 = np.maximum(np.linalg.norm(queries - sites[second], axis=1), d1)
    return NearestSites(index, d1, d2)
