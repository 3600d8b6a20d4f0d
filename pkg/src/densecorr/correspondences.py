"""Labelled point pairs between two images and their text serialization.

Text format (UTF-8)::

    x y xp yp s [d1 d2]
    12.5 40.0 15.25 43.0 1
    ...
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .exceptions import ConfigError, DomainError, ShapeError

HEADER = "x y xp yp s"


@dataclass
class CorrespondenceSet:
    """Columns ``x, y`` (image 1), ``xp, yp`` (image 2) in pixels and labels ``s``.

    ``shape1`` / ``shape2`` are the ``(h, w)`` of the two images; when given,
    every point must satisfy ``0 <= x < w`` and ``0 <= y < h``.
    """

    x: np.ndarray
    y: np.ndarray
    xp: np.ndarray
    yp: np.ndarray
    s: np.ndarray
    shape1: Optional[tuple] = None
    shape2: Optional[tuple] = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64).reshape(-1)
        self.y = np.asarray(self.y, dtype=np.float64).reshape(-1)
        self.xp = np.asarray(self.xp, dtype=np.float64).reshape(-1)
        self.yp = np.asarray(self.yp, dtype=np.float64).reshape(-1)
        self.s = np.asarray(self.s).reshape(-1).astype(np.int64)
        n = self.x.size
        if not all(a.size == n for a in (self.y, self.xp, self.yp, self.s)):
            raise ShapeError("correspondence columns have different lengths")
        if not np.all((self.s == 0) | (self.s == 1)):
            raise ConfigError("labels s must be 0 or 1")
        for pts, shape, which in (((self.x, self.y), self.shape1, "image 1"),
                                  ((self.xp, self.yp), self.shape2, "image 2")):
            if shape is None:
                continue
            h, w = shape
            px, py = pts
            if np.any((px < 0) | (px >= w) | (py < 0) | (py >= h)):
                raise DomainError(f"point outside {which} of size {h}x{w}")

    def __len__(self):
        return self.x.size

    @classmethod
    def from_arrays(cls, pts1, pts2, s=1, shape1=None, shape2=None):
        pts1 = np.asarray(pts1, dtype=np.float64).reshape(-1, 2)
        pts2 = np.asarray(pts2, dtype=np.float64).reshape(-1, 2)
        s = np.broadcast_to(np.asarray(s), (pts1.shape[0],))
        return cls(pts1[:, 0], pts1[:, 1], pts2[:, 0], pts2[:, 1], s, shape1, shape2)

    @property
    def pts1(self):
        return np.stack([self.x, self.y], axis=1)

    @property
    def pts2(self):
        return np.stack([self.xp, self.yp], axis=1)

    def subset(self, mask):
        return CorrespondenceSet(
            self.x[mask], self.y[mask], self.xp[mask], self.yp[mask], self.s[mask],
            self.shape1, self.shape2,
            {k: np.asarray(v)[mask] for k, v in self.extra.items()},
        )

    def concat(self, other: "CorrespondenceSet") -> "CorrespondenceSet":
        return CorrespondenceSet(
            np.concatenate([self.x, other.x]),
            np.concatenate([self.y, other.y]),
            np.concatenate([self.xp, other.xp]),
            np.concatenate([self.yp, other.yp]),
            np.concatenate([self.s, other.s]),
            self.shape1 or other.shape1,
            self.shape2 or other.shape2,
        )


def write_correspondences(path, pairs: CorrespondenceSet, extra_columns=()):
    """Write records; ``extra_columns`` names arrays in ``pairs.extra`` (e.g. d1, d2)."""
    cols = [pairs.x, pairs.y, pairs.xp, pairs.yp]
    header = HEADER + "".join(" " + name for name in extra_columns)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(header + "\n")
        for i in range(len(pairs)):
            fields = [repr(float(c[i])) for c in cols] + [str(int(pairs.s[i]))]
            fields += [repr(float(pairs.extra[name][i])) for name in extra_columns]
            fh.write(" ".join(fields) + "\n")


def read_correspondences(path, shape1=None, shape2=None) -> CorrespondenceSet:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if header[:5] != HEADER.split():
            raise ShapeError(f"{path}: expected header {HEADER!r}, got {' '.join(header)!r}")
        rows = [line.split() for line in fh if line.strip()]
    if any(len(r) != len(header) for r in rows):
        raise ShapeError(f"{path}: ragged rows")
    data = np.array(rows, dtype=np.float64).reshape(-1, len(header))
    pairs = CorrespondenceSet(data[:, 0], data[:, 1], data[:, 2], data[:, 3],
                              data[:, 4].astype(np.int64), shape1, shape2)
    for j, name in enumerate(header[5:], start=5):
        pairs.extra[name] = data[:, j]
    return pairs
