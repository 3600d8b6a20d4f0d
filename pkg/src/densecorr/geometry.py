"""Relative camera motion from calibrated correspondences.

Pipeline: RANSAC over normalized 8-point essential matrices (Sampson inlier
test), SVD decomposition into four ``(R, t)`` candidates, and cheirality
voting to pick the one that puts the most points in front of both cameras.

Conventions: a 3-D point ``X`` in camera-1 coordinates maps to
``R @ X + t`` in camera 2, and ``E = [t]_x R`` so ``x2^T E x1 = 0`` for
normalized homogeneous image points.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DegenerateError, DomainError, EstimationFailedError, SelectionFailedError

DEFAULT_THRESHOLD = 1e-4
DEFAULT_ITERS = 1000
_W = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])


@dataclass
class CalibratedPair:
    """Matched points in normalized camera coordinates ``K^-1 [u, v, 1]``."""

    pts1: np.ndarray
    pts2: np.ndarray
    K: np.ndarray = None

    def __post_init__(self):
        self.pts1 = np.asarray(self.pts1, dtype=np.float64).reshape(-1, 2)
        self.pts2 = np.asarray(self.pts2, dtype=np.float64).reshape(-1, 2)
        if self.pts1.shape != self.pts2.shape:
            raise DomainError("point arrays differ in length")
        if not (np.all(np.isfinite(self.pts1)) and np.all(np.isfinite(self.pts2))):
            raise DomainError("non-finite coordinates")
        if self.K is not None:
            self.K = np.asarray(self.K, dtype=np.float64)

    def __len__(self):
        return self.pts1.shape[0]

    @classmethod
    def from_pixels(cls, px1, px2, K):
        K = np.asarray(K, dtype=np.float64)
        Kinv = np.linalg.inv(K)
        return cls(_dehomog(_homog(px1) @ Kinv.T), _dehomog(_homog(px2) @ Kinv.T), K)


@dataclass
class PoseEstimate:
    R: np.ndarray
    t: np.ndarray
    n_inliers: int
    inlier_mask: np.ndarray

    def to_dict(self) -> dict:
        return {
            "R": [float(v) for v in self.R.reshape(-1)],
            "t": [float(v) for v in self.t],
            "inliers": int(self.n_inliers),
        }


def _homog(p):
    p = np.asarray(p, dtype=np.float64).reshape(-1, 2)
    return np.hstack([p, np.ones((p.shape[0], 1))])


def _dehomog(p):
    return p[:, :2] / p[:, 2:3]


def skew(v) -> np.ndarray:
    x, y, z = np.asarray(v, dtype=np.float64)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def essential_from_pose(R, t) -> np.ndarray:
    return skew(t) @ np.asarray(R, dtype=np.float64)


def _hartley(p):
    centroid = p.mean(axis=0)
    mean_dist = np.mean(np.hypot(*(p - centroid).T))
    scale = np.sqrt(2.0) / mean_dist if mean_dist > 0 else 1.0
    return np.array([[scale, 0.0, -scale * centroid[0]],
                     [0.0, scale, -scale * centroid[1]],
                     [0.0, 0.0, 1.0]])


def _canonical(E):
    """Project to singular values (1, 1, 0) and fix the sign (largest |entry| positive)."""
    U, _, Vt = np.linalg.svd(E)
    E = U @ np.diag([1.0, 1.0, 0.0]) @ Vt
    flat = E.reshape(-1)
    if flat[np.argmax(np.abs(flat))] < 0:
        E = -E
    return E


def eight_point(pts1, pts2) -> np.ndarray:
    """Least-squares essential matrix from >= 8 normalized correspondences.

    Returns ``E`` with singular values ``(1, 1, 0)`` (Frobenius norm ``sqrt(2)``).
    """
    pts1 = np.asarray(pts1, dtype=np.float64).reshape(-1, 2)
    pts2 = np.asarray(pts2, dtype=np.float64).reshape(-1, 2)
    if pts1.shape[0] < 8 or pts1.shape != pts2.shape:
        raise DegenerateError(f"need at least 8 point pairs, got {pts1.shape[0]}")
    T1 = _hartley(pts1)
    T2 = _hartley(pts2)
    x1 = _homog(pts1) @ T1.T
    x2 = _homog(pts2) @ T2.T
    A = (x2[:, :, None] * x1[:, None, :]).reshape(-1, 9)
    _, s, Vt = np.linalg.svd(A)
    if s[7] <= 1e-10 * s[0]:
        raise DegenerateError("constraint matrix has a multi-dimensional null space")
    E = Vt[-1].reshape(3, 3)
    return _canonical(T2.T @ E @ T1)


def sampson_distance(E, pts1, pts2) -> np.ndarray:
    """First-order squared geometric error of each pair w.r.t. ``x2^T E x1 = 0``."""
    x1 = _homog(pts1)
    x2 = _homog(pts2)
    Ex1 = x1 @ E.T
    Etx2 = x2 @ E
    num = np.sum(x2 * Ex1, axis=1) ** 2
    den = Ex1[:, 0] ** 2 + Ex1[:, 1] ** 2 + Etx2[:, 0] ** 2 + Etx2[:, 1] ** 2
    return num / np.maximum(den, np.finfo(float).tiny)


def ransac_essential(pairs: CalibratedPair, threshold=DEFAULT_THRESHOLD, iters=DEFAULT_ITERS,
                     rng_seed=0):
    """Best-by-inlier-count 8-point model over ``iters`` random samples, refit on its inliers.

    Iteration ``i`` draws from its own stream seeded by ``(rng_seed, i)``;
    ties keep the earliest iteration.
    """
    n = len(pairs)
    if n < 8:
        raise EstimationFailedError(f"RANSAC needs at least 8 pairs, got {n}")
    best_count = -1
    best_E = None
    for it in range(iters):
        rng = np.random.default_rng([rng_seed, it])
        sample = rng.choice(n, size=8, replace=False)
        try:
            E = eight_point(pairs.pts1[sample], pairs.pts2[sample])
        except DegenerateError:
            continue
        count = int(np.count_nonzero(sampson_distance(E, pairs.pts1, pairs.pts2) < threshold))
        if count > best_count:
            best_count, best_E = count, E
            if count == n:
                break
    if best_E is None or best_count < 8:
        raise EstimationFailedError("no model reached 8 inliers")
    mask = sampson_distance(best_E, pairs.pts1, pairs.pts2) < threshold
    try:
        refit = eight_point(pairs.pts1[mask], pairs.pts2[mask])
    except DegenerateError:
        return best_E, mask
    refit_mask = sampson_distance(refit, pairs.pts1, pairs.pts2) < threshold
    if refit_mask.sum() >= mask.sum():
        return refit, refit_mask
    return best_E, mask


def _check_essential(E, tol=1e-8):
    E = np.asarray(E, dtype=np.float64)
    if E.shape != (3, 3) or not np.all(np.isfinite(E)):
        raise DomainError("essential matrix must be a finite 3x3 array")
    s = np.linalg.svd(E, compute_uv=False)
    if s[0] == 0 or s[2] > tol * s[0] or abs(s[0] - s[1]) > tol * s[0]:
        raise DomainError(f"not an essential matrix (singular values {s})")
    return E


def decompose_essential(E):
    """Four ``(R, t)`` candidates: ``{U W V^T, U W^T V^T} x {+u3, -u3}``, ``t`` unit length."""
    E = _check_essential(E)
    U, _, Vt = np.linalg.svd(E)
    if np.linalg.det(U) < 0:
        U = -U
    if np.linalg.det(Vt) < 0:
        Vt = -Vt
    R1 = U @ _W @ Vt
    R2 = U @ _W.T @ Vt
    t = U[:, 2] / np.linalg.norm(U[:, 2])
    return [(R1, t), (R1, -t), (R2, t), (R2, -t)]


def triangulate(R, t, pts1, pts2):
    """Linear triangulation with ``P1 = [I | 0]`` and ``P2 = [R | t]``; returns homogeneous ``(N, 4)``."""
    P1 = np.hstack([np.eye(3), np.zeros((3, 1))])
    P2 = np.hstack([R, np.reshape(t, (3, 1))])
    pts1 = np.asarray(pts1, dtype=np.float64).reshape(-1, 2)
    pts2 = np.asarray(pts2, dtype=np.float64).reshape(-1, 2)
    A = np.stack([
        pts1[:, 0:1] * P1[2] - P1[0],
        pts1[:, 1:2] * P1[2] - P1[1],
        pts2[:, 0:1] * P2[2] - P2[0],
        pts2[:, 1:2] * P2[2] - P2[1],
    ], axis=1)
    _, _, Vt = np.linalg.svd(A)
    return Vt[:, -1, :]


def cheirality_mask(R, t, pts1, pts2, eps=1e-9):
    """Points triangulated with positive depth in both cameras.

    Points at infinity or on either camera centre (zero depth) are degenerate
    and never counted.
    """
    X = triangulate(R, t, pts1, pts2)
    w = X[:, 3]
    finite = np.abs(w) > eps * np.linalg.norm(X[:, :3], axis=1)
    safe_w = np.where(finite, w, 1.0)
    Xe = X[:, :3] / safe_w[:, None]
    depth1 = Xe[:, 2]
    depth2 = Xe @ np.asarray(R)[2] + np.reshape(t, 3)[2]
    return finite & (depth1 > eps) & (depth2 > eps)


def select_pose(candidates, pairs: CalibratedPair) -> PoseEstimate:
    """Pick the candidate with the most points in front of both cameras (ties: lowest index)."""
    if len(pairs) < 1:
        raise SelectionFailedError("no pairs to vote with")
    best = None
    for R, t in candidates:
        mask = cheirality_mask(R, t, pairs.pts1, pairs.pts2)
        count = int(mask.sum())
        if best is None or count > best.n_inliers:
            best = PoseEstimate(np.asarray(R), np.asarray(t), count, mask)
    if best.n_inliers == 0:
        raise SelectionFailedError("no candidate places any point in front of both cameras")
    return best


def estimate_pose(pairs: CalibratedPair, threshold=DEFAULT_THRESHOLD, iters=DEFAULT_ITERS, rng_seed=0):
    """RANSAC essential matrix, decomposition and cheirality selection over the inliers."""
    E, mask = ransac_essential(pairs, threshold, iters, rng_seed)
    pose = select_pose(decompose_essential(E), CalibratedPair(pairs.pts1[mask], pairs.pts2[mask]))
    return PoseEstimate(pose.R, pose.t, int(mask.sum()), mask)


def _check_rotation(R, tol=1e-6):
    R = np.asarray(R, dtype=np.float64)
    if R.shape != (3, 3) or not np.all(np.isfinite(R)):
        raise DomainError("rotation must be a finite 3x3 array")
    if np.max(np.abs(R.T @ R - np.eye(3))) > tol or abs(np.linalg.det(R) - 1.0) > tol:
        raise DomainError("matrix is not a rotation")
    return R


def rotation_deviation_deg(R_pred, R_gt) -> float:
    """Angle ``arccos((tr(R_pred^T R_gt) - 1) / 2)`` in degrees.

    The cosine argument is clamped to ``[-1, 1]``. The angle is evaluated as
    ``atan2(sin, cos)`` with ``sin`` taken from the skew part of the relative
    rotation, which equals the arccos form on rotations but keeps full
    precision for tiny angles.
    """
    M = _check_rotation(R_pred).T @ _check_rotation(R_gt)
    cos = np.clip((np.trace(M) - 1.0) / 2.0, -1.0, 1.0)
    sin = 0.5 * np.linalg.norm([M[2, 1] - M[1, 2], M[0, 2] - M[2, 0], M[1, 0] - M[0, 1]])
    return float(np.degrees(np.arctan2(sin, cos)))


def translation_deviation_deg(t_pred, t_gt) -> float:
    """Angle between two translation directions in degrees (sign matters)."""
    a = np.asarray(t_pred, dtype=np.float64).reshape(3)
    b = np.asarray(t_gt, dtype=np.float64).reshape(3)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise DomainError("translation direction of a zero vector is undefined")
    a, b = a / na, b / nb
    cos = np.clip(a @ b, -1.0, 1.0)
    return float(np.degrees(np.arctan2(np.linalg.norm(np.cross(a, b)), cos)))


def rotation_about(axis, angle_deg) -> np.ndarray:
    """Rodrigues rotation matrix."""
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    a = np.radians(angle_deg)
    K = skew(axis)
    return np.eye(3) + np.sin(a) * K + (1 - np.cos(a)) * (K @ K)
