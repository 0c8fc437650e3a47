"""Planar homography estimation: normalized DLT inside a seeded RANSAC loop."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

RANSAC_MAX_ITERS = 1000
RANSAC_THRESHOLD_PX = 3.0
RANSAC_CONFIDENCE = 0.99


class HomographyError(ValueError):
    """Not enough usable correspondences to estimate a map."""


@dataclass(frozen=True)
class Homography:
    """3x3 projective map, normalized so h[2,2] == 1, with fit diagnostics."""

    h: np.ndarray
    inlier_count: int = 0
    mean_residual: float = 0.0
    inliers: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        h = np.asarray(self.h, dtype=np.float64)
        if h.shape != (3, 3):
            raise ValueError("homography must be 3x3")
        if abs(h[2, 2]) < 1e-12:
            raise ValueError("homography has vanishing scale entry")
        h = h / h[2, 2]
        if abs(np.linalg.det(h)) <= 1e-12:
            raise ValueError("homography must be invertible")
        object.__setattr__(self, "h", h)

    def apply(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        ph = np.hstack([pts, np.ones((pts.shape[0], 1))])
        q = ph @ self.h.T
        return q[:, :2] / q[:, 2:3]

    def apply_point(self, x: float, y: float) -> tuple[float, float]:
        out = self.apply(np.array([[x, y]]))
        return float(out[0, 0]), float(out[0, 1])

    def inverse_matrix(self) -> np.ndarray:
        inv = np.linalg.inv(self.h)
        return inv / inv[2, 2]

    def compose(self, inner: np.ndarray) -> "Homography":
        """This map applied after `inner` (matrix product), diagnostics kept."""
        return Homography(self.h @ inner, inlier_count=self.inlier_count,
                          mean_residual=self.mean_residual, inliers=self.inliers)

    @staticmethod
    def identity() -> "Homography":
        return Homography(np.eye(3))


def _normalize_points(pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Shift to centroid and scale mean radius to sqrt(2); returns (pts_n, T)."""
    c = pts.mean(axis=0)
    d = np.sqrt(((pts - c) ** 2).sum(axis=1)).mean()
    s = np.sqrt(2.0) / max(d, 1e-12)
    T = np.array([[s, 0.0, -s * c[0]],
                  [0.0, s, -s * c[1]],
                  [0.0, 0.0, 1.0]])
    ph = np.hstack([pts, np.ones((pts.shape[0], 1))])
    return (ph @ T.T)[:, :2], T


def _dlt(src_n: np.ndarray, dst_n: np.ndarray) -> np.ndarray | None:
    """Direct linear transform on normalized coordinates; None if degenerate."""
    n = src_n.shape[0]
    x, y = src_n[:, 0], src_n[:, 1]
    u, v = dst_n[:, 0], dst_n[:, 1]
    zeros = np.zeros(n)
    ones = np.ones(n)
    a = np.empty((2 * n, 9))
    a[0::2] = np.column_stack([x, y, ones, zeros, zeros, zeros, -u * x, -u * y, -u])
    a[1::2] = np.column_stack([zeros, zeros, zeros, x, y, ones, -v * x, -v * y, -v])
    _, sv, vt = np.linalg.svd(a)
    if n == 4 and sv[-2] < 1e-9:
        return None  # rank-deficient minimal sample (collinear points)
    h = vt[-1].reshape(3, 3)
    if abs(h[2, 2]) < 1e-12:
        return None
    return h / h[2, 2]


def _fit(src: np.ndarray, dst: np.ndarray) -> np.ndarray | None:
    src_n, t_src = _normalize_points(src)
    dst_n, t_dst = _normalize_points(dst)
    hn = _dlt(src_n, dst_n)
    if hn is None:
        return None
    h = np.linalg.inv(t_dst) @ hn @ t_src
    if abs(h[2, 2]) < 1e-12 or abs(np.linalg.det(h)) <= 1e-12:
        return None
    return h / h[2, 2]


def _residuals(h: np.ndarray, src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    ph = np.hstack([src, np.ones((src.shape[0], 1))])
    q = ph @ h.T
    wcol = q[:, 2:3]
    bad = np.abs(wcol[:, 0]) < 1e-12
    wcol = np.where(np.abs(wcol) < 1e-12, 1e-12, wcol)
    proj = q[:, :2] / wcol
    err = np.sqrt(((proj - dst) ** 2).sum(axis=1))
    err[bad] = np.inf
    return err


def _sample_spread(pts: np.ndarray) -> bool:
    """Reject near-collinear 4-point samples by max triangle area."""
    idx = ((0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3))
    best = 0.0
    for i, j, k in idx:
        v1 = pts[j] - pts[i]
        v2 = pts[k] - pts[i]
        best = max(best, 0.5 * abs(v1[0] * v2[1] - v1[1] * v2[0]))
    scale = max(np.ptp(pts[:, 0]), np.ptp(pts[:, 1]), 1.0)
    return best > 1e-6 * scale * scale


def estimate_homography(src, dst,
                        threshold: float = RANSAC_THRESHOLD_PX,
                        max_iters: int = RANSAC_MAX_ITERS,
                        confidence: float = RANSAC_CONFIDENCE,
                        seed: int = 0) -> Homography:
    """RANSAC over 4-point DLT hypotheses, then least-squares refit on inliers.

    Forward reprojection error gates inliers; the returned inlier set is
    recomputed under the final refit matrix, so every member reprojects
    within `threshold` by construction. Deterministic for a fixed seed.
    """
    src = np.asarray(src, dtype=np.float64).reshape(-1, 2)
    dst = np.asarray(dst, dtype=np.float64).reshape(-1, 2)
    n = src.shape[0]
    if n != dst.shape[0]:
        raise HomographyError("source and destination counts differ")
    if n < 4:
        raise HomographyError(f"need >= 4 correspondences, got {n}")

    rng = np.random.default_rng(seed)
    best_h: np.ndarray | None = None
    best_inliers: np.ndarray | None = None
    best_count = 0
    best_err = np.inf
    needed = max_iters
    attempts = 0
    valid_samples = 0

    while attempts < min(max_iters, needed):
        attempts += 1
        idx = rng.choice(n, size=4, replace=False)
        if not (_sample_spread(src[idx]) and _sample_spread(dst[idx])):
            continue
        h = _fit(src[idx], dst[idx])
        if h is None:
            continue
        valid_samples += 1
        err = _residuals(h, src, dst)
        inliers = err <= threshold
        count = int(inliers.sum())
        mean_err = float(err[inliers].mean()) if count else np.inf
        if count > best_count or (count == best_count and mean_err < best_err):
            best_h, best_inliers = h, inliers
            best_count, best_err = count, mean_err
            w = count / n
            if 0.0 < w < 1.0:
                denom = np.log(max(1.0 - w ** 4, 1e-12))
                needed = min(max_iters, int(np.ceil(np.log(1.0 - confidence) / denom)))
            elif w >= 1.0:
                needed = attempts

    if best_h is None or best_count < 4:
        if valid_samples == 0:
            raise HomographyError("all RANSAC samples degenerate (collinear correspondences)")
        raise HomographyError(f"no consensus: best support {best_count} < 4")

    # refit on inliers until the inlier set stabilizes (bounded)
    h_final, inliers = best_h, best_inliers
    for _ in range(3):
        refit = _fit(src[inliers], dst[inliers])
        if refit is None:
            break
        err = _residuals(refit, src, dst)
        new_inliers = err <= threshold
        if int(new_inliers.sum()) < 4:
            break
        h_final = refit
        if np.array_equal(new_inliers, inliers):
            inliers = new_inliers
            break
        inliers = new_inliers

    err = _residuals(h_final, src, dst)
    inliers = err <= threshold
    count = int(inliers.sum())
    if count < 4:
        raise HomographyError(f"refit lost consensus: {count} inliers")
    return Homography(h_final, inlier_count=count,
                      mean_residual=float(err[inliers].mean()), inliers=inliers)
