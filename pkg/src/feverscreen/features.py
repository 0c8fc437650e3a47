"""Corner features and binary descriptors for cross-spectral matching.

FAST-9 segment-test corners restricted to a mask, oriented by intensity
centroid, described by a 256-bit steered binary descriptor, matched with
an exhaustive Hamming matcher (mutual best + ratio test + distance cap).
The recipe is fully pinned so alignment results are reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

FAST_THRESHOLD = 20.0
FAST_ARC = 9
MAX_FEATURES = 500
DESCRIPTOR_BITS = 256
DESCRIPTOR_BYTES = DESCRIPTOR_BITS // 8
PATCH_RADIUS = 15          # orientation patch and descriptor sampling extent
MATCH_RATIO = 0.8
MATCH_MAX_DISTANCE = 64
_PATTERN_SEED = 20210413   # fixes the descriptor sampling pattern forever

# Bresenham circle of radius 3, clockwise from 12 o'clock: (dx, dy)
_CIRCLE = (
    (0, -3), (1, -3), (2, -2), (3, -1), (3, 0), (3, 1), (2, 2), (1, 3),
    (0, 3), (-1, 3), (-2, 2), (-3, 1), (-3, 0), (-3, -1), (-2, -2), (-1, -3),
)


def _arc_lut(arc: int) -> np.ndarray:
    """For every 16-bit circle mask: does it contain >= arc contiguous set bits?"""
    masks = np.arange(1 << 16, dtype=np.uint32)
    doubled = masks | (masks << 16)
    window = np.uint32((1 << arc) - 1)
    hit = np.zeros(1 << 16, dtype=bool)
    for shift in range(16):
        hit |= ((doubled >> shift) & window) == window
    return hit


_ARC9_LUT = _arc_lut(FAST_ARC)


def _descriptor_pattern() -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(_PATTERN_SEED)
    sigma = (2 * PATCH_RADIUS + 1) / 5.0
    pts = rng.normal(0.0, sigma, size=(DESCRIPTOR_BITS, 2, 2))
    pts = np.clip(np.rint(pts), -PATCH_RADIUS, PATCH_RADIUS)
    return pts[:, 0, :].astype(np.float64), pts[:, 1, :].astype(np.float64)


_PATTERN_A, _PATTERN_B = _descriptor_pattern()

# circular patch offsets for the intensity-centroid orientation
_oy, _ox = np.mgrid[-PATCH_RADIUS:PATCH_RADIUS + 1, -PATCH_RADIUS:PATCH_RADIUS + 1]
_in_circle = (_ox ** 2 + _oy ** 2) <= PATCH_RADIUS ** 2
_CENTROID_DX = _ox[_in_circle].astype(np.float64)
_CENTROID_DY = _oy[_in_circle].astype(np.float64)

_POPCOUNT8 = np.array([bin(v).count("1") for v in range(256)], dtype=np.uint8)


@dataclass(frozen=True)
class Feature:
    """One detected corner: sub-image location, orientation, 256-bit descriptor."""

    x: float
    y: float
    orientation: float
    score: float
    descriptor: bytes

    def __post_init__(self):
        if len(self.descriptor) != DESCRIPTOR_BYTES:
            raise ValueError(f"descriptor must be {DESCRIPTOR_BITS} bits")


class FeatureSet:
    """Column-oriented sequence of Features (arrays inside, Feature views out)."""

    def __init__(self, xs, ys, orientations, scores, descriptors):
        self.xs = np.asarray(xs, dtype=np.float64)
        self.ys = np.asarray(ys, dtype=np.float64)
        self.orientations = np.asarray(orientations, dtype=np.float64)
        self.scores = np.asarray(scores, dtype=np.float64)
        self.descriptors = np.asarray(descriptors, dtype=np.uint8).reshape(-1, DESCRIPTOR_BYTES)

    @staticmethod
    def empty() -> "FeatureSet":
        return FeatureSet(np.zeros(0), np.zeros(0), np.zeros(0), np.zeros(0),
                          np.zeros((0, DESCRIPTOR_BYTES), dtype=np.uint8))

    def __len__(self) -> int:
        return self.xs.size

    def __getitem__(self, i: int) -> Feature:
        return Feature(x=float(self.xs[i]), y=float(self.ys[i]),
                       orientation=float(self.orientations[i]),
                       score=float(self.scores[i]),
                       descriptor=self.descriptors[i].tobytes())

    def points(self) -> np.ndarray:
        return np.stack([self.xs, self.ys], axis=1)

    def shifted(self, dx: float, dy: float) -> "FeatureSet":
        return FeatureSet(self.xs + dx, self.ys + dy, self.orientations,
                          self.scores, self.descriptors)


def _smooth(image: np.ndarray) -> np.ndarray:
    return ndimage.uniform_filter(image.astype(np.float32), size=5, mode="nearest")


def _fast_corners(img: np.ndarray, mask: np.ndarray, threshold: float):
    h, w = img.shape
    if h < 7 or w < 7:
        return np.zeros((0, 2), dtype=np.int64), np.zeros(0)
    center = img[3:h - 3, 3:w - 3]
    bright_bits = np.zeros(center.shape, dtype=np.uint32)
    dark_bits = np.zeros(center.shape, dtype=np.uint32)
    bright_score = np.zeros(center.shape, dtype=np.float32)
    dark_score = np.zeros(center.shape, dtype=np.float32)
    hi = center + threshold
    lo = center - threshold
    for i, (dx, dy) in enumerate(_CIRCLE):
        shifted = img[3 + dy:h - 3 + dy, 3 + dx:w - 3 + dx]
        b = shifted > hi
        d = shifted < lo
        bright_bits |= b.astype(np.uint32) << i
        dark_bits |= d.astype(np.uint32) << i
        bright_score += np.where(b, shifted - hi, 0.0)
        dark_score += np.where(d, lo - shifted, 0.0)
    corner = _ARC9_LUT[bright_bits] | _ARC9_LUT[dark_bits]
    corner &= mask[3:h - 3, 3:w - 3]
    score = np.where(_ARC9_LUT[bright_bits], bright_score, 0.0)
    score = np.maximum(score, np.where(_ARC9_LUT[dark_bits], dark_score, 0.0))
    score = np.where(corner, score, 0.0)
    # 3x3 non-maximum suppression
    localmax = ndimage.maximum_filter(score, size=3, mode="constant")
    keep = corner & (score > 0) & (score >= localmax)
    ys, xs = np.nonzero(keep)
    return np.stack([xs + 3, ys + 3], axis=1), score[ys, xs]


def _orientations(img: np.ndarray, pts: np.ndarray) -> np.ndarray:
    h, w = img.shape
    xs = np.clip(pts[:, 0:1] + _CENTROID_DX[None, :], 0, w - 1).astype(np.int64)
    ys = np.clip(pts[:, 1:2] + _CENTROID_DY[None, :], 0, h - 1).astype(np.int64)
    patch = img[ys, xs]
    m10 = (patch * _CENTROID_DX[None, :]).sum(axis=1)
    m01 = (patch * _CENTROID_DY[None, :]).sum(axis=1)
    return np.arctan2(m01, m10)


def _descriptors(img: np.ndarray, pts: np.ndarray, angles: np.ndarray) -> np.ndarray:
    h, w = img.shape
    c = np.cos(angles)[:, None]
    s = np.sin(angles)[:, None]

    def sample(pattern: np.ndarray) -> np.ndarray:
        px, py = pattern[:, 0][None, :], pattern[:, 1][None, :]
        rx = np.rint(c * px - s * py)
        ry = np.rint(s * px + c * py)
        xs = np.clip(pts[:, 0:1] + rx, 0, w - 1).astype(np.int64)
        ys = np.clip(pts[:, 1:2] + ry, 0, h - 1).astype(np.int64)
        return img[ys, xs]

    bits = sample(_PATTERN_A) < sample(_PATTERN_B)
    return np.packbits(bits, axis=1)


def detect_features(image: np.ndarray, mask: np.ndarray,
                    threshold: float = FAST_THRESHOLD,
                    max_features: int = MAX_FEATURES) -> FeatureSet:
    """FAST-9 corners inside `mask`, strongest first, capped at max_features."""
    image = np.asarray(image, dtype=np.float32)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != image.shape:
        raise ValueError(f"mask {mask.shape} must match image {image.shape}")
    smoothed = _smooth(image)
    pts, scores = _fast_corners(smoothed, mask, threshold)
    if pts.shape[0] == 0:
        return FeatureSet.empty()
    order = np.lexsort((pts[:, 0], pts[:, 1], -scores))
    pts = pts[order][:max_features]
    scores = scores[order][:max_features]
    angles = _orientations(smoothed, pts)
    desc = _descriptors(smoothed, pts, angles)
    # locations are pixel centers: continuous coords, consistent with
    # projection and resampling conventions
    return FeatureSet(pts[:, 0].astype(np.float64) + 0.5,
                      pts[:, 1].astype(np.float64) + 0.5,
                      angles, scores, desc)


def hamming_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise Hamming distances between two (n, 32) uint8 descriptor arrays."""
    if a.size == 0 or b.size == 0:
        return np.zeros((a.shape[0], b.shape[0]), dtype=np.int32)
    xored = a[:, None, :] ^ b[None, :, :]
    return _POPCOUNT8[xored].sum(axis=2, dtype=np.int32)


def match_descriptors(a: FeatureSet, b: FeatureSet,
                      ratio: float = MATCH_RATIO,
                      max_distance: int = MATCH_MAX_DISTANCE) -> list[tuple[int, int, int]]:
    """Exhaustive Hamming matching.

    Keeps (i, j) pairs that are mutual best matches, pass the ratio test
    (best < ratio * second-best, strict), and lie within max_distance bits.
    """
    na, nb = len(a), len(b)
    if na == 0 or nb == 0:
        return []
    dist = hamming_matrix(a.descriptors, b.descriptors)
    best_j = dist.argmin(axis=1)
    best_d = dist[np.arange(na), best_j]
    best_i = dist.argmin(axis=0)
    if nb >= 2:
        second = np.partition(dist, 1, axis=1)[:, 1].astype(np.float64)
    else:
        second = np.full(na, np.inf)
    out = []
    for i in range(na):
        j = int(best_j[i])
        d = int(best_d[i])
        if best_i[j] != i:
            continue
        if d > max_distance:
            continue
        if not (d < ratio * second[i]):
            continue
        out.append((i, j, d))
    return out


def upscale_bilinear(image: np.ndarray, out_shape: tuple[int, int]) -> np.ndarray:
    """Bilinear resize (float32) used to bring thermal data to visual scale."""
    img = np.asarray(image, dtype=np.float32)
    h, w = img.shape
    oh, ow = out_shape
    ys = (np.arange(oh) + 0.5) * (h / oh) - 0.5
    xs = (np.arange(ow) + 0.5) * (w / ow) - 0.5
    y0 = np.clip(np.floor(ys), 0, h - 1).astype(np.int64)
    x0 = np.clip(np.floor(xs), 0, w - 1).astype(np.int64)
    y1 = np.clip(y0 + 1, 0, h - 1)
    x1 = np.clip(x0 + 1, 0, w - 1)
    fy = np.clip(ys - y0, 0.0, 1.0).astype(np.float32)[:, None]
    fx = np.clip(xs - x0, 0.0, 1.0).astype(np.float32)[None, :]
    top = img[y0][:, x0] * (1 - fx) + img[y0][:, x1] * fx
    bot = img[y1][:, x0] * (1 - fx) + img[y1][:, x1] * fx
    return top * (1 - fy) + bot * fy


def scale_map_matrix(sx: float, sy: float) -> np.ndarray:
    return np.array([[sx, 0.0, 0.0], [0.0, sy, 0.0], [0.0, 0.0, 1.0]], dtype=np.float64)
