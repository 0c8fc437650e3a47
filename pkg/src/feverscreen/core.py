"""Shared geometric and numeric primitives: boxes, points, appearance vectors."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

APPEARANCE_DIM = 32


@dataclass(frozen=True)
class Point2:
    """A 2-D point in pixel coordinates (sub-pixel allowed)."""

    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"point coordinates must be finite, got ({self.x}, {self.y})")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=np.float64)


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box: top-left corner (x, y), width w, height h, in pixels."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        vals = (self.x, self.y, self.w, self.h)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"box fields must be finite, got {vals}")
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"box must have positive size, got w={self.w}, h={self.h}")

    @property
    def x2(self) -> float:
        return self.x + self.w

    @property
    def y2(self) -> float:
        return self.y + self.h

    @property
    def cx(self) -> float:
        return self.x + self.w / 2.0

    @property
    def cy(self) -> float:
        return self.y + self.h / 2.0

    @property
    def area(self) -> float:
        return self.w * self.h

    def center(self) -> Point2:
        return Point2(self.cx, self.cy)

    def contains_point(self, px: float, py: float) -> bool:
        return self.x <= px <= self.x2 and self.y <= py <= self.y2

    def intersect(self, other: "BBox") -> "BBox | None":
        x1 = max(self.x, other.x)
        y1 = max(self.y, other.y)
        x2 = min(self.x2, other.x2)
        y2 = min(self.y2, other.y2)
        if x2 <= x1 or y2 <= y1:
            return None
        return BBox(x1, y1, x2 - x1, y2 - y1)

    def expanded(self, margin_x: float, margin_y: float | None = None) -> "BBox":
        if margin_y is None:
            margin_y = margin_x
        return BBox(self.x - margin_x, self.y - margin_y,
                    self.w + 2 * margin_x, self.h + 2 * margin_y)

    def scaled(self, fx: float, fy: float) -> "BBox":
        """Central fraction of the box: keeps the center, shrinks width/height."""
        return BBox(self.cx - self.w * fx / 2.0, self.cy - self.h * fy / 2.0,
                    self.w * fx, self.h * fy)

    def clipped(self, width: int, height: int) -> "BBox | None":
        """Clip to a [0,width)x[0,height) frame; None if nothing remains."""
        return self.intersect(BBox(0.0, 0.0, float(width), float(height)))


def iou(a: BBox, b: BBox) -> float:
    """Intersection-over-union of two boxes, in [0, 1]."""
    inter = a.intersect(b)
    if inter is None:
        return 0.0
    ia = inter.area
    return ia / (a.area + b.area - ia)


@dataclass(frozen=True)
class AppearanceVector:
    """Fixed-length identity embedding, unit Euclidean norm after construction.

    Stands in for the match features a detector would produce; similarity
    between two vectors is their cosine (dot product of unit vectors).
    """

    values: tuple = field(repr=False)

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("appearance vector must be a non-empty 1-D sequence")
        if not np.all(np.isfinite(arr)):
            raise ValueError("appearance vector must be finite")
        norm = float(np.linalg.norm(arr))
        if norm == 0.0:
            raise ValueError("appearance vector must be nonzero")
        if abs(norm - 1.0) > 1e-12:  # idempotent: re-reading a unit vector is exact
            arr = arr / norm
        object.__setattr__(self, "values", tuple(arr.tolist()))

    @property
    def dim(self) -> int:
        return len(self.values)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=np.float64)

    @staticmethod
    def random(rng: np.random.Generator, dim: int = APPEARANCE_DIM) -> "AppearanceVector":
        return AppearanceVector(tuple(rng.standard_normal(dim).tolist()))

    def perturbed(self, rng: np.random.Generator, sigma: float) -> "AppearanceVector":
        """Identity vector plus Gaussian noise, renormalized."""
        if sigma <= 0.0:
            return self
        noisy = self.as_array() + rng.normal(0.0, sigma, self.dim)
        return AppearanceVector(tuple(noisy.tolist()))


def similarity(a: AppearanceVector, b: AppearanceVector) -> float:
    """Cosine similarity between two appearance vectors, in [-1, 1]."""
    if a.dim != b.dim:
        raise ValueError(f"appearance dimension mismatch: {a.dim} vs {b.dim}")
    return float(np.clip(np.dot(a.as_array(), b.as_array()), -1.0, 1.0))
