import numpy as np
import pytest

from feverscreen import AppearanceVector, BBox, Point2, iou, similarity


def pixel_iou(a: BBox, b: BBox, scale: int = 1) -> float:
    """Rasterization oracle: count covered cells on an integer grid."""
    x1 = int(min(a.x, b.x)) - 1
    y1 = int(min(a.y, b.y)) - 1
    w = int(max(a.x2, b.x2)) + 2 - x1
    h = int(max(a.y2, b.y2)) + 2 - y1
    ga = np.zeros((h, w), dtype=bool)
    gb = np.zeros((h, w), dtype=bool)
    ga[int(a.y) - y1:int(a.y2) - y1, int(a.x) - x1:int(a.x2) - x1] = True
    gb[int(b.y) - y1:int(b.y2) - y1, int(b.x) - x1:int(b.x2) - x1] = True
    union = np.logical_or(ga, gb).sum()
    return np.logical_and(ga, gb).sum() / union if union else 0.0


class TestBBox:
    def test_rejects_nonpositive_size(self):
        with pytest.raises(ValueError):
            BBox(0, 0, 0, 5)
        with pytest.raises(ValueError):
            BBox(0, 0, 5, -1)

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            BBox(float("nan"), 0, 1, 1)

    def test_geometry_helpers(self):
        b = BBox(10, 20, 30, 40)
        assert (b.x2, b.y2) == (40, 60)
        assert (b.cx, b.cy) == (25, 40)
        assert b.area == 1200
        assert b.contains_point(25, 40)
        assert not b.contains_point(9, 40)

    def test_scaled_keeps_center(self):
        b = BBox(0, 0, 100, 50).scaled(0.5, 0.4)
        assert (b.cx, b.cy) == (50, 25)
        assert (b.w, b.h) == (50, 20)

    def test_clipped(self):
        assert BBox(-10, -10, 20, 20).clipped(100, 100) == BBox(0, 0, 10, 10)
        assert BBox(200, 200, 5, 5).clipped(100, 100) is None


class TestPoint2:
    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            Point2(float("inf"), 0.0)


class TestIou:
    def test_identical_boxes(self):
        b = BBox(3, 4, 10, 12)
        assert iou(b, b) == 1.0

    def test_disjoint_boxes(self):
        assert iou(BBox(0, 0, 10, 10), BBox(20, 20, 5, 5)) == 0.0

    def test_half_overlap(self):
        # overlap 50, union 150
        assert iou(BBox(0, 0, 10, 10), BBox(5, 0, 10, 10)) == pytest.approx(1 / 3)

    def test_symmetric_and_bounded(self):
        rng = np.random.default_rng(7)
        for _ in range(300):
            a = BBox(*rng.integers(0, 50, 2), *rng.integers(1, 60, 2))
            b = BBox(*rng.integers(0, 50, 2), *rng.integers(1, 60, 2))
            v = iou(a, b)
            assert 0.0 <= v <= 1.0
            assert v == iou(b, a)

    def test_against_rasterization_oracle(self):
        rng = np.random.default_rng(11)
        for _ in range(200):
            a = BBox(*[float(v) for v in rng.integers(0, 40, 2)],
                     *[float(v) for v in rng.integers(1, 50, 2)])
            b = BBox(*[float(v) for v in rng.integers(0, 40, 2)],
                     *[float(v) for v in rng.integers(1, 50, 2)])
            assert iou(a, b) == pytest.approx(pixel_iou(a, b), abs=1e-12)


class TestAppearance:
    def test_unit_norm_after_construction(self):
        v = AppearanceVector((3.0, 4.0))
        assert np.linalg.norm(v.as_array()) == pytest.approx(1.0)

    def test_idempotent_normalization(self):
        v = AppearanceVector(tuple(np.random.default_rng(0).standard_normal(32)))
        again = AppearanceVector(v.values)
        assert v.values == again.values

    def test_rejects_zero_vector(self):
        with pytest.raises(ValueError):
            AppearanceVector((0.0, 0.0, 0.0))

    def test_similarity_identity(self):
        v = AppearanceVector.random(np.random.default_rng(1))
        assert similarity(v, v) == pytest.approx(1.0)

    def test_similarity_orthogonal(self):
        a = AppearanceVector((1.0, 0.0))
        b = AppearanceVector((0.0, 1.0))
        assert similarity(a, b) == pytest.approx(0.0)

    def test_similarity_antipodal(self):
        v = AppearanceVector.random(np.random.default_rng(2))
        neg = AppearanceVector(tuple(-x for x in v.values))
        assert similarity(v, neg) == pytest.approx(-1.0)

    def test_similarity_symmetric_bounded(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            a = AppearanceVector.random(rng)
            b = AppearanceVector.random(rng)
            s = similarity(a, b)
            assert -1.0 - 1e-9 <= s <= 1.0 + 1e-9
            assert abs(s - similarity(b, a)) <= 1e-9

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            similarity(AppearanceVector((1.0, 0.0)), AppearanceVector((1.0, 0.0, 0.0)))

    def test_perturbed_stays_close(self):
        rng = np.random.default_rng(4)
        v = AppearanceVector.random(rng)
        noisy = v.perturbed(rng, 0.05)
        assert similarity(v, noisy) > 0.9
