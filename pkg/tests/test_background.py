import numpy as np
import pytest

from feverscreen import BBox, BackgroundModel, estimate_background, foreground_mask


def blob_frames(n=16, h=60, w=80, blob=12, seed=0):
    """Static textured plate plus a blob moving one blob-width per frame."""
    rng = np.random.default_rng(seed)
    plate = rng.integers(90, 150, (h, w)).astype(np.float32)
    frames = []
    for k in range(n):
        f = plate.copy()
        x = (k * blob) % (w - blob)
        f[20:20 + blob, x:x + blob] = 30.0
        frames.append(f)
    return plate, frames


class TestEstimateBackground:
    def test_constant_frames(self):
        frame = np.full((10, 12), 77.0, dtype=np.float32)
        bg = estimate_background([frame] * 8)
        assert np.array_equal(bg, frame)

    def test_recovers_static_scene_under_motion(self):
        plate, frames = blob_frames()
        bg = estimate_background(frames)
        assert np.max(np.abs(bg - plate)) <= 2.0

    def test_too_few_frames(self):
        with pytest.raises(ValueError):
            estimate_background([np.zeros((4, 4))] * 5)
        with pytest.raises(ValueError):
            estimate_background([])

    def test_window_limits_history(self):
        old = [np.full((4, 4), 200.0)] * 20
        new = [np.full((4, 4), 10.0)] * 16
        bg = estimate_background(old + new, window=16)
        assert np.all(bg == 10.0)


class TestForegroundMask:
    def test_identical_frames_empty_mask(self):
        f = np.random.default_rng(1).normal(100, 5, (20, 20)).astype(np.float32)
        assert not foreground_mask(f, f, tau=12.0).any()

    def test_blob_covered_with_dilation_ring(self):
        bg = np.full((40, 40), 100.0, dtype=np.float32)
        frame = bg.copy()
        frame[10:20, 15:25] += 50.0
        mask = foreground_mask(frame, bg, tau=12.0)
        assert mask[10:20, 15:25].all()
        # dilation adds at most one pixel around the blob
        assert mask.sum() <= (10 + 2) * (10 + 2)
        assert not mask[:8, :].any()

    def test_zero_tau_is_nonzero_difference_set(self):
        bg = np.zeros((8, 8), dtype=np.float32)
        frame = np.ones((8, 8), dtype=np.float32)
        mask = foreground_mask(frame, bg, tau=0.0)
        assert mask.all()

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            foreground_mask(np.zeros((4, 4)), np.zeros((5, 5)), tau=1.0)


class TestBackgroundModel:
    def test_warmup_then_ready(self):
        model = BackgroundModel()
        frame = np.full((10, 10), 50.0, dtype=np.float32)
        for k in range(7):
            model.update(frame)
            assert not model.ready
        model.update(frame)
        assert model.ready
        assert np.array_equal(model.background, frame)

    def test_mask_none_before_ready(self):
        model = BackgroundModel()
        assert model.mask(np.zeros((4, 4)), 1.0) is None

    def test_selective_update_ignores_excluded_region(self):
        model = BackgroundModel(refresh=4)
        plate = np.full((30, 30), 80.0, dtype=np.float32)
        for _ in range(8):
            model.update(plate)
        occupied = plate.copy()
        occupied[5:25, 5:25] = 20.0  # a person parked in the scene
        box = [BBox(4, 4, 22, 22)]
        for _ in range(24):
            model.update(occupied, exclude=box)
        assert np.max(np.abs(model.background - plate)) < 1e-6

    def test_unexcluded_content_eventually_absorbs(self):
        model = BackgroundModel(refresh=4)
        plate = np.full((20, 20), 80.0, dtype=np.float32)
        for _ in range(8):
            model.update(plate)
        changed = plate.copy()
        changed[2:6, 2:6] = 140.0
        for _ in range(24):
            model.update(changed)
        assert np.max(np.abs(model.background - changed)) < 1e-6
