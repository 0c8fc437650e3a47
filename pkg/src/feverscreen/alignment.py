"""Visual-to-thermal frame alignment and depth recovery.

Two routes map person regions between sensors:

* a static affine offset (scale + translation), calibrated once at a
  reference depth — cheap, wrong away from that depth plane;
* dynamic per-person alignment: foreground masks from both streams,
  silhouette corners matched across spectra inside a horizontal epipolar
  band (the rig is a side-by-side stereo pair, so valid matches shift by
  the parallax and stay on the same row), a RANSAC homography for robust
  inlier selection, then a shared-scale translation refit that stays
  stable when matches cluster on one part of the body. The median
  horizontal inlier offset doubles as stereo disparity, giving each
  person's distance; a box-height estimate backs it up at long range
  where disparity quantization dominates.

Falls back to the affine offset (flagged low-confidence) whenever the
dynamic route cannot find enough inlier matches.
"""

from __future__ import annotations

import math
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .background import BackgroundModel, THERMAL_TAU, VISUAL_TAU, _dilate
from .core import BBox, Point2
from .features import (detect_features, hamming_matrix, scale_map_matrix,
                       upscale_bilinear)
from .homography import Homography, HomographyError, estimate_homography
from .simulate import CameraRig, FramePair

MIN_INLIER_MATCHES = 4
HEAD_HEIGHT_CAL = 0.22   # meters, matches the simulated head; box-height depth estimate
BODY_HEIGHT_CAL = 1.61


@dataclass(frozen=True)
class AffineOffset:
    """Thermal -> visual static map: scale by (s_x, s_y), then shift by (t_x, t_y)."""

    t_x: float = 0.0
    t_y: float = 0.0
    s_x: float = 1.0
    s_y: float = 1.0

    def __post_init__(self):
        if self.s_x <= 0 or self.s_y <= 0:
            raise ValueError("scale factors must be positive")

    def as_matrix(self) -> np.ndarray:
        return np.array([[self.s_x, 0.0, self.t_x],
                         [0.0, self.s_y, self.t_y],
                         [0.0, 0.0, 1.0]], dtype=np.float64)


def manual_offset_map(p: Point2, offset: AffineOffset) -> Point2:
    """Apply the static scale-and-translate map to one point."""
    return Point2(p.x * offset.s_x + offset.t_x, p.y * offset.s_y + offset.t_y)


def manual_offset_for_rig(rig: CameraRig, reference_depth: float = 2.0) -> AffineOffset:
    """Resolution scale plus the parallax shift observed at one chosen depth."""
    return AffineOffset(t_x=rig.parallax_visual_px(reference_depth), t_y=0.0,
                        s_x=rig.scale_x, s_y=rig.scale_y)


def depth_from_disparity(disparity: float, focal: float, baseline: float) -> float | None:
    """z = focal * baseline / disparity; None when disparity gives no depth signal."""
    if disparity <= 0.0 or not math.isfinite(disparity):
        return None
    return focal * baseline / disparity


@dataclass(frozen=True)
class PersonAlignment:
    """Active thermal->visual mapping for one tracked person."""

    person_id: int
    map_t2v: np.ndarray
    dynamic: bool
    low_confidence: bool
    distance: float | None
    inlier_count: int = 0
    mean_residual: float = 0.0

    def map_v2t(self) -> np.ndarray:
        inv = np.linalg.inv(self.map_t2v)
        return inv / inv[2, 2]

    def thermal_point(self, x: float, y: float) -> tuple[float, float]:
        inv = self.map_v2t()
        q = inv @ np.array([x, y, 1.0])
        return float(q[0] / q[2]), float(q[1] / q[2])

    def visual_point(self, x: float, y: float) -> tuple[float, float]:
        q = self.map_t2v @ np.array([x, y, 1.0])
        return float(q[0] / q[2]), float(q[1] / q[2])

    def thermal_box(self, box: BBox) -> BBox | None:
        """Axis-aligned hull of the box corners mapped into thermal coordinates."""
        inv = self.map_v2t()
        corners = np.array([[box.x, box.y, 1.0], [box.x2, box.y, 1.0],
                            [box.x, box.y2, 1.0], [box.x2, box.y2, 1.0]])
        q = corners @ inv.T
        if np.any(np.abs(q[:, 2]) < 1e-12):
            return None
        pts = q[:, :2] / q[:, 2:3]
        x1, y1 = pts.min(axis=0)
        x2, y2 = pts.max(axis=0)
        if x2 <= x1 or y2 <= y1:
            return None
        return BBox(x1, y1, x2 - x1, y2 - y1)


@dataclass
class AlignmentResult:
    """Per-person mappings plus a lazy aligned-thermal lookup for one frame."""

    frame_seq: int
    persons: dict[int, PersonAlignment]
    fallback: AffineOffset
    thermal: np.ndarray

    def get(self, person_id: int) -> PersonAlignment | None:
        return self.persons.get(person_id)

    def sample_thermal(self, person_id: int, visual_box: BBox) -> tuple[np.ndarray, BBox] | None:
        """Thermal pixels under a visual-frame box; None if fully outside."""
        pa = self.persons.get(person_id)
        if pa is None:
            return None
        tbox = pa.thermal_box(visual_box)
        if tbox is None:
            return None
        h, w = self.thermal.shape
        clipped = tbox.clipped(w, h)
        if clipped is None:
            return None
        x1 = int(math.floor(clipped.x))
        y1 = int(math.floor(clipped.y))
        x2 = min(max(int(math.ceil(clipped.x2)), x1 + 1), w)
        y2 = min(max(int(math.ceil(clipped.y2)), y1 + 1), h)
        x1 = min(x1, x2 - 1)
        y1 = min(y1, y2 - 1)
        return self.thermal[y1:y2, x1:x2], BBox(float(x1), float(y1),
                                                float(x2 - x1), float(y2 - y1))

    def lookup(self, person_id: int, x: float, y: float) -> float | None:
        """Aligned thermal value at one visual-frame point."""
        pa = self.persons.get(person_id)
        if pa is None:
            return None
        tx, ty = pa.thermal_point(x, y)
        h, w = self.thermal.shape
        xi, yi = int(round(tx)), int(round(ty))
        if 0 <= xi < w and 0 <= yi < h:
            return float(self.thermal[yi, xi])
        return None


@dataclass(frozen=True)
class AlignConfig:
    manual_offset: AffineOffset = AffineOffset()
    visual_tau: float = VISUAL_TAU
    thermal_tau: float = THERMAL_TAU
    min_inliers: int = MIN_INLIER_MATCHES
    max_region_features: int = 200
    region_margin_px: float = 20.0       # body-box expansion for the feature region
    disparity_range: tuple[float, float] = (2.0, 80.0)  # epipolar band, visual px
    disparity_prior_band: float = 10.0   # half-width around the previous disparity
    epipolar_dy_band: float = 10.0       # vertical slack for valid matches
    match_ratio: float = 0.8
    match_max_distance: int = 64
    ransac_threshold: float = 3.0
    ransac_max_iters: int = 1000
    distance_window: int = 3             # frames of distance history per person
    stereo_box_tolerance: float = 0.35   # stereo depth must agree with box depth
    bg_window: int = 16
    bg_refresh: int = 32


def _similarity_fit(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Least-squares shared-scale translation: x' = s*x + tx, y' = s*y + ty.

    The upscaled thermal and visual views share the effective focal
    length, so the per-person (single depth plane) map is near a pure
    translation; this 3-dof fit stays stable on small or one-sided match
    clusters where a full projective fit extrapolates badly.
    """
    pc = src.mean(axis=0)
    qc = dst.mean(axis=0)
    dp = src - pc
    dq = dst - qc
    denom = float((dp * dp).sum())
    s = float((dp * dq).sum()) / denom if denom > 1e-9 else 1.0
    if s <= 1e-6:
        s = 1.0
    t = qc - s * pc
    return np.array([[s, 0.0, t[0]], [0.0, s, t[1]], [0.0, 0.0, 1.0]])


def _translation_fit(src: np.ndarray, dst: np.ndarray,
                     sx: float, sy: float) -> np.ndarray:
    """Pure translation around a fixed per-axis scale (from rig calibration)."""
    t = (dst - src * np.array([sx, sy])).mean(axis=0)
    return np.array([[sx, 0.0, t[0]], [0.0, sy, t[1]], [0.0, 0.0, 1.0]])


def _map_residuals(m: np.ndarray, src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    proj = src @ m[:2, :2].T + m[:2, 2]
    return np.sqrt(((proj - dst) ** 2).sum(axis=1))


def _banded_matches(th_feats, vis_feats, th_off, vis_off,
                    dx_range: tuple[float, float], dy_band: float,
                    ratio: float, max_distance: int) -> list[tuple[int, int, int]]:
    """Hamming matching restricted to the stereo-consistent offset band.

    Same mutual-best + ratio + distance rules as the generic matcher, with
    candidate pairs outside the epipolar band excluded up front.
    """
    na, nb = len(th_feats), len(vis_feats)
    if na == 0 or nb == 0:
        return []
    dist = hamming_matrix(th_feats.descriptors, vis_feats.descriptors).astype(np.float64)
    dx = (vis_feats.xs[None, :] + vis_off[0]) - (th_feats.xs[:, None] + th_off[0])
    dy = (vis_feats.ys[None, :] + vis_off[1]) - (th_feats.ys[:, None] + th_off[1])
    dist[(dx < dx_range[0]) | (dx > dx_range[1]) | (np.abs(dy) > dy_band)] = 1e9
    best_j = dist.argmin(axis=1)
    best_i = dist.argmin(axis=0)
    out = []
    for i in range(na):
        j = int(best_j[i])
        d = dist[i, j]
        if d > max_distance or best_i[j] != i:
            continue
        second = np.partition(dist[i], 1)[1] if nb >= 2 else np.inf
        if not (d < ratio * second):
            continue
        out.append((i, j, int(d)))
    return out


def _crop(img: np.ndarray, box: BBox) -> tuple[np.ndarray, int, int]:
    x1, y1 = int(box.x), int(box.y)
    x2, y2 = int(math.ceil(box.x2)), int(math.ceil(box.y2))
    return img[y1:y2, x1:x2], x1, y1


class FrameAligner:
    """Streaming dynamic alignment state: background models plus per-person history."""

    def __init__(self, rig: CameraRig, config: AlignConfig | None = None,
                 threads: int = 0):
        self.rig = rig
        self.config = config or AlignConfig(manual_offset=manual_offset_for_rig(rig))
        self.threads = threads
        self.visual_bg = BackgroundModel(self.config.bg_window, self.config.bg_refresh)
        self.thermal_bg = BackgroundModel(self.config.bg_window, self.config.bg_refresh)
        self._distances: dict[int, deque] = {}
        self._last_disparity: dict[int, float] = {}
        self._pool: ThreadPoolExecutor | None = None

    @property
    def warmed_up(self) -> bool:
        return self.visual_bg.ready and self.thermal_bg.ready

    def close(self) -> None:
        if self._pool is not None:
            self._pool.shutdown(wait=True)
            self._pool = None

    def _box_depth(self, boxes: dict[str, BBox]) -> float | None:
        """Depth from known person dimensions; None when the box is clipped."""
        h = self.rig.visual_resolution[1]
        head = boxes.get("head")
        if head is not None and head.y > 1.0 and head.y2 < h - 1.0:
            return self.rig.visual_focal * HEAD_HEIGHT_CAL / head.h
        body = boxes.get("body")
        if body is not None and body.y > 1.0 and body.y2 < h - 1.0:
            return self.rig.visual_focal * BODY_HEIGHT_CAL / body.h
        return None

    def _smooth_distance(self, pid: int, estimate: float | None) -> float | None:
        """Median over a short per-person window of fused per-frame estimates."""
        hist = self._distances.setdefault(
            pid, deque(maxlen=self.config.distance_window))
        if estimate is not None and math.isfinite(estimate) and estimate > 0:
            hist.append(estimate)
        if not hist:
            return None
        return float(np.median(np.fromiter(hist, dtype=np.float64)))

    def _fallback(self, pid: int, boxes: dict[str, BBox]) -> PersonAlignment:
        self._last_disparity.pop(pid, None)
        return PersonAlignment(person_id=pid,
                               map_t2v=self.config.manual_offset.as_matrix(),
                               dynamic=False, low_confidence=True,
                               distance=self._smooth_distance(pid, self._box_depth(boxes)),
                               inlier_count=0, mean_residual=float("inf"))

    def _exclusion_boxes(self, person_boxes: dict[int, dict[str, BBox]]):
        """Regions withheld from background updates, per stream."""
        vis, thr = [], []
        sx, sy = self.rig.scale_x, self.rig.scale_y
        for boxes in person_boxes.values():
            body = boxes.get("body") or boxes.get("head")
            if body is None:
                continue
            vis.append(body.expanded(12.0))
            thr.append(BBox(body.x / sx - 16.0, body.y / sy - 6.0,
                            body.w / sx + 24.0, body.h / sy + 12.0))
        return vis, thr

    @staticmethod
    def _void_others(mask: np.ndarray, x0: int, y0: int,
                     others: list[BBox], grow_left: float) -> np.ndarray:
        """Zero mask pixels belonging to other tracked people.

        Overlap regions show the nearer person's silhouette; features there
        would lock the fit onto the wrong depth plane.
        """
        if not others:
            return mask
        mask = mask.copy()
        h, w = mask.shape
        for box in others:
            bb = BBox(box.x - grow_left, box.y, box.w + grow_left, box.h)
            bb = bb.expanded(4.0).intersect(BBox(x0, y0, w, h))
            if bb is None:
                continue
            x1, y1 = int(bb.x) - x0, int(bb.y) - y0
            x2 = int(math.ceil(bb.x2)) - x0
            y2 = int(math.ceil(bb.y2)) - y0
            mask[max(y1, 0):y2, max(x1, 0):x2] = False
        return mask

    @staticmethod
    def _mask_window(mask: np.ndarray) -> tuple[slice, slice] | None:
        rows = np.flatnonzero(mask.any(axis=1))
        if rows.size == 0:
            return None
        cols = np.flatnonzero(mask.any(axis=0))
        pad = 8  # keep FAST/descriptor context around the silhouette
        return (slice(max(rows[0] - pad, 0), rows[-1] + pad + 1),
                slice(max(cols[0] - pad, 0), cols[-1] + pad + 1))

    def _region_features(self, img: np.ndarray, allow: np.ndarray, region: BBox,
                         others: list[BBox], grow_left: float):
        crop, x0, y0 = _crop(img, region)
        mask, _, _ = _crop(allow, region)
        mask = self._void_others(mask, x0, y0, others, grow_left)
        window = self._mask_window(mask)
        if window is None:
            return None, 0.0, 0.0
        ys, xs = window
        feats = detect_features(crop[ys, xs], mask[ys, xs],
                                max_features=self.config.max_region_features)
        return feats, float(x0 + xs.start), float(y0 + ys.start)

    def _align_person(self, pid: int, boxes: dict[str, BBox],
                      vis_img: np.ndarray, vis_allow: np.ndarray,
                      th_img: np.ndarray, th_allow: np.ndarray,
                      others: list[BBox], frame_seq: int) -> PersonAlignment:
        cfg = self.config
        h, w = vis_img.shape
        body = boxes.get("body") or boxes.get("head")
        if body is None:
            return self._fallback(pid, boxes)
        region = body.expanded(cfg.region_margin_px).clipped(w, h)
        if region is None:
            return self._fallback(pid, boxes)

        vis_feats, vx0, vy0 = self._region_features(vis_img, vis_allow, region,
                                                    others, 0.0)
        if vis_feats is None:
            return self._fallback(pid, boxes)

        # thermal content sits left of the visual content by the parallax
        th_region = BBox(region.x - cfg.disparity_range[1] - 10, region.y - 12,
                         region.w + cfg.disparity_range[1] + 20, region.h + 24)
        th_region = th_region.clipped(w, h)
        if th_region is None:
            return self._fallback(pid, boxes)
        th_feats, tx0, ty0 = self._region_features(th_img, th_allow, th_region,
                                                   others, cfg.disparity_range[1])
        if th_feats is None:
            return self._fallback(pid, boxes)

        if len(vis_feats) < 4 or len(th_feats) < 4:
            return self._fallback(pid, boxes)

        prior = self._last_disparity.get(pid)
        matches = []
        if prior is not None:
            band = (max(prior - cfg.disparity_prior_band, cfg.disparity_range[0]),
                    min(prior + cfg.disparity_prior_band, cfg.disparity_range[1]))
            matches = _banded_matches(th_feats, vis_feats, (tx0, ty0), (vx0, vy0),
                                      band, cfg.epipolar_dy_band,
                                      cfg.match_ratio, cfg.match_max_distance)
        if len(matches) < 4:
            matches = _banded_matches(th_feats, vis_feats, (tx0, ty0), (vx0, vy0),
                                      cfg.disparity_range, cfg.epipolar_dy_band,
                                      cfg.match_ratio, cfg.match_max_distance)
        if len(matches) < 4:
            return self._fallback(pid, boxes)

        offset_t = np.array([tx0, ty0], dtype=np.float64)
        offset_v = np.array([vx0, vy0], dtype=np.float64)
        th_pts = th_feats.points()[[m[0] for m in matches]] + offset_t
        vis_pts = vis_feats.points()[[m[1] for m in matches]] + offset_v
        try:
            hom_up = estimate_homography(th_pts, vis_pts,
                                         threshold=cfg.ransac_threshold,
                                         max_iters=cfg.ransac_max_iters,
                                         seed=frame_seq)
        except HomographyError:
            return self._fallback(pid, boxes)
        if hom_up.inlier_count < cfg.min_inliers:
            return self._fallback(pid, boxes)

        inl = hom_up.inliers
        # RANSAC picks the inliers; the final map is a fixed-scale translation
        # (scale known from rig calibration), falling back to a fitted shared
        # scale when the calibrated scale does not explain the matches
        sx_exp = self.rig.visual_focal / (self.rig.thermal_focal * self.rig.scale_x)
        sy_exp = self.rig.visual_focal / (self.rig.thermal_focal * self.rig.scale_y)
        refined = _translation_fit(th_pts[inl], vis_pts[inl], sx_exp, sy_exp)
        residuals = _map_residuals(refined, th_pts[inl], vis_pts[inl])
        alt = _similarity_fit(th_pts[inl], vis_pts[inl])
        alt_res = _map_residuals(alt, th_pts[inl], vis_pts[inl])
        if alt_res.mean() + 0.3 < residuals.mean():
            refined, residuals = alt, alt_res
        # full thermal->visual map: native-to-upscaled scale, then the refinement
        map_full = refined @ scale_map_matrix(self.rig.scale_x, self.rig.scale_y)

        disparity = float(np.median(vis_pts[inl][:, 0] - th_pts[inl][:, 0]))
        stereo_depth = depth_from_disparity(disparity, self.rig.visual_focal,
                                            self.rig.baseline)
        box_depth = self._box_depth(boxes)
        if (stereo_depth is not None and box_depth is not None
                and abs(stereo_depth - box_depth)
                > cfg.stereo_box_tolerance * box_depth):
            # consensus sat on someone else's silhouette (or junk): the map
            # would sample the wrong depth plane, so reject it outright
            return self._fallback(pid, boxes)
        self._last_disparity[pid] = disparity
        if stereo_depth is not None and box_depth is not None:
            estimate = 0.5 * (stereo_depth + box_depth)
        else:
            estimate = stereo_depth if stereo_depth is not None else box_depth
        distance = self._smooth_distance(pid, estimate)
        return PersonAlignment(person_id=pid, map_t2v=map_full, dynamic=True,
                               low_confidence=False, distance=distance,
                               inlier_count=hom_up.inlier_count,
                               mean_residual=float(residuals.mean()))

    def align_pair(self, pair: FramePair,
                   person_boxes: dict[int, dict[str, BBox]]) -> AlignmentResult:
        """Dynamic alignment for every tracked person in this frame pair.

        Background models update first (tracked person regions withheld);
        before warmup, or whenever the feature route fails for a person,
        that person gets the static offset with the low-confidence flag.
        """
        cfg = self.config
        vis_excl, th_excl = self._exclusion_boxes(person_boxes)
        self.visual_bg.update(pair.visual, exclude=vis_excl)
        self.thermal_bg.update(pair.thermal, exclude=th_excl)

        for pid in [p for p in self._distances if p not in person_boxes]:
            del self._distances[pid]
            self._last_disparity.pop(pid, None)

        if not person_boxes:
            return AlignmentResult(pair.seq, {}, cfg.manual_offset, pair.thermal)

        if not self.warmed_up:
            persons = {pid: self._fallback(pid, boxes)
                       for pid, boxes in sorted(person_boxes.items())}
            return AlignmentResult(pair.seq, persons, cfg.manual_offset, pair.thermal)

        vh, vw = pair.visual.shape
        vis_fg = np.abs(pair.visual.astype(np.float32)
                        - self.visual_bg.background) > cfg.visual_tau
        vis_img = vis_fg.astype(np.float32) * 255.0
        vis_allow = _dilate(vis_fg)
        # upscale the continuous difference, then threshold: silhouette edges
        # land at their true sub-thermal-pixel position on the visual grid
        th_diff_up = upscale_bilinear(np.abs(pair.thermal - self.thermal_bg.background),
                                      (vh, vw))
        th_fg = th_diff_up > cfg.thermal_tau
        th_img = th_fg.astype(np.float32) * 255.0
        th_allow = _dilate(th_fg)

        pids = sorted(person_boxes)

        def other_bodies(pid: int) -> list[BBox]:
            out = []
            for other, ob in person_boxes.items():
                if other == pid:
                    continue
                b = ob.get("body") or ob.get("head")
                if b is not None:
                    out.append(b)
            return out

        args = [(pid, person_boxes[pid], vis_img, vis_allow, th_img, th_allow,
                 other_bodies(pid), pair.seq) for pid in pids]
        if self.threads > 1 and len(pids) > 1:
            if self._pool is None:
                self._pool = ThreadPoolExecutor(max_workers=self.threads)
            results = list(self._pool.map(lambda a: self._align_person(*a), args))
        else:
            results = [self._align_person(*a) for a in args]
        persons = {pid: res for pid, res in zip(pids, results)}
        return AlignmentResult(pair.seq, persons, cfg.manual_offset, pair.thermal)
