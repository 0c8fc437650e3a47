"""Fever screening: capture-zone gating, prioritized measurement, alerts.

Per frame: out-of-order frames are discarded outright, people outside the
configured ROI are dropped, and everyone inside the capture zone gets a
temperature reading from the highest-priority region available (eye and
forehead, then face, then head). The raw value is the maximum thermal
pixel in the sampled area — chosen hot-side on purpose so a fever is
never smoothed away. Across frames each person's reported temperature is
refined: readings from a higher-priority region supersede lower ones,
and alert de-duplication keys on the tracking ID.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .alignment import AlignmentResult
from .compensation import CompensationModel
from .core import BBox


class RegionPriority(IntEnum):
    """Lower value = more reliable measurement site."""

    EYE_FOREHEAD = 1
    FACE = 2
    HEAD = 3


# central fraction (width, height) of the region box that gets sampled
SAMPLE_FRACTIONS = {
    RegionPriority.EYE_FOREHEAD: (0.6, 0.4),
    RegionPriority.FACE: (0.5, 0.5),
    RegionPriority.HEAD: (0.4, 0.4),
}

_REGION_FOR_KIND = {
    "eye": RegionPriority.EYE_FOREHEAD,
    "face": RegionPriority.FACE,
    "head": RegionPriority.HEAD,
}


@dataclass(frozen=True)
class ScreeningConfig:
    roi: BBox | None = None                      # None = whole visual frame
    capture_zone: tuple[float, float] = (0.9, 3.7)
    fever_threshold: float = 38.0
    plausible_range: tuple[float, float] = (30.0, 45.0)
    min_readings: int = 3
    delta_realert: float = 0.3
    cache_ttl: float = 10.0
    zone_margin: float = 0.2   # inner margin on the estimated distance
    entry_debounce: int = 2    # consecutive in-zone frames before a record opens

    def __post_init__(self):
        if self.capture_zone[0] >= self.capture_zone[1]:
            raise ValueError("capture zone must be an increasing range")
        if self.plausible_range[0] >= self.plausible_range[1]:
            raise ValueError("plausible range must be an increasing range")
        if not (self.plausible_range[0] <= self.fever_threshold <= self.plausible_range[1]):
            raise ValueError("fever threshold must sit inside the plausible range")
        if self.min_readings < 1:
            raise ValueError("min_readings must be >= 1")


@dataclass(frozen=True)
class Reading:
    person_id: int
    frame_seq: int
    priority: RegionPriority
    raw_temp: float
    corrected_temp: float
    distance: float
    low_confidence: bool
    sample_box: BBox | None = None   # thermal-frame pixels that were scanned


@dataclass
class ScreeningRecord:
    person_id: int
    readings: list[Reading] = field(default_factory=list)
    best_priority_seen: RegionPriority | None = None
    reported_temp: float | None = None
    alerted_temp: float | None = None
    alerted_priority: RegionPriority | None = None
    entered_zone: bool = False
    last_seen: float = 0.0


@dataclass(frozen=True)
class Alert:
    person_id: int
    temp: float
    priority: RegionPriority
    frame_seq: int
    reason: str  # first | higher_priority | delta

    def __post_init__(self):
        if self.reason not in ("first", "higher_priority", "delta"):
            raise ValueError(f"unknown alert reason {self.reason!r}")


@dataclass(frozen=True)
class Annotation:
    person_id: int
    box: BBox
    temp: float | None
    febrile: bool
    low_confidence: bool


def measure_temperature(boxes: dict[str, BBox], person_id: int,
                        alignment: AlignmentResult,
                        config: ScreeningConfig,
                        calib_offset: float = 0.0):
    """Highest-priority region reading: (raw_temp, priority, thermal sample box).

    Returns None when no region is available, the mapped sample area falls
    outside the thermal frame, or the value is outside the plausible range.
    """
    for kind in ("eye", "face", "head"):
        box = boxes.get(kind)
        if box is None:
            continue
        priority = _REGION_FOR_KIND[kind]
        fx, fy = SAMPLE_FRACTIONS[priority]
        sampled = alignment.sample_thermal(person_id, box.scaled(fx, fy))
        if sampled is None:
            return None
        pixels, tbox = sampled
        raw = float(pixels.max()) + calib_offset
        lo, hi = config.plausible_range
        if not (lo <= raw <= hi):
            return None
        return raw, priority, tbox
    return None


class ScreeningEngine:
    """Single-writer screening state, stepped in frame order."""

    def __init__(self, config: ScreeningConfig | None = None,
                 compensation: CompensationModel | None = None):
        self.config = config or ScreeningConfig()
        self.compensation = compensation or CompensationModel()
        self.records: dict[int, ScreeningRecord] = {}
        self.last_seq = -1
        self._zone_streak: dict[int, int] = {}

    def _in_roi(self, boxes: dict[str, BBox]) -> bool:
        roi = self.config.roi
        if roi is None:
            return True
        ref = boxes.get("body") or boxes.get("head") or boxes.get("face")
        if ref is None:
            return False
        return roi.contains_point(ref.cx, ref.cy)

    def _in_zone(self, distance: float | None) -> bool:
        if distance is None:
            return False
        lo, hi = self.config.capture_zone
        m = self.config.zone_margin
        return lo + m <= distance <= hi - m

    def process_frame(self, frame_seq: int, now: float,
                      persons: dict[int, dict[str, BBox]],
                      alignment: AlignmentResult,
                      calib_offset: float = 0.0) -> tuple[list[Reading], list[Annotation]]:
        """Measure every in-ROI, in-zone person; out-of-order frames are no-ops."""
        if frame_seq <= self.last_seq:
            return [], []
        self.last_seq = frame_seq

        cfg = self.config
        readings: list[Reading] = []
        annotations: list[Annotation] = []
        for pid in sorted(persons):
            boxes = persons[pid]
            if not self._in_roi(boxes):
                continue
            pa = alignment.get(pid)
            distance = pa.distance if pa is not None else None
            low_conf = pa.low_confidence if pa is not None else True

            record = self.records.get(pid)
            in_zone = self._in_zone(distance)
            streak = self._zone_streak.get(pid, 0) + 1 if in_zone else 0
            self._zone_streak[pid] = streak
            # a record opens only after the debounce (zone entry confirmed);
            # an existing record keeps measuring whenever inside the zone
            if in_zone and (record is not None or streak >= cfg.entry_debounce):
                measured = measure_temperature(boxes, pid, alignment, cfg, calib_offset)
                if measured is not None:
                    raw, priority, tbox = measured
                    corrected = self.compensation.correct(raw, distance)
                    if record is None:
                        record = ScreeningRecord(person_id=pid, entered_zone=True)
                        self.records[pid] = record
                    reading = Reading(person_id=pid, frame_seq=frame_seq,
                                      priority=priority, raw_temp=raw,
                                      corrected_temp=corrected, distance=distance,
                                      low_confidence=low_conf, sample_box=tbox)
                    record.readings.append(reading)
                    record.entered_zone = True
                    readings.append(reading)
            if record is not None:
                record.last_seen = now

            display = record.reported_temp if record and record.reported_temp is not None \
                else (record.readings[-1].corrected_temp if record and record.readings else None)
            ref_box = boxes.get("body") or boxes.get("head") or boxes.get("face")
            if ref_box is not None:
                annotations.append(Annotation(
                    person_id=pid, box=ref_box, temp=display,
                    febrile=display is not None and display >= cfg.fever_threshold,
                    low_confidence=low_conf))
        return readings, annotations

    def refine_and_alert(self, frame_seq: int, now: float) -> list[Alert]:
        """Recompute reported temperatures, emit de-duplicated alerts, expire."""
        cfg = self.config
        alerts: list[Alert] = []
        for pid in sorted(self.records):
            record = self.records[pid]
            if len(record.readings) < cfg.min_readings:
                continue
            best_p = min(r.priority for r in record.readings)
            reported = max(r.corrected_temp for r in record.readings
                           if r.priority == best_p)
            record.best_priority_seen = best_p
            record.reported_temp = reported

            if reported < cfg.fever_threshold:
                continue
            reason = None
            if record.alerted_temp is None:
                reason = "first"
            elif record.alerted_priority is not None and best_p < record.alerted_priority:
                reason = "higher_priority"
            elif reported - record.alerted_temp >= cfg.delta_realert:
                reason = "delta"
            if reason is not None:
                record.alerted_temp = reported
                record.alerted_priority = best_p
                alerts.append(Alert(person_id=pid, temp=reported, priority=best_p,
                                    frame_seq=frame_seq, reason=reason))

        expired = [pid for pid, rec in self.records.items()
                   if now - rec.last_seen > cfg.cache_ttl]
        for pid in expired:
            del self.records[pid]
            self._zone_streak.pop(pid, None)
        return alerts

    def state_fingerprint(self) -> tuple:
        """Hashable snapshot of mutable state; unchanged by discarded frames."""
        items = []
        for pid in sorted(self.records):
            rec = self.records[pid]
            items.append((pid, tuple(rec.readings), rec.best_priority_seen,
                          rec.reported_temp, rec.alerted_temp, rec.alerted_priority,
                          rec.entered_zone, rec.last_seen))
        return (self.last_seq, tuple(items))


# ---------------------------------------------------------------------------
# deterministic annotation rasterizer

_GLYPHS = {
    "0": (0b01110, 0b10001, 0b10011, 0b10101, 0b11001, 0b10001, 0b01110),
    "1": (0b00100, 0b01100, 0b00100, 0b00100, 0b00100, 0b00100, 0b01110),
    "2": (0b01110, 0b10001, 0b00001, 0b00010, 0b00100, 0b01000, 0b11111),
    "3": (0b11110, 0b00001, 0b00001, 0b01110, 0b00001, 0b00001, 0b11110),
    "4": (0b00010, 0b00110, 0b01010, 0b10010, 0b11111, 0b00010, 0b00010),
    "5": (0b11111, 0b10000, 0b11110, 0b00001, 0b00001, 0b10001, 0b01110),
    "6": (0b00110, 0b01000, 0b10000, 0b11110, 0b10001, 0b10001, 0b01110),
    "7": (0b11111, 0b00001, 0b00010, 0b00100, 0b01000, 0b01000, 0b01000),
    "8": (0b01110, 0b10001, 0b10001, 0b01110, 0b10001, 0b10001, 0b01110),
    "9": (0b01110, 0b10001, 0b10001, 0b01111, 0b00001, 0b00010, 0b01100),
    ".": (0b00000, 0b00000, 0b00000, 0b00000, 0b00000, 0b01100, 0b01100),
    "-": (0b00000, 0b00000, 0b00000, 0b11111, 0b00000, 0b00000, 0b00000),
    "C": (0b01110, 0b10001, 0b10000, 0b10000, 0b10000, 0b10001, 0b01110),
    "?": (0b01110, 0b10001, 0b00010, 0b00100, 0b00100, 0b00000, 0b00100),
}
_GLYPH_W, _GLYPH_H, _TEXT_SCALE = 5, 7, 2


def _draw_text(img: np.ndarray, x: int, y: int, text: str, color) -> None:
    h, w = img.shape[:2]
    cx = x
    for ch in text:
        rows = _GLYPHS.get(ch, _GLYPHS["?"])
        for ry, bits in enumerate(rows):
            for rx in range(_GLYPH_W):
                if bits & (1 << (_GLYPH_W - 1 - rx)):
                    py = y + ry * _TEXT_SCALE
                    px = cx + rx * _TEXT_SCALE
                    if 0 <= py < h - 1 and 0 <= px < w - 1:
                        img[py:py + _TEXT_SCALE, px:px + _TEXT_SCALE] = color
        cx += (_GLYPH_W + 1) * _TEXT_SCALE


def _draw_rect(img: np.ndarray, box: BBox, color, thickness: int) -> None:
    h, w = img.shape[:2]
    x1 = int(np.clip(round(box.x), 0, w - 1))
    y1 = int(np.clip(round(box.y), 0, h - 1))
    x2 = int(np.clip(round(box.x2), 0, w - 1))
    y2 = int(np.clip(round(box.y2), 0, h - 1))
    for k in range(thickness):
        xa, ya = max(x1 - k, 0), max(y1 - k, 0)
        xb, yb = min(x2 + k, w - 1), min(y2 + k, h - 1)
        img[ya, xa:xb + 1] = color
        img[yb, xa:xb + 1] = color
        img[ya:yb + 1, xa] = color
        img[ya:yb + 1, xb] = color


def render_annotations(visual_frame: np.ndarray,
                       annotations: list[Annotation]) -> np.ndarray:
    """Burn boxes and temperature labels into an RGB copy of the frame.

    Febrile persons get a doubled-thickness box. With no annotations the
    output pixels equal the input frame.
    """
    rgb = np.repeat(visual_frame[:, :, None], 3, axis=2).copy()
    for ann in annotations:
        color = (230, 40, 40) if ann.febrile else (40, 220, 60)
        thickness = 2 if ann.febrile else 1
        _draw_rect(rgb, ann.box, color, thickness)
        if ann.temp is not None:
            label = f"{ann.temp:.1f}C"
            ty = int(max(ann.box.y - (_GLYPH_H + 2) * _TEXT_SCALE, 0))
            _draw_text(rgb, int(max(ann.box.x, 0)), ty, label, (255, 255, 255))
    return rgb


def write_ppm(path: str, rgb: np.ndarray) -> None:
    if rgb.dtype != np.uint8 or rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValueError("PPM writer expects an (H, W, 3) uint8 image")
    h, w = rgb.shape[:2]
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(rgb.tobytes())
