"""Stable person IDs for body/face/head detections via a person cache.

Three association passes per frame, in order: bodies match cached bodies
on box overlap AND appearance; faces match cached faces on appearance
alone and, being the more reliable cue, overwrite the ID of the body
containing them; heads inherit from their face (preferred) or body. A
cache entry expires after `ttl` seconds without any detection.
"""

from __future__ import annotations

from dataclasses import dataclass

from .core import AppearanceVector, BBox, iou, similarity
from .simulate import Detection


@dataclass(frozen=True)
class TrackConfig:
    iou_threshold: float = 0.3
    body_similarity_threshold: float = 0.7
    face_match_threshold: float = 0.8
    ttl: float = 10.0

    def __post_init__(self):
        for name in ("iou_threshold", "body_similarity_threshold", "face_match_threshold"):
            v = getattr(self, name)
            if not (0.0 < v <= 1.0):
                raise ValueError(f"{name} must be in (0, 1], got {v}")
        if self.ttl <= 0:
            raise ValueError("ttl must be positive")


@dataclass
class TrackedPerson:
    """Cache entry: latest per-region boxes and appearance snapshots."""

    id: int
    body_box: BBox | None = None
    face_box: BBox | None = None
    head_box: BBox | None = None
    body_appearance: AppearanceVector | None = None
    face_appearance: AppearanceVector | None = None
    last_seen: float = 0.0


@dataclass(frozen=True)
class TrackedDetection:
    """A detection annotated with its tracking ID."""

    detection: Detection
    track_id: int

    @property
    def kind(self) -> str:
        return self.detection.kind

    @property
    def bbox(self) -> BBox:
        return self.detection.bbox


def _contains_center(outer: BBox, inner: BBox) -> bool:
    return outer.contains_point(inner.cx, inner.cy)


class PersonTracker:
    """Single-writer tracker; call assign_ids in frame order."""

    def __init__(self, config: TrackConfig | None = None):
        self.config = config or TrackConfig()
        self.cache: dict[int, TrackedPerson] = {}
        self._next_id = 1

    def _new_id(self) -> int:
        nid = self._next_id
        self._next_id += 1
        return nid

    def _best_body_match(self, det: Detection, claimed: set[int]) -> int | None:
        cfg = self.config
        best: tuple[float, int] | None = None
        for pid in sorted(self.cache):
            if pid in claimed:
                continue
            entry = self.cache[pid]
            if entry.body_box is None or entry.body_appearance is None:
                continue
            if iou(det.bbox, entry.body_box) < cfg.iou_threshold:
                continue
            score = similarity(det.appearance, entry.body_appearance)
            if score < cfg.body_similarity_threshold:
                continue
            if best is None or score > best[0]:
                best = (score, pid)
        return best[1] if best else None

    def _best_face_match(self, det: Detection, claimed: set[int]) -> int | None:
        cfg = self.config
        best: tuple[float, int] | None = None
        for pid in sorted(self.cache):
            if pid in claimed:
                continue
            entry = self.cache[pid]
            if entry.face_appearance is None:
                continue
            score = similarity(det.appearance, entry.face_appearance)
            if score < cfg.face_match_threshold:
                continue
            if best is None or score > best[0]:
                best = (score, pid)
        return best[1] if best else None

    def assign_ids(self, detections: list[Detection], now: float) -> list[TrackedDetection]:
        """Annotate one frame's detections with IDs and update the cache."""
        bodies = [d for d in detections if d.kind == "body"]
        faces = [d for d in detections if d.kind == "face"]
        heads = [d for d in detections if d.kind == "head"]
        eyes = [d for d in detections if d.kind == "eye"]

        body_ids: list[int] = []
        claimed: set[int] = set()
        for det in bodies:
            match = self._best_body_match(det, claimed)
            if match is None:
                match = self._new_id()
            claimed.add(match)
            body_ids.append(match)

        def containing_body(det: Detection) -> int | None:
            for box_det, bid in zip(bodies, body_ids):
                if _contains_center(box_det.bbox, det.bbox):
                    return bid
            return None

        face_ids: list[int] = []
        face_claimed: set[int] = set()
        for det in faces:
            match = self._best_face_match(det, face_claimed)
            if match is not None:
                face_claimed.add(match)
                face_ids.append(match)
                # the face ID is more trustworthy: overwrite the containing body
                for k, (box_det, bid) in enumerate(zip(bodies, body_ids)):
                    if _contains_center(box_det.bbox, det.bbox):
                        body_ids[k] = match
                        break
            else:
                inherited = containing_body(det)
                face_ids.append(inherited if inherited is not None else self._new_id())

        def containing_face(det: Detection) -> int | None:
            for face_det, fid in zip(faces, face_ids):
                if _contains_center(det.bbox, face_det.bbox):
                    return fid
            return None

        head_ids: list[int] = []
        for det in heads:
            fid = containing_face(det)
            if fid is not None:
                head_ids.append(fid)
                continue
            bid = containing_body(det)
            head_ids.append(bid if bid is not None else self._new_id())

        out: list[TrackedDetection] = []
        for det, pid in zip(bodies, body_ids):
            out.append(TrackedDetection(det, pid))
            entry = self.cache.setdefault(pid, TrackedPerson(id=pid))
            entry.body_box = det.bbox
            entry.body_appearance = det.appearance
            entry.last_seen = now
        for det, pid in zip(faces, face_ids):
            out.append(TrackedDetection(det, pid))
            entry = self.cache.setdefault(pid, TrackedPerson(id=pid))
            entry.face_box = det.bbox
            entry.face_appearance = det.appearance
            entry.last_seen = now
        for det, pid in zip(heads, head_ids):
            out.append(TrackedDetection(det, pid))
            entry = self.cache.setdefault(pid, TrackedPerson(id=pid))
            # heads never update appearance snapshots (weak similarity cue)
            entry.head_box = det.bbox
            entry.last_seen = now
        # eyes ride along with the face containing them
        for det in eyes:
            owner = None
            for face_det, fid in zip(faces, face_ids):
                if _contains_center(face_det.bbox, det.bbox):
                    owner = fid
                    break
            if owner is not None:
                out.append(TrackedDetection(det, owner))
        return out

    def expire_stale(self, now: float) -> list[int]:
        """Drop entries unseen for longer than ttl; returns removed IDs ascending."""
        gone = sorted(pid for pid, entry in self.cache.items()
                      if now - entry.last_seen > self.config.ttl)
        for pid in gone:
            del self.cache[pid]
        return gone
