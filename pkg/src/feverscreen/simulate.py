"""Deterministic dual-sensor scene simulator.

Produces paired visual/thermal frames of people walking toward a
side-by-side visual+thermal camera rig, plus noisy detections and ground
truth. Replaces real cameras and the proprietary detector so the whole
screening pipeline is testable on a desk.

World frame: x right (meters), y down, z depth away from the camera.
The visual pinhole sits at the origin; the thermal pinhole is displaced
by ``baseline`` meters along +x. People are flat billboards facing the
camera, so the per-person visual/thermal mapping is exactly projective.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .core import APPEARANCE_DIM, AppearanceVector, BBox

# rng stream ids (mixed with the scenario seed, never with each other)
_STREAM_SCENARIO = 1
_STREAM_RENDER = 2
_STREAM_DETECT = 3

# person geometry in meters, local to the head center (y down); the outline
# deliberately carries notches (shoulders, arms, leg gap) so silhouette
# corners exist at every distance
HEAD_RX = 0.09
HEAD_RY = 0.11
_SHOULDERS = (-0.275, 0.13, 0.275, 0.35)
_ARM_L = (-0.30, 0.35, -0.21, 0.62)
_ARM_R = (0.21, 0.35, 0.30, 0.62)
_TORSO = (-0.21, 0.35, 0.21, 0.85)
_LEG_L = (-0.19, 0.85, -0.03, 1.50)
_LEG_R = (0.03, 0.85, 0.19, 1.50)

BODY_BOX_LOCAL = (-0.30, -HEAD_RY, 0.30, 1.50)
HEAD_BOX_LOCAL = (-HEAD_RX, -HEAD_RY, HEAD_RX, HEAD_RY)
FACE_BOX_LOCAL = (-0.065, -0.045, 0.065, 0.095)
EYE_BOX_LOCAL = (-0.055, -0.035, 0.055, -0.005)

# accessory-covered strips of the head (local meters)
_COVER_BANDS = {
    "glasses": (-HEAD_RX, -0.040, HEAD_RX, 0.000),
    "mask": (-HEAD_RX, 0.010, HEAD_RX, HEAD_RY),
    "hat": (-HEAD_RX, -HEAD_RY, HEAD_RX, -0.055),
}

CLOTHING_FACTOR = 0.30   # clothed body emits this fraction of skin contrast
COVER_FACTOR = 0.35      # accessory-covered skin likewise
DETECTION_KINDS = ("body", "head", "face", "eye")
MIN_DETECTION_PX = 2.0


@dataclass(frozen=True)
class CameraRig:
    """Side-by-side visual + thermal pinhole pair."""

    visual_resolution: tuple[int, int] = (1280, 960)
    thermal_resolution: tuple[int, int] = (336, 252)
    visual_focal: float = 660.0
    thermal_focal: float | None = None
    baseline: float = 0.06

    def __post_init__(self):
        if self.baseline <= 0:
            raise ValueError("baseline must be positive")
        if self.visual_focal <= 0:
            raise ValueError("visual focal length must be positive")
        if self.thermal_focal is None:
            # same field of view as the visual sensor by default
            scaled = self.visual_focal * self.thermal_resolution[0] / self.visual_resolution[0]
            object.__setattr__(self, "thermal_focal", scaled)
        if self.thermal_focal <= 0:
            raise ValueError("thermal focal length must be positive")

    @property
    def scale_x(self) -> float:
        return self.visual_resolution[0] / self.thermal_resolution[0]

    @property
    def scale_y(self) -> float:
        return self.visual_resolution[1] / self.thermal_resolution[1]

    def project_visual(self, x: float, y: float, z: float) -> tuple[float, float]:
        w, h = self.visual_resolution
        return (w / 2.0 + self.visual_focal * x / z,
                h / 2.0 + self.visual_focal * y / z)

    def project_thermal(self, x: float, y: float, z: float) -> tuple[float, float]:
        w, h = self.thermal_resolution
        return (w / 2.0 + self.thermal_focal * (x - self.baseline) / z,
                h / 2.0 + self.thermal_focal * y / z)

    def parallax_visual_px(self, z: float) -> float:
        """Horizontal visual-pixel offset between the two projections at depth z."""
        return self.visual_focal * self.baseline / z

    def to_dict(self) -> dict:
        return {
            "visual_resolution": list(self.visual_resolution),
            "thermal_resolution": list(self.thermal_resolution),
            "visual_focal": self.visual_focal,
            "thermal_focal": self.thermal_focal,
            "baseline": self.baseline,
        }

    @staticmethod
    def from_dict(d: dict) -> "CameraRig":
        return CameraRig(
            visual_resolution=tuple(d["visual_resolution"]),
            thermal_resolution=tuple(d["thermal_resolution"]),
            visual_focal=d["visual_focal"],
            thermal_focal=d["thermal_focal"],
            baseline=d["baseline"],
        )


@dataclass(frozen=True)
class PersonSpec:
    """One simulated person: identity, temperature, path, accessories."""

    id: str
    core_temp: float
    trajectory: tuple  # ((t, x, z), ...) piecewise-linear, t strictly increasing
    head_y: float = 0.0
    accessories: frozenset = frozenset()
    appearance_identity: AppearanceVector | None = None
    body_gray: int = 70
    head_gray: int = 95

    def __post_init__(self):
        if not (30.0 <= self.core_temp <= 45.0):
            raise ValueError(f"core_temp {self.core_temp} outside plausible range")
        if len(self.trajectory) < 1:
            raise ValueError("trajectory needs at least one waypoint")
        ts = [w[0] for w in self.trajectory]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("trajectory times must strictly increase")
        bad = self.accessories - set(_COVER_BANDS)
        if bad:
            raise ValueError(f"unknown accessories: {sorted(bad)}")

    @property
    def t_enter(self) -> float:
        return self.trajectory[0][0]

    @property
    def t_exit(self) -> float:
        return self.trajectory[-1][0]

    def position(self, t: float) -> tuple[float, float, float] | None:
        """World (x, y, z) of the head center at time t, None when off-stage."""
        if t < self.t_enter or t > self.t_exit:
            return None
        way = self.trajectory
        for (t0, x0, z0), (t1, x1, z1) in zip(way, way[1:]):
            if t <= t1:
                a = 0.0 if t1 == t0 else (t - t0) / (t1 - t0)
                return (x0 + a * (x1 - x0), self.head_y, z0 + a * (z1 - z0))
        t0, x0, z0 = way[-1]
        return (x0, self.head_y, z0)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "core_temp": self.core_temp,
            "trajectory": [list(w) for w in self.trajectory],
            "head_y": self.head_y,
            "accessories": sorted(self.accessories),
            "appearance_identity": list(self.appearance_identity.values)
            if self.appearance_identity else None,
            "body_gray": self.body_gray,
            "head_gray": self.head_gray,
        }

    @staticmethod
    def from_dict(d: dict) -> "PersonSpec":
        app = d.get("appearance_identity")
        return PersonSpec(
            id=d["id"],
            core_temp=d["core_temp"],
            trajectory=tuple(tuple(w) for w in d["trajectory"]),
            head_y=d.get("head_y", 0.0),
            accessories=frozenset(d.get("accessories", ())),
            appearance_identity=AppearanceVector(tuple(app)) if app else None,
            body_gray=d.get("body_gray", 70),
            head_gray=d.get("head_gray", 95),
        )


@dataclass(frozen=True)
class DriftProfile:
    """Step schedule of a uniform additive thermal offset versus time."""

    schedule: tuple = ()  # ((t, offset_c), ...) sorted by t

    def __post_init__(self):
        if any(not math.isfinite(o) for _, o in self.schedule):
            raise ValueError("drift offsets must be finite")
        ts = [t for t, _ in self.schedule]
        if ts != sorted(ts):
            raise ValueError("drift schedule must be time-sorted")

    def offset_at(self, t: float) -> float:
        out = 0.0
        for t0, off in self.schedule:
            if t >= t0:
                out = off
            else:
                break
        return out

    def to_dict(self) -> dict:
        return {"schedule": [list(s) for s in self.schedule]}

    @staticmethod
    def from_dict(d: dict) -> "DriftProfile":
        return DriftProfile(schedule=tuple(tuple(s) for s in d.get("schedule", ())))


@dataclass(frozen=True)
class BlackBodySpec:
    """Reference object painted into the thermal frame at a known temperature."""

    roi: BBox = BBox(12.0, 10.0, 26.0, 18.0)
    reference_temp: float = 35.0

    def to_dict(self) -> dict:
        return {"roi": [self.roi.x, self.roi.y, self.roi.w, self.roi.h],
                "reference_temp": self.reference_temp}

    @staticmethod
    def from_dict(d: dict) -> "BlackBodySpec":
        x, y, w, h = d["roi"]
        return BlackBodySpec(roi=BBox(x, y, w, h), reference_temp=d["reference_temp"])


@dataclass(frozen=True)
class DetectionNoise:
    """Detector imperfection model: misses, box jitter, appearance noise."""

    miss_prob: float = 0.0
    bbox_jitter_px: float = 0.0
    appearance_sigma: float = 0.0
    occlusion_threshold: float = 0.5  # box covered beyond this fraction -> suppressed

    def to_dict(self) -> dict:
        return {"miss_prob": self.miss_prob, "bbox_jitter_px": self.bbox_jitter_px,
                "appearance_sigma": self.appearance_sigma,
                "occlusion_threshold": self.occlusion_threshold}

    @staticmethod
    def from_dict(d: dict) -> "DetectionNoise":
        return DetectionNoise(
            miss_prob=d.get("miss_prob", 0.0),
            bbox_jitter_px=d.get("bbox_jitter_px", 0.0),
            appearance_sigma=d.get("appearance_sigma", 0.0),
            occlusion_threshold=d.get("occlusion_threshold", 0.5),
        )


@dataclass(frozen=True)
class FramePair:
    """Synchronized visual image and thermal temperature grid."""

    seq: int
    timestamp: float
    visual: np.ndarray   # (H, W) uint8
    thermal: np.ndarray  # (H, W) float32, degrees C

    def __post_init__(self):
        if self.visual.dtype != np.uint8 or self.visual.ndim != 2:
            raise ValueError("visual frame must be a 2-D uint8 array")
        if self.thermal.dtype != np.float32 or self.thermal.ndim != 2:
            raise ValueError("thermal frame must be a 2-D float32 array")
        if not np.all(np.isfinite(self.thermal)):
            raise ValueError("thermal values must be finite")


@dataclass(frozen=True)
class Detection:
    """Simulated detector output for one region of one person."""

    frame_seq: int
    kind: str
    bbox: BBox
    confidence: float
    appearance: AppearanceVector
    truth_id: str | None = None

    def __post_init__(self):
        if self.kind not in DETECTION_KINDS:
            raise ValueError(f"unknown detection kind {self.kind!r}")

    def without_truth(self) -> "Detection":
        return replace(self, truth_id=None)

    def to_dict(self) -> dict:
        return {
            "frame": self.frame_seq,
            "kind": self.kind,
            "bbox": [self.bbox.x, self.bbox.y, self.bbox.w, self.bbox.h],
            "confidence": self.confidence,
            "appearance": list(self.appearance.values),
            "truth_id": self.truth_id,
        }

    @staticmethod
    def from_dict(d: dict) -> "Detection":
        x, y, w, h = d["bbox"]
        return Detection(
            frame_seq=d["frame"],
            kind=d["kind"],
            bbox=BBox(x, y, w, h),
            confidence=d["confidence"],
            appearance=AppearanceVector(tuple(d["appearance"])),
            truth_id=d.get("truth_id"),
        )


@dataclass(frozen=True)
class GroundTruthRow:
    frame: int
    person_id: str
    core_temp_c: float
    distance_m: float
    visible: bool


@dataclass(frozen=True)
class Scenario:
    """Immutable description of a simulated run; the seed fixes every output bit."""

    people: tuple = ()
    duration: float = 10.0
    frame_rate: float = 8.0
    rig: CameraRig = CameraRig()
    ambient_temp: float = 22.0
    attenuation_kappa: float = 0.05
    drift: DriftProfile = DriftProfile()
    black_body: BlackBodySpec = BlackBodySpec()
    rng_seed: int = 0
    thermal_noise_sigma: float = 0.1
    visual_noise_sigma: float = 2.0
    detection_noise: DetectionNoise = DetectionNoise()

    def __post_init__(self):
        if self.frame_rate <= 0:
            raise ValueError("frame_rate must be positive")
        if self.duration <= 0:
            raise ValueError("duration must be positive")
        tw, th = self.black_body.roi.x2, self.black_body.roi.y2
        if tw > self.rig.thermal_resolution[0] or th > self.rig.thermal_resolution[1]:
            raise ValueError("black body ROI must lie inside the thermal frame")
        ids = [p.id for p in self.people]
        if len(set(ids)) != len(ids):
            raise ValueError("person ids must be unique")

    @property
    def n_frames(self) -> int:
        return int(round(self.duration * self.frame_rate))

    def frame_time(self, seq: int) -> float:
        return seq / self.frame_rate

    def frame_seq(self, t: float) -> int:
        return int(round(t * self.frame_rate))

    def skin_temp(self, core_temp: float, z: float, t: float) -> float:
        """Measured skin temperature before sensor noise: attenuated core + drift."""
        atten = math.exp(-self.attenuation_kappa * z)
        return self.ambient_temp + (core_temp - self.ambient_temp) * atten + self.drift.offset_at(t)

    def to_dict(self) -> dict:
        return {
            "people": [p.to_dict() for p in self.people],
            "duration": self.duration,
            "frame_rate": self.frame_rate,
            "rig": self.rig.to_dict(),
            "ambient_temp": self.ambient_temp,
            "attenuation_kappa": self.attenuation_kappa,
            "drift": self.drift.to_dict(),
            "black_body": self.black_body.to_dict(),
            "rng_seed": self.rng_seed,
            "thermal_noise_sigma": self.thermal_noise_sigma,
            "visual_noise_sigma": self.visual_noise_sigma,
            "detection_noise": self.detection_noise.to_dict(),
        }

    @staticmethod
    def from_dict(d: dict) -> "Scenario":
        return Scenario(
            people=tuple(PersonSpec.from_dict(p) for p in d["people"]),
            duration=d["duration"],
            frame_rate=d["frame_rate"],
            rig=CameraRig.from_dict(d["rig"]),
            ambient_temp=d["ambient_temp"],
            attenuation_kappa=d["attenuation_kappa"],
            drift=DriftProfile.from_dict(d["drift"]),
            black_body=BlackBodySpec.from_dict(d["black_body"]),
            rng_seed=d["rng_seed"],
            thermal_noise_sigma=d["thermal_noise_sigma"],
            visual_noise_sigma=d["visual_noise_sigma"],
            detection_noise=DetectionNoise.from_dict(d["detection_noise"]),
        )


# ---------------------------------------------------------------------------
# scenario generation


@dataclass(frozen=True)
class SimConfig:
    """Knobs for generate_scenario; everything else derives from the seed."""

    n_people: int = 10
    febrile_count: int = 0
    febrile_temp_range: tuple[float, float] = (38.5, 39.8)
    normal_temp_range: tuple[float, float] = (36.2, 37.5)
    frame_rate: float = 8.0
    rig: CameraRig = CameraRig()
    ambient_temp: float = 22.0
    attenuation_kappa: float = 0.05
    thermal_noise_sigma: float = 0.1
    visual_noise_sigma: float = 2.0
    drift: DriftProfile = DriftProfile()
    black_body: BlackBodySpec = BlackBodySpec()
    detection_noise: DetectionNoise = DetectionNoise(
        miss_prob=0.03, bbox_jitter_px=1.5, appearance_sigma=0.05)
    lead_in: float = 2.0          # empty-scene warmup before the first entry
    entry_gap: float = 1.2        # mean seconds between entries
    speed_range: tuple[float, float] = (0.8, 1.3)
    lane_half_width: float = 0.7
    z_start: float = 4.2
    z_end: float = 0.7
    accessory_probs: dict = field(default_factory=lambda: {"mask": 0.3, "glasses": 0.3, "hat": 0.2})
    appearance_dim: int = APPEARANCE_DIM
    duration: float | None = None  # auto from entries when None

    def __post_init__(self):
        if self.n_people < 0:
            raise ValueError("n_people must be >= 0")
        if not (0 <= self.febrile_count <= self.n_people):
            raise ValueError("febrile_count must be within [0, n_people]")
        if self.z_start <= self.z_end:
            raise ValueError("people must walk toward the camera (z_start > z_end)")
        if self.febrile_temp_range[0] <= self.normal_temp_range[1]:
            raise ValueError("febrile and normal temperature ranges must not overlap")


def generate_scenario(config: SimConfig, seed: int) -> Scenario:
    """Build a reproducible scenario: same (config, seed) gives identical output."""
    rng = np.random.default_rng([_STREAM_SCENARIO, seed])
    n = config.n_people
    febrile = set(rng.permutation(n)[: config.febrile_count].tolist()) if n else set()

    gaps = rng.uniform(0.4 * config.entry_gap, 1.6 * config.entry_gap, size=n)
    entry = config.lead_in + np.cumsum(gaps) - gaps[0] if n else np.zeros(0)

    people = []
    t_last = config.lead_in
    for i in range(n):
        lo, hi = (config.febrile_temp_range if i in febrile else config.normal_temp_range)
        core = float(rng.uniform(lo, hi))
        speed = float(rng.uniform(*config.speed_range))
        x0 = float(rng.uniform(-config.lane_half_width, config.lane_half_width))
        dx = float(rng.uniform(-0.15, 0.15))
        head_y = float(rng.uniform(-0.08, 0.08))
        accessories = frozenset(
            a for a, p in sorted(config.accessory_probs.items()) if rng.random() < p)
        ident = AppearanceVector.random(rng, config.appearance_dim)
        body_gray = int(rng.integers(40, 85))
        t0 = float(entry[i])
        transit = (config.z_start - config.z_end) / speed
        people.append(PersonSpec(
            id=f"p{i:03d}",
            core_temp=core,
            trajectory=((t0, x0, config.z_start), (t0 + transit, x0 + dx, config.z_end)),
            head_y=head_y,
            accessories=accessories,
            appearance_identity=ident,
            body_gray=body_gray,
            head_gray=min(body_gray + 22, 100),
        ))
        t_last = max(t_last, t0 + transit)

    duration = config.duration if config.duration is not None else t_last + 1.0
    return Scenario(
        people=tuple(people),
        duration=duration,
        frame_rate=config.frame_rate,
        rig=config.rig,
        ambient_temp=config.ambient_temp,
        attenuation_kappa=config.attenuation_kappa,
        drift=config.drift,
        black_body=config.black_body,
        rng_seed=seed,
        thermal_noise_sigma=config.thermal_noise_sigma,
        visual_noise_sigma=config.visual_noise_sigma,
        detection_noise=config.detection_noise,
    )


# ---------------------------------------------------------------------------
# rasterization helpers


def _fill_rect(img: np.ndarray, x1: float, y1: float, x2: float, y2: float, value) -> None:
    h, w = img.shape
    xi1 = max(int(math.floor(x1)), 0)
    yi1 = max(int(math.floor(y1)), 0)
    xi2 = min(int(math.ceil(x2)), w)
    yi2 = min(int(math.ceil(y2)), h)
    if xi2 > xi1 and yi2 > yi1:
        img[yi1:yi2, xi1:xi2] = value


def _ellipse_window(img: np.ndarray, cx: float, cy: float, rx: float, ry: float):
    h, w = img.shape
    xi1 = max(int(math.floor(cx - rx)), 0)
    yi1 = max(int(math.floor(cy - ry)), 0)
    xi2 = min(int(math.ceil(cx + rx)) + 1, w)
    yi2 = min(int(math.ceil(cy + ry)) + 1, h)
    if xi2 <= xi1 or yi2 <= yi1:
        return None
    ys = np.arange(yi1, yi2, dtype=np.float64) + 0.5
    xs = np.arange(xi1, xi2, dtype=np.float64) + 0.5
    mask = (((xs[None, :] - cx) / rx) ** 2 + ((ys[:, None] - cy) / ry) ** 2) <= 1.0
    return (slice(yi1, yi2), slice(xi1, xi2)), mask


def _fill_ellipse(img: np.ndarray, cx, cy, rx, ry, value) -> None:
    win = _ellipse_window(img, cx, cy, rx, ry)
    if win is None:
        return
    sl, mask = win
    region = img[sl]
    region[mask] = value


def _fill_ellipse_band(img, cx, cy, rx, ry, y1, y2, value) -> None:
    """Fill the part of the ellipse whose pixel centers fall in [y1, y2)."""
    win = _ellipse_window(img, cx, cy, rx, ry)
    if win is None:
        return
    sl, mask = win
    ys = np.arange(sl[0].start, sl[0].stop, dtype=np.float64) + 0.5
    band = (ys >= y1) & (ys < y2)
    mask = mask & band[:, None]
    region = img[sl]
    region[mask] = value


def _local_rect_to_frame(project, px, py, pz, rect) -> tuple[float, float, float, float]:
    x1, y1, x2, y2 = rect
    u1, v1 = project(px + x1, py + y1, pz)
    u2, v2 = project(px + x2, py + y2, pz)
    return u1, v1, u2, v2


def _person_parts(project, px, py, pz):
    """Projected body-part geometry: list of ('rect', coords) plus head ellipse."""
    rects = [_local_rect_to_frame(project, px, py, pz, r)
             for r in (_SHOULDERS, _ARM_L, _ARM_R, _TORSO, _LEG_L, _LEG_R)]
    hu, hv = project(px, py, pz)
    # radii via projected local extents (billboard at depth pz)
    u1, _ = project(px - HEAD_RX, py, pz)
    u2, _ = project(px + HEAD_RX, py, pz)
    _, v1 = project(px, py - HEAD_RY, pz)
    _, v2 = project(px, py + HEAD_RY, pz)
    return rects, (hu, hv, (u2 - u1) / 2.0, (v2 - v1) / 2.0)


def active_people(scenario: Scenario, t: float):
    """(person, (x, y, z)) for everyone on stage at time t, nearest first."""
    out = []
    for p in scenario.people:
        pos = p.position(t)
        if pos is not None and pos[2] > 0.2:
            out.append((p, pos))
    out.sort(key=lambda item: item[1][2])
    return out


def _static_visual_background(scenario: Scenario) -> np.ndarray:
    w, h = scenario.rig.visual_resolution
    rng = np.random.default_rng([_STREAM_RENDER, scenario.rng_seed])
    coarse = rng.uniform(112.0, 168.0, size=(h // 32 + 2, w // 32 + 2))
    ys = np.linspace(0, coarse.shape[0] - 1.001, h)
    xs = np.linspace(0, coarse.shape[1] - 1.001, w)
    yi = ys.astype(np.int64)
    xi = xs.astype(np.int64)
    fy = (ys - yi)[:, None]
    fx = (xs - xi)[None, :]
    base = (coarse[yi][:, xi] * (1 - fy) * (1 - fx)
            + coarse[yi + 1][:, xi] * fy * (1 - fx)
            + coarse[yi][:, xi + 1] * (1 - fy) * fx
            + coarse[yi + 1][:, xi + 1] * fy * fx)
    base += rng.normal(0.0, 4.0, size=(h, w))
    return base.astype(np.float32)


_BG_CACHE: dict[tuple, np.ndarray] = {}


def _visual_background(scenario: Scenario) -> np.ndarray:
    # the plate depends only on the seed and resolution, so those key the cache
    key = (scenario.rng_seed, scenario.rig.visual_resolution)
    bg = _BG_CACHE.get(key)
    if bg is None:
        if len(_BG_CACHE) > 4:
            _BG_CACHE.clear()
        bg = _static_visual_background(scenario)
        _BG_CACHE[key] = bg
    return bg


def render_frame_pair(scenario: Scenario, t: float) -> FramePair:
    """Rasterize both sensors at time t (deterministic per-frame noise stream)."""
    if not (0.0 <= t <= scenario.duration + 1e-9):
        raise ValueError(f"t={t} outside scenario duration {scenario.duration}")
    seq = scenario.frame_seq(t)
    rng = np.random.default_rng([_STREAM_RENDER, scenario.rng_seed, seq])
    rig = scenario.rig
    wv, hv = rig.visual_resolution
    wt, ht = rig.thermal_resolution
    drift = scenario.drift.offset_at(t)

    visual = _visual_background(scenario).copy()
    thermal = np.full((ht, wt), scenario.ambient_temp + drift, dtype=np.float64)

    # far-to-near so nearer people overwrite (painter's algorithm)
    for person, (px, py, pz) in reversed(active_people(scenario, t)):
        skin = scenario.skin_temp(person.core_temp, pz, t)
        cloth = scenario.ambient_temp + CLOTHING_FACTOR * (skin - drift - scenario.ambient_temp) + drift
        cover = scenario.ambient_temp + COVER_FACTOR * (skin - drift - scenario.ambient_temp) + drift

        for proj, img, body_val, head_val in (
            (rig.project_visual, visual, float(person.body_gray), float(person.head_gray)),
            (rig.project_thermal, thermal, cloth, skin),
        ):
            rects, (hu, hvc, hrx, hry) = _person_parts(proj, px, py, pz)
            for (u1, v1, u2, v2) in rects:
                _fill_rect(img, u1, v1, u2, v2, body_val)
            _fill_ellipse(img, hu, hvc, hrx, hry, head_val)
            for acc in sorted(person.accessories):
                bx1, by1, bx2, by2 = _COVER_BANDS[acc]
                _, bv1 = proj(px, py + by1, pz)
                _, bv2 = proj(px, py + by2, pz)
                val = head_val - 18.0 if img is visual else cover
                _fill_ellipse_band(img, hu, hvc, hrx, hry, bv1, bv2, val)

    bb = scenario.black_body
    _fill_rect(thermal, bb.roi.x, bb.roi.y, bb.roi.x2, bb.roi.y2, bb.reference_temp + drift)

    if scenario.visual_noise_sigma > 0:
        visual += rng.normal(0.0, scenario.visual_noise_sigma, size=visual.shape)
    if scenario.thermal_noise_sigma > 0:
        thermal = thermal + rng.normal(0.0, scenario.thermal_noise_sigma, size=thermal.shape)

    visual_u8 = np.clip(np.rint(visual), 0, 255).astype(np.uint8)
    return FramePair(seq=seq, timestamp=t, visual=visual_u8,
                     thermal=thermal.astype(np.float32))


# ---------------------------------------------------------------------------
# ground-truth boxes, occlusion, detections


def person_boxes(rig: CameraRig, px: float, py: float, pz: float) -> dict[str, BBox]:
    """Noise-free visual-frame boxes for each detection kind, unclipped."""
    out = {}
    for kind, rect in (("body", BODY_BOX_LOCAL), ("head", HEAD_BOX_LOCAL),
                       ("face", FACE_BOX_LOCAL), ("eye", EYE_BOX_LOCAL)):
        u1, v1, u2, v2 = _local_rect_to_frame(rig.project_visual, px, py, pz, rect)
        out[kind] = BBox(u1, v1, u2 - u1, v2 - v1)
    return out


def head_center_projections(rig: CameraRig, px, py, pz):
    """(visual_uv, thermal_uv) of the head-center world point."""
    return rig.project_visual(px, py, pz), rig.project_thermal(px, py, pz)


def _coverage(box: BBox, occluders: list[BBox], cells: int = 24) -> float:
    """Fraction of box area covered by the union of occluder boxes."""
    if not occluders:
        return 0.0
    grid = np.zeros((cells, cells), dtype=bool)
    sx = cells / box.w
    sy = cells / box.h
    for occ in occluders:
        inter = box.intersect(occ)
        if inter is None:
            continue
        x1 = int(math.floor((inter.x - box.x) * sx))
        y1 = int(math.floor((inter.y - box.y) * sy))
        x2 = int(math.ceil((inter.x2 - box.x) * sx))
        y2 = int(math.ceil((inter.y2 - box.y) * sy))
        grid[max(y1, 0):min(y2, cells), max(x1, 0):min(x2, cells)] = True
    return float(grid.mean())


def _in_visual_frame(rig: CameraRig, box: BBox) -> bool:
    w, h = rig.visual_resolution
    clipped = box.clipped(w, h)
    return clipped is not None and clipped.area >= 0.25 * box.area


def emit_detections(scenario: Scenario, t: float,
                    noise: DetectionNoise | None = None) -> list[Detection]:
    """Simulated detector output at time t.

    Visible people yield body/head detections; face suppressed by
    mask+glasses together, eye by glasses or a missing face. Boxes covered
    beyond the occlusion threshold by nearer people produce nothing.
    """
    if noise is None:
        noise = scenario.detection_noise
    seq = scenario.frame_seq(t)
    rng = np.random.default_rng([_STREAM_DETECT, scenario.rng_seed, seq])
    rig = scenario.rig
    w, h = rig.visual_resolution

    people = active_people(scenario, t)
    out: list[Detection] = []
    nearer_bodies: list[BBox] = []
    for person, (px, py, pz) in people:
        boxes = person_boxes(rig, px, py, pz)
        cov = {k: _coverage(b, nearer_bodies) for k, b in boxes.items()}
        nearer_bodies.append(boxes["body"])

        suppressed = {
            "body": cov["body"] > noise.occlusion_threshold or not _in_visual_frame(rig, boxes["body"]),
            "head": cov["head"] > noise.occlusion_threshold or not _in_visual_frame(rig, boxes["head"]),
            "face": (cov["face"] > noise.occlusion_threshold
                     or not _in_visual_frame(rig, boxes["face"])
                     or {"mask", "glasses"} <= person.accessories),
            "eye": (cov["eye"] > noise.occlusion_threshold
                    or "glasses" in person.accessories),
        }

        emitted: dict[str, Detection] = {}
        for kind in DETECTION_KINDS:
            if suppressed[kind]:
                continue
            if kind == "eye" and "face" not in emitted:
                continue
            if noise.miss_prob > 0 and rng.random() < noise.miss_prob:
                continue
            box = boxes[kind]
            if noise.bbox_jitter_px > 0:
                jit = rng.normal(0.0, noise.bbox_jitter_px, size=4)
                box = BBox(box.x + jit[0], box.y + jit[1],
                           max(box.w + jit[2], MIN_DETECTION_PX),
                           max(box.h + jit[3], MIN_DETECTION_PX))
            if kind == "eye":
                clipped = box.intersect(emitted["face"].bbox)
                if clipped is None or clipped.w < MIN_DETECTION_PX or clipped.h < MIN_DETECTION_PX:
                    continue
                box = clipped
            clipped = box.clipped(w, h)
            if clipped is None or clipped.w < MIN_DETECTION_PX or clipped.h < MIN_DETECTION_PX:
                continue
            conf = float(np.clip(0.95 - 0.4 * cov[kind] + rng.normal(0.0, 0.02), 0.05, 1.0))
            appearance = person.appearance_identity.perturbed(rng, noise.appearance_sigma)
            emitted[kind] = Detection(frame_seq=seq, kind=kind, bbox=clipped,
                                      confidence=conf, appearance=appearance,
                                      truth_id=person.id)
        out.extend(emitted.values())
    return out


def ground_truth_rows(scenario: Scenario, t: float) -> list[GroundTruthRow]:
    """One row per on-stage person: core temp, depth, and visibility."""
    seq = scenario.frame_seq(t)
    rows = []
    nearer_bodies: list[BBox] = []
    for person, (px, py, pz) in active_people(scenario, t):
        body = person_boxes(scenario.rig, px, py, pz)["body"]
        cov = _coverage(body, nearer_bodies)
        nearer_bodies.append(body)
        visible = cov <= scenario.detection_noise.occlusion_threshold \
            and _in_visual_frame(scenario.rig, body)
        rows.append(GroundTruthRow(frame=seq, person_id=person.id,
                                   core_temp_c=person.core_temp,
                                   distance_m=pz, visible=visible))
    rows.sort(key=lambda r: r.person_id)
    return rows
