"""Dataset directory layout and bit-exact round-trip I/O.

Layout::

    scenario.json                 config + seed
    frames/visual_%06d.pgm        binary 8-bit PGM
    frames/thermal_%06d.bin       ASCII header "W H\\n", then little-endian
                                  float32 degrees C, row-major
    detections.jsonl              one detection per line
    groundtruth.csv               frame,person_id,core_temp_c,distance_m,visible
"""

from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import dataclass

import numpy as np

from .simulate import (Detection, FramePair, GroundTruthRow, Scenario,
                       emit_detections, ground_truth_rows, render_frame_pair)


class DatasetError(Exception):
    """Malformed, missing, or inconsistent dataset files."""


GROUNDTRUTH_HEADER = ["frame", "person_id", "core_temp_c", "distance_m", "visible"]


def write_pgm(path: str, img: np.ndarray) -> None:
    if img.dtype != np.uint8 or img.ndim != 2:
        raise ValueError("PGM writer expects a 2-D uint8 image")
    h, w = img.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(img.tobytes())


def read_pgm(path: str) -> np.ndarray:
    with open(path, "rb") as f:
        data = f.read()
    if not data.startswith(b"P5"):
        raise DatasetError(f"{path}: not a binary PGM file")
    # header: magic, width, height, maxval, single whitespace, then raster
    parts = data.split(None, 4)
    if len(parts) < 5:
        raise DatasetError(f"{path}: truncated PGM header")
    w, h, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    if maxval != 255:
        raise DatasetError(f"{path}: unsupported PGM maxval {maxval}")
    raster = parts[4]
    if len(raster) < w * h:
        raise DatasetError(f"{path}: PGM raster shorter than {w}x{h}")
    return np.frombuffer(raster[: w * h], dtype=np.uint8).reshape(h, w).copy()


def write_thermal(path: str, grid: np.ndarray) -> None:
    if grid.dtype != np.float32 or grid.ndim != 2:
        raise ValueError("thermal writer expects a 2-D float32 grid")
    h, w = grid.shape
    with open(path, "wb") as f:
        f.write(f"{w} {h}\n".encode("ascii"))
        f.write(grid.astype("<f4").tobytes())


def read_thermal(path: str) -> np.ndarray:
    with open(path, "rb") as f:
        header = f.readline()
        try:
            w, h = (int(v) for v in header.split())
        except ValueError as exc:
            raise DatasetError(f"{path}: bad thermal header {header!r}") from exc
        payload = f.read()
    expected = w * h * 4
    if len(payload) != expected:
        raise DatasetError(f"{path}: expected {expected} payload bytes, got {len(payload)}")
    return np.frombuffer(payload, dtype="<f4").reshape(h, w).copy()


def _fmt(value: float) -> str:
    return repr(float(value))


@dataclass
class Dataset:
    """A fully materialized recorded run."""

    scenario: Scenario
    frames: list[FramePair]
    detections: dict[int, list[Detection]]  # frame seq -> detections
    ground_truth: list[GroundTruthRow]

    def detections_for(self, seq: int) -> list[Detection]:
        return self.detections.get(seq, [])


def scenario_json(scenario: Scenario) -> str:
    return json.dumps(scenario.to_dict(), indent=2, sort_keys=True)


def write_dataset(scenario: Scenario, out_dir: str) -> Dataset:
    """Render and persist every frame, detection, and ground-truth row."""
    frames_dir = os.path.join(out_dir, "frames")
    os.makedirs(frames_dir, exist_ok=True)

    with open(os.path.join(out_dir, "scenario.json"), "w", encoding="ascii") as f:
        f.write(scenario_json(scenario))
        f.write("\n")

    frames: list[FramePair] = []
    detections: dict[int, list[Detection]] = {}
    gt_rows: list[GroundTruthRow] = []
    det_file = io.StringIO()
    for seq in range(scenario.n_frames):
        t = scenario.frame_time(seq)
        pair = render_frame_pair(scenario, t)
        frames.append(pair)
        write_pgm(os.path.join(frames_dir, f"visual_{seq:06d}.pgm"), pair.visual)
        write_thermal(os.path.join(frames_dir, f"thermal_{seq:06d}.bin"), pair.thermal)
        dets = emit_detections(scenario, t)
        detections[seq] = dets
        for det in dets:
            det_file.write(json.dumps(det.to_dict(), sort_keys=True))
            det_file.write("\n")
        gt_rows.extend(ground_truth_rows(scenario, t))

    with open(os.path.join(out_dir, "detections.jsonl"), "w", encoding="ascii") as f:
        f.write(det_file.getvalue())

    with open(os.path.join(out_dir, "groundtruth.csv"), "w", encoding="ascii", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(GROUNDTRUTH_HEADER)
        for row in gt_rows:
            writer.writerow([row.frame, row.person_id, _fmt(row.core_temp_c),
                             _fmt(row.distance_m), int(row.visible)])

    return Dataset(scenario=scenario, frames=frames, detections=detections,
                   ground_truth=gt_rows)


def _require(path: str) -> str:
    if not os.path.exists(path):
        raise DatasetError(f"missing dataset file: {path}")
    return path


def read_ground_truth(path: str) -> list[GroundTruthRow]:
    rows = []
    with open(_require(path), encoding="ascii", newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames != GROUNDTRUTH_HEADER:
            raise DatasetError(f"{path}: unexpected columns {reader.fieldnames}")
        for rec in reader:
            rows.append(GroundTruthRow(
                frame=int(rec["frame"]),
                person_id=rec["person_id"],
                core_temp_c=float(rec["core_temp_c"]),
                distance_m=float(rec["distance_m"]),
                visible=bool(int(rec["visible"])),
            ))
    return rows


def read_dataset(in_dir: str) -> Dataset:
    """Inverse of write_dataset; raises DatasetError naming any missing file."""
    if not os.path.isdir(in_dir):
        raise DatasetError(f"dataset directory not found: {in_dir}")
    scen_path = _require(os.path.join(in_dir, "scenario.json"))
    with open(scen_path, encoding="ascii") as f:
        try:
            scenario = Scenario.from_dict(json.load(f))
        except (KeyError, ValueError, TypeError) as exc:
            raise DatasetError(f"{scen_path}: malformed scenario ({exc})") from exc

    frames: list[FramePair] = []
    frames_dir = os.path.join(in_dir, "frames")
    for seq in range(scenario.n_frames):
        vis = read_pgm(_require(os.path.join(frames_dir, f"visual_{seq:06d}.pgm")))
        thm = read_thermal(_require(os.path.join(frames_dir, f"thermal_{seq:06d}.bin")))
        frames.append(FramePair(seq=seq, timestamp=scenario.frame_time(seq),
                                visual=vis, thermal=thm))

    detections: dict[int, list[Detection]] = {seq: [] for seq in range(scenario.n_frames)}
    det_path = _require(os.path.join(in_dir, "detections.jsonl"))
    with open(det_path, encoding="ascii") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                det = Detection.from_dict(json.loads(line))
            except (KeyError, ValueError, TypeError) as exc:
                raise DatasetError(f"{det_path}:{lineno}: malformed detection ({exc})") from exc
            detections.setdefault(det.frame_seq, []).append(det)

    gt_rows = read_ground_truth(os.path.join(in_dir, "groundtruth.csv"))
    return Dataset(scenario=scenario, frames=frames, detections=detections,
                   ground_truth=gt_rows)
