"""End-to-end streaming engine: calibrate, track, align, screen, report.

Composes the modules over a recorded dataset or an in-memory scenario,
honoring frame order, and writes the run artifacts: readings.csv,
alerts.jsonl, metrics.json, optional annotated frames, and (when ground
truth is available) a training table for the distance-compensation model.
"""

from __future__ import annotations

import csv
import json
import math
import os
import time
from collections import Counter, defaultdict
from dataclasses import dataclass, field

import numpy as np

from .alignment import AlignConfig, FrameAligner, manual_offset_for_rig
from .calibration import CalibState, controller_step, monitor_black_body
from .compensation import CompensationModel, load_model
from .core import BBox
from .dataset import Dataset, GroundTruthRow
from .screening import (Alert, Annotation, Reading, ScreeningConfig,
                        ScreeningEngine, render_annotations, write_ppm)
from .simulate import (Detection, FramePair, Scenario, emit_detections,
                       ground_truth_rows, head_center_projections,
                       render_frame_pair)
from .tracking import PersonTracker, TrackConfig

READINGS_HEADER = ["frame", "person_id", "priority", "raw_c", "corrected_c",
                   "distance_m", "low_confidence"]
STAGES = ("calibrate", "track", "align", "screen", "render")


@dataclass(frozen=True)
class PipelineConfig:
    track: TrackConfig = TrackConfig()
    screening: ScreeningConfig = ScreeningConfig()
    align: AlignConfig | None = None      # default: rig scale + mid-zone offset
    calib: CalibState | None = None       # default: scenario black-body spec
    model_path: str | None = None
    threads: int = 0
    write_annotated: bool = False
    manual_offset_depth: float = 2.0


@dataclass
class FrameResult:
    frame_seq: int
    n_readings: int
    n_alerts: int
    annotation_path: str | None
    latency_ms: dict[str, float]

    @property
    def total_ms(self) -> float:
        return sum(self.latency_ms.values())


@dataclass
class RunSummary:
    frames: int = 0
    readings: list[Reading] = field(default_factory=list)
    alerts: list[dict] = field(default_factory=list)
    frame_results: list[FrameResult] = field(default_factory=list)
    track_truth: dict[int, str] = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)
    calib_offset: float = 0.0
    out_dir: str | None = None


class _FrameSource:
    """Uniform frame/detection/truth iteration over a Dataset or Scenario."""

    def __init__(self, source):
        if isinstance(source, Dataset):
            self.scenario = source.scenario
            self._dataset = source
        elif isinstance(source, Scenario):
            self.scenario = source
            self._dataset = None
        else:
            raise TypeError(f"unsupported pipeline source: {type(source)!r}")

    def __iter__(self):
        scen = self.scenario
        for seq in range(scen.n_frames):
            t = scen.frame_time(seq)
            if self._dataset is not None:
                pair = self._dataset.frames[seq]
                dets = self._dataset.detections_for(seq)
            else:
                pair = render_frame_pair(scen, t)
                dets = emit_detections(scen, t)
            yield pair, dets

    def ground_truth(self) -> list[GroundTruthRow]:
        if self._dataset is not None:
            return self._dataset.ground_truth
        rows = []
        scen = self.scenario
        for seq in range(scen.n_frames):
            rows.extend(ground_truth_rows(scen, scen.frame_time(seq)))
        return rows


def _group_boxes(tracked) -> dict[int, dict[str, BBox]]:
    persons: dict[int, dict[str, BBox]] = defaultdict(dict)
    for td in tracked:
        persons[td.track_id][td.kind] = td.bbox
    return dict(persons)


def run_pipeline(source, config: PipelineConfig | None = None,
                 out_dir: str | None = None) -> RunSummary:
    """Process every frame pair in sequence order and write run artifacts."""
    config = config or PipelineConfig()
    src = _FrameSource(source)
    scenario = src.scenario
    rig = scenario.rig

    align_cfg = config.align or AlignConfig(
        manual_offset=manual_offset_for_rig(rig, config.manual_offset_depth))
    aligner = FrameAligner(rig, align_cfg, threads=config.threads)
    tracker = PersonTracker(config.track)
    compensation = CompensationModel(load_model(config.model_path)
                                     if config.model_path else None)
    engine = ScreeningEngine(config.screening, compensation)
    calib = config.calib or CalibState(reference_temp=scenario.black_body.reference_temp,
                                       roi=scenario.black_body.roi)

    annotated_dir = None
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        if config.write_annotated:
            annotated_dir = os.path.join(out_dir, "annotated")
            os.makedirs(annotated_dir, exist_ok=True)

    summary = RunSummary(out_dir=out_dir)
    votes: dict[int, Counter] = defaultdict(Counter)
    last_seq = -1

    for pair, dets in src:
        if pair.seq <= last_seq:
            continue  # out-of-order frame pairs are discarded outright
        last_seq = pair.seq
        t = pair.timestamp
        lat: dict[str, float] = {}

        t0 = time.perf_counter()
        measured_bb = monitor_black_body(pair.thermal, calib)
        calib = controller_step(calib, measured_bb, t)
        lat["calibrate"] = (time.perf_counter() - t0) * 1e3

        # ground-truth labels ride along for evaluation only; the tracker and
        # everything downstream see detections with the label stripped
        t0 = time.perf_counter()
        stripped = [d.without_truth() for d in dets]
        truth_of = {id(s): d.truth_id for s, d in zip(stripped, dets)}
        tracked = tracker.assign_ids(stripped, now=t)
        tracker.expire_stale(t)
        for td in tracked:
            truth = truth_of.get(id(td.detection))
            if truth is not None:
                votes[td.track_id][truth] += 1
        lat["track"] = (time.perf_counter() - t0) * 1e3

        t0 = time.perf_counter()
        persons = _group_boxes(tracked)
        alignment = aligner.align_pair(pair, persons)
        lat["align"] = (time.perf_counter() - t0) * 1e3

        t0 = time.perf_counter()
        readings, annotations = engine.process_frame(
            pair.seq, t, persons, alignment, calib.correction_offset)
        alerts = engine.refine_and_alert(pair.seq, t)
        lat["screen"] = (time.perf_counter() - t0) * 1e3

        t0 = time.perf_counter()
        ann_path = None
        rendered = render_annotations(pair.visual, annotations)
        if annotated_dir is not None:
            ann_path = os.path.join(annotated_dir, f"frame_{pair.seq:06d}.ppm")
            write_ppm(ann_path, rendered)
        lat["render"] = (time.perf_counter() - t0) * 1e3

        summary.readings.extend(readings)
        for alert in alerts:
            summary.alerts.append({
                "person_id": alert.person_id,
                "temp": alert.temp,
                "priority": alert.priority.name.lower(),
                "frame": alert.frame_seq,
                "reason": alert.reason,
            })
        summary.frame_results.append(FrameResult(
            frame_seq=pair.seq, n_readings=len(readings), n_alerts=len(alerts),
            annotation_path=ann_path, latency_ms=lat))
        summary.frames += 1

    aligner.close()
    summary.calib_offset = calib.correction_offset
    summary.track_truth = {tid: sorted(c.items(), key=lambda kv: (-kv[1], kv[0]))[0][0]
                           for tid, c in votes.items()}
    # attach majority-vote truth ids to alerts (evaluation metadata only)
    for alert in summary.alerts:
        alert["truth_id"] = summary.track_truth.get(alert["person_id"])

    gt_rows = src.ground_truth()
    totals = [fr.total_ms for fr in summary.frame_results]
    fps = (1000.0 * summary.frames / sum(totals)) if totals and sum(totals) > 0 else 0.0
    metrics = {
        "tp": None, "fp": None, "tn": None, "fn": None,
        "sensitivity": None, "specificity": None,
        "vacuous_sensitivity": False,
        "fps": round(fps, 2),
        "latency_ms": {
            "p50": round(float(np.percentile(totals, 50)), 3) if totals else 0.0,
            "p95": round(float(np.percentile(totals, 95)), 3) if totals else 0.0,
        },
    }
    if gt_rows:
        ev = evaluate(summary.alerts, gt_rows, config.screening.fever_threshold)
        metrics.update(ev)
    summary.metrics = metrics

    if out_dir:
        write_readings_csv(os.path.join(out_dir, "readings.csv"), summary.readings)
        write_alerts_jsonl(os.path.join(out_dir, "alerts.jsonl"), summary.alerts)
        with open(os.path.join(out_dir, "metrics.json"), "w", encoding="ascii") as f:
            json.dump(metrics, f, indent=2, sort_keys=True)
            f.write("\n")
        if gt_rows:
            rows = training_rows(summary, gt_rows)
            write_training_csv(os.path.join(out_dir, "training_data.csv"), rows)
    return summary


# ---------------------------------------------------------------------------
# artifact writers


def write_readings_csv(path: str, readings: list[Reading]) -> None:
    with open(path, "w", encoding="ascii", newline="") as f:
        w = csv.writer(f)
        w.writerow(READINGS_HEADER)
        for r in readings:
            w.writerow([r.frame_seq, r.person_id, r.priority.name.lower(),
                        f"{r.raw_temp:.6f}", f"{r.corrected_temp:.6f}",
                        f"{r.distance:.6f}", int(r.low_confidence)])


def write_alerts_jsonl(path: str, alerts: list[dict]) -> None:
    with open(path, "w", encoding="ascii") as f:
        for alert in alerts:
            f.write(json.dumps(alert, sort_keys=True))
            f.write("\n")


def training_rows(summary: RunSummary, gt_rows: list[GroundTruthRow]) -> list[tuple]:
    """(distance, raw_temp, true_core) triples for compensation training."""
    core_of: dict[str, float] = {}
    for row in gt_rows:
        core_of[row.person_id] = max(core_of.get(row.person_id, -math.inf),
                                     row.core_temp_c)
    out = []
    for r in summary.readings:
        truth = summary.track_truth.get(r.person_id)
        if truth is None or truth not in core_of:
            continue
        out.append((r.distance, r.raw_temp, core_of[truth]))
    return out


def write_training_csv(path: str, rows: list[tuple]) -> None:
    with open(path, "w", encoding="ascii", newline="") as f:
        w = csv.writer(f)
        w.writerow(["distance_m", "raw_c", "true_core_c"])
        for d, raw, core in rows:
            w.writerow([f"{d:.6f}", f"{raw:.6f}", f"{core:.6f}"])


def read_training_csv(path: str) -> np.ndarray:
    with open(path, encoding="ascii", newline="") as f:
        reader = csv.DictReader(f)
        rows = [(float(r["distance_m"]), float(r["raw_c"]), float(r["true_core_c"]))
                for r in reader]
    return np.asarray(rows, dtype=np.float64).reshape(-1, 3)


# ---------------------------------------------------------------------------
# evaluation


def evaluate(alerts: list[dict], groundtruth: list[GroundTruthRow],
             threshold: float = 38.0) -> dict:
    """Per-person confusion counts against the max-across-frames truth labels."""
    truth_temp: dict[str, float] = {}
    for row in groundtruth:
        truth_temp[row.person_id] = max(truth_temp.get(row.person_id, -math.inf),
                                        row.core_temp_c)
    alerted: set[str] = set()
    for alert in alerts:
        pid = alert.get("truth_id") or alert.get("person_id")
        if pid not in truth_temp:
            raise ValueError(f"alerted person {pid!r} absent from ground truth")
        alerted.add(pid)

    tp = fp = tn = fn = 0
    for pid, temp in truth_temp.items():
        febrile = temp >= threshold
        hit = pid in alerted
        if febrile and hit:
            tp += 1
        elif febrile:
            fn += 1
        elif hit:
            fp += 1
        else:
            tn += 1

    vacuous = (tp + fn) == 0
    sensitivity = 1.0 if vacuous else tp / (tp + fn)
    specificity = 1.0 if (tn + fp) == 0 else tn / (tn + fp)
    return {"tp": tp, "fp": fp, "tn": tn, "fn": fn,
            "sensitivity": sensitivity, "specificity": specificity,
            "vacuous_sensitivity": vacuous}


# ---------------------------------------------------------------------------
# alignment error report (transit study)

REPORT_HEADER = ["distance_ft", "x_err_before", "y_err_before",
                 "x_err_manual", "y_err_manual", "x_err_dynamic", "y_err_dynamic"]

FT_PER_M = 3.2808399


@dataclass(frozen=True)
class AlignReportRow:
    frame: int
    person_id: str
    distance_ft: float
    x_err_before: float
    y_err_before: float
    x_err_manual: float
    y_err_manual: float
    x_err_dynamic: float
    y_err_dynamic: float
    dynamic: bool


def align_report(source, config: PipelineConfig | None = None) -> list[AlignReportRow]:
    """Per-frame alignment errors at the true head center of each person.

    Errors are measured in visual pixels: each candidate map is applied to
    the true thermal projection of the head center and compared with the
    true visual projection. `before` is the resolution scale alone,
    `manual` adds the static offset, `dynamic` is the per-person estimate.
    """
    config = config or PipelineConfig()
    src = _FrameSource(source)
    scenario = src.scenario
    rig = scenario.rig
    people = {p.id: p for p in scenario.people}

    align_cfg = config.align or AlignConfig(
        manual_offset=manual_offset_for_rig(rig, config.manual_offset_depth))
    aligner = FrameAligner(rig, align_cfg, threads=config.threads)
    tracker = PersonTracker(config.track)

    scale = np.array([rig.scale_x, rig.scale_y])
    manual = align_cfg.manual_offset

    rows: list[AlignReportRow] = []
    for pair, dets in src:
        t = pair.timestamp
        stripped = [d.without_truth() for d in dets]
        truth_of = {id(s): d.truth_id for s, d in zip(stripped, dets)}
        tracked = tracker.assign_ids(stripped, now=t)
        tracker.expire_stale(t)
        persons = _group_boxes(tracked)
        warmed = aligner.warmed_up
        alignment = aligner.align_pair(pair, persons)
        if not warmed:
            continue

        frame_truth: dict[int, Counter] = defaultdict(Counter)
        for td in tracked:
            truth = truth_of.get(id(td.detection))
            if truth is not None:
                frame_truth[td.track_id][truth] += 1

        for pid, pa in alignment.persons.items():
            if pid not in frame_truth:
                continue
            truth_id = frame_truth[pid].most_common(1)[0][0]
            person = people.get(truth_id)
            if person is None:
                continue
            pos = person.position(t)
            if pos is None:
                continue
            (vx, vy), (tx, ty) = head_center_projections(rig, *pos)
            true_vis = np.array([vx, vy])
            p_t = np.array([tx, ty])

            before = p_t * scale - true_vis
            man = np.array([tx * manual.s_x + manual.t_x,
                            ty * manual.s_y + manual.t_y]) - true_vis
            dx, dy = pa.visual_point(tx, ty)
            dyn = np.array([dx, dy]) - true_vis
            rows.append(AlignReportRow(
                frame=pair.seq, person_id=truth_id,
                distance_ft=pos[2] * FT_PER_M,
                x_err_before=float(before[0]), y_err_before=float(before[1]),
                x_err_manual=float(man[0]), y_err_manual=float(man[1]),
                x_err_dynamic=float(dyn[0]), y_err_dynamic=float(dyn[1]),
                dynamic=pa.dynamic))
    aligner.close()
    return rows


def write_align_report_csv(path: str, rows: list[AlignReportRow]) -> None:
    with open(path, "w", encoding="ascii", newline="") as f:
        w = csv.writer(f)
        w.writerow(REPORT_HEADER)
        for r in rows:
            w.writerow([f"{r.distance_ft:.4f}",
                        f"{r.x_err_before:.4f}", f"{r.y_err_before:.4f}",
                        f"{r.x_err_manual:.4f}", f"{r.y_err_manual:.4f}",
                        f"{r.x_err_dynamic:.4f}", f"{r.y_err_dynamic:.4f}"])
