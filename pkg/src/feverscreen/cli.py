"""Command-line entry point.

Subcommands: simulate, run, train-compensation, calibrate, align-report,
eval. Exit codes: 0 success, 1 usage error, 2 data error. The environment
variable F3S_THREADS caps the worker count (0 = single-threaded
deterministic mode) and overrides any config file value.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .alignment import AffineOffset, AlignConfig
from .calibration import CalibState, run_calibration_loop
from .compensation import TrainConfig, save_model, train_adam
from .core import BBox
from .dataset import DatasetError, read_dataset, read_ground_truth, write_dataset
from .pipeline import (PipelineConfig, align_report, evaluate,
                       read_training_csv, run_pipeline, write_align_report_csv)
from .screening import ScreeningConfig
from .simulate import (BlackBodySpec, CameraRig, DetectionNoise, DriftProfile,
                       SimConfig, generate_scenario)
from .tracking import TrackConfig

_SIM_DEFAULTS = json.dumps({
    "n_people": 10, "febrile_count": 1, "frame_rate": 8.0,
    "ambient_temp": 22.0, "attenuation_kappa": 0.05,
    "thermal_noise_sigma": 0.1, "visual_noise_sigma": 2.0,
    "lead_in": 2.0, "entry_gap": 1.2, "speed_range": [0.8, 1.3],
    "lane_half_width": 0.7, "z_start": 4.2, "z_end": 0.7,
    "febrile_temp_range": [38.5, 39.8], "normal_temp_range": [36.2, 37.5],
    "accessory_probs": {"mask": 0.3, "glasses": 0.3, "hat": 0.2},
    "detection_noise": {"miss_prob": 0.03, "bbox_jitter_px": 1.5,
                        "appearance_sigma": 0.05, "occlusion_threshold": 0.5},
    "drift": {"schedule": []},
    "rig": {"visual_resolution": [1280, 960], "thermal_resolution": [336, 252],
            "visual_focal": 660.0, "baseline": 0.06},
    "black_body": {"roi": [12, 10, 26, 18], "reference_temp": 35.0},
}, indent=2)

_RUN_DEFAULTS = json.dumps({
    "fever_threshold": 38.0, "capture_zone": [0.9, 3.7], "roi": None,
    "min_readings": 3, "delta_realert": 0.3, "cache_ttl": 10.0,
    "zone_margin": 0.2, "iou_threshold": 0.3,
    "body_similarity_threshold": 0.7, "face_match_threshold": 0.8,
    "track_ttl": 10.0, "manual_offset_depth": 2.0,
    "model": None, "threads": 0, "write_annotated": False,
}, indent=2)


class UsageError(Exception):
    def __init__(self, message: str, parser: argparse.ArgumentParser):
        super().__init__(message)
        self.parser = parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); we map usage errors to 1
        raise UsageError(message, self)


def sim_config_from_dict(d: dict) -> SimConfig:
    kwargs = {}
    plain = ("n_people", "febrile_count", "frame_rate", "ambient_temp",
             "attenuation_kappa", "thermal_noise_sigma", "visual_noise_sigma",
             "lead_in", "entry_gap", "lane_half_width", "z_start", "z_end",
             "duration", "accessory_probs")
    for key in plain:
        if key in d:
            kwargs[key] = d[key]
    for key in ("speed_range", "febrile_temp_range", "normal_temp_range"):
        if key in d:
            kwargs[key] = tuple(d[key])
    if "rig" in d:
        rig = dict(d["rig"])
        rig.setdefault("thermal_focal", None)
        kwargs["rig"] = CameraRig(
            visual_resolution=tuple(rig.get("visual_resolution", (1280, 960))),
            thermal_resolution=tuple(rig.get("thermal_resolution", (336, 252))),
            visual_focal=rig.get("visual_focal", 660.0),
            thermal_focal=rig.get("thermal_focal"),
            baseline=rig.get("baseline", 0.06))
    if "black_body" in d:
        kwargs["black_body"] = BlackBodySpec.from_dict(d["black_body"])
    if "drift" in d:
        kwargs["drift"] = DriftProfile.from_dict(d["drift"])
    if "detection_noise" in d:
        kwargs["detection_noise"] = DetectionNoise.from_dict(d["detection_noise"])
    return SimConfig(**kwargs)


def pipeline_config_from_dict(d: dict) -> PipelineConfig:
    roi = d.get("roi")
    screening = ScreeningConfig(
        roi=BBox(*roi) if roi else None,
        capture_zone=tuple(d.get("capture_zone", (0.9, 3.7))),
        fever_threshold=d.get("fever_threshold", 38.0),
        min_readings=d.get("min_readings", 3),
        delta_realert=d.get("delta_realert", 0.3),
        cache_ttl=d.get("cache_ttl", 10.0),
        zone_margin=d.get("zone_margin", 0.2))
    track = TrackConfig(
        iou_threshold=d.get("iou_threshold", 0.3),
        body_similarity_threshold=d.get("body_similarity_threshold", 0.7),
        face_match_threshold=d.get("face_match_threshold", 0.8),
        ttl=d.get("track_ttl", 10.0))
    align = None
    if "manual_offset" in d:
        off = d["manual_offset"]
        align = AlignConfig(manual_offset=AffineOffset(
            t_x=off.get("t_x", 0.0), t_y=off.get("t_y", 0.0),
            s_x=off.get("s_x", 1.0), s_y=off.get("s_y", 1.0)))
    return PipelineConfig(
        track=track, screening=screening, align=align,
        model_path=d.get("model"),
        threads=d.get("threads", 0),
        write_annotated=d.get("write_annotated", False),
        manual_offset_depth=d.get("manual_offset_depth", 2.0))


def _resolve_threads(config: PipelineConfig) -> PipelineConfig:
    env = os.environ.get("F3S_THREADS")
    if env is None:
        return config
    from dataclasses import replace
    return replace(config, threads=max(int(env), 0))


def _load_json(path: str | None) -> dict:
    if path is None:
        return {}
    if not os.path.exists(path):
        raise DatasetError(f"config file not found: {path}")
    with open(path, encoding="utf-8") as f:
        return json.load(f)


def build_parser() -> _Parser:
    parser = _Parser(prog="feverscreen",
                     description="Free-flow fever screening toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[], help="generate a synthetic dataset",
                       formatter_class=argparse.RawDescriptionHelpFormatter,
                       epilog="config JSON defaults:\n" + _SIM_DEFAULTS)
    p.add_argument("--config", help="scenario generation config (JSON)")
    p.add_argument("--seed", type=int, default=0, help="rng seed (default 0)")
    p.add_argument("--out", required=True, help="output dataset directory")

    p = sub.add_parser("run", help="run the screening pipeline on a dataset",
                       formatter_class=argparse.RawDescriptionHelpFormatter,
                       epilog="config JSON defaults:\n" + _RUN_DEFAULTS)
    p.add_argument("--dataset", required=True, help="dataset directory")
    p.add_argument("--config", help="pipeline config (JSON)")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("train-compensation",
                       help="fit the distance compensation model")
    p.add_argument("--data", required=True,
                   help="CSV with distance_m,raw_c,true_core_c columns")
    p.add_argument("--out", required=True, help="model JSON path")
    p.add_argument("--epochs", type=int, default=100, help="training epochs (default 100)")
    p.add_argument("--hidden", type=int, default=16, help="hidden width (default 16)")
    p.add_argument("--seed", type=int, default=0, help="shuffle/init seed (default 0)")

    p = sub.add_parser("calibrate", help="run the black-body calibration loop")
    p.add_argument("--dataset", required=True, help="dataset directory")
    p.add_argument("--out", required=True, help="trace CSV path")

    p = sub.add_parser("align-report", help="alignment error report over a dataset")
    p.add_argument("--dataset", required=True, help="dataset directory")
    p.add_argument("--out", required=True, help="report CSV path")

    p = sub.add_parser("eval", help="confusion metrics from alerts vs ground truth")
    p.add_argument("--alerts", required=True, help="alerts JSONL file")
    p.add_argument("--groundtruth", required=True, help="ground truth CSV file")
    p.add_argument("--threshold", type=float, default=38.0,
                   help="fever threshold in C (default 38.0)")

    return parser


def _cmd_simulate(args) -> int:
    cfg = sim_config_from_dict(_load_json(args.config))
    scenario = generate_scenario(cfg, args.seed)
    write_dataset(scenario, args.out)
    print(f"wrote {scenario.n_frames} frame pairs, {len(scenario.people)} people -> {args.out}")
    return 0


def _cmd_run(args) -> int:
    ds = read_dataset(args.dataset)
    config = _resolve_threads(pipeline_config_from_dict(_load_json(args.config)))
    summary = run_pipeline(ds, config, out_dir=args.out)
    m = summary.metrics
    print(f"processed {summary.frames} frames, {len(summary.readings)} readings, "
          f"{len(summary.alerts)} alerts, fps {m['fps']}")
    if m["tp"] is not None:
        print(f"tp {m['tp']} fp {m['fp']} tn {m['tn']} fn {m['fn']} "
              f"sensitivity {m['sensitivity']:.3f} specificity {m['specificity']:.3f}")
    return 0


def _cmd_train(args) -> int:
    data = read_training_csv(args.data)
    cfg = TrainConfig(epochs=args.epochs, hidden=args.hidden, seed=args.seed)
    mlp, report = train_adam(data, cfg)
    save_model(mlp, args.out)
    hist_path = os.path.splitext(args.out)[0] + "_loss_history.csv"
    if args.out.endswith(".json"):
        hist_path = args.out[: -len(".json")] + "_loss_history.csv"
    with open(hist_path, "w", encoding="ascii") as f:
        f.write("epoch,train_mse\n")
        for i, mse in enumerate(report.epoch_mse, 1):
            f.write(f"{i},{mse:.8f}\n")
    print(f"trained on {report.n} samples, test MSE {report.test_mse:.6f}")
    print(f"model -> {args.out}; loss history -> {hist_path}")
    return 0


def _cmd_calibrate(args) -> int:
    ds = read_dataset(args.dataset)
    state = CalibState(reference_temp=ds.scenario.black_body.reference_temp,
                       roi=ds.scenario.black_body.roi)
    stream = ((pair.timestamp, pair.thermal) for pair in ds.frames)
    state, trace = run_calibration_loop(stream, state)
    with open(args.out, "w", encoding="ascii") as f:
        f.write("time_s,measured_c,error_c,offset_c\n")
        for t, measured, error, offset in trace.rows:
            f.write(f"{t:.4f},{measured:.4f},{error:.4f},{offset:.4f}\n")
    print(f"final offset {state.correction_offset:+.3f} C, "
          f"{len(trace.signal_times())} control signals -> {args.out}")
    return 0


def _cmd_align_report(args) -> int:
    ds = read_dataset(args.dataset)
    rows = align_report(ds)
    write_align_report_csv(args.out, rows)
    dyn = [r for r in rows if r.dynamic]
    print(f"{len(rows)} samples ({len(dyn)} dynamic) -> {args.out}")
    return 0


def _cmd_eval(args) -> int:
    if not os.path.exists(args.alerts):
        raise DatasetError(f"alerts file not found: {args.alerts}")
    alerts = []
    with open(args.alerts, encoding="ascii") as f:
        for line in f:
            line = line.strip()
            if line:
                alerts.append(json.loads(line))
    gt = read_ground_truth(args.groundtruth)
    m = evaluate(alerts, gt, args.threshold)
    print(f"tp {m['tp']}")
    print(f"fp {m['fp']}")
    print(f"tn {m['tn']}")
    print(f"fn {m['fn']}")
    print(f"sensitivity {m['sensitivity']:.3f}" +
          (" (vacuous)" if m["vacuous_sensitivity"] else ""))
    print(f"specificity {m['specificity']:.3f}")
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "run": _cmd_run,
    "train-compensation": _cmd_train,
    "calibrate": _cmd_calibrate,
    "align-report": _cmd_align_report,
    "eval": _cmd_eval,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        exc.parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except (DatasetError, OSError, ValueError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def entry() -> None:
    sys.exit(main(sys.argv[1:]))


if __name__ == "__main__":
    entry()
