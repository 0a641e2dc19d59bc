"""Command-line interface: `mcmt synth | track | eval`.

Exit codes: 0 success, 1 input error (bad files/config), 2 internal
invariant violation.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import figures, io
from .config import PipelineConfig, load_config
from .core import InputError, InternalError
from .evaluation import compute_hota, report_table
from .pipeline import run_tracking
from .synth import SceneConfig, export_scene, generate_scene, load_scene_config

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_INTERNAL = 2


def _pipeline_config(args: argparse.Namespace) -> PipelineConfig:
    if getattr(args, "config", None):
        return load_config(args.config)
    return PipelineConfig().validate()


def cmd_synth(args: argparse.Namespace) -> int:
    cfg = load_scene_config(args.config) if args.config else SceneConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    scene = generate_scene(cfg)
    paths = export_scene(scene, args.output)
    n_dets = sum(len(v) for v in scene.detections.values())
    print(f"scene: {cfg.n_objects} objects, {cfg.n_cameras} cameras, {cfg.duration} frames")
    print(f"wrote {n_dets} detections, {len(scene.ground_truth)} ground-truth records")
    print(f"dataset at {Path(args.output).resolve()}")
    for name in ("detections", "calibrations", "ground_truth", "scene_config"):
        print(f"  {paths[name].name}")
    return EXIT_OK


def cmd_track(args: argparse.Namespace) -> int:
    cfg = _pipeline_config(args)
    in_dir = Path(args.input)
    detections = io.load_detections(in_dir / "detections.txt")
    calibrations = io.load_calibrations(in_dir / "calibrations.txt")
    if not detections:
        print("warning: no detections in input; writing empty outputs", file=sys.stderr)
    result = run_tracking(detections, calibrations, cfg, strategy=args.strategy)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    io.write_tracks(out / "tracks.txt", result.records)
    io.write_assoc_report(out / "association_report.txt", result.decisions)
    gt_path = in_dir / "ground_truth.txt"
    gt = io.load_ground_truth(gt_path) if gt_path.exists() else None
    figures.save_world_map(result.records, out / "trajectories.png", gt)
    print(result.summary())
    print(f"outputs at {out.resolve()}")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    cfg = _pipeline_config(args)
    gt = io.load_ground_truth(args.gt)
    pred = io.load_track_predictions(args.pred)
    report = compute_hota(gt, pred, cfg.alphas, cfg.d_max)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    io.write_eval_report(out / "eval_report.txt", report)
    figures.save_alpha_curves(report, out / "eval_curves.png")
    print(report_table(report))
    print(f"report at {out.resolve()}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mcmt",
        description="Multi-camera multi-target tracking: synthesize scenes, "
        "associate identities across views, score with 3D HOTA.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="generate a synthetic dataset")
    p_synth.add_argument("--config", help="scene config file (key = value)")
    p_synth.add_argument("--output", required=True, help="dataset output directory")
    p_synth.add_argument("--seed", type=int, help="override the scene seed")
    p_synth.set_defaults(func=cmd_synth)

    p_track = sub.add_parser("track", help="run the tracking pipeline on a dataset")
    p_track.add_argument("--input", required=True, help="dataset directory")
    p_track.add_argument("--output", required=True, help="output directory")
    p_track.add_argument("--config", help="pipeline config file")
    p_track.add_argument(
        "--strategy", choices=("FM", "GIDE"), help="leftover strategy override"
    )
    p_track.set_defaults(func=cmd_track)

    p_eval = sub.add_parser("eval", help="score predicted tracks against ground truth")
    p_eval.add_argument("--gt", required=True, help="ground truth file")
    p_eval.add_argument("--pred", required=True, help="predicted tracks file")
    p_eval.add_argument("--output", required=True, help="report output directory")
    p_eval.add_argument("--config", help="pipeline config file")
    p_eval.set_defaults(func=cmd_eval)
    return parser


def run(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except InternalError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
