"""Command-line entry point.

Subcommands: plan, eval, align, compose, synth, selftest.
Exit codes: 0 success, 2 input/parse error, 3 geometric/planning failure,
4 gate rejection.
"""

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import io as bio
from .errors import BevPlanError, GateRejection, InputError, PlanningError
from .fmm import Trajectory, resample_by_arc_length
from .geometry import Homography, apply_homography, fit_homography_ransac
from .metrics import ade, dtw_norm, fde
from .pipeline import export_plan, run_plan
from .supervision import COMPOSITION_MODES, compose_training_set
from .synth import builtin_scenes


def _add_config_args(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a single config key (repeatable)")


def _parse_config(args) -> bio.RunConfig:
    types = {f.name: f.type for f in dataclasses.fields(bio.RunConfig)}
    overrides = {}
    for item in args.set:
        if "=" not in item:
            raise InputError(f"bad --set {item!r}, expected KEY=VALUE")
        key, value = item.split("=", 1)
        if key not in types:
            raise InputError(f"unknown config key {key!r}")
        caster = int if types[key] in (int, "int") else float
        try:
            overrides[key] = caster(value)
        except ValueError as e:
            raise InputError(f"bad value for {key}: {value!r}") from e
    return bio.RunConfig.load(args.config, overrides)


def cmd_plan(args) -> int:
    config = _parse_config(args)
    bundle = bio.load_scene(args.scene_dir)
    result = run_plan(bundle, config)
    export_plan(result, args.out, bundle.scene_id, config)
    print(f"planned {bundle.scene_id}: {len(result.trajectory_plane)} waypoints, "
          f"goal cell {result.goal}, outputs in {args.out}")
    return 0


def cmd_eval(args) -> int:
    config = _parse_config(args)
    n = args.resample if args.resample is not None else config.eval_resample
    preds = {r["scene_id"]: r for r in bio.read_trajectory_records(args.pred)}
    gts = {r["scene_id"]: r for r in bio.read_trajectory_records(args.gt)}
    missing = sorted(set(preds) ^ set(gts))
    if missing:
        raise InputError(f"unmatched sample ids: {missing}")

    lines = [f"# resample_policy uniform_arc_length n={n}",
             f"{'scene_id':<24} {'ADE':>10} {'FDE':>10} {'DTW':>10}"]
    sums = np.zeros(3)
    for sid in sorted(preds):
        p = resample_by_arc_length(preds[sid]["points"], n)
        g = resample_by_arc_length(gts[sid]["points"], n)
        vals = (ade(p, g), fde(p, g), dtw_norm(p, g))
        sums += vals
        lines.append(f"{sid:<24} {vals[0]:>10.4f} {vals[1]:>10.4f} {vals[2]:>10.4f}")
    mean = sums / len(preds)
    lines.append(f"{'mean':<24} {mean[0]:>10.4f} {mean[1]:>10.4f} {mean[2]:>10.4f}")
    report = "\n".join(lines) + "\n"
    if args.out:
        bio.atomic_write_text(args.out, report)
    print(report, end="")
    return 0


def cmd_align(args) -> int:
    config = _parse_config(args)
    matches = bio.read_correspondences(args.correspondences)
    records = bio.read_trajectory_records(args.trajectory)
    rec = records[0]
    try:
        h = fit_homography_ransac(
            matches, max_features=config.max_features, min_inliers=config.min_inliers,
            inlier_threshold=config.homography_inlier_threshold,
            center_shift_limit=config.center_shift_limit,
            image_size=(args.width, args.height),
            iterations=config.homography_iterations, seed=config.homography_seed)
    except GateRejection as e:
        report = json.dumps({"rejected": True, "gate": e.gate, "reason": str(e)},
                            sort_keys=True)
        if args.out:
            bio.atomic_write_text(args.out, report + "\n")
        print(report)
        raise
    matrix = np.linalg.inv(h.matrix) if args.inverse else h.matrix
    transferred = apply_homography(Homography(matrix, h.inlier_count, h.inlier_fraction),
                                   rec["points"])
    traj = Trajectory(points=transferred, frame=rec.get("frame", "image"))
    prov = {"inlier_count": h.inlier_count,
            "inlier_fraction": round(h.inlier_fraction, 6),
            "inverse": bool(args.inverse)}
    if args.out:
        bio.write_trajectory(args.out, traj, rec["scene_id"], prov)
    print(f"aligned {rec['scene_id']}: {h.inlier_count} inliers "
          f"({h.inlier_fraction:.0%})")
    return 0


def cmd_compose(args) -> int:
    gt = bio.read_labels(args.gt)
    wm = bio.read_labels(args.wm)
    composed = compose_training_set(gt, wm, args.mode)
    bio.write_labels(args.out, composed)
    counts = {}
    for l in composed:
        key = f"{l.source}/{l.tier}"
        counts[key] = counts.get(key, 0) + 1
    summary = {"mode": args.mode, "total": len(composed), "counts": counts}
    print(json.dumps(summary, sort_keys=True))
    return 0


def cmd_synth(args) -> int:
    scenes = builtin_scenes()
    names = list(scenes) if args.scene == "all" else [args.scene]
    unknown = [n for n in names if n not in scenes]
    if unknown:
        raise InputError(f"unknown scenes {unknown}; available: {sorted(scenes)}")
    for name in names:
        bio.write_scene(scenes[name], Path(args.out) / name)
        print(f"wrote scene {name} to {Path(args.out) / name}")
    return 0


def cmd_selftest(args) -> int:
    from .bev import HeightBand
    from .costmap import CostParams
    from .supervision import LossParams

    cfg = bio.RunConfig()
    band, params, loss = HeightBand(), CostParams(), LossParams()
    checks = [
        ("band_low", cfg.band_low, band.low),
        ("band_high", cfg.band_high, band.high),
        ("safety_margin", cfg.safety_margin, params.safety_margin),
        ("penalty_radius", cfg.penalty_radius, params.penalty_radius),
        ("penalty_gain", cfg.penalty_gain, params.penalty_gain),
        ("direction_weight", cfg.direction_weight, loss.direction_weight),
        ("loss_epsilon", cfg.loss_epsilon, loss.epsilon),
    ]
    bad = [name for name, a, b in checks if a != b]
    if bad:
        print(f"selftest FAILED: config defaults diverge on {bad}")
        return 1
    print(f"selftest ok: config hash {cfg.hash()}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bevplan",
                                     description="Geometric navigation-supervision pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", help="run the teacher pipeline on a scene directory")
    p.add_argument("scene_dir")
    p.add_argument("--out", required=True)
    _add_config_args(p)
    p.set_defaults(fn=cmd_plan)

    p = sub.add_parser("eval", help="score predicted vs ground-truth trajectories")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--resample", type=int, default=None)
    p.add_argument("--out")
    _add_config_args(p)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("align", help="homography-transfer a trajectory between frames")
    p.add_argument("--correspondences", required=True)
    p.add_argument("--trajectory", required=True)
    p.add_argument("--width", type=int, required=True)
    p.add_argument("--height", type=int, required=True)
    p.add_argument("--inverse", action="store_true")
    p.add_argument("--out")
    _add_config_args(p)
    p.set_defaults(fn=cmd_align)

    p = sub.add_parser("compose", help="compose a training set from label files")
    p.add_argument("--gt", required=True)
    p.add_argument("--wm", required=True)
    p.add_argument("--mode", required=True, choices=COMPOSITION_MODES)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_compose)

    p = sub.add_parser("synth", help="materialize built-in synthetic scenes")
    p.add_argument("--out", required=True)
    p.add_argument("--scene", default="all")
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("selftest", help="verify config defaults match module defaults")
    p.set_defaults(fn=cmd_selftest)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except GateRejection as e:
        print(f"error (gate {e.gate}): {e}", file=sys.stderr)
        return 4
    except PlanningError as e:
        stage = f" [{e.stage}]" if e.stage else ""
        print(f"error{stage}: {e}", file=sys.stderr)
        return 3
    except InputError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except BevPlanError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
