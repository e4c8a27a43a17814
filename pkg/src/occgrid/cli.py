"""Command-line interface: gen-synth, aggregate, voxelize, visibility,
evaluate, pipeline, inspect.

Exit codes: 0 success, 2 validation error, 3 data error, 4 internal
invariant violation.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import report as report_mod
from . import synth
from ._kernels import set_threads
from .errors import DataError, OccGridError, ValidationError
from .evaluation import build_report, confusion
from .pipeline import PipelineConfig, prepare_scene, keyframe_cloud, process_keyframe, run_pipeline
from .sceneio import (
    read_grid,
    read_mask,
    read_scene,
    read_voxel_file,
    write_grid,
    write_mask,
    write_points_payload,
    write_scene,
)
from .voxelizer import GridSpec, OccGrid, voxelize

_DEMOS = {
    "room": synth.make_room_script,
    "moving-box": synth.make_moving_box_script,
    "occluder": synth.make_occluder_script,
}


def _add_grid_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--grid-preset", choices=["waymo", "nuscenes"], default=None,
                        help="scene range preset (default: waymo)")
    parser.add_argument("--grid-range", default=None, metavar="X0,Y0,Z0,X1,Y1,Z1",
                        help="explicit grid corners, overrides the preset")
    parser.add_argument("--voxel-size", type=float, default=0.4)


def _grid_from_args(args: argparse.Namespace) -> GridSpec:
    if args.grid_range:
        vals = [float(v) for v in args.grid_range.split(",")]
        if len(vals) != 6:
            raise ValidationError("--grid-range needs 6 comma-separated numbers")
        return GridSpec.from_range(vals[:3], vals[3:], args.voxel_size)
    preset = args.grid_preset or "waymo"
    if preset == "waymo":
        return GridSpec.waymo(args.voxel_size)
    return GridSpec.nuscenes(args.voxel_size)


def _add_pipeline_args(parser: argparse.ArgumentParser) -> None:
    _add_grid_args(parser)
    parser.add_argument("--knn-k", type=int, default=5)
    parser.add_argument("--min-points", type=int, default=1)
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--static-classes", default="",
                        help="comma-separated class ids treated as static even when boxed")
    parser.add_argument("--ego-footprint", default=None, metavar="SX,SY,SZ",
                        help="mask out voxels inside this ego-centered box")


def _config_from_args(args: argparse.Namespace) -> PipelineConfig:
    static = tuple(int(v) for v in args.static_classes.split(",") if v != "")
    footprint = None
    if args.ego_footprint:
        vals = [float(v) for v in args.ego_footprint.split(",")]
        if len(vals) != 3:
            raise ValidationError("--ego-footprint needs 3 comma-separated numbers")
        footprint = tuple(vals)
    return PipelineConfig(
        grid=_grid_from_args(args),
        knn_k=args.knn_k,
        min_points=args.min_points,
        threads=args.threads,
        static_classes=static,
        ego_footprint=footprint,
        seed=args.seed,
    )


def _cmd_gen_synth(args: argparse.Namespace) -> int:
    if args.script:
        script = synth.script_from_json_dict(json.loads(Path(args.script).read_text()))
    else:
        builder = _DEMOS[args.demo]
        kwargs = {"seed": args.seed}
        if args.frames is not None:
            kwargs["frame_count"] = args.frames
        script = builder(**kwargs)
    bundle = synth.simulate_bundle(script, scene_id=args.scene_id)
    out = Path(args.out)
    write_scene(out, bundle)
    (out / "script.json").write_text(
        json.dumps(synth.script_to_json_dict(script), indent=2, sort_keys=True)
    )
    g = script.grid
    grid_range = ",".join(str(v) for v in list(g.min_corner) + list(g.max_corner))
    print(f"wrote scene {bundle.scene_id!r}: {len(bundle.frames)} frames -> {out}")
    print(f"matching grid flags: --grid-range={grid_range} --voxel-size {g.voxel_size}")
    return 0


def _cmd_aggregate(args: argparse.Namespace) -> int:
    bundle = read_scene(args.scene)
    config = _config_from_args(args)
    set_threads(config.threads)
    prepared = prepare_scene(bundle, config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for frame in bundle.keyframes():
        cloud = keyframe_cloud(prepared, frame.timestamp)
        path = out / f"{frame.timestamp:016d}_points.oc3s"
        write_points_payload(path, cloud)
        print(f"keyframe {frame.timestamp}: {len(cloud)} labeled points -> {path}")
    return 0


def _cmd_voxelize(args: argparse.Namespace) -> int:
    bundle = read_scene(args.scene)
    config = _config_from_args(args)
    set_threads(config.threads)
    prepared = prepare_scene(bundle, config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for frame in bundle.keyframes():
        cloud = keyframe_cloud(prepared, frame.timestamp)
        grid = voxelize(cloud, config.grid, config.min_points, bundle.ontology.go_id)
        path = out / f"{frame.timestamp:016d}_occupancy.oc3g"
        write_grid(path, grid)
        occupied = int((grid.state == 1).sum())
        print(f"keyframe {frame.timestamp}: {occupied} occupied voxels -> {path}")
    return 0


def _cmd_visibility(args: argparse.Namespace) -> int:
    bundle = read_scene(args.scene)
    config = _config_from_args(args)
    set_threads(config.threads)
    prepared = prepare_scene(bundle, config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for frame in bundle.keyframes():
        result = process_keyframe(prepared, frame.timestamp)
        stem = f"{frame.timestamp:016d}"
        write_mask(out / f"{stem}_lidar.oc3m", result.lidar_mask)
        write_mask(out / f"{stem}_camera.oc3m", result.camera_mask)
        write_mask(out / f"{stem}_joint.oc3m", result.joint_mask)
        print(f"keyframe {frame.timestamp}: masks -> {out}/{stem}_*.oc3m")
    return 0


def _cmd_pipeline(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    result = run_pipeline(args.scene, config, args.out)
    for ts, kf in sorted(result.keyframes.items()):
        occupied = int((kf.occupancy.state == 1).sum())
        observed = int(kf.joint_mask.values.sum())
        print(f"keyframe {ts}: {occupied} occupied voxels, {observed} jointly observed")
    print(f"artifacts -> {args.out}")
    return 0


def _collect_eval_triples(args: argparse.Namespace):
    pred, gt, mask = Path(args.pred), Path(args.gt), Path(args.mask)
    if pred.is_file():
        return [(pred, gt, mask)]
    triples = []
    for pred_file in sorted(pred.glob("*_occupancy.oc3g")):
        stem = pred_file.name.replace("_occupancy.oc3g", "")
        gt_file = gt / pred_file.name if gt.is_dir() else gt
        mask_file = mask / f"{stem}_joint.oc3m" if mask.is_dir() else mask
        if not gt_file.is_file():
            raise DataError(f"no ground-truth grid for {pred_file.name}")
        if not mask_file.is_file():
            raise DataError(f"no joint mask for {pred_file.name}")
        triples.append((pred_file, gt_file, mask_file))
    if not triples:
        raise DataError(f"no '*_occupancy.oc3g' predictions under {pred}")
    return triples


def _cmd_evaluate(args: argparse.Namespace) -> int:
    class_names = args.class_names.split(",") if args.class_names else None
    num_classes = args.num_classes
    if class_names and num_classes is None:
        num_classes = len(class_names)

    table = None
    sample = None
    for pred_path, gt_path, mask_path in _collect_eval_triples(args):
        pred = read_grid(pred_path)
        gt = read_grid(gt_path)
        mask = read_mask(mask_path)
        part = confusion(pred, gt, mask, num_classes)
        table = part if table is None else table + part
        if sample is None:
            sample = (pred, gt)
        if num_classes is None:
            num_classes = part.num_classes  # keep later frames consistent

    report = build_report(table, class_names, args.go_class, args.include_free)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report_mod.write_report_json(out / "report.json", report)
    report_mod.write_report_csv(out / "report.csv", report)
    report_mod.save_iou_figure(out / "iou_per_class.png", report)
    report_mod.save_bev_figure(
        out / "bev_comparison.png", [sample[0], sample[1]],
        ["prediction", "ground truth"], class_names,
    )
    miou = report["miou"]
    print(f"masked voxels: {report['masked_voxels']}")
    print(f"mIoU: {'undefined' if miou is None else f'{miou:.4f}'}")
    for row in report["classes"]:
        if row["present"]:
            print(f"  {row['name']:<20} IoU {row['iou']:.4f}")
    print(f"report -> {out}")
    return 0


def _cmd_inspect(args: argparse.Namespace) -> int:
    obj = read_voxel_file(args.path)
    stats = report_mod.grid_stats(obj)
    print(json.dumps(stats, indent=2))
    if args.figure:
        if isinstance(obj, OccGrid):
            report_mod.save_state_histogram(args.figure, obj)
        else:
            raise ValidationError("--figure currently renders occupancy grids only")
        print(f"figure -> {args.figure}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="occgrid",
        description="Semantic occupancy labeling: aggregation, visibility masks, masked mIoU",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synth", help="simulate a synthetic scene into a scene directory")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--demo", choices=sorted(_DEMOS), default="room")
    group.add_argument("--script", help="scene-script JSON file")
    p.add_argument("--out", required=True)
    p.add_argument("--scene-id", default="synthetic")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--frames", type=int, default=None)
    p.set_defaults(func=_cmd_gen_synth)

    p = sub.add_parser("aggregate", help="write labeled aggregated clouds per keyframe")
    p.add_argument("--scene", required=True)
    p.add_argument("--out", required=True)
    _add_pipeline_args(p)
    p.set_defaults(func=_cmd_aggregate)

    p = sub.add_parser("voxelize", help="write occupancy grids per keyframe")
    p.add_argument("--scene", required=True)
    p.add_argument("--out", required=True)
    _add_pipeline_args(p)
    p.set_defaults(func=_cmd_voxelize)

    p = sub.add_parser("visibility", help="write lidar/camera/joint masks per keyframe")
    p.add_argument("--scene", required=True)
    p.add_argument("--out", required=True)
    _add_pipeline_args(p)
    p.set_defaults(func=_cmd_visibility)

    p = sub.add_parser("pipeline", help="full run: grids, masks, and provenance")
    p.add_argument("--scene", required=True)
    p.add_argument("--out", required=True)
    _add_pipeline_args(p)
    p.set_defaults(func=_cmd_pipeline)

    p = sub.add_parser("evaluate", help="score prediction grids against ground truth")
    p.add_argument("--pred", required=True, help="grid file or directory of *_occupancy.oc3g")
    p.add_argument("--gt", required=True, help="grid file or directory")
    p.add_argument("--mask", required=True, help="joint mask file or directory")
    p.add_argument("--out", required=True, help="report directory")
    p.add_argument("--class-names", default=None, help="comma-separated names")
    p.add_argument("--num-classes", type=int, default=None)
    p.add_argument("--go-class", type=int, default=None)
    p.add_argument("--include-free", action="store_true",
                   help="score 'free' as a class (diagnostic)")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("inspect", help="print grid/mask statistics")
    p.add_argument("path")
    p.add_argument("--figure", default=None, help="also render a summary figure")
    p.set_defaults(func=_cmd_inspect)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        stage = getattr(exc, "stage", None)
        prefix = f"[{stage}] " if stage else ""
        print(f"validation error: {prefix}{exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        stage = getattr(exc, "stage", None)
        prefix = f"[{stage}] " if stage else ""
        print(f"data error: {prefix}{exc}", file=sys.stderr)
        return 3
    except OccGridError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
