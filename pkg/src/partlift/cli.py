"""Command line interface.

Subcommands: synth (generate a labeled scene), gtboxes (oracle 2D boxes from
GT labels), segment (detections -> 3D segmentation), eval (labels -> CSV
report), fuse-features (multi-view PLFM fusion).  PARTLIFT_THREADS caps
worker parallelism.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from partlift import aggregation, io, metrics, projection, scenes
from partlift.pipeline import PipelineConfig, make_gt_detections, run_pipeline


def _add_raster_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--splat-radius", type=float, default=1.0, help="splat disc radius in pixels")
    p.add_argument("--eps-z", type=float, default=None, help="depth tie tolerance (default: 1e-3 x scene diagonal)")


def _config_from_args(args) -> PipelineConfig:
    cfg = PipelineConfig()
    for name in (
        "tau",
        "knn_k",
        "rho",
        "color_weight",
        "splat_radius",
        "eps_z",
        "noise_fraction",
        "min_score",
        "semantic_threshold",
        "max_iters",
    ):
        if hasattr(args, name) and getattr(args, name) is not None:
            setattr(cfg, name, getattr(args, name))
    if getattr(args, "all_category_boxes", False):
        cfg.use_all_category_boxes = True
    if getattr(args, "per_shape_mean", False):
        cfg.per_shape_mean_iou = True
    return cfg


def cmd_synth(args) -> int:
    if args.spec:
        with open(args.spec, "r", encoding="utf-8") as fh:
            data = json.load(fh)
        parts = scenes.parts_from_json(data["parts"])
        object_name = data.get("object", "object")
    else:
        parts = scenes.PRESETS[args.preset]()
        object_name = args.preset
    cloud, semantic, instance, schema = scenes.synth_scene(parts, args.density, args.seed, object_name)
    io.save_cloud(args.out_cloud, cloud)
    io.save_labels(args.out_labels, semantic, instance)
    if args.out_schema:
        io.save_schema(args.out_schema, schema)
    print(f"synth: {cloud.num_points} points, {int(instance.max()) + 1} instances -> {args.out_cloud}")
    return 0


def cmd_gtboxes(args) -> int:
    cloud = io.load_cloud(args.cloud)
    semantic, instance = io.load_labels(args.labels)
    if args.views:
        views = io.load_views(args.views)
    else:
        views = scenes.make_default_views(cloud, args.num_views, args.width, args.height)
    if args.views_out:
        io.save_views(args.views_out, views)
    cfg = _config_from_args(args)
    if args.noise_fraction is not None:
        cfg.noise_fraction = args.noise_fraction
    detections = make_gt_detections(cloud, semantic, instance, views, cfg)
    io.save_detections(args.out, detections)
    print(f"gtboxes: {len(detections)} boxes over {len(views)} views -> {args.out}")
    return 0


def cmd_segment(args) -> int:
    cloud = io.load_cloud(args.cloud)
    views = io.load_views(args.views)
    detections = io.load_detections(args.detections)
    schema = io.load_schema(args.schema)
    cfg = _config_from_args(args)
    gt_semantic = gt_instance = None
    if args.gt:
        gt_semantic, gt_instance = io.load_labels(args.gt)
    result, rep = run_pipeline(cfg, cloud, views, detections, schema, gt_semantic, gt_instance)
    io.save_labels(args.out, result.semantic, result.instance)
    if args.instances_out:
        io.save_instance_table(args.instances_out, result)
    if rep is not None and args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            fh.write(rep.to_csv())
        print(f"segment: mIoU={rep.overall_miou} mAP50={rep.overall_map50} -> {args.report}")
    print(f"segment: {result.num_instances} instances -> {args.out}")
    return 0


def cmd_eval(args) -> int:
    pred_sem, pred_inst = io.load_labels(args.pred)
    gt_sem, gt_inst = io.load_labels(args.gt)
    schema = io.load_schema(args.schema)
    preds = metrics.instances_from_labels(pred_sem, pred_inst)
    confidences = {}
    if args.pred_instances:
        with open(args.pred_instances, "r", encoding="utf-8") as fh:
            for row in json.load(fh):
                confidences[int(row["instance"])] = float(row["confidence"])
    pred_instances = [
        metrics.InstancePred(g.category, confidences.get(i, 1.0), g.mask)
        for i, g in enumerate(preds)
    ]
    shape = metrics.ShapeEval(
        pred_sem,
        gt_sem,
        pred_instances,
        metrics.instances_from_labels(gt_sem, gt_inst),
    )
    hierarchy = [(schema.object_name, list(range(schema.num_categories)))]
    rep = metrics.report([shape], hierarchy, list(schema.category_names), args.per_shape_mean)
    csv_text = rep.to_csv()
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(csv_text)
    print(f"eval: mIoU={rep.overall_miou} mAP50={rep.overall_map50} -> {args.out}")
    return 0


def cmd_fuse_features(args) -> int:
    maps = aggregation.load_feature_maps(args.features)
    cloud = io.load_cloud(args.cloud)
    views = io.load_views(args.views)
    if len(maps) != len(views):
        raise ValueError(f"{len(maps)} feature maps but {len(views)} views")
    cfg = _config_from_args(args)
    eps_z = cfg.resolve_eps_z(cloud)
    vis, _ = projection.build_visibility(cloud, views, cfg.splat_radius, eps_z)
    index = aggregation.CellPointIndex.build(
        vis, maps[0].resolution, (views[0].width, views[0].height)
    )
    fused = aggregation.aggregate(maps, index)
    aggregation.save_feature_maps(args.out, fused)
    print(f"fuse-features: {len(fused)} maps at m={maps[0].resolution} -> {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="partlift", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic labeled scene")
    p.add_argument("--preset", choices=sorted(scenes.PRESETS), default="chair")
    p.add_argument("--spec", help="scene-spec JSON instead of a preset")
    p.add_argument("--density", type=float, default=2000.0, help="points per unit area")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-cloud", required=True)
    p.add_argument("--out-labels", required=True)
    p.add_argument("--out-schema")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("gtboxes", help="emit ground-truth detection JSON")
    p.add_argument("--cloud", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--views", help="views JSON (otherwise generated)")
    p.add_argument("--num-views", type=int, default=10)
    p.add_argument("--width", type=int, default=800)
    p.add_argument("--height", type=int, default=800)
    p.add_argument("--views-out", help="write the (possibly generated) views")
    p.add_argument("--noise-fraction", type=float, default=None)
    _add_raster_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gtboxes)

    p = sub.add_parser("segment", help="lift 2D detections to 3D segmentation")
    p.add_argument("--cloud", required=True)
    p.add_argument("--views", required=True)
    p.add_argument("--detections", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--gt", help="ground-truth labels enable the CSV report")
    p.add_argument("--report", help="CSV report path (needs --gt)")
    p.add_argument("--instances-out", help="per-instance table JSON")
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--knn-k", type=int, default=None)
    p.add_argument("--rho", type=float, default=None)
    p.add_argument("--color-weight", type=float, default=None)
    p.add_argument("--noise-fraction", type=float, default=None)
    p.add_argument("--min-score", type=float, default=None)
    p.add_argument("--semantic-threshold", type=float, default=None)
    p.add_argument("--max-iters", type=int, default=None)
    p.add_argument("--all-category-boxes", action="store_true",
                   help="use boxes of every category in the merge test")
    p.add_argument("--per-shape-mean", action="store_true",
                   help="average IoU per shape instead of pooling")
    _add_raster_flags(p)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("eval", help="compare predicted labels against GT")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--pred-instances", help="instance table JSON with confidences")
    p.add_argument("--per-shape-mean", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("fuse-features", help="multi-view fusion of a PLFM file")
    p.add_argument("--features", required=True)
    p.add_argument("--cloud", required=True)
    p.add_argument("--views", required=True)
    p.add_argument("--out", required=True)
    _add_raster_flags(p)
    p.set_defaults(func=cmd_fuse_features)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
