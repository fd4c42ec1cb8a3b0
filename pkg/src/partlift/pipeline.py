"""End-to-end pipeline: rasterize -> superpoints -> vote -> group -> eval."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from partlift import grouping, metrics, projection, superpoints, voting
from partlift.core import (
    Detection,
    LabelSchema,
    PointCloud,
    SegmentationResult,
    View,
    validate,
)
from partlift.superpoints import AdjacencyGraph


@dataclass
class PipelineConfig:
    """Tunable knobs with their default values.

    eps_z=None resolves to 1e-3 x the scene's bounding-box diagonal.
    """

    num_views: int = 10
    width: int = 800
    height: int = 800
    tau: float = 0.3
    knn_k: int = 10
    rho: float = 0.1
    color_weight: float = 1.0
    splat_radius: float = 1.0
    eps_z: float | None = None
    noise_fraction: float = 0.05
    min_score: float = 0.0
    semantic_threshold: float = 0.0
    max_iters: int = 10
    use_all_category_boxes: bool = False
    per_shape_mean_iou: bool = False

    def resolve_eps_z(self, cloud: PointCloud) -> float:
        if self.eps_z is not None:
            return self.eps_z
        return max(1e-3 * cloud.diagonal(), 1e-9)


def build_graph(cloud: PointCloud, k: int) -> AdjacencyGraph:
    """kNN graph with k clamped to the cloud size; N=1 yields no edges."""
    n = cloud.num_points
    if n < 2:
        return AdjacencyGraph(n, np.empty((0, 2), dtype=np.int64))
    return superpoints.build_knn_graph(cloud, min(k, n - 1))


def run_pipeline(
    config: PipelineConfig,
    cloud: PointCloud,
    views: list[View],
    detections: list[Detection],
    schema: LabelSchema,
    gt_semantic=None,
    gt_instance=None,
):
    """Run every stage; returns (SegmentationResult, EvalReport or None).

    The report is produced only when ground-truth labels are supplied.
    """
    check = validate(cloud, views, detections, schema)
    if not check.ok:
        raise ValueError("invalid inputs:\n" + "\n".join(check.messages()))

    eps_z = config.resolve_eps_z(cloud)
    vis, _ = projection.build_visibility(cloud, views, config.splat_radius, eps_z)

    features = superpoints.build_features(cloud, config.color_weight)
    graph = build_graph(cloud, config.knn_k)
    partition = superpoints.cut_pursuit(features, graph, config.rho, config.max_iters)

    scores = voting.vote_scores(partition, detections, vis, schema, config.min_score)
    semantic = voting.assign_semantics(scores, partition, config.semantic_threshold)
    result = grouping.group_instances(
        partition,
        semantic,
        detections,
        vis,
        graph,
        config.tau,
        scores,
        schema,
        config.use_all_category_boxes,
    )

    report = None
    if gt_semantic is not None and gt_instance is not None:
        shape = metrics.ShapeEval(
            result.semantic,
            np.asarray(gt_semantic),
            metrics.instances_from_result(result),
            metrics.instances_from_labels(np.asarray(gt_semantic), np.asarray(gt_instance)),
        )
        hierarchy = [(schema.object_name, list(range(schema.num_categories)))]
        report = metrics.report(
            [shape], hierarchy, list(schema.category_names), config.per_shape_mean_iou
        )
    return result, report


def make_gt_detections(
    cloud: PointCloud,
    gt_semantic: np.ndarray,
    gt_instance: np.ndarray,
    views: list[View],
    config: PipelineConfig,
) -> list[Detection]:
    """Oracle detections: project GT instances to per-view 2D boxes."""
    eps_z = config.resolve_eps_z(cloud)
    _, rasters = projection.build_visibility(cloud, views, config.splat_radius, eps_z)
    gt_instance = np.asarray(gt_instance)
    gt_semantic = np.asarray(gt_semantic)
    num_inst = int(gt_instance.max(initial=-1)) + 1
    inst_cat = np.zeros(num_inst, dtype=np.int64)
    for i in range(num_inst):
        members = np.flatnonzero(gt_instance == i)
        if members.size == 0:
            raise ValueError(f"ground-truth instance {i} has no points")
        inst_cat[i] = gt_semantic[members[0]]
    detections: list[Detection] = []
    for k, raster in enumerate(rasters):
        detections.extend(
            projection.gt_boxes(
                cloud, gt_instance, k, raster, config.noise_fraction, inst_cat, config.splat_radius
            )
        )
    return detections
