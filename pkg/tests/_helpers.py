"""Shared builders for randomized oracle scenes.

These construct VisibilityMap / Partition / Detection sets directly (no
geometry needed) so the voting and grouping oracles can compare against
arbitrary visibility patterns.
"""

import numpy as np

from partlift.core import BBox2D, Detection, LabelSchema, Partition, VisibilityMap


def random_vote_scene(rng, max_views=5, max_points=300, max_sps=20, max_boxes=10, num_cats=4):
    """Random visibility + partition + detections for Eq-1/2/3 oracles."""
    num_views = rng.integers(1, max_views + 1)
    num_points = rng.integers(2, max_points + 1)
    num_sps = int(rng.integers(1, min(max_sps, num_points) + 1))
    num_boxes = rng.integers(0, max_boxes + 1)

    visible = rng.random((num_views, num_points)) < 0.7
    pixels = rng.uniform(0, 64, size=(num_views, num_points, 2))
    depth = rng.uniform(0.5, 5.0, size=(num_views, num_points))
    vis = VisibilityMap(visible, pixels, depth)

    # every superpoint id non-empty
    assignment = np.concatenate(
        [np.arange(num_sps), rng.integers(0, num_sps, num_points - num_sps)]
    )
    rng.shuffle(assignment)
    features = rng.random((num_points, 3))
    partition = Partition.from_assignment(assignment, features)

    detections = []
    for _ in range(num_boxes):
        x0, y0 = rng.uniform(0, 48, size=2)
        w, h = rng.uniform(4, 24, size=2)
        detections.append(
            Detection(
                int(rng.integers(0, num_views)),
                int(rng.integers(0, num_cats)),
                BBox2D(x0, y0, x0 + w, y0 + h),
                float(rng.uniform(0, 1)),
            )
        )
    schema = LabelSchema(tuple(f"part{i}" for i in range(num_cats)), "object")
    return partition, detections, vis, schema


def eq1_oracle(partition, detections, vis, schema, min_score=0.0):
    """Triple-loop recomputation of the Eq-1 score matrix."""
    num_sps = partition.num_superpoints
    num_cats = schema.num_categories
    numer = np.zeros((num_sps, num_cats))
    denom = np.zeros(num_sps)
    kept = [d for d in detections if d.score >= min_score]
    for i in range(num_sps):
        for p in partition.members(i):
            for k in range(vis.num_views):
                if not vis.visible[k, p]:
                    continue
                denom[i] += 1
                x, y = vis.pixels[k, p]
                for j in range(num_cats):
                    if any(
                        d.view == k and d.category == j and d.box.contains(x, y)
                        for d in kept
                    ):
                        numer[i, j] += 1
    scores = np.zeros((num_sps, num_cats))
    defined = denom > 0
    scores[defined] = numer[defined] / denom[defined, None]
    return scores, defined, denom


def shared_boxes_oracle(u, v, detections, vis, partition, category=None):
    """Direct Eq-2 set comprehension."""
    views_u = {
        k
        for k in range(vis.num_views)
        if any(vis.visible[k, p] for p in partition.members(u))
    }
    views_v = {
        k
        for k in range(vis.num_views)
        if any(vis.visible[k, p] for p in partition.members(v))
    }
    shared = views_u & views_v
    ids = [
        i
        for i, d in enumerate(detections)
        if d.view in shared and (category is None or d.category == category)
    ]
    return sorted(ids, key=lambda i: (detections[i].view, i))


def coverage_oracle(u, box_ids, detections, vis, partition):
    """Direct Eq-3 recomputation."""
    out = np.zeros(len(box_ids))
    members = partition.members(u)
    for j, b in enumerate(box_ids):
        det = detections[b]
        num = den = 0
        for p in members:
            if vis.visible[det.view, p]:
                den += 1
                if det.box.contains(*vis.pixels[det.view, p]):
                    num += 1
        out[j] = num / den if den else 0.0
    return out
