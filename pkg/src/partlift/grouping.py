"""Instance grouping: merge same-category adjacent superpoints by coverage.

Two superpoints merge when (a) they share a semantic label, (b) at least one
kNN edge connects them, and (c) their box-coverage vectors over the shared
box list agree: ||I_u - I_v||_1 / max(||I_u||_1, ||I_v||_1) < tau.  Connected
components of the passing pairs become part instances.
"""

from __future__ import annotations

import numpy as np

from partlift.core import (
    NO_INSTANCE,
    Detection,
    LabelSchema,
    Partition,
    SegmentationResult,
    VisibilityMap,
)
from partlift.superpoints import AdjacencyGraph
from partlift.voting import ScoreMatrix


class _CoverageTables:
    """Precomputed integer tallies shared by all pair tests.

    inside[i, b]: visible points of superpoint i inside box b (in b's view);
    vis_view[i, k]: visible points of superpoint i in view k.
    """

    def __init__(self, partition: Partition, detections: list[Detection], vis: VisibilityMap):
        assign = partition.assignment
        num_sp = partition.num_superpoints
        self.vis_view = np.zeros((num_sp, vis.num_views), dtype=np.int64)
        for k in range(vis.num_views):
            self.vis_view[:, k] = np.bincount(assign[vis.visible[k]], minlength=num_sp)
        self.inside = np.zeros((num_sp, len(detections)), dtype=np.int64)
        for b, det in enumerate(detections):
            x = vis.pixels[det.view, :, 0]
            y = vis.pixels[det.view, :, 1]
            hit = (
                vis.visible[det.view]
                & (x >= det.box.xmin)
                & (x <= det.box.xmax)
                & (y >= det.box.ymin)
                & (y <= det.box.ymax)
            )
            self.inside[:, b] = np.bincount(assign[hit], minlength=num_sp)


def shared_boxes(
    u: int,
    v: int,
    detections: list[Detection],
    vis: VisibilityMap,
    partition: Partition,
    category: int | None = None,
    tables: _CoverageTables | None = None,
) -> list[int]:
    """Detection indices from views where both superpoints are visible.

    With ``category`` given, only boxes of that category are kept (the
    default pipeline behavior); ``category=None`` collects every box of the
    shared views.  Order: (view index, detection index).
    """
    if tables is None:
        tables = _CoverageTables(partition, detections, vis)
    both = (tables.vis_view[u] > 0) & (tables.vis_view[v] > 0)
    out = [
        i
        for i, d in enumerate(detections)
        if both[d.view] and (category is None or d.category == category)
    ]
    out.sort(key=lambda i: (detections[i].view, i))
    return out


def coverage(
    u: int,
    box_ids: list[int],
    detections: list[Detection],
    vis: VisibilityMap,
    partition: Partition,
    tables: _CoverageTables | None = None,
) -> np.ndarray:
    """Coverage vector I_u over the shared box list.

    Entry i is the fraction of superpoint u's points visible in box i's view
    that project inside box i; a view with no visible points yields 0.
    """
    if tables is None:
        tables = _CoverageTables(partition, detections, vis)
    out = np.zeros(len(box_ids))
    for j, b in enumerate(box_ids):
        den = tables.vis_view[u, detections[b].view]
        if den > 0:
            out[j] = tables.inside[u, b] / den
    return out


def merge_test(i_u: np.ndarray, i_v: np.ndarray, tau: float) -> bool:
    """L1 coverage-agreement test; an all-zero pair merges (ratio defined 0)."""
    norm = max(float(np.abs(i_u).sum()), float(np.abs(i_v).sum()))
    if norm == 0.0:
        return True
    return float(np.abs(i_u - i_v).sum()) / norm < tau


def group_instances(
    partition: Partition,
    semantic: np.ndarray,
    detections: list[Detection],
    vis: VisibilityMap,
    graph: AdjacencyGraph,
    tau: float,
    scores: ScoreMatrix,
    schema: LabelSchema,
    use_all_category_boxes: bool = False,
) -> SegmentationResult:
    """Group superpoints into part instances.

    Instance confidence is the visible-incidence-weighted mean of the
    members' vote scores for the instance's category.  Instances are numbered
    by their smallest member point index; UNLABELED superpoints stay outside
    every instance.
    """
    assign = partition.assignment
    num_sp = partition.num_superpoints
    unlabeled = schema.unlabeled
    sp_label = np.full(num_sp, unlabeled, dtype=np.int64)
    first_point = np.full(num_sp, len(assign), dtype=np.int64)
    np.minimum.at(first_point, assign, np.arange(len(assign)))
    sp_label[assign] = semantic  # points of one superpoint share the label
    tables = _CoverageTables(partition, detections, vis)

    # candidate pairs: adjacent superpoints sharing a real label
    su = assign[graph.edges[:, 0]]
    sv = assign[graph.edges[:, 1]]
    mask = (su != sv) & (sp_label[su] == sp_label[sv]) & (sp_label[su] != unlabeled)
    pairs = np.unique(
        np.stack([np.minimum(su[mask], sv[mask]), np.maximum(su[mask], sv[mask])], axis=1),
        axis=0,
    )

    parent = np.arange(num_sp)

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return int(x)

    for u, v in pairs:
        cat = None if use_all_category_boxes else int(sp_label[u])
        box_ids = shared_boxes(int(u), int(v), detections, vis, partition, cat, tables)
        i_u = coverage(int(u), box_ids, detections, vis, partition, tables)
        i_v = coverage(int(v), box_ids, detections, vis, partition, tables)
        if merge_test(i_u, i_v, tau):
            ru, rv = find(int(u)), find(int(v))
            if ru != rv:
                parent[max(ru, rv)] = min(ru, rv)

    labeled_sps = np.flatnonzero(sp_label != unlabeled)
    roots = np.array([find(int(s)) for s in labeled_sps], dtype=np.int64)
    # number instances by smallest member point index
    root_first = {}
    for s, r in zip(labeled_sps, roots):
        fp = int(first_point[s])
        if r not in root_first or fp < root_first[r]:
            root_first[int(r)] = fp
    ordered_roots = sorted(root_first, key=root_first.get)
    root_to_inst = {r: i for i, r in enumerate(ordered_roots)}

    sp_inst = np.full(num_sp, NO_INSTANCE, dtype=np.int64)
    for s, r in zip(labeled_sps, roots):
        sp_inst[s] = root_to_inst[int(r)]
    instance = sp_inst[assign]

    m = len(ordered_roots)
    inst_cat = np.zeros(m, dtype=np.int64)
    inst_conf = np.zeros(m)
    inst_count = np.zeros(m, dtype=np.int64)
    for r, i in root_to_inst.items():
        members = labeled_sps[roots == r]
        cat = int(sp_label[members[0]])
        inst_cat[i] = cat
        weights = scores.denominators[members].astype(np.float64)
        wsum = weights.sum()
        if wsum > 0:
            inst_conf[i] = float(scores.scores[members, cat] @ weights / wsum)
        inst_count[i] = int(partition.sizes[members].sum())

    return SegmentationResult(semantic, instance, inst_cat, inst_conf, inst_count)
