"""Evaluation: per-category IoU, category mIoU, AP at 50% IoU, mAP50.

IoU pools intersections and unions across all shapes of the evaluation set
before dividing (the benchmark convention); ``per_shape_mean=True`` switches
to averaging per-shape IoUs instead.  AP uses greedy confidence-ordered
matching at 50% point-set IoU with all-point (precision envelope)
interpolation.  Categories with an empty union / no ground-truth instances
are ABSENT (returned as None) and excluded from means.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class InstanceGT:
    category: int
    mask: np.ndarray  # (N,) bool


@dataclass(frozen=True)
class InstancePred:
    category: int
    score: float
    mask: np.ndarray  # (N,) bool


def _as_shapes(x):
    if isinstance(x, np.ndarray):
        return [x]
    return list(x)


def semantic_iou(pred, gt, category: int, per_shape_mean: bool = False):
    """IoU of one category; pred/gt are per-point label arrays or lists of
    them (one per shape).  Returns None when the category is absent."""
    preds = _as_shapes(pred)
    gts = _as_shapes(gt)
    if len(preds) != len(gts):
        raise ValueError("pred/gt shape-count mismatch")
    inter = 0
    union = 0
    per_shape = []
    for p, g in zip(preds, gts):
        p = np.asarray(p)
        g = np.asarray(g)
        if p.shape != g.shape:
            raise ValueError(f"point count mismatch: {p.shape} vs {g.shape}")
        pi = p == category
        gi = g == category
        i = int((pi & gi).sum())
        u = int((pi | gi).sum())
        inter += i
        union += u
        if u > 0:
            per_shape.append(i / u)
    if per_shape_mean:
        return float(np.mean(per_shape)) if per_shape else None
    return inter / union if union > 0 else None


def _instance_iou(a: np.ndarray, b: np.ndarray) -> float:
    union = int((a | b).sum())
    return int((a & b).sum()) / union if union > 0 else 0.0


def instance_ap50(preds, gts, category: int, iou_threshold: float = 0.5):
    """Average precision of one category at the given point-set IoU threshold.

    preds: per shape, a list of InstancePred; gts: per shape, a list of
    InstanceGT.  Predictions are ranked by confidence (ties keep instance /
    enumeration order) and greedily matched to the unmatched ground truth
    with the highest IoU.  Returns None when no GT instance exists.
    """
    if len(preds) != len(gts):
        raise ValueError("pred/gt shape-count mismatch")
    gt_per_shape = [[g for g in shape if g.category == category] for shape in gts]
    total_gt = sum(len(g) for g in gt_per_shape)
    if total_gt == 0:
        return None

    ranked = []
    for si, shape in enumerate(preds):
        for pi, p in enumerate(shape):
            if p.category == category:
                ranked.append((-float(p.score), si, pi, p))
    ranked.sort(key=lambda t: t[0])  # stable: ties stay in id order

    matched = [np.zeros(len(g), dtype=bool) for g in gt_per_shape]
    tp = np.zeros(len(ranked))
    fp = np.zeros(len(ranked))
    for r, (_, si, _, p) in enumerate(ranked):
        cands = gt_per_shape[si]
        best_iou = 0.0
        best_j = -1
        for j, g in enumerate(cands):
            if matched[si][j]:
                continue
            iou = _instance_iou(p.mask, g.mask)
            if iou > best_iou:
                best_iou = iou
                best_j = j
        if best_j >= 0 and best_iou >= iou_threshold:
            matched[si][best_j] = True
            tp[r] = 1
        else:
            fp[r] = 1

    if not ranked:
        return 0.0
    ctp = np.cumsum(tp)
    cfp = np.cumsum(fp)
    recall = ctp / total_gt
    precision = ctp / (ctp + cfp)
    # all-point interpolation: integrate under the precision envelope
    mrec = np.concatenate([[0.0], recall])
    mpre = np.concatenate([[0.0], precision])
    for i in range(len(mpre) - 2, -1, -1):
        mpre[i] = max(mpre[i], mpre[i + 1])
    return float(np.sum((mrec[1:] - mrec[:-1]) * mpre[1:]))


@dataclass(frozen=True)
class ShapeEval:
    """One shape's predictions and ground truth."""

    pred_semantic: np.ndarray
    gt_semantic: np.ndarray
    pred_instances: list
    gt_instances: list


@dataclass(frozen=True)
class EvalReport:
    part_names: tuple[str, ...]
    part_iou: tuple  # float | None per part category
    part_ap50: tuple
    object_names: tuple[str, ...]
    object_miou: tuple
    object_map50: tuple
    overall_miou: float | None
    overall_map50: float | None

    def to_csv(self) -> str:
        """Rows: part categories, object categories, then overall."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["name", "mIoU", "mAP50"])

        def cell(x):
            return "" if x is None else repr(float(x))

        for name, miou, ap in zip(self.part_names, self.part_iou, self.part_ap50):
            w.writerow([name, cell(miou), cell(ap)])
        for name, miou, ap in zip(self.object_names, self.object_miou, self.object_map50):
            w.writerow([name, cell(miou), cell(ap)])
        w.writerow(["overall", cell(self.overall_miou), cell(self.overall_map50)])
        return buf.getvalue()


def _mean_or_none(values):
    vals = [v for v in values if v is not None]
    return float(np.mean(vals)) if vals else None


def report(
    shapes: list[ShapeEval],
    hierarchy: list[tuple[str, list[int]]],
    part_names: list[str],
    per_shape_mean: bool = False,
) -> EvalReport:
    """Aggregate per-part metrics into object-category and overall means.

    Object values are unweighted means over their parts (ABSENT excluded);
    the overall row is the unweighted mean over object categories.
    """
    preds_sem = [s.pred_semantic for s in shapes]
    gts_sem = [s.gt_semantic for s in shapes]
    preds_inst = [s.pred_instances for s in shapes]
    gts_inst = [s.gt_instances for s in shapes]

    part_iou = [
        semantic_iou(preds_sem, gts_sem, c, per_shape_mean) for c in range(len(part_names))
    ]
    part_ap = [instance_ap50(preds_inst, gts_inst, c) for c in range(len(part_names))]

    object_names = []
    object_miou = []
    object_map = []
    for obj_name, parts in hierarchy:
        object_names.append(obj_name)
        object_miou.append(_mean_or_none([part_iou[c] for c in parts]))
        object_map.append(_mean_or_none([part_ap[c] for c in parts]))

    return EvalReport(
        tuple(part_names),
        tuple(part_iou),
        tuple(part_ap),
        tuple(object_names),
        tuple(object_miou),
        tuple(object_map),
        _mean_or_none(object_miou),
        _mean_or_none(object_map),
    )


def instances_from_labels(semantic: np.ndarray, instance: np.ndarray) -> list[InstanceGT]:
    """Ground-truth instance masks from per-point label arrays."""
    out = []
    for i in np.unique(instance):
        if i < 0:
            continue
        mask = instance == i
        cat = int(semantic[mask][0])
        out.append(InstanceGT(cat, mask))
    return out


def instances_from_result(result) -> list[InstancePred]:
    """Prediction masks + confidences from a SegmentationResult."""
    return [
        InstancePred(
            int(result.instance_categories[i]),
            float(result.instance_confidences[i]),
            result.instance == i,
        )
        for i in range(result.num_instances)
    ]
