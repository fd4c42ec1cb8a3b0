"""Semantic voting: per-(superpoint, category) box-coverage scores.

The score of superpoint i for category j is the fraction of its visible
(point, view) incidences that fall inside at least one category-j box of the
corresponding view; each superpoint then takes the argmax category.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from partlift import kernels
from partlift.core import Detection, LabelSchema, Partition, VisibilityMap


@dataclass(frozen=True)
class ScoreMatrix:
    """Eq-1 scores s[i, j] in [0, 1] plus the visible-incidence denominators.

    Superpoints that are never visible have denominator 0; their scores are
    undefined (``defined[i]`` False) and the score row is left at 0.
    """

    scores: np.ndarray  # (S, C) float64
    defined: np.ndarray  # (S,) bool
    denominators: np.ndarray  # (S,) int64


def vote_scores(
    partition: Partition,
    detections: list[Detection],
    vis: VisibilityMap,
    schema: LabelSchema,
    min_score: float = 0.0,
) -> ScoreMatrix:
    """Accumulate box-coverage tallies over all views.

    Detections with confidence below min_score are ignored.  A point inside
    two boxes of the same category in one view still counts once.
    """
    num_sp = partition.num_superpoints
    num_cats = schema.num_categories
    assign = partition.assignment

    denom = np.bincount(assign, weights=vis.visible.sum(axis=0), minlength=num_sp)
    denom = denom.astype(np.int64)

    numer = np.zeros((num_sp, num_cats), dtype=np.int64)
    kept = [d for d in detections if d.score >= min_score]
    for k in range(vis.num_views):
        in_view = [d for d in kept if d.view == k]
        if not in_view:
            continue
        boxes = np.array(
            [[d.box.xmin, d.box.ymin, d.box.xmax, d.box.ymax] for d in in_view]
        )
        cats = np.array([d.category for d in in_view], dtype=np.int64)
        numer += kernels.vote_counts(
            np.ascontiguousarray(vis.pixels[k, :, 0]),
            np.ascontiguousarray(vis.pixels[k, :, 1]),
            vis.visible[k].astype(np.uint8),
            assign,
            boxes,
            cats,
            num_sp,
            num_cats,
        )

    defined = denom > 0
    scores = np.zeros((num_sp, num_cats))
    np.divide(numer, denom[:, None], out=scores, where=defined[:, None])
    return ScoreMatrix(scores, defined, denom)


def assign_semantics(scores: ScoreMatrix, partition: Partition, threshold: float = 0.0) -> np.ndarray:
    """Per-point semantic labels from the score matrix.

    Each superpoint takes the argmax category (ties: lowest id).  Superpoints
    with undefined scores, an all-zero row (no box evidence at all), or a
    maximum below the threshold become UNLABELED (= C).
    """
    num_cats = scores.scores.shape[1]
    if num_cats == 0:
        return np.full(len(partition.assignment), num_cats, dtype=np.int64)
    best = np.argmax(scores.scores, axis=1)
    best_val = scores.scores[np.arange(len(best)), best]
    labels = np.where(
        scores.defined & (best_val > 0.0) & (best_val >= threshold),
        best,
        num_cats,
    )
    return labels[partition.assignment]
