"""Multi-view feature-map fusion driven by 3D point correspondences.

For each cell of each view's feature map, the cells of the other views that
see the most of the same 3D points are averaged (weighted by overlap) into a
fused value.  The maps themselves can come from anywhere; this module is
pure math over the supplied grids plus the visibility geometry.

Feature maps travel in the PLFM flat binary format: magic ``PLFM``, version
u16, then K, m, c as little-endian u32, then K*m*m*c little-endian float32
values in (view, row, col, channel) order.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from partlift.core import VisibilityMap

PLFM_MAGIC = b"PLFM"
PLFM_VERSION = 1


@dataclass(frozen=True)
class FeatureMap:
    """One view's m x m x c feature grid; values[row, col, channel]."""

    view: int
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 3 or v.shape[0] != v.shape[1]:
            raise ValueError(f"values must be (m, m, c), got {v.shape}")
        if not np.isfinite(v).all():
            raise ValueError("feature values must be finite")
        object.__setattr__(self, "values", v)

    @property
    def resolution(self) -> int:
        return self.values.shape[0]

    @property
    def channels(self) -> int:
        return self.values.shape[2]


class CellPointIndex:
    """Flat cell id (row * m + col) of every visible point, per view.

    ``cells[k, p]`` is -1 when p is invisible in view k; pixel (x, y) falls
    in cell (floor(x*m/W), floor(y*m/H)) clamped to [0, m-1].
    """

    def __init__(self, cells: np.ndarray, m: int):
        self.cells = np.asarray(cells, dtype=np.int64)
        self.m = int(m)

    @classmethod
    def build(cls, vis: VisibilityMap, m: int, image_size: tuple[int, int]) -> "CellPointIndex":
        cells = np.stack(
            [build_cell_index(vis, k, m, image_size) for k in range(vis.num_views)]
        )
        return cls(cells, m)

    def points_in(self, view: int, u: int, v: int) -> np.ndarray:
        """P_view(u, v): visible point indices whose projection lies in the cell."""
        return np.flatnonzero(self.cells[view] == v * self.m + u)


def build_cell_index(vis: VisibilityMap, view: int, m: int, image_size: tuple[int, int]) -> np.ndarray:
    """One view's flat cell ids (-1 for invisible points)."""
    if m < 1:
        raise ValueError("m must be >= 1")
    w, h = image_size
    out = np.full(vis.num_points, -1, dtype=np.int64)
    visible = vis.visible[view]
    x = vis.pixels[view, visible, 0]
    y = vis.pixels[view, visible, 1]
    u = np.clip(np.floor(x * m / w), 0, m - 1).astype(np.int64)
    v = np.clip(np.floor(y * m / h), 0, m - 1).astype(np.int64)
    out[visible] = v * m + u
    return out


def correspond(i: int, cell: tuple[int, int], k: int, index: CellPointIndex):
    """Corresponding cell of view k for cell (u, v) of view i, with weight.

    Picks the view-k cell sharing the most 3D points (ties: lexicographically
    lowest (u', v')); weight is the shared fraction of P_i(u, v).  Returns
    ((u', v'), weight) or None when no point of the cell is visible in k.
    """
    u, v = cell
    m = index.m
    mine = index.cells[i] == v * m + u
    total = int(mine.sum())
    if total == 0:
        return None
    targets = index.cells[k][mine]
    targets = targets[targets >= 0]
    if len(targets) == 0:
        return None
    counts = np.bincount(targets, minlength=m * m)
    best_count = counts.max()
    candidates = np.flatnonzero(counts == best_count)
    # flat id is v*m+u; lexicographic (u', v') order sorts by u' first
    cu = candidates % m
    cv = candidates // m
    j = np.lexsort((cv, cu))[0]
    return (int(cu[j]), int(cv[j])), float(best_count / total)


def aggregate(maps: list[FeatureMap], index: CellPointIndex) -> list[FeatureMap]:
    """Fuse the per-view maps by weighted cross-view cell averaging.

    Cells with no visible points keep their original value; the self view
    always participates with weight 1, so a single view is an exact identity.
    Vectorized over cells, but cell-for-cell equal to calling
    :func:`correspond` (same counts, same tie rule).
    """
    if not maps:
        return []
    m = maps[0].resolution
    c = maps[0].channels
    for fm in maps:
        if fm.resolution != m or fm.channels != c:
            raise ValueError("all feature maps must share (m, c)")
    if m != index.m:
        raise ValueError("cell index resolution does not match the maps")
    by_view = {fm.view: fm for fm in maps}

    m2 = m * m
    ids = np.arange(m2)
    # rank of each flat cell id in (u', v') lexicographic order, for ties
    lexrank = np.empty(m2, dtype=np.int64)
    lexrank[np.lexsort((ids // m, ids % m))] = np.arange(m2)
    totals = {
        k: np.bincount(index.cells[k][index.cells[k] >= 0], minlength=m2)
        for k in by_view
    }

    fused = []
    for fm in maps:
        i = fm.view
        ci = index.cells[i]
        acc = np.zeros((m2, c))
        wsum = np.zeros(m2)
        for k in sorted(by_view):
            ck = index.cells[k]
            both = (ci >= 0) & (ck >= 0)
            if not both.any():
                continue
            joint = ci[both] * m2 + ck[both]
            uniq, counts = np.unique(joint, return_counts=True)
            src = uniq // m2
            dst = uniq % m2
            order = np.lexsort((lexrank[dst], -counts, src))
            first = np.unique(src[order], return_index=True)[1]
            sel = order[first]
            w = counts[sel] / totals[i][src[sel]]
            flat = by_view[k].values.reshape(m2, c)
            acc[src[sel]] += w[:, None] * flat[dst[sel]]
            wsum[src[sel]] += w
        out = fm.values.reshape(m2, c).copy()
        has = wsum > 0
        out[has] = acc[has] / wsum[has, None]
        fused.append(FeatureMap(i, out.reshape(m, m, c)))
    return fused


def aggregate_pyramid(
    levels: list[list[FeatureMap]], vis: VisibilityMap, image_size: tuple[int, int]
) -> list[list[FeatureMap]]:
    """Apply :func:`aggregate` per pyramid level with that level's cell grid."""
    out = []
    for maps in levels:
        if not maps:
            out.append([])
            continue
        index = CellPointIndex.build(vis, maps[0].resolution, image_size)
        out.append(aggregate(maps, index))
    return out


def save_feature_maps(path, maps: list[FeatureMap]) -> None:
    """Write one pyramid level as a PLFM file (views in list order)."""
    if not maps:
        raise ValueError("nothing to save")
    m = maps[0].resolution
    c = maps[0].channels
    data = np.stack([fm.values for fm in maps]).astype("<f4")
    with open(path, "wb") as fh:
        fh.write(PLFM_MAGIC)
        fh.write(struct.pack("<HIII", PLFM_VERSION, len(maps), m, c))
        fh.write(data.tobytes())


def load_feature_maps(path) -> list[FeatureMap]:
    """Read a PLFM file back into per-view feature maps."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != PLFM_MAGIC:
            raise ValueError(f"not a PLFM file (magic {magic!r})")
        version, k, m, c = struct.unpack("<HIII", fh.read(14))
        if version != PLFM_VERSION:
            raise ValueError(f"unsupported PLFM version {version}")
        raw = fh.read(4 * k * m * m * c)
        if len(raw) != 4 * k * m * m * c:
            raise ValueError("truncated PLFM payload")
    values = np.frombuffer(raw, dtype="<f4").reshape(k, m, m, c)
    return [FeatureMap(i, values[i].astype(np.float64)) for i in range(k)]
