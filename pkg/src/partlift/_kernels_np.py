"""Pure-numpy implementations of the hot kernels.

Fallback used when the compiled extension is unavailable.  Results are
bit-identical to ``partlift._kernels``: the depth buffer is the per-pixel
minimum over covering splats, pixel owners break depth ties by lower point
index, and visibility compares exactly the same float values.
"""

from __future__ import annotations

import numpy as np


def splat_rasterize(px, py, z, idx, off_x, off_y, width, height, eps_z, num_points):
    """Z-buffer splatting of pre-filtered points.

    px, py: (P,) int64 center pixels of in-front, in-image points
    z: (P,) float64 depths; idx: (P,) int64 original point indices (ascending)
    off_x, off_y: (O,) int64 disc offsets with dx^2 + dy^2 <= radius^2

    Returns (depth (H,W) float64 with +inf where empty,
             owner (H,W) int64 with -1 where empty,
             visible (num_points,) bool).
    """
    depth = np.full((height, width), np.inf)
    owner = np.full((height, width), -1, dtype=np.int64)
    visible = np.zeros(num_points, dtype=bool)
    if len(px) == 0:
        return depth, owner, visible

    # Expand each point over its disc offsets; drop off-image pixels.
    ax = (px[:, None] + off_x[None, :]).ravel()
    ay = (py[:, None] + off_y[None, :]).ravel()
    az = np.repeat(z, len(off_x))
    ai = np.repeat(idx, len(off_x))
    keep = (ax >= 0) & (ax < width) & (ay >= 0) & (ay < height)
    ax, ay, az, ai = ax[keep], ay[keep], az[keep], ai[keep]
    flat = ay * width + ax

    dflat = depth.ravel()
    np.minimum.at(dflat, flat, az)

    # Owner: lowest point index among splats achieving the pixel minimum.
    oflat = np.full(width * height, num_points, dtype=np.int64)
    winners = az == dflat[flat]
    np.minimum.at(oflat, flat[winners], ai[winners])
    oflat[oflat == num_points] = -1
    owner = oflat.reshape(height, width)

    # Visible iff some covered pixel's buffer depth is within eps_z.
    vis_hits = az - dflat[flat] <= eps_z
    visible[ai[vis_hits]] = True
    return dflat.reshape(height, width), owner, visible


def vote_counts(x, y, visible, assign, boxes, box_cats, num_sp, num_cats):
    """Per-view tally of visible points inside >=1 box of each category.

    x, y: (N,) float64 projected pixel coordinates (NaN where unprojected)
    visible: (N,) bool; assign: (N,) int64 superpoint ids
    boxes: (B, 4) float64 rows (xmin, ymin, xmax, ymax); box_cats: (B,) int64

    Returns (num_sp, num_cats) int64; a point inside two boxes of the same
    category counts once.
    """
    counts = np.zeros((num_sp, num_cats), dtype=np.int64)
    if len(boxes) == 0 or not visible.any():
        return counts
    for cat in np.unique(box_cats):
        sel = boxes[box_cats == cat]
        inside = (
            (x[:, None] >= sel[None, :, 0])
            & (x[:, None] <= sel[None, :, 2])
            & (y[:, None] >= sel[None, :, 1])
            & (y[:, None] <= sel[None, :, 3])
        ).any(axis=1)
        hit = inside & visible
        counts[:, cat] += np.bincount(assign[hit], minlength=num_sp)
    return counts
