"""Pinhole projection, point-splat z-buffer rasterization and 2D GT boxes.

Renders exist only to define visibility (VIS), box membership (INS) and the
feature-cell correspondences; there is no shading or anti-aliasing.  A point
splats a disc of integer pixel offsets (dx, dy) with dx^2 + dy^2 <=
splat_radius^2 around its rounded projection; only points whose rounded
projection lands inside the image are splatted at all.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from partlift import kernels
from partlift.core import BBox2D, Detection, PointCloud, View, VisibilityMap


def project(view: View, position, eps_z: float = 0.0):
    """Project one world point; returns (x, y, depth) or None when behind.

    Behind means camera-frame depth Zc <= eps_z.
    """
    p = np.asarray(position, dtype=np.float64)
    cam = view.rotation @ p + view.translation
    if cam[2] <= eps_z:
        return None
    x = view.fx * cam[0] / cam[2] + view.cx
    y = view.fy * cam[1] / cam[2] + view.cy
    return float(x), float(y), float(cam[2])


def project_points(view: View, positions: np.ndarray, eps_z: float = 0.0):
    """Vectorized projection.

    Returns (xy (N, 2) with NaN where behind, depth (N,) with NaN where
    behind, in_front (N,) bool).
    """
    cam = positions @ view.rotation.T + view.translation
    z = cam[:, 2]
    in_front = z > eps_z
    xy = np.full((positions.shape[0], 2), np.nan)
    np.divide(cam[:, 0], z, out=xy[:, 0], where=in_front)
    np.divide(cam[:, 1], z, out=xy[:, 1], where=in_front)
    xy[:, 0] = xy[:, 0] * view.fx + view.cx
    xy[:, 1] = xy[:, 1] * view.fy + view.cy
    depth = np.where(in_front, z, np.nan)
    return xy, depth, in_front


def disc_offsets(radius: float):
    """Integer offsets (dx, dy) with dx^2 + dy^2 <= radius^2."""
    r = int(np.floor(radius))
    grid = np.arange(-r, r + 1, dtype=np.int64)
    dx, dy = np.meshgrid(grid, grid, indexing="ij")
    keep = dx**2 + dy**2 <= radius**2
    return dx[keep].copy(), dy[keep].copy()


@dataclass(frozen=True)
class RasterResult:
    """One view's z-buffer, pixel owners and per-point visibility slice."""

    depth: np.ndarray  # (H, W) float64, +inf where empty
    owner: np.ndarray  # (H, W) int64 point index, -1 where empty
    visible: np.ndarray  # (N,) bool
    pixels: np.ndarray  # (N, 2) float64 projected coords, NaN where behind
    point_depth: np.ndarray  # (N,) float64, NaN where behind


def rasterize(cloud: PointCloud, view: View, splat_radius: float = 1.0, eps_z: float = 1e-6) -> RasterResult:
    """Splat the cloud into a z-buffer and derive per-point visibility.

    Each covered pixel keeps the minimum depth (ties: lower point index
    owns); a point is visible iff at least one pixel it splats onto has
    buffer depth within eps_z of the point's own depth.
    """
    if splat_radius < 0:
        raise ValueError("splat_radius must be >= 0")
    if eps_z <= 0:
        raise ValueError("eps_z must be > 0")
    xy, depth_pt, in_front = project_points(view, cloud.positions, eps_z)

    px = np.floor(xy[:, 0] + 0.5)
    py = np.floor(xy[:, 1] + 0.5)
    with np.errstate(invalid="ignore"):
        in_image = (px >= 0) & (px < view.width) & (py >= 0) & (py < view.height)
    splat = in_front & in_image

    off_x, off_y = disc_offsets(splat_radius)
    idx = np.flatnonzero(splat).astype(np.int64)
    depth_buf, owner, visible = kernels.splat_rasterize(
        px[splat].astype(np.int64),
        py[splat].astype(np.int64),
        depth_pt[splat],
        idx,
        off_x,
        off_y,
        view.width,
        view.height,
        eps_z,
        cloud.num_points,
    )
    return RasterResult(depth_buf, owner, visible, xy, depth_pt)


def build_visibility(cloud: PointCloud, views: list[View], splat_radius: float = 1.0, eps_z: float = 1e-6):
    """Rasterize every view (in parallel) and assemble the VisibilityMap."""
    workers = int(os.environ.get("PARTLIFT_THREADS", 0) or 0)
    if workers <= 0:
        workers = min(len(views), os.cpu_count() or 1)
    workers = max(1, min(workers, len(views)))
    if workers == 1:
        rasters = [rasterize(cloud, v, splat_radius, eps_z) for v in views]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rasters = list(pool.map(lambda v: rasterize(cloud, v, splat_radius, eps_z), views))
    vis = VisibilityMap(
        np.stack([r.visible for r in rasters]),
        np.stack([r.pixels for r in rasters]),
        np.stack([r.point_depth for r in rasters]),
    )
    return vis, rasters


def point_in_box(vis: VisibilityMap, view: int, p: int, box: BBox2D) -> bool:
    """Closed-box membership of p's projection in a view (INS); visibility is
    deliberately not checked here, callers combine with VIS."""
    x, y = vis.pixels[view, p]
    return bool(box.xmin <= x <= box.xmax and box.ymin <= y <= box.ymax)


def gt_boxes(
    cloud: PointCloud,
    instance_labels: np.ndarray,
    view_index: int,
    raster: RasterResult,
    noise_fraction: float = 0.05,
    instance_categories=None,
    splat_radius: float = 0.0,
) -> list[Detection]:
    """Ground-truth 2D boxes of 3D instances for one rendered view.

    Occluded points are removed via the raster's visibility; the remaining
    points' pixels are clustered into 8-connected components (on the splat
    footprint, so the grouping granularity matches the render's point size)
    and components holding fewer than noise_fraction x (instance's
    visible-pixel count) pixels are dropped as isolated noise.  Surviving
    pixels yield one axis-aligned box per instance at score 1.0 (a
    degenerate extent is padded by 0.5 px per side to keep boxes valid).

    instance_categories maps instance id -> category id; identity if None.
    """
    instance_labels = np.asarray(instance_labels)
    h, w = raster.depth.shape
    out: list[Detection] = []
    structure = np.ones((3, 3), dtype=bool)
    off_x, off_y = disc_offsets(splat_radius)

    for inst in np.unique(instance_labels):
        if inst < 0:
            continue
        pts = np.flatnonzero((instance_labels == inst) & raster.visible)
        if pts.size == 0:
            continue
        px = np.floor(raster.pixels[pts, 0] + 0.5).astype(np.int64)
        py = np.floor(raster.pixels[pts, 1] + 0.5).astype(np.int64)
        # footprint mask drives connectivity; sizes/boxes use landing pixels
        fx = np.clip((px[:, None] + off_x[None, :]).ravel(), 0, w - 1)
        fy = np.clip((py[:, None] + off_y[None, :]).ravel(), 0, h - 1)
        mask = np.zeros((h, w), dtype=bool)
        mask[fy, fx] = True
        comp, _ = ndimage.label(mask, structure=structure)
        landing = np.zeros((h, w), dtype=bool)
        landing[py, px] = True
        ys, xs = np.nonzero(landing)
        labels = comp[ys, xs]
        total = len(ys)
        sizes = np.bincount(labels)
        keep = sizes[labels] >= noise_fraction * total
        if not keep.any():
            continue
        xs, ys = xs[keep], ys[keep]
        xmin, xmax = float(xs.min()), float(xs.max())
        ymin, ymax = float(ys.min()), float(ys.max())
        if xmin == xmax:
            xmin, xmax = xmin - 0.5, xmax + 0.5
        if ymin == ymax:
            ymin, ymax = ymin - 0.5, ymax + 0.5
        cat = int(inst) if instance_categories is None else int(instance_categories[inst])
        out.append(Detection(view_index, cat, BBox2D(xmin, ymin, xmax, ymax), 1.0))
    return out
