"""Shared domain types for the 2D-detection-to-3D-segmentation pipeline.

Conventions used throughout the package:

* Pixel centers sit at integer coordinates; pixel (x, y) covers the square
  [x-0.5, x+0.5) x [y-0.5, y+0.5).  The image rectangle of a WxH view is
  therefore [-0.5, W-0.5) x [-0.5, H-0.5).
* Cameras follow the OpenCV pinhole model: +z looks into the scene, +x is
  right, +y is down.  ``extrinsic`` maps world to camera coordinates.
* Semantic labels use the values 0..C-1 of a :class:`LabelSchema`; the value
  C (``schema.unlabeled``) marks unlabeled points.  Instance ids are dense
  0..M-1 with :data:`NO_INSTANCE` (-1) for points outside every instance.

All types are immutable after construction and safe to share across worker
threads; derived values are produced by constructing new objects.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

NO_INSTANCE = -1

_ROT_ORTHO_TOL = 1e-6
_NORMAL_UNIT_TOL = 1e-4


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class PointCloud:
    """Dense colored point cloud with per-point unit normals."""

    positions: np.ndarray  # (N, 3) float64, world units
    colors: np.ndarray  # (N, 3) float64 in [0, 1]
    normals: np.ndarray  # (N, 3) float64, unit length

    def __post_init__(self):
        for name in ("positions", "colors", "normals"):
            a = np.asarray(getattr(self, name), dtype=np.float64)
            if a.ndim != 2 or a.shape[1] != 3:
                raise ValueError(f"{name} must be (N, 3), got {a.shape}")
            object.__setattr__(self, name, _freeze(a))
        n = self.positions.shape[0]
        if self.colors.shape[0] != n or self.normals.shape[0] != n:
            raise ValueError("positions/colors/normals length mismatch")

    @classmethod
    def create(cls, positions, colors, normals) -> "PointCloud":
        """Build a cloud, renormalizing normals (load-time repair).

        Zero-length normals cannot be renormalized and raise ValueError.
        """
        positions = np.asarray(positions, dtype=np.float64)
        colors = np.asarray(colors, dtype=np.float64)
        normals = np.array(normals, dtype=np.float64)
        if not np.isfinite(positions).all():
            raise ValueError("positions contain non-finite values")
        lengths = np.linalg.norm(normals, axis=1)
        zero = np.flatnonzero(lengths == 0.0)
        if zero.size:
            raise ValueError(f"zero normal at point {zero[0]} (cannot renormalize)")
        normals /= lengths[:, None]
        return cls(positions, colors, normals)

    @property
    def num_points(self) -> int:
        return self.positions.shape[0]

    def diagonal(self) -> float:
        """Length of the axis-aligned bounding-box diagonal."""
        ext = self.positions.max(axis=0) - self.positions.min(axis=0)
        return float(np.linalg.norm(ext))


@dataclass(frozen=True)
class View:
    """Pinhole camera: intrinsics, world-to-camera pose and image size."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    extrinsic: np.ndarray  # (4, 4) rigid world-to-camera transform

    def __post_init__(self):
        e = np.asarray(self.extrinsic, dtype=np.float64)
        if e.shape != (4, 4):
            raise ValueError(f"extrinsic must be 4x4, got {e.shape}")
        object.__setattr__(self, "extrinsic", _freeze(e))

    @property
    def rotation(self) -> np.ndarray:
        return self.extrinsic[:3, :3]

    @property
    def translation(self) -> np.ndarray:
        return self.extrinsic[:3, 3]


@dataclass(frozen=True)
class BBox2D:
    """Axis-aligned box in continuous pixel coordinates."""

    xmin: float
    ymin: float
    xmax: float
    ymax: float

    def contains(self, x: float, y: float) -> bool:
        """Closed-interval membership test."""
        return self.xmin <= x <= self.xmax and self.ymin <= y <= self.ymax

    def intersects_image(self, width: int, height: int) -> bool:
        return (
            self.xmax >= -0.5
            and self.xmin <= width - 0.5
            and self.ymax >= -0.5
            and self.ymin <= height - 0.5
        )


@dataclass(frozen=True)
class Detection:
    """One 2D part detection in one view."""

    view: int
    category: int
    box: BBox2D
    score: float


@dataclass(frozen=True)
class LabelSchema:
    """Ordered part-category names plus the object name."""

    category_names: tuple[str, ...]
    object_name: str

    def __post_init__(self):
        object.__setattr__(self, "category_names", tuple(self.category_names))

    @property
    def num_categories(self) -> int:
        return len(self.category_names)

    @property
    def unlabeled(self) -> int:
        """Sentinel semantic value: one past the last category."""
        return len(self.category_names)


class Partition:
    """Disjoint cover of the points into superpoints with mean features.

    ``assignment[p]`` is the superpoint id of point p (dense 0..S-1, every id
    non-empty); ``means[i]`` is the mean feature vector of superpoint i.
    """

    def __init__(self, assignment: np.ndarray, means: np.ndarray):
        assignment = np.asarray(assignment, dtype=np.int64)
        means = np.asarray(means, dtype=np.float64)
        if assignment.ndim != 1:
            raise ValueError("assignment must be 1-D")
        if means.ndim != 2 or means.shape[0] != int(assignment.max(initial=-1)) + 1:
            raise ValueError("means must be (S, D) covering every superpoint id")
        counts = np.bincount(assignment, minlength=means.shape[0])
        if (counts == 0).any():
            raise ValueError("every superpoint id must be non-empty")
        self.assignment = _freeze(assignment)
        self.means = _freeze(means)
        self.sizes = _freeze(counts.astype(np.int64))
        # CSR-style member lists: points sorted by superpoint id
        order = np.argsort(assignment, kind="stable")
        self._order = _freeze(order)
        self._starts = _freeze(np.concatenate([[0], np.cumsum(counts)]))

    @classmethod
    def from_assignment(cls, assignment, features) -> "Partition":
        """Compute per-superpoint mean features from a dense assignment."""
        assignment = np.asarray(assignment, dtype=np.int64)
        features = np.asarray(features, dtype=np.float64)
        num_sp = int(assignment.max()) + 1
        sums = np.zeros((num_sp, features.shape[1]))
        np.add.at(sums, assignment, features)
        counts = np.bincount(assignment, minlength=num_sp)
        return cls(assignment, sums / counts[:, None])

    @property
    def num_superpoints(self) -> int:
        return self.means.shape[0]

    def members(self, i: int) -> np.ndarray:
        """Point indices of superpoint i (ascending)."""
        return np.sort(self._order[self._starts[i] : self._starts[i + 1]])


class VisibilityMap:
    """Per-view visibility, projected pixel coordinates and depth.

    ``visible[k, p]`` flags whether point p survives the depth test in view k;
    ``pixels[k, p]`` holds the continuous projected pixel coordinates and
    ``depth[k, p]`` the camera-frame depth (NaN where the point is behind the
    camera and was never projected).
    """

    def __init__(self, visible: np.ndarray, pixels: np.ndarray, depth: np.ndarray):
        self.visible = _freeze(np.asarray(visible, dtype=bool))
        self.pixels = _freeze(np.asarray(pixels, dtype=np.float64))
        self.depth = _freeze(np.asarray(depth, dtype=np.float64))
        if self.visible.ndim != 2 or self.pixels.shape != self.visible.shape + (2,):
            raise ValueError("inconsistent visibility map shapes")

    @property
    def num_views(self) -> int:
        return self.visible.shape[0]

    @property
    def num_points(self) -> int:
        return self.visible.shape[1]


@dataclass(frozen=True)
class SegmentationResult:
    """Per-point semantic and instance labels plus the instance table."""

    semantic: np.ndarray  # (N,) category id or schema.unlabeled
    instance: np.ndarray  # (N,) instance id or NO_INSTANCE
    instance_categories: np.ndarray  # (M,) category id per instance
    instance_confidences: np.ndarray  # (M,) in [0, 1]
    instance_counts: np.ndarray  # (M,) member point counts

    def __post_init__(self):
        object.__setattr__(self, "semantic", _freeze(np.asarray(self.semantic, dtype=np.int64)))
        object.__setattr__(self, "instance", _freeze(np.asarray(self.instance, dtype=np.int64)))
        object.__setattr__(
            self, "instance_categories", _freeze(np.asarray(self.instance_categories, dtype=np.int64))
        )
        object.__setattr__(
            self, "instance_confidences", _freeze(np.asarray(self.instance_confidences, dtype=np.float64))
        )
        object.__setattr__(
            self, "instance_counts", _freeze(np.asarray(self.instance_counts, dtype=np.int64))
        )

    @property
    def num_instances(self) -> int:
        return self.instance_categories.shape[0]


@dataclass(frozen=True)
class Violation:
    """One invariant violation found by :func:`validate`."""

    where: str  # which input ("cloud", "view", "detection", "schema")
    index: int  # offending element index, -1 if not element-specific
    message: str

    def __str__(self) -> str:
        return f"{self.where}[{self.index}]: {self.message}"


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = field(default_factory=tuple)

    @property
    def ok(self) -> bool:
        return not self.violations

    def messages(self) -> list[str]:
        return [str(v) for v in self.violations]


def validate(
    cloud: PointCloud,
    views: list[View],
    detections: list[Detection],
    schema: LabelSchema,
) -> ValidationReport:
    """Check every domain invariant; report all violations, repair nothing.

    Normal renormalization is a load-time step (see ``PointCloud.create``);
    here a non-unit normal is reported, distinguishing the unrepairable
    zero-length case.
    """
    out: list[Violation] = []

    if cloud.num_points < 1:
        out.append(Violation("cloud", -1, "empty point cloud"))
    if not np.isfinite(cloud.positions).all():
        for p in np.flatnonzero(~np.isfinite(cloud.positions).all(axis=1)):
            out.append(Violation("cloud", int(p), "non-finite position"))
    lengths = np.linalg.norm(cloud.normals, axis=1)
    for p in np.flatnonzero(lengths == 0.0):
        out.append(Violation("cloud", int(p), f"zero normal at point {p} (cannot renormalize)"))
    bad = np.flatnonzero((np.abs(lengths - 1.0) > _NORMAL_UNIT_TOL) & (lengths > 0.0))
    for p in bad:
        out.append(Violation("cloud", int(p), f"non-unit normal at point {p} (renormalize at load)"))

    for i, v in enumerate(views):
        if not (v.fx > 0 and v.fy > 0):
            out.append(Violation("view", i, "focal lengths must be positive"))
        if v.width < 1 or v.height < 1:
            out.append(Violation("view", i, "image size must be at least 1x1"))
        r = v.rotation
        if np.abs(r.T @ r - np.eye(3)).max() > _ROT_ORTHO_TOL:
            out.append(Violation("view", i, "rotation block is not orthonormal"))
        if np.abs(v.extrinsic[3] - np.array([0.0, 0.0, 0.0, 1.0])).max() > 0:
            out.append(Violation("view", i, "last extrinsic row must be [0, 0, 0, 1]"))

    for i, d in enumerate(detections):
        b = d.box
        if not (b.xmin < b.xmax and b.ymin < b.ymax):
            out.append(Violation("detection", i, f"degenerate box at detection index {i}"))
        if not (0 <= d.view < len(views)):
            out.append(Violation("detection", i, f"view index {d.view} out of range"))
        if not (0 <= d.category < schema.num_categories):
            out.append(Violation("detection", i, f"category {d.category} outside schema"))
        if not (0.0 <= d.score <= 1.0):
            out.append(Violation("detection", i, f"score {d.score} outside [0, 1]"))
        if 0 <= d.view < len(views):
            v = views[d.view]
            if (b.xmin < b.xmax and b.ymin < b.ymax) and not b.intersects_image(v.width, v.height):
                out.append(Violation("detection", i, "box does not intersect the image"))

    names = schema.category_names
    if len(set(names)) != len(names):
        out.append(Violation("schema", -1, "category names must be unique"))
    for i, name in enumerate(names):
        if not name:
            out.append(Violation("schema", i, "empty category name"))

    return ValidationReport(tuple(out))
