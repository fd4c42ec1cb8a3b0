"""Default camera rings and the synthetic labeled-scene generator.

Cameras sit on a sphere of 2.2x the cloud's bounding-sphere radius, spaced
by a pole-to-pole Fibonacci spiral (K=1 degenerates to the +z pole), each
looking at the centroid.  Synthetic scenes are unions of surface-sampled
boxes / cylinders / spheres with analytic normals, flat per-part colors and
exact semantic + instance labels - the ground truth the pipeline oracles
measure against.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from partlift.core import LabelSchema, PointCloud, View

GOLDEN_ANGLE = np.pi * (3.0 - np.sqrt(5.0))


def _look_at(eye: np.ndarray, target: np.ndarray) -> np.ndarray:
    forward = target - eye
    forward = forward / np.linalg.norm(forward)
    up = np.array([0.0, 0.0, 1.0])
    if np.linalg.norm(np.cross(forward, up)) <= 1e-6:
        up = np.array([1.0, 0.0, 0.0])
    right = np.cross(forward, up)
    right /= np.linalg.norm(right)
    down = np.cross(forward, right)
    rot = np.stack([right, down, forward])
    ext = np.eye(4)
    ext[:3, :3] = rot
    ext[:3, 3] = -rot @ eye
    return ext


def make_default_views(
    cloud: PointCloud,
    num_views: int,
    width: int = 800,
    height: int = 800,
    radius_scale: float = 2.2,
    focal_scale: float = 0.8,
) -> list[View]:
    """K cameras surrounding the cloud, all aimed at the centroid."""
    if num_views < 1:
        raise ValueError("need at least one view")
    lo = cloud.positions.min(axis=0)
    hi = cloud.positions.max(axis=0)
    center = (lo + hi) / 2.0
    radius = float(np.linalg.norm(cloud.positions - center, axis=1).max())
    dist = radius_scale * max(radius, 1.0e-3)

    if num_views == 1:
        dirs = np.array([[0.0, 0.0, 1.0]])
    else:
        i = np.arange(num_views)
        z = 1.0 - 2.0 * i / (num_views - 1)
        r = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
        phi = i * GOLDEN_ANGLE
        dirs = np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)

    fx = focal_scale * width
    views = []
    for d in dirs:
        eye = center + dist * d
        views.append(
            View(fx, fx, (width - 1) / 2.0, (height - 1) / 2.0, width, height, _look_at(eye, center))
        )
    return views


@dataclass(frozen=True)
class SynthPart:
    """One labeled primitive of a synthetic scene.

    kind 'box' uses size=(sx, sy, sz); 'cylinder' uses radius + height (axis
    +z); 'sphere' uses radius.  Each part is one ground-truth instance.
    """

    kind: str
    category: str
    center: tuple[float, float, float]
    color: tuple[float, float, float]
    size: tuple[float, float, float] = (1.0, 1.0, 1.0)
    radius: float = 0.5
    height: float = 1.0


def _sample_box(rng, center, size, density):
    cx, cy, cz = center
    sx, sy, sz = size
    pts, nrm = [], []
    # (axis, sign): face normal; other two axes span the face
    for axis in range(3):
        dims = [sx, sy, sz]
        a, b = [d for i, d in enumerate(dims) if i != axis]
        count = max(1, round(density * a * b))
        for sign in (1.0, -1.0):
            uv = rng.random((count, 2)) - 0.5
            p = np.zeros((count, 3))
            p[:, axis] = sign * dims[axis] / 2.0
            other = [i for i in range(3) if i != axis]
            p[:, other[0]] = uv[:, 0] * a
            p[:, other[1]] = uv[:, 1] * b
            n = np.zeros((count, 3))
            n[:, axis] = sign
            pts.append(p + np.array([cx, cy, cz]))
            nrm.append(n)
    return np.concatenate(pts), np.concatenate(nrm)


def _sample_cylinder(rng, center, radius, height, density):
    side = max(1, round(density * 2.0 * np.pi * radius * height))
    theta = rng.random(side) * 2.0 * np.pi
    z = (rng.random(side) - 0.5) * height
    p = np.stack([radius * np.cos(theta), radius * np.sin(theta), z], axis=1)
    n = np.stack([np.cos(theta), np.sin(theta), np.zeros(side)], axis=1)
    pts, nrm = [p], [n]
    cap = max(1, round(density * np.pi * radius**2))
    for sign in (1.0, -1.0):
        r = radius * np.sqrt(rng.random(cap))
        t = rng.random(cap) * 2.0 * np.pi
        p = np.stack([r * np.cos(t), r * np.sin(t), np.full(cap, sign * height / 2.0)], axis=1)
        n = np.zeros((cap, 3))
        n[:, 2] = sign
        pts.append(p)
        nrm.append(n)
    return np.concatenate(pts) + np.asarray(center), np.concatenate(nrm)


def _sample_sphere(rng, center, radius, density):
    count = max(1, round(density * 4.0 * np.pi * radius**2))
    v = rng.normal(size=(count, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return np.asarray(center) + radius * v, v


def synth_scene(parts: list[SynthPart], density: float, seed: int, object_name: str = "object"):
    """Sample a labeled cloud; returns (cloud, semantic, instance, schema).

    density is points per unit surface area; identical seeds reproduce the
    scene exactly.
    """
    if not parts:
        raise ValueError("scene needs at least one part")
    rng = np.random.default_rng(seed)
    cat_names: list[str] = []
    for part in parts:
        if part.category not in cat_names:
            cat_names.append(part.category)
    schema = LabelSchema(tuple(cat_names), object_name)

    pos, nrm, col, sem, inst = [], [], [], [], []
    for idx, part in enumerate(parts):
        if part.kind == "box":
            p, n = _sample_box(rng, part.center, part.size, density)
        elif part.kind == "cylinder":
            p, n = _sample_cylinder(rng, part.center, part.radius, part.height, density)
        elif part.kind == "sphere":
            p, n = _sample_sphere(rng, part.center, part.radius, density)
        else:
            raise ValueError(f"unknown part kind '{part.kind}'")
        pos.append(p)
        nrm.append(n)
        col.append(np.tile(np.asarray(part.color, dtype=np.float64), (len(p), 1)))
        sem.append(np.full(len(p), cat_names.index(part.category), dtype=np.int64))
        inst.append(np.full(len(p), idx, dtype=np.int64))

    cloud = PointCloud.create(np.concatenate(pos), np.concatenate(col), np.concatenate(nrm))
    return cloud, np.concatenate(sem), np.concatenate(inst), schema


def chair_parts() -> list[SynthPart]:
    """Seat + four legs + back; three categories, six instances."""
    legs = [
        SynthPart("box", "leg", (x, y, 0.33), (0.2, 0.7, 0.2), size=(0.09, 0.09, 0.66))
        for x in (-0.42, 0.42)
        for y in (-0.42, 0.42)
    ]
    return [
        SynthPart("box", "seat", (0.0, 0.0, 0.72), (0.8, 0.2, 0.2), size=(1.0, 1.0, 0.12)),
        *legs,
        SynthPart("box", "back", (0.0, 0.46, 1.205), (0.2, 0.3, 0.8), size=(1.0, 0.08, 0.85)),
    ]


PRESETS = {"chair": chair_parts}


def parts_from_json(data: list[dict]) -> list[SynthPart]:
    """Scene-spec JSON rows -> SynthPart list (see SynthPart for fields)."""
    parts = []
    for i, obj in enumerate(data):
        try:
            parts.append(
                SynthPart(
                    kind=obj["kind"],
                    category=obj["category"],
                    center=tuple(obj["center"]),
                    color=tuple(obj["color"]),
                    size=tuple(obj.get("size", (1.0, 1.0, 1.0))),
                    radius=float(obj.get("radius", 0.5)),
                    height=float(obj.get("height", 1.0)),
                )
            )
        except (KeyError, TypeError) as exc:
            raise ValueError(f"scene part [{i}]: {exc}") from exc
    return parts
