"""File formats: PLY clouds, JSON views/detections/schema, text label files.

The PLY loader accepts ASCII and binary-little-endian files with properties
x, y, z, nx, ny, nz (float32 or float64) and red, green, blue (uchar,
float32 or float64); 8-bit colors are divided by 255 at load.  The writer
emits all nine properties as float64 so save/load round-trips are
bit-identical.

Label files are UTF-8 text: a header line "<num_points> <num_instances>"
followed by one "semantic_id instance_id" line per point (-1 marks a point
outside every instance).
"""

from __future__ import annotations

import json

import numpy as np

from partlift.core import BBox2D, Detection, LabelSchema, PointCloud, View

_PLY_DTYPES = {
    "char": "i1",
    "int8": "i1",
    "uchar": "u1",
    "uint8": "u1",
    "short": "i2",
    "int16": "i2",
    "ushort": "u2",
    "uint16": "u2",
    "int": "i4",
    "int32": "i4",
    "uint": "u4",
    "uint32": "u4",
    "float": "f4",
    "float32": "f4",
    "double": "f8",
    "float64": "f8",
}

_REQUIRED = ("x", "y", "z", "nx", "ny", "nz", "red", "green", "blue")


def load_cloud(path) -> PointCloud:
    """Parse a PLY point cloud; normals are renormalized at load."""
    with open(path, "rb") as fh:
        if fh.readline().strip() != b"ply":
            raise ValueError("not a PLY file")
        fmt = None
        props: list[tuple[str, str]] = []
        count = None
        in_vertex = False
        while True:
            line = fh.readline()
            if not line:
                raise ValueError("malformed header: missing end_header")
            tokens = line.decode("ascii", "replace").split()
            if not tokens or tokens[0] == "comment":
                continue
            if tokens[0] == "format":
                fmt = tokens[1]
            elif tokens[0] == "element":
                if tokens[1] == "vertex":
                    in_vertex = True
                    count = int(tokens[2])
                else:
                    if count is None:
                        raise ValueError("elements before vertex are unsupported")
                    in_vertex = False
            elif tokens[0] == "property" and in_vertex:
                if tokens[1] == "list":
                    raise ValueError("list properties on vertices are unsupported")
                if tokens[1] not in _PLY_DTYPES:
                    raise ValueError(f"unsupported property type {tokens[1]}")
                props.append((tokens[2], _PLY_DTYPES[tokens[1]]))
            elif tokens[0] == "end_header":
                break
        if fmt not in ("ascii", "binary_little_endian"):
            raise ValueError(f"unsupported PLY format {fmt}")
        if count is None:
            raise ValueError("missing vertex element")
        names = [n for n, _ in props]
        for req in _REQUIRED:
            if req not in names:
                raise ValueError(f"missing required property '{req}'")

        if fmt == "ascii":
            rows = []
            for i in range(count):
                line = fh.readline()
                if not line:
                    raise ValueError(f"truncated ASCII payload at vertex {i}")
                parts = line.split()
                if len(parts) < len(props):
                    raise ValueError(f"short vertex line {i}")
                rows.append([float(v) for v in parts[: len(props)]])
            table = np.array(rows, dtype=np.float64).reshape(count, len(props))
            col = {n: table[:, i] for i, (n, _) in enumerate(props)}
            color_dtype = dict(props)["red"]
        else:
            dtype = np.dtype([(n, "<" + d) for n, d in props])
            raw = fh.read(dtype.itemsize * count)
            if len(raw) != dtype.itemsize * count:
                raise ValueError("truncated binary payload")
            table = np.frombuffer(raw, dtype=dtype)
            col = {n: table[n].astype(np.float64) for n, _ in props}
            color_dtype = dict(props)["red"]

    positions = np.stack([col["x"], col["y"], col["z"]], axis=1)
    normals = np.stack([col["nx"], col["ny"], col["nz"]], axis=1)
    colors = np.stack([col["red"], col["green"], col["blue"]], axis=1)
    if color_dtype == "u1":
        colors = colors / 255.0
    return PointCloud.create(positions, colors, normals)


def save_cloud(path, cloud: PointCloud, binary: bool = True) -> None:
    header = [
        "ply",
        "format binary_little_endian 1.0" if binary else "format ascii 1.0",
        f"element vertex {cloud.num_points}",
    ]
    header += [f"property double {n}" for n in _REQUIRED]
    header.append("end_header")
    table = np.hstack([cloud.positions, cloud.normals, cloud.colors])
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        if binary:
            fh.write(np.ascontiguousarray(table, dtype="<f8").tobytes())
        else:
            for row in table:
                fh.write((" ".join("%.17g" % v for v in row) + "\n").encode("ascii"))


def _require(obj, key, kind, errors, where):
    if key not in obj:
        errors.append(f"{where}: missing field '{key}'")
        return None
    val = obj[key]
    if kind is float and isinstance(val, (int, float)) and not isinstance(val, bool):
        return float(val)
    if kind is int and isinstance(val, int) and not isinstance(val, bool):
        return val
    if kind is list and isinstance(val, list):
        return val
    errors.append(f"{where}: field '{key}' must be {kind.__name__}")
    return None


def load_views(path) -> list[View]:
    """Views JSON: [{fx, fy, cx, cy, width, height, extrinsic: [16]}]."""
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, list):
        raise ValueError("views file must hold a JSON list")
    errors: list[str] = []
    views = []
    for i, obj in enumerate(data):
        where = f"view[{i}]"
        if not isinstance(obj, dict):
            errors.append(f"{where}: not an object")
            continue
        fx = _require(obj, "fx", float, errors, where)
        fy = _require(obj, "fy", float, errors, where)
        cx = _require(obj, "cx", float, errors, where)
        cy = _require(obj, "cy", float, errors, where)
        width = _require(obj, "width", int, errors, where)
        height = _require(obj, "height", int, errors, where)
        ext = _require(obj, "extrinsic", list, errors, where)
        if ext is not None and len(ext) != 16:
            errors.append(f"{where}: extrinsic must hold 16 row-major values")
            ext = None
        if None in (fx, fy, cx, cy, width, height) or ext is None:
            continue
        views.append(View(fx, fy, cx, cy, width, height, np.array(ext, dtype=np.float64).reshape(4, 4)))
    if errors:
        raise ValueError("invalid views file:\n" + "\n".join(errors))
    return views


def save_views(path, views: list[View]) -> None:
    data = [
        {
            "fx": v.fx,
            "fy": v.fy,
            "cx": v.cx,
            "cy": v.cy,
            "width": v.width,
            "height": v.height,
            "extrinsic": [float(x) for x in v.extrinsic.ravel()],
        }
        for v in views
    ]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=1)
        fh.write("\n")


def load_detections(path) -> list[Detection]:
    """Detections JSON: [{view, category, box: [xmin, ymin, xmax, ymax], score}]."""
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, list):
        raise ValueError("detections file must hold a JSON list")
    errors: list[str] = []
    dets = []
    for i, obj in enumerate(data):
        where = f"detection[{i}]"
        if not isinstance(obj, dict):
            errors.append(f"{where}: not an object")
            continue
        view = _require(obj, "view", int, errors, where)
        category = _require(obj, "category", int, errors, where)
        box = _require(obj, "box", list, errors, where)
        score = _require(obj, "score", float, errors, where)
        if box is not None and len(box) != 4:
            errors.append(f"{where}: box must hold [xmin, ymin, xmax, ymax]")
            box = None
        if None in (view, category, score) or box is None:
            continue
        dets.append(Detection(view, category, BBox2D(*[float(b) for b in box]), score))
    if errors:
        raise ValueError("invalid detections file:\n" + "\n".join(errors))
    return dets


def save_detections(path, detections: list[Detection]) -> None:
    data = [
        {
            "view": d.view,
            "category": d.category,
            "box": [d.box.xmin, d.box.ymin, d.box.xmax, d.box.ymax],
            "score": d.score,
        }
        for d in detections
    ]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=1)
        fh.write("\n")


def load_schema(path) -> LabelSchema:
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict) or "object" not in data or "parts" not in data:
        raise ValueError("schema file must hold {object, parts}")
    return LabelSchema(tuple(data["parts"]), data["object"])


def save_schema(path, schema: LabelSchema) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"object": schema.object_name, "parts": list(schema.category_names)}, fh, indent=1)
        fh.write("\n")


def save_labels(path, semantic: np.ndarray, instance: np.ndarray) -> None:
    semantic = np.asarray(semantic, dtype=np.int64)
    instance = np.asarray(instance, dtype=np.int64)
    if semantic.shape != instance.shape:
        raise ValueError("semantic/instance length mismatch")
    num_inst = int(instance.max(initial=-1)) + 1
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{len(semantic)} {num_inst}\n")
        for s, i in zip(semantic, instance):
            fh.write(f"{s} {i}\n")


def load_labels(path):
    with open(path, "r", encoding="utf-8") as fh:
        head = fh.readline().split()
        if len(head) != 2:
            raise ValueError("label file header must be '<points> <instances>'")
        n, m = int(head[0]), int(head[1])
        semantic = np.empty(n, dtype=np.int64)
        instance = np.empty(n, dtype=np.int64)
        for i in range(n):
            line = fh.readline()
            if not line:
                raise ValueError(f"truncated label file at line {i + 2}")
            a, b = line.split()
            semantic[i] = int(a)
            instance[i] = int(b)
    if int(instance.max(initial=-1)) + 1 != m:
        raise ValueError("instance count in header does not match the data")
    return semantic, instance


def save_instance_table(path, result) -> None:
    """Optional side table: per-instance category, confidence and size."""
    data = [
        {
            "instance": i,
            "category": int(result.instance_categories[i]),
            "confidence": float(result.instance_confidences[i]),
            "count": int(result.instance_counts[i]),
        }
        for i in range(result.num_instances)
    ]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=1)
        fh.write("\n")
