"""Readers and writers for XYZ, ASCII PLY, Wavefront OBJ and pose files."""

from pathlib import Path

import numpy as np

from ..errors import EmptyCloud, ParseError
from ..fileutil import atomic_write
from .types import CameraPose, PointCloud, TriangleMesh

CLOUD_FORMATS = ("xyz", "ply")


def _guess_format(path, fmt):
    if fmt is not None:
        fmt = {"ply-ascii": "ply"}.get(fmt, fmt)
        if fmt not in CLOUD_FORMATS:
            raise ValueError(f"unknown point cloud format {fmt!r}")
        return fmt
    suffix = Path(path).suffix.lower().lstrip(".")
    if suffix in CLOUD_FORMATS:
        return suffix
    raise ValueError(f"cannot infer point cloud format from {path!r}; pass format=")


def _parse_floats(tokens, where):
    try:
        values = [float(t) for t in tokens]
    except ValueError:
        raise ParseError(f"{where}: non-numeric value in {' '.join(tokens)!r}") from None
    if not all(np.isfinite(values)):
        raise ParseError(f"{where}: non-finite coordinate")
    return values


def _read_xyz(path):
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            tokens = line.split()
            if len(tokens) != 3:
                raise ParseError(f"{path}:{lineno}: expected 3 values, got {len(tokens)}")
            rows.append(_parse_floats(tokens, f"{path}:{lineno}"))
    return rows


def _read_ply(path):
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != "ply":
        raise ParseError(f"{path}: missing 'ply' magic line")
    elements = []  # [name, count, [property names]]
    fmt_seen = False
    body_start = None
    for i, raw in enumerate(lines[1:], 1):
        tokens = raw.split()
        if not tokens or tokens[0] in ("comment", "obj_info"):
            continue
        key = tokens[0]
        if key == "format":
            if tokens[1:2] != ["ascii"]:
                raise ParseError(f"{path}: only 'format ascii 1.0' is supported")
            fmt_seen = True
        elif key == "element":
            if len(tokens) != 3:
                raise ParseError(f"{path}:{i + 1}: malformed element line")
            try:
                elements.append([tokens[1], int(tokens[2]), []])
            except ValueError:
                raise ParseError(f"{path}:{i + 1}: bad element count") from None
        elif key == "property":
            if not elements:
                raise ParseError(f"{path}:{i + 1}: property before any element")
            elements[-1][2].append(tokens[-1])
        elif key == "end_header":
            body_start = i + 1
            break
        else:
            raise ParseError(f"{path}:{i + 1}: unexpected header keyword {key!r}")
    if body_start is None:
        raise ParseError(f"{path}: header has no end_header")
    if not fmt_seen:
        raise ParseError(f"{path}: header has no format line")

    body = [ln for ln in lines[body_start:] if ln.strip()]
    cursor = 0
    rows = []
    for name, count, props in elements:
        if name != "vertex":
            # list properties make other elements variable width; one line per item regardless
            cursor += count
            continue
        try:
            cols = [props.index(axis) for axis in "xyz"]
        except ValueError:
            raise ParseError(f"{path}: vertex element lacks x/y/z properties") from None
        if cursor + count > len(body):
            raise ParseError(f"{path}: expected {count} vertices, file ends early")
        for k in range(count):
            tokens = body[cursor + k].split()
            if len(tokens) != len(props):
                raise ParseError(f"{path}: vertex {k} has {len(tokens)} values, expected {len(props)}")
            rows.append(_parse_floats([tokens[c] for c in cols], f"{path}: vertex {k}"))
        cursor += count
    return rows


def load_pointcloud(path, format=None):
    """Read a point cloud, keeping file order.

    ``format`` is ``"xyz"`` or ``"ply"`` (alias ``"ply-ascii"``); inferred
    from the suffix when omitted.
    """
    fmt = _guess_format(path, format)
    rows = _read_xyz(path) if fmt == "xyz" else _read_ply(path)
    if not rows:
        raise EmptyCloud(f"{path}: no points")
    return PointCloud(np.asarray(rows, dtype=np.float64))


def format_pointcloud(cloud, format):
    pts = cloud.points if isinstance(cloud, PointCloud) else PointCloud(cloud).points
    if format == "xyz":
        return "".join(f"{x!r} {y!r} {z!r}\n" for x, y, z in pts.tolist())
    # PLY stores float32, so write float32 values at round-trip precision
    p32 = pts.astype(np.float32)
    header = (
        "ply\nformat ascii 1.0\n"
        f"element vertex {len(p32)}\n"
        "property float x\nproperty float y\nproperty float z\nend_header\n"
    )
    body = "".join(f"{x:.9g} {y:.9g} {z:.9g}\n" for x, y, z in p32.tolist())
    return header + body


def write_pointcloud(path, cloud, format=None):
    atomic_write(path, format_pointcloud(cloud, _guess_format(path, format)))


def load_mesh(path, format="obj"):
    """Read the ``v``/``f`` subset of Wavefront OBJ.

    Face indices are 1-based (negative indices count from the end) and may
    carry ``/vt/vn`` suffixes. Polygons are fan-triangulated from their first
    corner. Zero-area faces raise ``DegenerateFace`` with the face index.
    """
    if format != "obj":
        raise ValueError(f"unsupported mesh format {format!r}")
    verts, faces = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            tokens = line.split()
            if not tokens or tokens[0].startswith("#"):
                continue
            if tokens[0] == "v":
                if len(tokens) < 4:
                    raise ParseError(f"{path}:{lineno}: vertex needs 3 coordinates")
                verts.append(_parse_floats(tokens[1:4], f"{path}:{lineno}"))
            elif tokens[0] == "f":
                if len(tokens) < 4:
                    raise ParseError(f"{path}:{lineno}: face needs at least 3 corners")
                idx = []
                for tok in tokens[1:]:
                    head = tok.split("/")[0]
                    try:
                        k = int(head)
                    except ValueError:
                        raise ParseError(f"{path}:{lineno}: bad face index {tok!r}") from None
                    if k == 0:
                        raise ParseError(f"{path}:{lineno}: OBJ indices are 1-based")
                    k = k - 1 if k > 0 else len(verts) + k
                    if not 0 <= k < len(verts):
                        raise ParseError(f"{path}:{lineno}: face references vertex {head}, "
                                         f"only {len(verts)} defined")
                    idx.append(k)
                for j in range(1, len(idx) - 1):
                    faces.append((idx[0], idx[j], idx[j + 1]))
    if not verts:
        raise ParseError(f"{path}: no vertices")
    return TriangleMesh(np.asarray(verts, dtype=np.float64), np.asarray(faces, dtype=np.int64).reshape(-1, 3))


def format_mesh(mesh):
    lines = [f"v {x!r} {y!r} {z!r}" for x, y, z in mesh.vertices.tolist()]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.faces.tolist()]
    return "\n".join(lines) + "\n"


def write_mesh(path, mesh):
    atomic_write(path, format_mesh(mesh))


def load_pose(path):
    """Read 12 whitespace-separated reals forming a row-major ``[R|t]``."""
    with open(path, encoding="utf-8") as fh:
        tokens = [t for line in fh if not line.lstrip().startswith("#") for t in line.split()]
    if len(tokens) != 12:
        raise ParseError(f"{path}: pose file needs 12 values, found {len(tokens)}")
    m = np.asarray(_parse_floats(tokens, str(path))).reshape(3, 4)
    return CameraPose(m[:, :3], m[:, 3])


def write_pose(path, pose):
    m = pose.matrix()
    atomic_write(path, "\n".join(" ".join(repr(v) for v in row) for row in m.tolist()) + "\n")
