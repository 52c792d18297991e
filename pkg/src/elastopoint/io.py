"""File formats: XYZ / ASCII-PLY clouds, ``.tet`` meshes, binary field dumps.

Text formats print floats with 17 significant digits so coordinates
round-trip bit-exactly through save/load. Binary formats are little-endian
with an 8-byte magic header.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import ParseError
from .geometry import PointCloud, TetMesh
from .udf import QuerySet

FIELD_MAGIC = b"EPFIELD1"
QUERY_MAGIC = b"EPQRY1\x00\x00"


def fmt17(x: float) -> str:
    """Format a float with 17 significant digits (exact float64 round-trip)."""
    return f"{float(x):.17g}"


def dumps_17g(obj) -> str:
    """JSON-serialize with all floats printed at 17 significant digits."""
    if isinstance(obj, dict):
        items = (f"{json.dumps(str(k))}: {dumps_17g(v)}" for k, v in obj.items())
        return "{" + ", ".join(items) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(dumps_17g(v) for v in obj) + "]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (float, np.floating)):
        return fmt17(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if obj is None:
        return "null"
    return json.dumps(obj)


def _sidecar_path(path: Path) -> Path:
    return path.with_name(path.name + ".json")


def load_point_cloud(path) -> PointCloud:
    """Read a cloud from an XYZ file (one ``x y z`` per line) or ASCII PLY.

    A sidecar ``<name>.json`` next to the file may carry ``label`` and
    ``source_id`` metadata. Clouds with fewer than 4 points are rejected as
    unusable for meshing.
    """
    path = Path(path)
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if lines and lines[0].strip().lower() == "ply":
        points = _parse_ascii_ply(path, lines)
    else:
        points = _parse_xyz(path, lines)
    if len(points) < 4:
        raise ParseError(path, len(lines), f"degenerate cloud: only {len(points)} points (need >= 4)")
    label = None
    source_id = path.stem
    sidecar = _sidecar_path(path)
    if sidecar.exists():
        meta = json.loads(sidecar.read_text(encoding="utf-8"))
        label = meta.get("label", label)
        source_id = meta.get("source_id", source_id)
    return PointCloud(np.array(points, dtype=np.float64), label=label, source_id=source_id)


def _parse_xyz(path: Path, lines: list[str]) -> list[list[float]]:
    points = []
    for lineno, raw in enumerate(lines, start=1):
        text = raw.strip()
        if not text or text.startswith("#"):
            continue
        parts = text.split()
        if len(parts) < 3:
            raise ParseError(path, lineno, f"expected 3 coordinates, got {len(parts)}")
        try:
            points.append([float(parts[0]), float(parts[1]), float(parts[2])])
        except ValueError:
            raise ParseError(path, lineno, f"malformed coordinate triple: {text!r}") from None
    return points


def _parse_ascii_ply(path: Path, lines: list[str]) -> list[list[float]]:
    n_vertices = None
    in_vertex_element = False
    body_start = None
    for lineno, raw in enumerate(lines, start=1):
        text = raw.strip()
        if lineno == 2 and not text.startswith("format ascii"):
            raise ParseError(path, lineno, "only ASCII PLY is supported")
        if text.startswith("element "):
            parts = text.split()
            in_vertex_element = parts[1] == "vertex"
            if in_vertex_element:
                try:
                    n_vertices = int(parts[2])
                except (IndexError, ValueError):
                    raise ParseError(path, lineno, "bad vertex element count") from None
        if text == "end_header":
            body_start = lineno
            break
    if n_vertices is None or body_start is None:
        raise ParseError(path, len(lines), "PLY header missing vertex element or end_header")
    points = []
    for lineno in range(body_start + 1, body_start + 1 + n_vertices):
        if lineno > len(lines):
            raise ParseError(path, len(lines), f"PLY body truncated: expected {n_vertices} vertices")
        parts = lines[lineno - 1].split()
        if len(parts) < 3:
            raise ParseError(path, lineno, "vertex line has fewer than 3 values")
        try:
            points.append([float(parts[0]), float(parts[1]), float(parts[2])])
        except ValueError:
            raise ParseError(path, lineno, f"malformed vertex line: {lines[lineno - 1]!r}") from None
    return points


def save_point_cloud(pc: PointCloud, path) -> None:
    """Write a cloud as XYZ; label/source_id go to the ``<name>.json`` sidecar."""
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for p in pc.points:
            fh.write(f"{fmt17(p[0])} {fmt17(p[1])} {fmt17(p[2])}\n")
    meta = {"source_id": pc.source_id}
    if pc.label is not None:
        meta["label"] = pc.label
    _sidecar_path(path).write_text(json.dumps(meta, indent=0) + "\n", encoding="utf-8")


def save_tet_mesh(mesh: TetMesh, path) -> None:
    """Write the ASCII ``.tet`` format: ``tet <nv> <nc>`` header, vertex and
    cell lines, then one ``map`` line carrying the retained-vertex indices."""
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"tet {mesh.n_vertices} {mesh.n_cells}\n")
        for v in mesh.vertices:
            fh.write(f"{fmt17(v[0])} {fmt17(v[1])} {fmt17(v[2])}\n")
        for c in mesh.cells:
            fh.write(f"{c[0]} {c[1]} {c[2]} {c[3]}\n")
        fh.write("map " + " ".join(str(i) for i in mesh.retained_map) + "\n")


def load_tet_mesh(path) -> TetMesh:
    path = Path(path)
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ParseError(path, 1, "empty .tet file")
    header = lines[0].split()
    if len(header) != 3 or header[0] != "tet":
        raise ParseError(path, 1, f"expected header 'tet <nv> <nc>', got {lines[0]!r}")
    try:
        nv, nc = int(header[1]), int(header[2])
    except ValueError:
        raise ParseError(path, 1, "non-integer counts in header") from None
    if len(lines) < 1 + nv + nc:
        raise ParseError(path, len(lines), f"truncated .tet file: header promises {nv} vertices and {nc} cells")

    vertices = np.empty((nv, 3), dtype=np.float64)
    for i in range(nv):
        lineno = 2 + i
        parts = lines[lineno - 1].split()
        if len(parts) != 3:
            raise ParseError(path, lineno, "vertex line must have 3 coordinates")
        try:
            vertices[i] = [float(parts[0]), float(parts[1]), float(parts[2])]
        except ValueError:
            raise ParseError(path, lineno, f"malformed vertex line: {lines[lineno - 1]!r}") from None

    cells = np.empty((nc, 4), dtype=np.int64)
    for i in range(nc):
        lineno = 2 + nv + i
        parts = lines[lineno - 1].split()
        if len(parts) != 4:
            raise ParseError(path, lineno, "cell line must have 4 indices")
        try:
            cells[i] = [int(parts[0]), int(parts[1]), int(parts[2]), int(parts[3])]
        except ValueError:
            raise ParseError(path, lineno, f"malformed cell line: {lines[lineno - 1]!r}") from None
        if cells[i].min() < 0 or cells[i].max() >= nv:
            raise ParseError(path, lineno, f"cell index out of range for {nv} vertices")

    retained_map = None
    map_lineno = 2 + nv + nc
    if len(lines) >= map_lineno and lines[map_lineno - 1].startswith("map"):
        parts = lines[map_lineno - 1].split()[1:]
        if len(parts) != nv:
            raise ParseError(path, map_lineno, f"map line must carry {nv} indices")
        retained_map = np.array([int(p) for p in parts], dtype=np.int64)
    return TetMesh(vertices=vertices, cells=cells, retained_map=retained_map)


def tet_mesh_roundtrip(mesh: TetMesh, path) -> TetMesh:
    """Save then re-load a mesh; the result equals the input exactly."""
    save_tet_mesh(mesh, path)
    return load_tet_mesh(path)


def save_displacement_field(u: np.ndarray, path) -> None:
    """Binary per-vertex 3-vector field: EPFIELD1 magic, uint64 count, float64 LE data."""
    u = np.ascontiguousarray(np.asarray(u, dtype=np.float64))
    if u.ndim != 2 or u.shape[1] != 3:
        raise ValueError(f"expected an (n, 3) field, got shape {u.shape}")
    with open(path, "wb") as fh:
        fh.write(FIELD_MAGIC)
        fh.write(struct.pack("<Q", u.shape[0]))
        fh.write(u.astype("<f8").tobytes())


def load_displacement_field(path) -> np.ndarray:
    path = Path(path)
    blob = path.read_bytes()
    if blob[:8] != FIELD_MAGIC:
        raise ParseError(path, 1, f"bad magic {blob[:8]!r}, expected {FIELD_MAGIC!r}")
    (count,) = struct.unpack_from("<Q", blob, 8)
    expected = 16 + count * 24
    if len(blob) != expected:
        raise ParseError(path, 1, f"field payload is {len(blob)} bytes, expected {expected}")
    return np.frombuffer(blob, dtype="<f8", offset=16).reshape(count, 3).astype(np.float64)


def save_query_set(qs: QuerySet, path) -> None:
    """Binary query set: EPQRY1 magic, uint64 K, int64 seed, 16-byte strategy
    tag, then K little-endian float64 records of (x, y, z, distance)."""
    tag = qs.strategy.encode("ascii")[:16].ljust(16, b"\x00")
    records = np.concatenate([qs.positions, qs.distances[:, None]], axis=1)
    with open(path, "wb") as fh:
        fh.write(QUERY_MAGIC)
        fh.write(struct.pack("<Qq", qs.k, qs.seed))
        fh.write(tag)
        fh.write(records.astype("<f8").tobytes())


def load_query_set(path) -> QuerySet:
    path = Path(path)
    blob = path.read_bytes()
    if blob[:8] != QUERY_MAGIC:
        raise ParseError(path, 1, f"bad magic {blob[:8]!r}, expected {QUERY_MAGIC!r}")
    k, seed = struct.unpack_from("<Qq", blob, 8)
    tag = blob[24:40].rstrip(b"\x00").decode("ascii")
    expected = 40 + k * 32
    if len(blob) != expected:
        raise ParseError(path, 1, f"query payload is {len(blob)} bytes, expected {expected}")
    records = np.frombuffer(blob, dtype="<f8", offset=40).reshape(k, 4).astype(np.float64)
    return QuerySet(positions=records[:, :3], distances=records[:, 3], seed=seed, strategy=tag)
