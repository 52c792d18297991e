"""Point-cloud and tetrahedral-mesh data types plus unit-sphere normalization.

Coordinates are 64-bit floats throughout: the downstream stiffness assembly
and the finite-difference gradient checks need the headroom. All types are
immutable after construction and safe to share across threads.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateGeometryError, MeshError


def _as_points(points) -> np.ndarray:
    pts = np.ascontiguousarray(np.asarray(points, dtype=np.float64))
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError(f"expected an (n, 3) array of positions, got shape {pts.shape}")
    if not np.all(np.isfinite(pts)):
        raise ValueError("positions contain non-finite coordinates")
    return pts


@dataclass(frozen=True)
class PointCloud:
    """An unordered set of n points in 3-space with an optional class label."""

    points: np.ndarray
    label: str | None = None
    source_id: str = ""

    def __post_init__(self):
        object.__setattr__(self, "points", _as_points(self.points))
        if self.n == 0:
            raise ValueError("point cloud is empty")

    @property
    def n(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True)
class Transform:
    """Similarity map y = scale * (x + translation); scale applied last.

    Closed under inversion, so normalize/denormalize round-trips compose out
    of the same type.
    """

    translation: np.ndarray
    scale: float

    def __post_init__(self):
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "scale", float(self.scale))
        if not self.scale > 0.0:
            raise ValueError(f"scale must be positive, got {self.scale}")

    def apply(self, points: np.ndarray) -> np.ndarray:
        return self.scale * (np.asarray(points, dtype=np.float64) + self.translation)

    def inverse(self) -> "Transform":
        # y = s*(x + t)  =>  x = (1/s)*(y + (-s*t))
        return Transform(translation=-self.scale * self.translation, scale=1.0 / self.scale)


def normalize_unit_sphere(pc: PointCloud) -> tuple[PointCloud, Transform]:
    """Center the cloud at the origin and scale its max radius to exactly 1.

    Returns the normalized cloud and the Transform that produced it, whose
    inverse reproduces the original coordinates.
    """
    centroid = pc.points.mean(axis=0)
    centered = pc.points - centroid
    radius = float(np.sqrt((centered**2).sum(axis=1).max()))
    if radius == 0.0:
        raise DegenerateGeometryError("zero-extent cloud: all points coincide")
    transform = Transform(translation=-centroid, scale=1.0 / radius)
    out = PointCloud(centered / radius, label=pc.label, source_id=pc.source_id)
    return out, transform


def _cell_volumes(vertices: np.ndarray, cells: np.ndarray) -> np.ndarray:
    a, b, c, d = (vertices[cells[:, k]] for k in range(4))
    return np.linalg.det(np.stack([b - a, c - a, d - a], axis=-1)) / 6.0


@dataclass(frozen=True)
class TetMesh:
    """Tetrahedral mesh over a subset of a point cloud.

    ``retained_map[i]`` is the index in the originating cloud of mesh vertex
    i; producers that drop orphan vertices record the surviving subset here.
    Construction validates the structural invariants: indices in range,
    positive cell volumes, no duplicate cells, no orphan vertices.
    """

    vertices: np.ndarray
    cells: np.ndarray
    retained_map: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        verts = _as_points(self.vertices)
        cells = np.ascontiguousarray(np.asarray(self.cells, dtype=np.int64))
        if cells.ndim != 2 or cells.shape[1] != 4:
            raise MeshError(f"cells must be an (nc, 4) index array, got shape {cells.shape}")
        if cells.shape[0] == 0:
            raise MeshError("mesh has no cells")
        if cells.min() < 0 or cells.max() >= verts.shape[0]:
            raise MeshError(
                f"cell index out of range: [{cells.min()}, {cells.max()}] "
                f"for {verts.shape[0]} vertices"
            )
        vols = _cell_volumes(verts, cells)
        if np.any(vols <= 0.0):
            bad = int(np.argmin(vols))
            raise MeshError(f"cell {bad} has non-positive volume {vols[bad]:.3e}")
        key = np.sort(cells, axis=1)
        if np.unique(key, axis=0).shape[0] != cells.shape[0]:
            raise MeshError("duplicate cells")
        referenced = np.zeros(verts.shape[0], dtype=bool)
        referenced[cells.ravel()] = True
        if not referenced.all():
            orphans = np.flatnonzero(~referenced)
            raise MeshError(f"orphan vertices not referenced by any cell: {orphans[:8].tolist()}")
        rmap = self.retained_map
        if rmap is None:
            rmap = np.arange(verts.shape[0], dtype=np.int64)
        rmap = np.ascontiguousarray(np.asarray(rmap, dtype=np.int64))
        if rmap.shape != (verts.shape[0],):
            raise MeshError("retained_map must have one entry per vertex")
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "retained_map", rmap)

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_cells(self) -> int:
        return self.cells.shape[0]

    def cell_volumes(self) -> np.ndarray:
        return _cell_volumes(self.vertices, self.cells)


def build_tet_mesh(vertices, cells, retained_map=None) -> TetMesh:
    """Canonicalize raw (vertices, cells) into a valid TetMesh.

    Flips negatively oriented cells to positive volume and drops vertices no
    cell references, composing the survivors into ``retained_map``. Exactly
    degenerate (zero-volume) cells are rejected by the TetMesh constructor.
    """
    verts = _as_points(vertices)
    cells = np.asarray(cells, dtype=np.int64).reshape(-1, 4).copy()
    if retained_map is None:
        retained_map = np.arange(verts.shape[0], dtype=np.int64)
    retained_map = np.asarray(retained_map, dtype=np.int64)

    vols = _cell_volumes(verts, cells)
    flip = vols < 0.0
    cells[flip] = cells[flip][:, [1, 0, 2, 3]]

    used = np.unique(cells.ravel())
    remap = -np.ones(verts.shape[0], dtype=np.int64)
    remap[used] = np.arange(used.size, dtype=np.int64)
    return TetMesh(
        vertices=verts[used],
        cells=remap[cells],
        retained_map=retained_map[used],
    )
