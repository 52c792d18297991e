"""Force application setup derived from the object's inertia matrix.

The compression axis is the principal axis of smallest moment of inertia
(the longest extent of the object). Vertices in the top quantile band of the
projection onto that axis are loaded, the bottom band is held fixed.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateGeometryError, MeshError
from .geometry import TetMesh, _as_points

DEFAULT_BAND_FRACTION = 0.05


@dataclass(frozen=True)
class ForceSpec:
    """Unit force direction, total magnitude, and loaded/fixed vertex sets."""

    direction: np.ndarray
    magnitude: float
    loaded_vertices: np.ndarray
    fixed_vertices: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=np.float64)
        if d.shape != (3,) or abs(np.linalg.norm(d) - 1.0) > 1e-12:
            raise ValueError("direction must be a unit 3-vector")
        loaded = np.asarray(self.loaded_vertices, dtype=np.int64)
        fixed = np.asarray(self.fixed_vertices, dtype=np.int64)
        if loaded.size == 0 or fixed.size == 0:
            raise ValueError("loaded and fixed vertex sets must be non-empty")
        if np.intersect1d(loaded, fixed).size:
            raise ValueError("loaded and fixed vertex sets overlap")
        if self.magnitude <= 0.0:
            raise ValueError(f"magnitude must be positive, got {self.magnitude}")
        object.__setattr__(self, "direction", d)
        object.__setattr__(self, "loaded_vertices", np.sort(loaded))
        object.__setattr__(self, "fixed_vertices", np.sort(fixed))


def inertia_matrix(points) -> np.ndarray:
    """I = sum over centered points of (|r|^2 Id - r r^T), unit mass each."""
    pts = _as_points(points)
    if pts.shape[0] == 0:
        raise DegenerateGeometryError("inertia matrix of an empty cloud is undefined")
    r = pts - pts.mean(axis=0)
    sq = (r * r).sum()
    return sq * np.eye(3) - r.T @ r


def principal_axes(inertia: np.ndarray):
    """Eigenpairs of a symmetric 3x3 matrix, ascending eigenvalue.

    Each eigenvector's sign is fixed so its largest-magnitude component is
    positive, which makes the output deterministic across runs.
    """
    m = np.asarray(inertia, dtype=np.float64)
    if m.shape != (3, 3):
        raise ValueError(f"expected a 3x3 matrix, got shape {m.shape}")
    if np.abs(m - m.T).max() > 1e-10:
        raise ValueError("inertia matrix is not symmetric")
    eigenvalues, eigenvectors = np.linalg.eigh(0.5 * (m + m.T))
    pairs = []
    for k in range(3):
        v = eigenvectors[:, k]
        if v[np.argmax(np.abs(v))] < 0.0:
            v = -v
        pairs.append((float(eigenvalues[k]), v))
    return pairs


def make_force_spec(
    mesh: TetMesh,
    magnitude: float,
    band_fraction: float = DEFAULT_BAND_FRACTION,
    axis_index: int | None = None,
) -> ForceSpec:
    """Pick the compression setup for a mesh.

    axis_index None selects the axis of smallest inertia eigenvalue; 0, 1, or
    2 forces a specific principal axis (ascending eigenvalue order). The force
    points along the negative axis so the top band is pressed toward the
    fixed bottom band.
    """
    if not 0.0 < band_fraction <= 0.5:
        raise ValueError(f"band_fraction must lie in (0, 0.5], got {band_fraction}")
    if magnitude <= 0.0:
        raise ValueError(f"magnitude must be positive, got {magnitude}")
    pairs = principal_axes(inertia_matrix(mesh.vertices))
    axis = pairs[0 if axis_index is None else axis_index][1]
    projection = mesh.vertices @ axis
    low = np.quantile(projection, band_fraction)
    high = np.quantile(projection, 1.0 - band_fraction)
    fixed = np.flatnonzero(projection <= low)
    loaded = np.flatnonzero(projection >= high)
    if np.intersect1d(loaded, fixed).size:
        raise MeshError(
            "loaded and fixed bands overlap; the object is too flat along the"
            f" force axis, try a band_fraction smaller than {band_fraction}"
        )
    return ForceSpec(
        direction=-axis,
        magnitude=float(magnitude),
        loaded_vertices=loaded,
        fixed_vertices=fixed,
    )
