"""Incremental Delaunay tetrahedralization with oversized-cell pruning.

Bowyer-Watson insertion inside an enclosing super-tetrahedron. Predicates are
evaluated in floating point as lifted determinants together with a running
rounding-error bound; any decision that falls inside its own error bound
triggers a retry with deterministically seeded coordinate jitter instead of
exact arithmetic.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .errors import DegenerateGeometryError, MeshError
from .geometry import TetMesh, build_tet_mesh

PREDICATE_SAFETY = 64.0
JITTER_SCALE = 1e-9
MAX_JITTER_RETRIES = 3
DEFAULT_PRUNE_FACTOR = 2.5
# Cells whose smallest vertex-to-face height is within two decades of the
# jitter magnitude are artifacts of the symbolic perturbation (flattened
# co-spherical hull facets), not meaningful cells; they are dropped from the
# final mesh. Their total volume is far below the hull-coverage tolerance.
DEGENERATE_CELL_HEIGHT = 100.0 * JITTER_SCALE

_EPS = float(np.finfo(np.float64).eps)
# Face opposite vertex i of a positively oriented tet, ordered so that the
# tet (face, p) is positively oriented when p lies on the same side as
# vertex i (the inside of the cavity during Bowyer-Watson refill).
_TET_FACES = ((1, 3, 2), (0, 2, 3), (0, 3, 1), (0, 1, 2))
_EDGE_PAIRS = ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))


@dataclass(frozen=True)
class Circumsphere:
    """Sphere through four non-coplanar points."""

    center: np.ndarray
    radius: float


class _PredicateFailure(Exception):
    """Ambiguous or degenerate predicate; the insertion pass must be retried."""

    def __init__(self, point_index: int, reason: str):
        super().__init__(reason)
        self.point_index = point_index
        self.reason = reason


def signed_volume(a, b, c, d) -> float:
    """det([b-a, c-a, d-a]) / 6; positive for right-handed tets, zero if coplanar."""
    a = np.asarray(a, dtype=np.float64)
    u = np.asarray(b, dtype=np.float64) - a
    v = np.asarray(c, dtype=np.float64) - a
    w = np.asarray(d, dtype=np.float64) - a
    return float(np.dot(np.cross(u, v), w) / 6.0)


def _cross_with_mag(u: np.ndarray, v: np.ndarray):
    """Cross product alongside its cancellation-free magnitude analog."""
    cross = np.cross(u, v)
    au, av = np.abs(u), np.abs(v)
    mag = np.stack(
        [
            au[..., 1] * av[..., 2] + au[..., 2] * av[..., 1],
            au[..., 2] * av[..., 0] + au[..., 0] * av[..., 2],
            au[..., 0] * av[..., 1] + au[..., 1] * av[..., 0],
        ],
        axis=-1,
    )
    return cross, mag


def _triple_with_mag(u, v, w):
    """Scalar triple product u x v . w and its magnitude analog."""
    cross, mag = _cross_with_mag(u, v)
    det = np.einsum("...i,...i->...", cross, w)
    perm = np.einsum("...i,...i->...", mag, np.abs(w))
    return det, perm


def _insphere_dets(verts: np.ndarray, tets: np.ndarray, p: np.ndarray):
    """Lifted insphere determinant per tet, with a rounding-error bound.

    For positively oriented tets the determinant is negative when p is
    strictly inside the circumsphere and positive when strictly outside.
    """
    d = verts[tets] - p
    n2 = (d * d).sum(axis=2)
    d0, d1, d2, d3 = d[:, 0], d[:, 1], d[:, 2], d[:, 3]
    c23, m23 = _cross_with_mag(d2, d3)
    c13, m13 = _cross_with_mag(d1, d3)
    c12, m12 = _cross_with_mag(d1, d2)
    det_123 = np.einsum("ij,ij->i", d1, c23)
    det_023 = np.einsum("ij,ij->i", d0, c23)
    det_013 = np.einsum("ij,ij->i", d0, c13)
    det_012 = np.einsum("ij,ij->i", d0, c12)
    a0, a1 = np.abs(d0), np.abs(d1)
    perm_123 = np.einsum("ij,ij->i", a1, m23)
    perm_023 = np.einsum("ij,ij->i", a0, m23)
    perm_013 = np.einsum("ij,ij->i", a0, m13)
    perm_012 = np.einsum("ij,ij->i", a0, m12)
    det4 = -n2[:, 0] * det_123 + n2[:, 1] * det_023 - n2[:, 2] * det_013 + n2[:, 3] * det_012
    perm4 = n2[:, 0] * perm_123 + n2[:, 1] * perm_023 + n2[:, 2] * perm_013 + n2[:, 3] * perm_012
    return det4, PREDICATE_SAFETY * _EPS * perm4


def _fill_volumes(verts: np.ndarray, tets: np.ndarray):
    """6x signed volume of candidate cells, with a rounding-error bound."""
    a = verts[tets[:, 0]]
    u = verts[tets[:, 1]] - a
    v = verts[tets[:, 2]] - a
    w = verts[tets[:, 3]] - a
    vol6, perm = _triple_with_mag(u, v, w)
    return vol6, PREDICATE_SAFETY * _EPS * perm


def _circumspheres(verts: np.ndarray, tets: np.ndarray):
    """Batched circumsphere solve relative to each tet's first vertex.

    Returns (centers, r_squared, degenerate_mask); degenerate rows hold junk.
    """
    a = verts[tets[:, 0]]
    rows = np.stack([verts[tets[:, j]] - a for j in (1, 2, 3)], axis=1)
    A = 2.0 * rows
    rhs = (rows * rows).sum(axis=2)
    det = np.linalg.det(A)
    scale = np.maximum(np.linalg.norm(A, axis=2).max(axis=1), 1e-300)
    degenerate = np.abs(det) <= 1e-12 * scale**3
    safe = np.where(degenerate[:, None, None], np.eye(3)[None], A)
    x = np.linalg.solve(safe, rhs[:, :, None])[:, :, 0]
    centers = a + x
    r2 = (x * x).sum(axis=1)
    return centers, r2, degenerate


def circumsphere(a, b, c, d) -> Circumsphere:
    """Sphere equidistant from four points; coplanar input is rejected."""
    verts = np.asarray([a, b, c, d], dtype=np.float64)
    centers, r2, degenerate = _circumspheres(verts, np.array([[0, 1, 2, 3]]))
    if degenerate[0]:
        raise DegenerateGeometryError("circumsphere of a coplanar quadruple is undefined")
    return Circumsphere(center=centers[0], radius=float(np.sqrt(r2[0])))


class _TetStore:
    """Growable array of tets with a liveness mask."""

    __slots__ = ("tets", "alive", "size")

    def __init__(self, cap: int = 1024):
        self.tets = np.empty((cap, 4), dtype=np.int64)
        self.alive = np.zeros(cap, dtype=bool)
        self.size = 0

    def append(self, tets) -> None:
        need = self.size + len(tets)
        cap = self.tets.shape[0]
        if need > cap:
            while cap < need:
                cap *= 2
            self.tets = np.concatenate([self.tets, np.empty_like(self.tets)])[:cap]
            grown = np.zeros(cap, dtype=bool)
            grown[: self.alive.shape[0]] = self.alive
            self.alive = grown
        self.tets[self.size : need] = tets
        self.alive[self.size : need] = True
        self.size = need


def _bowyer_watson(points: np.ndarray) -> np.ndarray:
    """One insertion pass; raises _PredicateFailure on any ambiguous predicate."""
    n = points.shape[0]
    centroid = points.mean(axis=0)
    reach = float(np.linalg.norm(points - centroid, axis=1).max())
    span = 1000.0 * (reach + 1.0)
    dirs = np.array(
        [[1.0, 1.0, 1.0], [1.0, -1.0, -1.0], [-1.0, 1.0, -1.0], [-1.0, -1.0, 1.0]]
    ) / np.sqrt(3.0)
    verts = np.concatenate([points, centroid + span * dirs])

    first = np.array([[n, n + 1, n + 2, n + 3]], dtype=np.int64)
    if signed_volume(*verts[first[0]]) < 0.0:
        first = first[:, [1, 0, 2, 3]]
    store = _TetStore()
    store.append(first)

    for i in range(n):
        p = verts[i]
        live = np.flatnonzero(store.alive[: store.size])
        det4, band = _insphere_dets(verts, store.tets[live], p)
        if bool((np.abs(det4) <= band).any()):
            raise _PredicateFailure(i, "point lies on a circumsphere within tolerance")
        bad = live[det4 < 0.0]
        if bad.size == 0:
            raise _PredicateFailure(i, "point falls in no circumsphere")

        # Boundary facets appear exactly once across the cavity; their stored
        # ordering (from the face table) keeps refill cells positive.
        facets: dict = {}
        counts: dict = {}
        for t in store.tets[bad]:
            for fa, fb, fc in _TET_FACES:
                ordered = (t[fa], t[fb], t[fc])
                key = tuple(sorted(ordered))
                counts[key] = counts.get(key, 0) + 1
                facets.setdefault(key, ordered)
        if any(c > 2 for c in counts.values()):
            raise _PredicateFailure(i, "cavity boundary is inconsistent")
        boundary = [facets[k] for k, c in counts.items() if c == 1]

        new_tets = np.array([[f[0], f[1], f[2], i] for f in boundary], dtype=np.int64)
        vol6, vol_band = _fill_volumes(verts, new_tets)
        if bool((vol6 <= vol_band).any()):
            raise _PredicateFailure(i, "cavity fill produced a degenerate or inverted cell")

        store.alive[bad] = False
        store.append(new_tets)

    cells = store.tets[: store.size][store.alive[: store.size]]
    cells = cells[(cells < n).all(axis=1)]
    if cells.shape[0] == 0:
        raise _PredicateFailure(-1, "no interior cells survive")
    return cells


def _drop_flat_cells(points: np.ndarray, cells: np.ndarray) -> np.ndarray:
    """Remove cells whose minimum height is below the degeneracy floor."""
    corners = points[cells]
    a = corners[:, 0]
    vol6 = np.abs(
        np.einsum("ij,ij->i", np.cross(corners[:, 1] - a, corners[:, 2] - a), corners[:, 3] - a)
    )
    max_area2 = np.zeros(cells.shape[0], dtype=np.float64)
    for fa, fb, fc in _TET_FACES:
        cross = np.cross(corners[:, fb] - corners[:, fa], corners[:, fc] - corners[:, fa])
        np.maximum(max_area2, np.linalg.norm(cross, axis=1), out=max_area2)
    # min height over the four faces = 6V / max twice-face-area
    height = vol6 / np.maximum(max_area2, 1e-300)
    return cells[height > DEGENERATE_CELL_HEIGHT]


def delaunay3d(points, jitter_seed: int = 0) -> TetMesh:
    """Tetrahedralize a cloud; cells satisfy the empty-circumsphere property.

    Ambiguous predicates (co-spherical points, degenerate fill cells) are
    resolved by retrying with seeded jitter of magnitude 1e-9; the returned
    mesh then carries the jittered coordinates. retained_map points back into
    the input cloud.
    """
    pts = np.ascontiguousarray(np.asarray(points, dtype=np.float64))
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise DegenerateGeometryError(f"expected an (n, 3) array, got shape {pts.shape}")
    n = pts.shape[0]
    if n < 4:
        raise DegenerateGeometryError(f"degenerate configuration: {n} points (need >= 4)")
    singular = np.linalg.svd(pts - pts.mean(axis=0), compute_uv=False)
    if singular[2] <= 1e-12 * max(singular[0], 1e-300):
        raise DegenerateGeometryError("degenerate configuration: points are coplanar or collinear")

    rng = np.random.default_rng(jitter_seed)
    failure = None
    for attempt in range(MAX_JITTER_RETRIES + 1):
        work = pts if attempt == 0 else pts + rng.uniform(-JITTER_SCALE, JITTER_SCALE, pts.shape)
        try:
            cells = _bowyer_watson(work)
        except _PredicateFailure as pf:
            failure = pf
            continue
        cells = _drop_flat_cells(work, cells)
        if cells.shape[0] == 0:
            raise DegenerateGeometryError(
                "degenerate configuration: every cell is thinner than the jitter scale"
            )
        return build_tet_mesh(work, cells, np.arange(n, dtype=np.int64))
    raise MeshError(
        f"unresolved geometric predicate after {MAX_JITTER_RETRIES} jitter retries"
        f" (point {failure.point_index}: {failure.reason})"
    )


def prune_oversized(mesh: TetMesh, factor: float = DEFAULT_PRUNE_FACTOR) -> TetMesh:
    """Drop cells whose longest edge exceeds factor x median nearest-neighbor
    distance of the vertex set; orphaned vertices are removed and retained_map
    updated."""
    if factor <= 0.0:
        raise ValueError(f"prune factor must be positive, got {factor}")
    nn_dist, _ = cKDTree(mesh.vertices).query(mesh.vertices, k=2)
    median_nn = float(np.median(nn_dist[:, 1]))
    corners = mesh.vertices[mesh.cells]
    longest = np.zeros(mesh.n_cells, dtype=np.float64)
    for ia, ib in _EDGE_PAIRS:
        edge = np.linalg.norm(corners[:, ia] - corners[:, ib], axis=1)
        np.maximum(longest, edge, out=longest)
    keep = longest <= factor * median_nn
    if not bool(keep.any()):
        raise MeshError(f"empty mesh after pruning (factor {factor}, median spacing {median_nn:g})")
    return build_tet_mesh(mesh.vertices, mesh.cells[keep], mesh.retained_map)


def largest_component(mesh: TetMesh) -> TetMesh:
    """Restrict a mesh to its largest cell-connected component.

    Pruning can leave floating fragments that make the elastic system
    singular; this keeps the component with the most cells (lowest component
    label on ties, so the choice is deterministic).
    """
    rows = np.concatenate([mesh.cells[:, ia] for ia, _ in _EDGE_PAIRS])
    cols = np.concatenate([mesh.cells[:, ib] for _, ib in _EDGE_PAIRS])
    adj = coo_matrix(
        (np.ones(rows.shape[0], dtype=np.int8), (rows, cols)),
        shape=(mesh.n_vertices, mesh.n_vertices),
    )
    n_comp, labels = connected_components(adj, directed=False)
    if n_comp == 1:
        return mesh
    cell_labels = labels[mesh.cells[:, 0]]
    counts = np.bincount(cell_labels, minlength=n_comp)
    keep = cell_labels == int(counts.argmax())
    return build_tet_mesh(mesh.vertices, mesh.cells[keep], mesh.retained_map)
