"""Deformation gradient, small-strain tensor, Hooke stress, and the weak-form
equilibrium residual.

Works on any displacement field, solver output or network prediction alike.
On constant-strain tets the nodal residual assembled here equals K u - f
restricted to the free DOFs, which is cross-checked by tests against the
sparse assembly route.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGeometryError
from .fem import MaterialForceSpec, _shape_gradients, strain_displacement_matrix
from .geometry import TetMesh

DET_FLOOR = 1e-14
_VOIGT_ROWS = (0, 1, 2, 0, 1, 2)
_VOIGT_COLS = (0, 1, 2, 1, 2, 0)


@dataclass(frozen=True)
class NodalResidualField:
    """Equilibrium residual vectors on the free (unconstrained) vertices."""

    vertex_indices: np.ndarray
    residuals: np.ndarray

    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.residuals, axis=1)


def shape_matrix(x1, x2, x3, x4) -> np.ndarray:
    """Edge-vector matrix X = [x2-x1 | x3-x1 | x4-x1] (columns)."""
    x1 = np.asarray(x1, dtype=np.float64)
    return np.stack(
        [np.asarray(x2, dtype=np.float64) - x1,
         np.asarray(x3, dtype=np.float64) - x1,
         np.asarray(x4, dtype=np.float64) - x1],
        axis=1,
    )


def deformation_gradient(X: np.ndarray, Xp: np.ndarray) -> np.ndarray:
    """F = Xp X^-1 mapping rest edges to deformed edges."""
    X = np.asarray(X, dtype=np.float64)
    if abs(np.linalg.det(X)) <= DET_FLOOR:
        raise DegenerateGeometryError("rest shape matrix is singular: degenerate element")
    return np.asarray(Xp, dtype=np.float64) @ np.linalg.inv(X)


def strain(F: np.ndarray) -> np.ndarray:
    """Small-strain tensor 0.5 (F + F^T) - I; exactly symmetric."""
    F = np.asarray(F, dtype=np.float64)
    return 0.5 * (F + F.T) - np.eye(3)


def stress(eps: np.ndarray, lam: float, mu: float) -> np.ndarray:
    """Isotropic Hooke law: lam tr(eps) I + 2 mu eps."""
    eps = np.asarray(eps, dtype=np.float64)
    if np.abs(eps - eps.T).max() > 1e-10:
        raise ValueError("strain tensor is not symmetric")
    return lam * np.trace(eps) * np.eye(3) + 2.0 * mu * eps


def cell_strain_stress(mesh: TetMesh, u: np.ndarray, lam: float, mu: float):
    """Per-cell (F, eps, sigma) stacks, each of shape (n_cells, 3, 3)."""
    u = _check_field(mesh, u)
    corners = mesh.vertices[mesh.cells]
    deformed = corners + u[mesh.cells]
    X = np.stack([corners[:, j] - corners[:, 0] for j in (1, 2, 3)], axis=2)
    Xp = np.stack([deformed[:, j] - deformed[:, 0] for j in (1, 2, 3)], axis=2)
    dets = np.linalg.det(X)
    if bool((np.abs(dets) <= DET_FLOOR).any()):
        raise DegenerateGeometryError("mesh contains a degenerate element")
    F = Xp @ np.linalg.inv(X)
    eps = 0.5 * (F + np.transpose(F, (0, 2, 1))) - np.eye(3)
    trace = np.trace(eps, axis1=1, axis2=2)
    sigma = lam * trace[:, None, None] * np.eye(3) + 2.0 * mu * eps
    return F, eps, sigma


def _check_field(mesh: TetMesh, u) -> np.ndarray:
    u = np.asarray(u, dtype=np.float64)
    if u.shape != (mesh.n_vertices, 3):
        raise ValueError(f"displacement field shape {u.shape} does not match {mesh.n_vertices} vertices")
    return u


def external_force_field(mesh: TetMesh, mat: MaterialForceSpec) -> np.ndarray:
    """Per-vertex applied force: magnitude split equally over loaded vertices."""
    spec = mat.force
    f = np.zeros((mesh.n_vertices, 3), dtype=np.float64)
    f[spec.loaded_vertices] = spec.magnitude / spec.loaded_vertices.size * spec.direction
    return f


def internal_force_field(mesh: TetMesh, u: np.ndarray, lam: float, mu: float) -> np.ndarray:
    """Per-vertex internal force scattered from V B^T sigma of each cell."""
    u = _check_field(mesh, u)
    _, _, sigma = cell_strain_stress(mesh, u, lam, mu)
    sigma_voigt = sigma[:, _VOIGT_ROWS, _VOIGT_COLS]
    volumes, grads = _shape_gradients(mesh.vertices, mesh.cells)
    B = strain_displacement_matrix(grads)
    nodal = np.einsum("m,mij,mi->mj", volumes, B, sigma_voigt).reshape(-1, 4, 3)
    force = np.zeros((mesh.n_vertices, 3), dtype=np.float64)
    np.add.at(force, mesh.cells.reshape(-1), nodal.reshape(-1, 3))
    return force


def nodal_equilibrium_residual(mesh: TetMesh, u: np.ndarray, mat: MaterialForceSpec) -> NodalResidualField:
    """Internal-minus-external force imbalance on the free vertices.

    Fixed vertices carry unknown support reactions, so the residual is only
    meaningful (and only reported) on the complement.
    """
    u = _check_field(mesh, u)
    imbalance = internal_force_field(mesh, u, mat.lam, mat.mu) - external_force_field(mesh, mat)
    free = np.setdiff1d(np.arange(mesh.n_vertices, dtype=np.int64), mat.force.fixed_vertices)
    return NodalResidualField(vertex_indices=free, residuals=imbalance[free])
