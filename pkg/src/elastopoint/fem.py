"""Static linear-elastic FEM on 4-node tetrahedra.

Constant-strain elements, Dirichlet handling by row/column elimination with
prescribed values, and a deterministic Jacobi-preconditioned conjugate
gradient solve on the free degrees of freedom.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import MaterialError, MeshError, SolverError
from .geometry import TetMesh
from .inertia import ForceSpec

VOLUME_FLOOR = 1e-14
DEFAULT_TOL = 1e-8


def lame_from_E_nu(E: float, nu: float) -> tuple[float, float]:
    """Lame constants (lambda, mu) from elastic modulus and Poisson ratio."""
    if E <= 0.0:
        raise MaterialError(f"elastic modulus must be positive, got {E}")
    if nu >= 0.5:
        raise MaterialError(f"nu = {nu} is at or beyond the incompressible limit 0.5")
    if nu <= 0.0:
        raise MaterialError(f"Poisson ratio must be positive, got {nu}")
    lam = E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
    mu = E / (2.0 * (1.0 + nu))
    return lam, mu


@dataclass(frozen=True)
class MaterialForceSpec:
    """Isotropic material parameters plus the force setup applied to the mesh."""

    E: float
    nu: float
    lam: float
    mu: float
    force: ForceSpec

    def __post_init__(self):
        lam, mu = lame_from_E_nu(self.E, self.nu)
        if abs(self.lam - lam) > 1e-12 * max(abs(lam), 1.0) or abs(self.mu - mu) > 1e-12 * max(abs(mu), 1.0):
            raise MaterialError(
                f"Lame constants ({self.lam}, {self.mu}) are inconsistent with E={self.E}, nu={self.nu}"
            )


def make_material(E: float, nu: float, force: ForceSpec) -> MaterialForceSpec:
    lam, mu = lame_from_E_nu(E, nu)
    return MaterialForceSpec(E=float(E), nu=float(nu), lam=lam, mu=mu, force=force)


def elasticity_matrix(lam: float, mu: float) -> np.ndarray:
    """6x6 isotropic stiffness in Voigt order (xx, yy, zz, xy, yz, zx) with
    engineering shear strains."""
    D = np.zeros((6, 6), dtype=np.float64)
    D[:3, :3] = lam
    D[0, 0] = D[1, 1] = D[2, 2] = lam + 2.0 * mu
    D[3, 3] = D[4, 4] = D[5, 5] = mu
    return D


def _shape_gradients(vertices: np.ndarray, cells: np.ndarray):
    """Per-cell volumes and shape-function gradients (m, 4, 3)."""
    a = vertices[cells[:, 0]]
    edges = np.stack([vertices[cells[:, j]] - a for j in (1, 2, 3)], axis=2)
    volumes = np.linalg.det(edges) / 6.0
    if bool((volumes <= VOLUME_FLOOR).any()):
        worst = int(np.argmin(volumes))
        raise MeshError(f"degenerate element {worst}: volume {volumes[worst]:g} at or below floor {VOLUME_FLOOR:g}")
    inv = np.linalg.inv(edges)
    grads = np.empty((cells.shape[0], 4, 3), dtype=np.float64)
    grads[:, 1:, :] = inv
    grads[:, 0, :] = -inv.sum(axis=1)
    return volumes, grads


def strain_displacement_matrix(grads: np.ndarray) -> np.ndarray:
    """Constant B (m, 6, 12) mapping nodal displacements to Voigt strain."""
    m = grads.shape[0]
    B = np.zeros((m, 6, 12), dtype=np.float64)
    for i in range(4):
        gx, gy, gz = grads[:, i, 0], grads[:, i, 1], grads[:, i, 2]
        c = 3 * i
        B[:, 0, c] = gx
        B[:, 1, c + 1] = gy
        B[:, 2, c + 2] = gz
        B[:, 3, c] = gy
        B[:, 3, c + 1] = gx
        B[:, 4, c + 1] = gz
        B[:, 4, c + 2] = gy
        B[:, 5, c] = gz
        B[:, 5, c + 2] = gx
    return B


def _element_stiffness_batch(vertices: np.ndarray, cells: np.ndarray, lam: float, mu: float):
    volumes, grads = _shape_gradients(vertices, cells)
    B = strain_displacement_matrix(grads)
    D = elasticity_matrix(lam, mu)
    K = np.einsum("m,mia,ij,mjb->mab", volumes, B, D, B, optimize=True)
    return K, volumes, B

def element_stiffness(tet_vertices, lam: float, mu: float) -> np.ndarray:
    """12x12 stiffness V * B^T D B of a single positively oriented tet."""
    verts = np.asarray(tet_vertices, dtype=np.float64)
    if verts.shape != (4, 3):
        raise ValueError(f"expected 4 vertices, got shape {verts.shape}")
    K, _, _ = _element_stiffness_batch(verts, np.array([[0, 1, 2, 3]]), lam, mu)
    return K[0]


@dataclass(frozen=True)
class SparseSystem:
    """Assembled K u = f with a constrained DOF set and prescribed values."""

    K: sp.csr_matrix
    f: np.ndarray
    fixed_dofs: np.ndarray
    fixed_values: np.ndarray
    free_dofs: np.ndarray = field(init=False)

    def __post_init__(self):
        fixed = np.asarray(self.fixed_dofs, dtype=np.int64)
        order = np.argsort(fixed, kind="stable")
        object.__setattr__(self, "fixed_dofs", fixed[order])
        object.__setattr__(self, "fixed_values", np.asarray(self.fixed_values, dtype=np.float64)[order])
        free = np.setdiff1d(np.arange(self.n_dofs, dtype=np.int64), fixed)
        object.__setattr__(self, "free_dofs", free)

    @property
    def n_dofs(self) -> int:
        return self.K.shape[0]

    @property
    def n_vertices(self) -> int:
        return self.K.shape[0] // 3


def assemble_stiffness(mesh: TetMesh, lam: float, mu: float) -> sp.csr_matrix:
    """Global stiffness from element scatter-add, as CSR of size 3nv x 3nv."""
    Ke, _, _ = _element_stiffness_batch(mesh.vertices, mesh.cells, lam, mu)
    dofs = (3 * mesh.cells[:, :, None] + np.arange(3)[None, None, :]).reshape(-1, 12)
    rows = np.repeat(dofs, 12, axis=1).ravel()
    cols = np.tile(dofs, (1, 12)).ravel()
    n = 3 * mesh.n_vertices
    K = sp.coo_matrix((Ke.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    K.sum_duplicates()
    return K


def assemble(mesh: TetMesh, mat: MaterialForceSpec) -> SparseSystem:
    """Assemble the stiffness and the load vector for a material/force setup.

    The total force magnitude is split equally over the loaded vertices along
    the force direction; fixed vertices are constrained to zero displacement.
    """
    spec = mat.force
    if spec.loaded_vertices.size == 0 or spec.fixed_vertices.size == 0:
        raise MeshError("force spec has an empty loaded or fixed vertex set")
    if spec.loaded_vertices.max() >= mesh.n_vertices or spec.fixed_vertices.max() >= mesh.n_vertices:
        raise MeshError("force spec indexes vertices outside the mesh")
    K = assemble_stiffness(mesh, mat.lam, mat.mu)
    f = np.zeros(3 * mesh.n_vertices, dtype=np.float64)
    per_vertex = spec.magnitude / spec.loaded_vertices.size * spec.direction
    for axis in range(3):
        f[3 * spec.loaded_vertices + axis] = per_vertex[axis]
    fixed_dofs = (3 * spec.fixed_vertices[:, None] + np.arange(3)[None, :]).ravel()
    return SparseSystem(K=K, f=f, fixed_dofs=fixed_dofs, fixed_values=np.zeros(fixed_dofs.size))


def _pcg(K: sp.csr_matrix, b: np.ndarray, tol: float, max_iter: int):
    """Jacobi-preconditioned CG; returns (x, iterations, relative residual)."""
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros_like(b), 0, 0.0
    diag = K.diagonal()
    if bool((diag <= 0.0).any()):
        raise SolverError("system is not positive definite: non-positive diagonal entry")
    x = np.zeros_like(b)
    r = b.copy()
    z = r / diag
    p = z.copy()
    rz = float(r @ z)
    iterations = 0
    while iterations < max_iter:
        res = float(np.linalg.norm(r))
        if res <= tol * bnorm:
            # the recurrence residual can drift; accept only the true residual
            r = b - K @ x
            res = float(np.linalg.norm(r))
            if res <= tol * bnorm:
                return x, iterations, res / bnorm
            z = r / diag
            p = z.copy()
            rz = float(r @ z)
        Ap = K @ p
        pAp = float(p @ Ap)
        if pAp <= 0.0:
            raise SolverError(
                "negative curvature encountered: system is singular or indefinite"
                " (often too few constrained vertices to block rigid rotation)"
            )
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        z = r / diag
        rz_next = float(r @ z)
        p = z + (rz_next / rz) * p
        rz = rz_next
        iterations += 1
    res = float(np.linalg.norm(b - K @ x))
    if res <= tol * bnorm:
        return x, iterations, res / bnorm
    raise SolverError(
        f"conjugate gradient did not converge in {max_iter} iterations"
        f" (relative residual {res / bnorm:.3e}, target {tol:.3e})"
    )


def solve_displacement(system: SparseSystem, tol: float = DEFAULT_TOL, max_iter: int | None = None) -> np.ndarray:
    """Displacement field (nv, 3) with prescribed values on constrained DOFs
    and relative residual at most tol on the free block."""
    if tol <= 0.0:
        raise ValueError(f"tolerance must be positive, got {tol}")
    free = system.free_dofs
    fixed = system.fixed_dofs
    u = np.zeros(system.n_dofs, dtype=np.float64)
    u[fixed] = system.fixed_values
    if free.size:
        K_ff = system.K[free][:, free].tocsr()
        rhs = system.f[free] - system.K[free][:, fixed] @ system.fixed_values
        limit = 20 * free.size if max_iter is None else max_iter
        x, _, _ = _pcg(K_ff, rhs, tol, limit)
        u[free] = x
    return u.reshape(-1, 3)


def reactions(system: SparseSystem, u: np.ndarray) -> np.ndarray:
    """Support reactions (K u - f) on the constrained DOFs."""
    residual = system.K @ u.reshape(-1) - system.f
    return residual[system.fixed_dofs]
