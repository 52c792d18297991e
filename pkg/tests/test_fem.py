import numpy as np
import pytest
import scipy.sparse as sp

from elastopoint import (
    ForceSpec,
    MaterialError,
    MeshError,
    SolverError,
    SparseSystem,
    TetMesh,
    assemble,
    assemble_stiffness,
    build_tet_mesh,
    delaunay3d,
    element_stiffness,
    lame_from_E_nu,
    make_force_spec,
    make_material,
    solve_displacement,
)
from elastopoint.fem import MaterialForceSpec, reactions
from oracles import energy_hessian_stiffness, unit_cube_patch_mesh

RIGHT_CORNER = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]])


def _single_tet_system(E=1.0, nu=0.25, magnitude=1.0):
    mesh = TetMesh(vertices=RIGHT_CORNER, cells=np.array([[0, 1, 2, 3]]))
    spec = ForceSpec(
        direction=[0.0, 0.0, -1.0],
        magnitude=magnitude,
        loaded_vertices=[3],
        fixed_vertices=[0, 1, 2],
    )
    mat = make_material(E, nu, spec)
    return mesh, mat, assemble(mesh, mat)


class TestLame:
    def test_reference_pair(self):
        lam, mu = lame_from_E_nu(1.0, 0.25)
        assert lam == pytest.approx(0.4, abs=1e-15)
        assert mu == pytest.approx(0.4, abs=1e-15)

    def test_linear_in_E(self):
        lam1, mu1 = lame_from_E_nu(1.0, 0.25)
        lam2, mu2 = lame_from_E_nu(2.0, 0.25)
        assert lam2 == pytest.approx(2.0 * lam1, rel=1e-15)
        assert mu2 == pytest.approx(2.0 * mu1, rel=1e-15)

    def test_incompressible_limit_rejected(self):
        with pytest.raises(MaterialError, match="incompressible"):
            lame_from_E_nu(1.0, 0.5)
        with pytest.raises(MaterialError):
            lame_from_E_nu(1.0, 0.7)

    def test_non_positive_inputs_rejected(self):
        with pytest.raises(MaterialError):
            lame_from_E_nu(0.0, 0.25)
        with pytest.raises(MaterialError):
            lame_from_E_nu(1.0, 0.0)
        with pytest.raises(MaterialError):
            lame_from_E_nu(1.0, -0.1)


class TestMaterialForceSpec:
    def test_make_material_consistent(self):
        spec = ForceSpec(direction=[0, 0, 1.0], magnitude=1.0, loaded_vertices=[0], fixed_vertices=[1])
        mat = make_material(2.0, 0.3, spec)
        lam, mu = lame_from_E_nu(2.0, 0.3)
        assert (mat.lam, mat.mu) == (lam, mu)

    def test_inconsistent_lame_rejected(self):
        spec = ForceSpec(direction=[0, 0, 1.0], magnitude=1.0, loaded_vertices=[0], fixed_vertices=[1])
        with pytest.raises(MaterialError, match="inconsistent"):
            MaterialForceSpec(E=1.0, nu=0.25, lam=0.4, mu=0.5, force=spec)


class TestElementStiffness:
    def test_symmetric(self):
        rng = np.random.default_rng(0)
        for _ in range(5):
            tet = rng.normal(size=(4, 3))
            if np.linalg.det(tet[1:] - tet[0]) < 1e-2:
                continue
            K = element_stiffness(tet, 0.7, 1.3)
            np.testing.assert_allclose(K, K.T, atol=1e-12 * np.abs(K).max())

    def test_translation_nullspace(self):
        K = element_stiffness(RIGHT_CORNER, 0.4, 0.4)
        for axis in range(3):
            t = np.zeros(12)
            t[axis::3] = 1.0
            assert np.abs(K @ t).max() < 1e-10

    def test_right_corner_eigenvalue_split(self):
        K = element_stiffness(RIGHT_CORNER, 0.4, 0.4)
        vals = np.linalg.eigvalsh(K)
        assert (np.abs(vals) < 1e-10).sum() == 6
        assert (vals > 1e-10).sum() == 6
        assert vals.min() > -1e-10

    def test_uniform_scaling(self):
        rng = np.random.default_rng(1)
        tet = RIGHT_CORNER + 0.1 * rng.normal(size=(4, 3))
        for s in (0.5, 2.0, 7.0):
            K1 = element_stiffness(tet, 0.4, 0.4)
            Ks = element_stiffness(s * tet, 0.4, 0.4)
            np.testing.assert_allclose(Ks, s * K1, rtol=1e-12, atol=1e-12 * np.abs(K1).max())

    def test_matches_energy_hessian_oracle(self):
        rng = np.random.default_rng(2)
        for _ in range(3):
            tet = RIGHT_CORNER + 0.2 * rng.normal(size=(4, 3))
            K = element_stiffness(tet, 0.8, 1.1)
            H = energy_hessian_stiffness(tet, 0.8, 1.1)
            np.testing.assert_allclose(K, H, atol=1e-5 * np.abs(K).max())

    def test_degenerate_tet_rejected(self):
        flat = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]])
        with pytest.raises(MeshError, match="degenerate element"):
            element_stiffness(flat, 0.4, 0.4)

    def test_wrong_shape_rejected(self):
        with pytest.raises(ValueError, match="4 vertices"):
            element_stiffness(RIGHT_CORNER[:3], 0.4, 0.4)


class TestAssemble:
    def test_single_tet_equals_element(self):
        mesh = TetMesh(vertices=RIGHT_CORNER, cells=np.array([[0, 1, 2, 3]]))
        K = assemble_stiffness(mesh, 0.4, 0.4).toarray()
        np.testing.assert_allclose(K, element_stiffness(RIGHT_CORNER, 0.4, 0.4), atol=1e-14)

    def test_two_tets_match_dense_hand_assembly(self):
        verts = np.concatenate([RIGHT_CORNER, [[1.0, 1.0, 1.0]]])
        cells = np.array([[0, 1, 2, 3], [4, 3, 2, 1]])
        mesh = build_tet_mesh(verts, cells)
        K = assemble_stiffness(mesh, 0.7, 1.2).toarray()
        dense = np.zeros((15, 15))
        for cell in mesh.cells:
            Ke = element_stiffness(mesh.vertices[cell], 0.7, 1.2)
            dofs = (3 * cell[:, None] + np.arange(3)).ravel()
            dense[np.ix_(dofs, dofs)] += Ke
        np.testing.assert_allclose(K, dense, atol=1e-12)

    def test_global_symmetry(self):
        mesh = delaunay3d(np.random.default_rng(3).normal(size=(30, 3)))
        K = assemble_stiffness(mesh, 0.4, 0.4)
        diff = (K - K.T).tocoo()
        scale = np.abs(K.data).max()
        assert (np.abs(diff.data).max() if diff.nnz else 0.0) < 1e-10 * scale

    def test_load_vector_sums_to_compression(self):
        mesh = delaunay3d(np.random.default_rng(4).normal(size=(40, 3)))
        spec = make_force_spec(mesh, magnitude=0.75, band_fraction=0.1)
        mat = make_material(1.0, 0.3, spec)
        system = assemble(mesh, mat)
        total = system.f.reshape(-1, 3).sum(axis=0)
        np.testing.assert_allclose(total, 0.75 * spec.direction, atol=1e-12)
        axis = -spec.direction
        assert total @ axis == pytest.approx(-0.75, abs=1e-12)

    def test_load_only_on_loaded_vertices(self):
        mesh, mat, system = _single_tet_system()
        f = system.f.reshape(-1, 3)
        np.testing.assert_allclose(f[:3], 0.0)
        np.testing.assert_allclose(f[3], [0, 0, -1.0], atol=1e-15)

    def test_fixed_dofs_are_fixed_vertices_expanded(self):
        mesh, mat, system = _single_tet_system()
        np.testing.assert_array_equal(system.fixed_dofs, np.arange(9))
        np.testing.assert_array_equal(system.free_dofs, [9, 10, 11])
        np.testing.assert_allclose(system.fixed_values, 0.0)

    def test_out_of_range_force_spec_rejected(self):
        mesh = TetMesh(vertices=RIGHT_CORNER, cells=np.array([[0, 1, 2, 3]]))
        spec = ForceSpec(direction=[0, 0, -1.0], magnitude=1.0, loaded_vertices=[9], fixed_vertices=[0])
        mat = make_material(1.0, 0.25, spec)
        with pytest.raises(MeshError, match="outside the mesh"):
            assemble(mesh, mat)


class TestSolve:
    def test_zero_load_zero_displacement(self):
        mesh, mat, system = _single_tet_system()
        quiet = SparseSystem(
            K=system.K, f=np.zeros_like(system.f), fixed_dofs=system.fixed_dofs,
            fixed_values=system.fixed_values,
        )
        u = solve_displacement(quiet)
        np.testing.assert_array_equal(u, np.zeros((4, 3)))

    def test_patch_test_reproduces_linear_field(self):
        mesh = unit_cube_patch_mesh()
        A = np.array([[0.02, 0.01, 0.0], [0.0, -0.03, 0.01], [0.01, 0.0, 0.015]])
        exact = mesh.vertices @ A.T
        K = assemble_stiffness(mesh, 0.4, 0.4)
        fixed_vertices = np.arange(8)
        fixed_dofs = (3 * fixed_vertices[:, None] + np.arange(3)).ravel()
        system = SparseSystem(
            K=K, f=np.zeros(3 * mesh.n_vertices), fixed_dofs=fixed_dofs,
            fixed_values=exact[:8].ravel(),
        )
        u = solve_displacement(system, tol=1e-12)
        assert np.abs(u[8] - exact[8]).max() < 1e-8

    def test_single_tet_cantilever_matches_dense_lu(self):
        mesh, mat, system = _single_tet_system()
        u = solve_displacement(system, tol=1e-12)
        K_dense = system.K.toarray()
        free = system.free_dofs
        x = np.linalg.solve(K_dense[np.ix_(free, free)], system.f[free])
        np.testing.assert_allclose(u.reshape(-1)[free], x, rtol=1e-8)
        np.testing.assert_allclose(u.reshape(-1)[system.fixed_dofs], 0.0)

    def test_random_mesh_matches_dense_lu(self):
        mesh = delaunay3d(np.random.default_rng(5).normal(size=(25, 3)))
        spec = make_force_spec(mesh, magnitude=0.5, band_fraction=0.15)
        mat = make_material(1.5, 0.3, spec)
        system = assemble(mesh, mat)
        u = solve_displacement(system, tol=1e-12).reshape(-1)
        free = system.free_dofs
        x = np.linalg.solve(system.K.toarray()[np.ix_(free, free)], system.f[free])
        np.testing.assert_allclose(u[free], x, rtol=1e-8, atol=1e-12)

    def test_residual_contract(self):
        mesh = delaunay3d(np.random.default_rng(6).normal(size=(40, 3)))
        spec = make_force_spec(mesh, magnitude=1.0, band_fraction=0.1)
        system = assemble(mesh, make_material(1.0, 0.3, spec))
        u = solve_displacement(system, tol=1e-8).reshape(-1)
        free = system.free_dofs
        r = (system.K @ u - system.f)[free]
        assert np.linalg.norm(r) <= 1e-8 * np.linalg.norm(system.f[free])

    def test_energy_identity(self):
        mesh, mat, system = _single_tet_system()
        u = solve_displacement(system, tol=1e-12).reshape(-1)
        strain_energy = 0.5 * u @ (system.K @ u)
        work = 0.5 * system.f @ u
        assert abs(strain_energy - work) <= 1e-10 * abs(work)

    def test_doubling_E_halves_displacement(self):
        mesh, _, system1 = _single_tet_system(E=1.0)
        _, _, system2 = _single_tet_system(E=2.0)
        u1 = solve_displacement(system1, tol=1e-12)
        u2 = solve_displacement(system2, tol=1e-12)
        np.testing.assert_allclose(u2, 0.5 * u1, rtol=1e-8, atol=1e-15)

    def test_reorder_invariance(self):
        mesh = delaunay3d(np.random.default_rng(7).normal(size=(20, 3)))
        spec = make_force_spec(mesh, magnitude=1.0, band_fraction=0.15)
        system = assemble(mesh, make_material(1.0, 0.3, spec))
        u = solve_displacement(system, tol=1e-12)

        perm = np.random.default_rng(8).permutation(mesh.n_vertices)
        inv = np.argsort(perm)
        shuffled = build_tet_mesh(mesh.vertices[perm], inv[mesh.cells])
        spec_p = ForceSpec(
            direction=spec.direction, magnitude=spec.magnitude,
            loaded_vertices=inv[spec.loaded_vertices], fixed_vertices=inv[spec.fixed_vertices],
        )
        system_p = assemble(shuffled, make_material(1.0, 0.3, spec_p))
        u_p = solve_displacement(system_p, tol=1e-12)
        np.testing.assert_allclose(u_p[inv], u, rtol=1e-8, atol=1e-12)

    def test_non_convergence_reports_residual(self):
        mesh = delaunay3d(np.random.default_rng(9).normal(size=(60, 3)))
        spec = make_force_spec(mesh, magnitude=1.0, band_fraction=0.1)
        system = assemble(mesh, make_material(1.0, 0.3, spec))
        with pytest.raises(SolverError, match="did not converge"):
            solve_displacement(system, tol=1e-14, max_iter=2)

    def test_underconstrained_system_flagged(self):
        # one fixed vertex leaves rotational rigid modes; the off-axis load
        # below excites one, so no static solution exists
        mesh = TetMesh(vertices=RIGHT_CORNER, cells=np.array([[0, 1, 2, 3]]))
        spec = ForceSpec(direction=[0, 0, -1.0], magnitude=1.0, loaded_vertices=[1], fixed_vertices=[0])
        system = assemble(mesh, make_material(1.0, 0.25, spec))
        with pytest.raises(SolverError, match="negative curvature"):
            solve_displacement(system)

    def test_bad_tolerance_rejected(self):
        mesh, mat, system = _single_tet_system()
        with pytest.raises(ValueError, match="tolerance"):
            solve_displacement(system, tol=0.0)

    def test_fixed_dofs_exactly_prescribed(self):
        mesh = unit_cube_patch_mesh()
        K = assemble_stiffness(mesh, 0.4, 0.4)
        fixed_dofs = np.arange(6)
        values = np.array([0.1, 0.2, 0.3, 0.0, -0.1, 0.05])
        system = SparseSystem(K=K, f=np.zeros(27), fixed_dofs=fixed_dofs, fixed_values=values)
        u = solve_displacement(system, tol=1e-10)
        np.testing.assert_array_equal(u.reshape(-1)[:6], values)


class TestReactions:
    def test_reactions_balance_applied_load(self):
        mesh, mat, system = _single_tet_system(magnitude=0.8)
        u = solve_displacement(system, tol=1e-12)
        r = reactions(system, u)
        total_reaction = r.reshape(-1, 3).sum(axis=0)
        total_load = system.f.reshape(-1, 3).sum(axis=0)
        np.testing.assert_allclose(total_reaction, -total_load, atol=1e-10)
