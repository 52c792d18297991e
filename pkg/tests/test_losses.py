import numpy as np
import pytest

from elastopoint import (
    LossReport,
    TetMesh,
    assemble,
    data_fidelity_loss,
    delaunay3d,
    implicit_loss,
    loss_report,
    make_force_spec,
    make_material,
    nodal_equilibrium_residual,
    physics_informed_loss,
    solve_displacement,
    total_loss,
)
from elastopoint.continuum import NodalResidualField

RIGHT_CORNER = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]])
SINGLE_TET = TetMesh(vertices=RIGHT_CORNER, cells=np.array([[0, 1, 2, 3]]))


def _solved_sample(seed=0):
    rng = np.random.default_rng(seed)
    mesh = delaunay3d(rng.normal(size=(30, 3)), jitter_seed=seed)
    spec = make_force_spec(mesh, magnitude=0.5, band_fraction=0.1)
    mat = make_material(1.0, 0.3, spec)
    u = solve_displacement(assemble(mesh, mat), tol=1e-10)
    return mesh, mat, u


class TestImplicitLoss:
    def test_perfect_prediction(self):
        gt = np.array([0.1, 0.5, 2.0])
        assert implicit_loss(gt, gt) == 0.0

    def test_sign_invariance(self):
        gt = np.array([0.1, 0.5, 2.0])
        assert implicit_loss(-gt, gt) == 0.0

    def test_hand_value(self):
        assert implicit_loss([1.0, 2.0], [0.0, 0.0]) == pytest.approx(1.5, abs=1e-15)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(0)
        pred = rng.normal(size=50)
        gt = np.abs(rng.normal(size=50))
        perm = rng.permutation(50)
        assert implicit_loss(pred, gt) == pytest.approx(implicit_loss(pred[perm], gt[perm]), rel=1e-12)

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError, match="count"):
            implicit_loss([1.0], [1.0, 2.0])

    def test_negative_ground_truth_rejected(self):
        with pytest.raises(ValueError, match="nonnegative"):
            implicit_loss([1.0], [-1.0])


class TestDataFidelityLoss:
    def test_identity_is_zero(self):
        rng = np.random.default_rng(1)
        u = rng.normal(size=(4, 3))
        assert data_fidelity_loss(u, u, SINGLE_TET) == 0.0

    def test_constant_offset(self):
        mesh, _, u = _solved_sample(1)
        c = np.array([0.3, -0.4, 1.2])
        got = data_fidelity_loss(u + c, u, mesh)
        assert got == pytest.approx(np.linalg.norm(c), rel=1e-12)

    def test_single_tet_hand_value(self):
        u = np.zeros((4, 3))
        u_hat = np.zeros((4, 3))
        u_hat[2] = [3.0, 4.0, 0.0]
        assert data_fidelity_loss(u_hat, u, SINGLE_TET) == pytest.approx(5.0 / 4.0, abs=1e-15)

    def test_per_vertex_variant(self):
        # two tets share a face; a shared-vertex error is counted once per cell
        verts = np.concatenate([RIGHT_CORNER, [[1.0, 1.0, 1.0]]])
        mesh = TetMesh(vertices=verts, cells=np.array([[0, 1, 2, 3], [1, 2, 3, 4]]))
        u = np.zeros((5, 3))
        u_hat = np.zeros((5, 3))
        u_hat[1] = [0.0, 0.0, 2.0]
        assert data_fidelity_loss(u_hat, u, mesh) == pytest.approx(0.5, abs=1e-15)
        assert data_fidelity_loss(u_hat, u, mesh, per_vertex=True) == pytest.approx(0.4, abs=1e-15)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError, match="shape"):
            data_fidelity_loss(np.zeros((3, 3)), np.zeros((4, 3)), SINGLE_TET)


class TestPhysicsInformedLoss:
    def test_zero_residuals(self):
        field = NodalResidualField(vertex_indices=np.arange(3), residuals=np.zeros((3, 3)))
        assert physics_informed_loss(field) == 0.0

    def test_hand_value(self):
        field = NodalResidualField(
            vertex_indices=np.array([0, 1]),
            residuals=np.array([[3.0, 4.0, 0.0], [0.0, 0.0, 0.0]]),
        )
        assert physics_informed_loss(field) == pytest.approx(2.5, abs=1e-15)

    def test_ground_truth_near_zero(self):
        mesh, mat, u = _solved_sample(2)
        lpi = physics_informed_loss(nodal_equilibrium_residual(mesh, u, mat))
        lpi_zero = physics_informed_loss(
            nodal_equilibrium_residual(mesh, np.zeros_like(u), mat)
        )
        assert lpi <= 1e-6 * lpi_zero

    def test_empty_field_rejected(self):
        field = NodalResidualField(vertex_indices=np.arange(0), residuals=np.zeros((0, 3)))
        with pytest.raises(ValueError, match="empty"):
            physics_informed_loss(field)


class TestTotalLoss:
    def test_unit_weights(self):
        report = total_loss(1.0, 2.0, 3.0, a=1.0, b=1.0)
        assert report.L_all == 6.0

    def test_ablation_degenerate(self):
        report = total_loss(0.37, 5.0, 9.0, a=0.0, b=0.0)
        assert report.L_all == report.L_imp == 0.37

    def test_hand_value(self):
        report = total_loss(0.5, 0.2, 0.1, a=1.0, b=0.1)
        assert report.L_all == pytest.approx(0.71, abs=1e-15)

    def test_composition_identity(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            limp, ldf, lpi = np.abs(rng.normal(size=3))
            a, b = np.abs(rng.normal(size=2))
            report = total_loss(limp, ldf, lpi, a=a, b=b)
            assert abs(report.L_all - (report.L_imp + a * report.L_df + b * report.L_pi)) <= 1e-12

    def test_negative_component_rejected(self):
        with pytest.raises(ValueError, match="nonnegative"):
            total_loss(-0.1, 0.0, 0.0)

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError, match="finite"):
            total_loss(np.inf, 0.0, 0.0)


class TestBatchComposition:
    def test_implicit_count_weighted_mean(self):
        rng = np.random.default_rng(3)
        p1, g1 = rng.normal(size=30), np.abs(rng.normal(size=30))
        p2, g2 = rng.normal(size=70), np.abs(rng.normal(size=70))
        combined = implicit_loss(np.concatenate([p1, p2]), np.concatenate([g1, g2]))
        weighted = (30 * implicit_loss(p1, g1) + 70 * implicit_loss(p2, g2)) / 100
        assert combined == pytest.approx(weighted, abs=1e-12)

    def test_physics_count_weighted_mean(self):
        rng = np.random.default_rng(4)
        r1 = rng.normal(size=(5, 3))
        r2 = rng.normal(size=(11, 3))
        f1 = NodalResidualField(vertex_indices=np.arange(5), residuals=r1)
        f2 = NodalResidualField(vertex_indices=np.arange(11), residuals=r2)
        both = NodalResidualField(vertex_indices=np.arange(16), residuals=np.concatenate([r1, r2]))
        weighted = (5 * physics_informed_loss(f1) + 11 * physics_informed_loss(f2)) / 16
        assert physics_informed_loss(both) == pytest.approx(weighted, abs=1e-12)


class TestLossReport:
    def test_report_from_sample(self):
        mesh, mat, u = _solved_sample(5)
        rng = np.random.default_rng(6)
        u_hat = u + 0.01 * rng.normal(size=u.shape)
        gt_udf = np.abs(rng.normal(size=64))
        pred_udf = gt_udf + 0.05 * rng.normal(size=64)
        report = loss_report(mesh, mat, u, u_hat, pred_udf, gt_udf, a=1.0, b=0.1)
        assert report.L_imp == pytest.approx(implicit_loss(pred_udf, gt_udf), rel=1e-12)
        assert report.L_df == pytest.approx(data_fidelity_loss(u_hat, u, mesh), rel=1e-12)
        assert abs(report.L_all - (report.L_imp + report.L_df + 0.1 * report.L_pi)) <= 1e-12
        assert report.counts["queries"] == 64
        assert report.config_hash

    def test_hash_stable_and_sensitive(self):
        r1 = total_loss(0.1, 0.2, 0.3, counts={"queries": 4})
        r2 = total_loss(0.4, 0.5, 0.6, counts={"queries": 4})
        r3 = total_loss(0.1, 0.2, 0.3, a=2.0, counts={"queries": 4})
        assert r1.config_hash == r2.config_hash
        assert r1.config_hash != r3.config_hash

    def test_inconsistent_composition_rejected(self):
        with pytest.raises(ValueError, match="does not equal"):
            LossReport(L_imp=1.0, L_df=1.0, L_pi=1.0, L_all=10.0, a=1.0, b=1.0)
