"""
The three loss kernels
======================

One sample through the full pipeline, then the losses that drive
pretraining: an implicit-field term on predicted distances, a data
fidelity term on predicted displacements, and a physics term that
measures how far a displacement field is from elastic equilibrium.
"""

import numpy as np

from elastopoint import (
    DatasetConfig,
    build_sample,
    data_fidelity_loss,
    gen_cloud,
    implicit_loss,
    loss_report,
    nodal_equilibrium_residual,
    physics_informed_loss,
    total_loss,
)

pc = gen_cloud("cylinder", 256, np.random.default_rng(4), "demo")
config = DatasetConfig(k_queries=256, band_fraction=0.1, seed=0)
normalized, mesh, mat, u_gt, queries, _ = build_sample(pc, 0, config)
print(f"sample: {mesh.n_vertices} vertices, {mesh.n_cells} cells, {queries.k} queries")

# ground truth scores zero on the implicit and fidelity terms
print(f"L_imp(gt, gt) = {implicit_loss(queries.distances, queries.distances)}")
print(f"L_df(u, u)    = {data_fidelity_loss(u_gt, u_gt, mesh)}")

# the FEM solution is the fixed point of the physics term
lpi_gt = physics_informed_loss(nodal_equilibrium_residual(mesh, u_gt, mat))
lpi_zero = physics_informed_loss(nodal_equilibrium_residual(mesh, np.zeros_like(u_gt), mat))
print(f"L_pi(u_gt) = {lpi_gt:.3e} vs L_pi(0) = {lpi_zero:.3e}  (ratio {lpi_gt / lpi_zero:.1e})")

# perturbed predictions score positive losses
rng = np.random.default_rng(5)
u_hat = u_gt + 0.05 * rng.normal(size=u_gt.shape)
d_hat = queries.distances + 0.02 * rng.normal(size=queries.k)
limp = implicit_loss(d_hat, queries.distances)
ldf = data_fidelity_loss(u_hat, u_gt, mesh)
lpi = physics_informed_loss(nodal_equilibrium_residual(mesh, u_hat, mat))
print(f"perturbed: L_imp {limp:.4f}, L_df {ldf:.4f}, L_pi {lpi:.4f}")

# the composite weighs the terms as L_imp + a L_df + b L_pi
report = total_loss(limp, ldf, lpi, a=1.0, b=0.1)
print(f"L_all = {report.L_all:.4f} (a={report.a}, b={report.b}, hash {report.config_hash})")

# loss_report recomputes everything from raw fields in one call
full = loss_report(mesh, mat, u_gt, u_hat, d_hat, queries.distances, a=1.0, b=0.1)
print(f"loss_report L_all = {full.L_all:.4f}, counts {full.counts}")
