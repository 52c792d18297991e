"""
Tetrahedralize a point cloud
============================

Generate a labeled synthetic cloud, normalize it into the unit sphere,
and build a Delaunay tet mesh. The cell volumes of a Delaunay mesh of a
convex-ish cloud should sum to the volume of the convex hull.
"""

import numpy as np

from elastopoint import delaunay3d, gen_cloud, normalize_unit_sphere, prune_oversized

# one cylinder cloud with a random aspect ratio
pc = gen_cloud("cylinder", 400, np.random.default_rng(0), "demo_cylinder")
print(f"cloud: {pc.n} points, label {pc.label!r}")

# center at the centroid and scale the farthest point onto radius 1
pc, transform = normalize_unit_sphere(pc)
print(f"normalized: translation {transform.translation.round(3)}, scale {transform.scale:.4f}")

# incremental Delaunay with a deterministic jitter seed for degeneracies
mesh = delaunay3d(pc.points, jitter_seed=0)
print(f"mesh: {mesh.n_vertices} vertices, {mesh.n_cells} tets")

volumes = mesh.cell_volumes()
print(f"cell volumes: min {volumes.min():.2e}, total {volumes.sum():.6f}")

# compare against scipy's independent hull volume
from scipy.spatial import ConvexHull

hull = ConvexHull(mesh.vertices)
print(f"hull volume:  {hull.volume:.6f} (gap {abs(volumes.sum() - hull.volume):.2e})")

# drop cells with edges far beyond the typical spacing; a filled convex
# cloud keeps everything at a loose threshold
pruned = prune_oversized(mesh, factor=20.0)
print(f"pruned mesh: {pruned.n_cells} tets ({mesh.n_cells - pruned.n_cells} removed)")
