"""Parametric shape families with surface-uniform sampling.

Three labeled families (sphere, box, cylinder) with per-cloud random aspect
ratios stand in for a real shape corpus at desk scale.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .geometry import PointCloud
from .io import save_point_cloud

FAMILIES = ("sphere", "box", "cylinder")
ASPECT_RANGE = (0.5, 1.5)


def _sphere_surface(n: int, rng) -> np.ndarray:
    g = rng.normal(size=(n, 3))
    norms = np.linalg.norm(g, axis=1, keepdims=True)
    while bool((norms == 0.0).any()):
        zero = norms[:, 0] == 0.0
        g[zero] = rng.normal(size=(int(zero.sum()), 3))
        norms = np.linalg.norm(g, axis=1, keepdims=True)
    return g / norms


def _box_surface(n: int, rng) -> np.ndarray:
    face = rng.integers(0, 6, n)
    uv = rng.uniform(-1.0, 1.0, (n, 2))
    pts = np.empty((n, 3))
    axis = face // 2
    sign = np.where(face % 2 == 0, 1.0, -1.0)
    others = np.array([[1, 2], [0, 2], [0, 1]])
    for a in range(3):
        mask = axis == a
        pts[mask, a] = sign[mask]
        pts[mask, others[a, 0]] = uv[mask, 0]
        pts[mask, others[a, 1]] = uv[mask, 1]
    return pts


def _cylinder_surface(n: int, rng) -> np.ndarray:
    # radius 1, z in [-1, 1]: lateral area 4pi, each cap pi
    choice = rng.uniform(0.0, 6.0, n)
    theta = rng.uniform(0.0, 2.0 * np.pi, n)
    pts = np.empty((n, 3))
    lateral = choice < 4.0
    pts[lateral, 0] = np.cos(theta[lateral])
    pts[lateral, 1] = np.sin(theta[lateral])
    pts[lateral, 2] = rng.uniform(-1.0, 1.0, int(lateral.sum()))
    caps = ~lateral
    radius = np.sqrt(rng.uniform(0.0, 1.0, int(caps.sum())))
    pts[caps, 0] = radius * np.cos(theta[caps])
    pts[caps, 1] = radius * np.sin(theta[caps])
    pts[caps, 2] = np.where(choice[caps] < 5.0, 1.0, -1.0)
    return pts


_SAMPLERS = {"sphere": _sphere_surface, "box": _box_surface, "cylinder": _cylinder_surface}


def sample_shape(family: str, n_points: int, rng) -> np.ndarray:
    """Surface points of the unit-size parametric shape, before aspect scaling."""
    if family not in _SAMPLERS:
        raise ValueError(f"unknown shape family {family!r}; choose from {FAMILIES}")
    if n_points < 4:
        raise ValueError(f"need at least 4 points, got {n_points}")
    return _SAMPLERS[family](n_points, rng)


def gen_cloud(family: str, n_points: int, rng, source_id: str = "") -> PointCloud:
    """One labeled cloud with per-axis aspect ratios drawn from ASPECT_RANGE."""
    aspect = rng.uniform(*ASPECT_RANGE, 3)
    points = sample_shape(family, n_points, rng) * aspect
    return PointCloud(points, label=family, source_id=source_id or family)


def gen_shapes(family: str, count: int, n_points: int, seed: int, out_dir) -> list:
    """Write `count` clouds as XYZ files with label sidecars; returns paths.

    family "mixed" cycles through the three families so counts divisible by
    three are exactly balanced.
    """
    if count < 1:
        raise ValueError(f"count must be at least 1, got {count}")
    if family != "mixed" and family not in FAMILIES:
        raise ValueError(f"unknown shape family {family!r}; choose from {FAMILIES + ('mixed',)}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for i in range(count):
        fam = FAMILIES[i % 3] if family == "mixed" else family
        source_id = f"{fam}_{i:04d}"
        cloud = gen_cloud(fam, n_points, np.random.default_rng((seed, i)), source_id)
        path = out_dir / f"{source_id}.xyz"
        save_point_cloud(cloud, path)
        paths.append(path)
    return paths
