"""Query sampling and unsigned-distance ground truth.

Queries mix near-surface points (cloud points with Gaussian noise) and
uniform draws over [-1, 1]^3. Distances come from a kd-tree, but candidates
are re-measured with the same arithmetic as a brute-force scan so the
accelerated result is bit-identical to the O(nK) oracle.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .geometry import PointCloud

DEFAULT_K = 1024
DEFAULT_NEAR_FRACTION = 0.5
DEFAULT_SIGMA = 0.05


@dataclass(frozen=True)
class QuerySet:
    """Query positions in [-1, 1]^3 with their ground-truth unsigned distances."""

    positions: np.ndarray
    distances: np.ndarray
    seed: int
    strategy: str

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.float64)
        dist = np.asarray(self.distances, dtype=np.float64)
        if pos.ndim != 2 or pos.shape[1] != 3 or dist.shape != (pos.shape[0],):
            raise ValueError(f"inconsistent query shapes {pos.shape} / {dist.shape}")
        if np.abs(pos).max(initial=0.0) > 1.0:
            raise ValueError("query positions must lie inside [-1, 1]^3")
        if bool((dist < 0.0).any()) or not bool(np.isfinite(dist).all()):
            raise ValueError("distances must be finite and nonnegative")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "distances", dist)

    @property
    def k(self) -> int:
        return self.positions.shape[0]


def sample_queries(
    pc: PointCloud,
    k: int = DEFAULT_K,
    near_fraction: float = DEFAULT_NEAR_FRACTION,
    sigma: float = DEFAULT_SIGMA,
    seed: int = 0,
) -> np.ndarray:
    """Draw k query positions: ceil(near_fraction * k) perturbed cloud points
    (noise std sigma, clamped to the box), the rest uniform in [-1, 1]^3."""
    if k <= 0:
        raise ValueError(f"query count must be positive, got {k}")
    if not 0.0 <= near_fraction <= 1.0:
        raise ValueError(f"near_fraction must lie in [0, 1], got {near_fraction}")
    rng = np.random.default_rng(seed)
    n_near = math.ceil(near_fraction * k)
    parts = []
    if n_near:
        anchors = pc.points[rng.integers(0, pc.n, n_near)]
        noisy = anchors + rng.normal(0.0, sigma, (n_near, 3)) if sigma > 0.0 else anchors
        parts.append(np.clip(noisy, -1.0, 1.0))
    if k - n_near:
        parts.append(rng.uniform(-1.0, 1.0, (k - n_near, 3)))
    return np.concatenate(parts, axis=0)


def udf_ground_truth(pc: PointCloud, queries) -> np.ndarray:
    """Nearest-neighbor distance from each query to the cloud.

    A kd-tree proposes the neighborhood; every candidate within a hair above
    the tree's reported distance is then re-measured exactly as the brute
    force scan would, so the minimum matches it with zero tolerance.
    """
    queries = np.asarray(queries, dtype=np.float64)
    if queries.ndim != 2 or queries.shape[1] != 3:
        raise ValueError(f"expected (k, 3) queries, got shape {queries.shape}")
    points = pc.points
    if points.shape[0] == 0:
        raise ValueError("cannot measure distances against an empty cloud")
    tree = cKDTree(points)
    approx, _ = tree.query(queries)
    candidates = tree.query_ball_point(queries, approx * (1.0 + 1e-9))
    out = np.empty(queries.shape[0], dtype=np.float64)
    for i, cand in enumerate(candidates):
        diff = queries[i] - points[cand]
        out[i] = np.sqrt((diff * diff).sum(axis=-1)).min()
    return out


def udf_brute_force(pc: PointCloud, queries) -> np.ndarray:
    """Reference O(nK) scan; the accelerated path must match it exactly."""
    queries = np.asarray(queries, dtype=np.float64)
    diff = queries[:, None, :] - pc.points[None, :, :]
    return np.sqrt((diff * diff).sum(axis=-1)).min(axis=1)


def build_query_set(
    pc: PointCloud,
    k: int = DEFAULT_K,
    near_fraction: float = DEFAULT_NEAR_FRACTION,
    sigma: float = DEFAULT_SIGMA,
    seed: int = 0,
) -> QuerySet:
    """Sample queries and attach their ground-truth distances."""
    positions = sample_queries(pc, k, near_fraction, sigma, seed)
    distances = udf_ground_truth(pc, positions)
    return QuerySet(
        positions=positions,
        distances=distances,
        seed=seed,
        strategy=f"mix{near_fraction:g}-s{sigma:g}",
    )
