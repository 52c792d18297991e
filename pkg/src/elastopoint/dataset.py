"""Dataset pipeline: normalize, mesh, solve, sample distances, manifest.

Each input cloud becomes one sample record with all artifacts on disk and
every stochastic stage's seed recorded. Clouds that fail any stage land in
the quarantine list with the reason; too many failures abort the build.
"""
from __future__ import annotations

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .delaunay import delaunay3d, largest_component, prune_oversized
from .errors import DatasetError, ElastoPointError
from .fem import DEFAULT_TOL, MaterialForceSpec, assemble, make_material, solve_displacement
from .geometry import PointCloud, TetMesh, normalize_unit_sphere
from .inertia import DEFAULT_BAND_FRACTION, ForceSpec, make_force_spec
from .io import (
    dumps_17g,
    load_displacement_field,
    load_point_cloud,
    load_query_set,
    load_tet_mesh,
    save_displacement_field,
    save_point_cloud,
    save_query_set,
    save_tet_mesh,
)
from .network import NetworkConfig, TrainingSample
from .udf import DEFAULT_K, DEFAULT_NEAR_FRACTION, DEFAULT_SIGMA, build_query_set

DATASET_FORMAT_VERSION = 1
MAX_FAILURE_FRACTION = 0.2
# Surface-sampled convex shapes fill their hull, so the dataset prunes only
# wild outliers; aggressive pruning hollows the mesh into floating crust
# fragments that make the elastic system singular.
DATASET_PRUNE_FACTOR = 20.0


@dataclass(frozen=True)
class DatasetConfig:
    """Knobs for every stage of the per-cloud pipeline."""

    prune_factor: float = DATASET_PRUNE_FACTOR
    band_fraction: float = DEFAULT_BAND_FRACTION
    k_queries: int = DEFAULT_K
    near_fraction: float = DEFAULT_NEAR_FRACTION
    sigma: float = DEFAULT_SIGMA
    solver_tol: float = 1e-10
    e_range: tuple = (0.5, 5.0)
    nu_range: tuple = (0.2, 0.45)
    magnitude_range: tuple = (0.1, 1.0)
    force_axis: int | None = None
    seed: int = 0


def config_hash(config: DatasetConfig) -> str:
    payload = json.dumps(asdict(config), sort_keys=True, default=str)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def material_to_dict(mat: MaterialForceSpec) -> dict:
    return {
        "E": mat.E,
        "nu": mat.nu,
        "lam": mat.lam,
        "mu": mat.mu,
        "force": {
            "direction": mat.force.direction.tolist(),
            "magnitude": mat.force.magnitude,
            "loaded_vertices": mat.force.loaded_vertices.tolist(),
            "fixed_vertices": mat.force.fixed_vertices.tolist(),
        },
    }


def material_from_dict(data: dict) -> MaterialForceSpec:
    force = ForceSpec(
        direction=np.array(data["force"]["direction"], dtype=np.float64),
        magnitude=float(data["force"]["magnitude"]),
        loaded_vertices=np.array(data["force"]["loaded_vertices"], dtype=np.int64),
        fixed_vertices=np.array(data["force"]["fixed_vertices"], dtype=np.int64),
    )
    return MaterialForceSpec(
        E=float(data["E"]), nu=float(data["nu"]),
        lam=float(data["lam"]), mu=float(data["mu"]),
        force=force,
    )


def _stage_seed(seed: int, index: int, stage: int) -> int:
    return (seed * 1_000_003 + index * 1_009 + stage) % 2**63


def build_sample(pc: PointCloud, index: int, config: DatasetConfig):
    """Run the full per-cloud pipeline in memory.

    Returns (normalized cloud, mesh, material, displacement, query set, seeds).
    """
    normalized, _ = normalize_unit_sphere(pc)
    jitter_seed = _stage_seed(config.seed, index, 1)
    query_seed = _stage_seed(config.seed, index, 2)
    mesh = prune_oversized(delaunay3d(normalized.points, jitter_seed), config.prune_factor)
    mesh = largest_component(mesh)
    rng = np.random.default_rng((config.seed, index))
    magnitude = rng.uniform(*config.magnitude_range)
    modulus = rng.uniform(*config.e_range)
    nu = rng.uniform(*config.nu_range)
    force = make_force_spec(mesh, magnitude, config.band_fraction, config.force_axis)
    mat = make_material(modulus, nu, force)
    system = assemble(mesh, mat)
    u = solve_displacement(system, tol=config.solver_tol)
    queries = build_query_set(normalized, config.k_queries, config.near_fraction, config.sigma, query_seed)
    seeds = {"jitter": jitter_seed, "material": [config.seed, index], "queries": query_seed}
    return normalized, mesh, mat, u, queries, seeds


def build_dataset(cloud_paths: list, out_dir, config: DatasetConfig, threads: int = 1) -> dict:
    """Build every sample, write artifacts and the manifest, quarantine failures."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cloud_paths = [Path(p) for p in cloud_paths]
    if not cloud_paths:
        raise DatasetError("no input clouds")

    def run(indexed):
        index, path = indexed
        pc = None
        try:
            pc = load_point_cloud(path)
            return index, pc, build_sample(pc, index, config), None
        except (ElastoPointError, ValueError) as exc:
            return index, pc, None, f"{type(exc).__name__}: {exc}"

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, enumerate(cloud_paths)))
    else:
        results = [run(item) for item in enumerate(cloud_paths)]

    samples = []
    quarantined = []
    for index, pc, built, error in results:
        source = (pc.source_id if pc is not None else None) or cloud_paths[index].stem
        if error is not None:
            quarantined.append({"source_id": source, "input": str(cloud_paths[index]), "error": error})
            continue
        normalized, mesh, mat, u, queries, seeds = built
        save_point_cloud(normalized, out_dir / f"{source}.xyz")
        save_tet_mesh(mesh, out_dir / f"{source}.tet")
        save_displacement_field(u, out_dir / f"{source}.u.bin")
        save_query_set(queries, out_dir / f"{source}.q.bin")
        (out_dir / f"{source}.mat.json").write_text(dumps_17g(material_to_dict(mat)) + "\n", encoding="utf-8")
        samples.append({
            "id": source,
            "label": pc.label,
            "cloud": f"{source}.xyz",
            "mesh": f"{source}.tet",
            "material": f"{source}.mat.json",
            "field": f"{source}.u.bin",
            "queries": f"{source}.q.bin",
            "seeds": seeds,
            "solver_tol": config.solver_tol,
        })

    if len(quarantined) > MAX_FAILURE_FRACTION * len(cloud_paths):
        reasons = "; ".join(f"{q['source_id']}: {q['error']}" for q in quarantined)
        raise DatasetError(
            f"{len(quarantined)}/{len(cloud_paths)} clouds failed the pipeline: {reasons}"
        )
    manifest = {
        "format_version": DATASET_FORMAT_VERSION,
        "config": asdict(config),
        "config_hash": config_hash(config),
        "samples": samples,
        "quarantined": quarantined,
    }
    (out_dir / "manifest.json").write_text(dumps_17g(manifest) + "\n", encoding="utf-8")
    return manifest


def load_manifest(path) -> dict:
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.json"
    return json.loads(path.read_text(encoding="utf-8"))


def load_training_samples(manifest_path, net_config: NetworkConfig) -> list:
    """Materialize TrainingSamples from a manifest, verifying every artifact."""
    manifest_path = Path(manifest_path)
    if manifest_path.is_dir():
        manifest_path = manifest_path / "manifest.json"
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    base = manifest_path.parent
    missing = []
    for record in manifest["samples"]:
        for key in ("cloud", "mesh", "material", "field", "queries"):
            if not (base / record[key]).exists():
                missing.append(str(base / record[key]))
    if missing:
        raise DatasetError("missing dataset artifacts: " + ", ".join(missing))

    samples = []
    for record in manifest["samples"]:
        pc = load_point_cloud(base / record["cloud"])
        if pc.n != net_config.n_points:
            raise DatasetError(
                f"sample {record['id']} has {pc.n} points but the config fixes n = {net_config.n_points}"
            )
        mesh = load_tet_mesh(base / record["mesh"])
        mat = material_from_dict(json.loads((base / record["material"]).read_text(encoding="utf-8")))
        u = load_displacement_field(base / record["field"])
        queries = load_query_set(base / record["queries"])
        system = assemble(mesh, mat)
        free = np.setdiff1d(np.arange(mesh.n_vertices, dtype=np.int64), mat.force.fixed_vertices)
        samples.append(TrainingSample(
            points=pc.points,
            queries=queries.positions,
            gt_udf=queries.distances,
            mesh=mesh,
            mat=mat,
            u_gt=u,
            stiffness=system.K,
            f_ext=system.f,
            free_vertices=free,
            label=record.get("label") or (pc.label or ""),
            source_id=record["id"],
        ))
    return samples
