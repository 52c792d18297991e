"""Dual-task set encoder / decoder stack with exact analytic gradients.

Four small dense nets over float64 arrays:

* encoder: shared per-point MLP + coordinatewise max pool -> latent (m,)
* mesh processor: pointwise layers over per-cell features -> pseudo-cloud,
  fed through the (shared by default) encoder
* implicit decoder: (latent ++ query) -> scalar distance
* physics decoder: (latent ++ deformation params) -> (n, 3) displacements

Backward passes are hand-written reverse mode; finite differences verify
them layer by layer in the tests.
"""
from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import DatasetError
from .fem import MaterialForceSpec
from .geometry import TetMesh

CHECKPOINT_MAGIC = b"EPCKPT1\x00"


@dataclass(frozen=True)
class NetworkConfig:
    """Layer widths and structural switches; all sizes fixed per config."""

    latent_dim: int = 128
    n_points: int = 512
    encoder_hidden: tuple = (64, 128)
    mesh_hidden: tuple = (64, 64)
    implicit_hidden: tuple = (128, 64)
    phys_hidden: tuple = (128, 128, 64, 64)
    slope: float = 0.01
    separate_encoders: bool = False

    def encoder_dims(self) -> tuple:
        return (3, *self.encoder_hidden, self.latent_dim)

    def mesh_processor_dims(self) -> tuple:
        return (7, *self.mesh_hidden, 3)

    def implicit_dims(self) -> tuple:
        return (self.latent_dim + 3, *self.implicit_hidden, 1)

    def phys_dims(self) -> tuple:
        return (self.latent_dim + 7, *self.phys_hidden, 3 * self.n_points)

    def networks(self) -> dict:
        nets = {
            "encoder": self.encoder_dims(),
            "mesh_proc": self.mesh_processor_dims(),
            "implicit": self.implicit_dims(),
            "phys": self.phys_dims(),
        }
        if self.separate_encoders:
            nets["mesh_encoder"] = self.encoder_dims()
        return nets


def init_params(config: NetworkConfig, seed: int = 0) -> dict:
    """He-style normal initialization, reproducible from the seed."""
    rng = np.random.default_rng(seed)
    params: dict[str, np.ndarray] = {}
    for net, dims in config.networks().items():
        for i in range(len(dims) - 1):
            fan_in, fan_out = dims[i], dims[i + 1]
            params[f"{net}.{i}.W"] = rng.normal(0.0, np.sqrt(2.0 / fan_in), (fan_in, fan_out))
            params[f"{net}.{i}.b"] = np.zeros(fan_out)
    return params


def count_parameters(params: dict) -> int:
    return int(sum(v.size for v in params.values()))


def _layers(params: dict, config: NetworkConfig, net: str):
    dims = config.networks()[net]
    return [(params[f"{net}.{i}.W"], params[f"{net}.{i}.b"]) for i in range(len(dims) - 1)]


def _leaky(z: np.ndarray, slope: float) -> np.ndarray:
    return np.where(z > 0.0, z, slope * z)


def _leaky_grad(z: np.ndarray, slope: float) -> np.ndarray:
    return np.where(z > 0.0, 1.0, slope)


def _mlp_forward(layers, x: np.ndarray, slope: float, final_linear: bool):
    caches = []
    h = x
    last = len(layers) - 1
    for i, (W, b) in enumerate(layers):
        z = h @ W + b
        caches.append((h, z))
        h = z if (final_linear and i == last) else _leaky(z, slope)
    return h, caches


def _mlp_backward(layers, caches, dout: np.ndarray, slope: float, final_linear: bool):
    grads = {}
    dh = dout
    last = len(layers) - 1
    for i in range(last, -1, -1):
        h_in, z = caches[i]
        dz = dh if (final_linear and i == last) else dh * _leaky_grad(z, slope)
        grads[i] = (h_in.T @ dz, dz.sum(axis=0))
        dh = dz @ layers[i][0].T
    return grads, dh


def _accumulate(grads: dict, net: str, layer_grads: dict) -> None:
    for i, (gW, gb) in layer_grads.items():
        kW, kb = f"{net}.{i}.W", f"{net}.{i}.b"
        grads[kW] = grads.get(kW, 0.0) + gW
        grads[kb] = grads.get(kb, 0.0) + gb


def _encoder_cached(params: dict, config: NetworkConfig, points: np.ndarray, net: str):
    out, caches = _mlp_forward(_layers(params, config, net), points, config.slope, final_linear=False)
    winners = out.argmax(axis=0)
    latent = out[winners, np.arange(out.shape[1])]
    return latent, (caches, winners, out.shape)


def _encoder_backward(params: dict, config: NetworkConfig, cache, dlatent: np.ndarray, net: str):
    caches, winners, shape = cache
    dout = np.zeros(shape)
    dout[winners, np.arange(shape[1])] = dlatent
    layer_grads, dinput = _mlp_backward(_layers(params, config, net), caches, dout, config.slope, final_linear=False)
    return layer_grads, dinput


def encoder_forward(params: dict, config: NetworkConfig, points, net: str = "encoder") -> np.ndarray:
    """Permutation-invariant latent of a point set: shared MLP then max pool."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] == 0:
        raise ValueError(f"expected a non-empty (n, 3) point set, got shape {pts.shape}")
    latent, _ = _encoder_cached(params, config, pts, net)
    return latent


def mesh_cell_features(mesh: TetMesh, mat: MaterialForceSpec) -> np.ndarray:
    """Per-cell 7-vector: centroid (3), volume, mean edge length, lam, mu."""
    if mesh.n_cells == 0:
        raise ValueError("mesh has no cells")
    corners = mesh.vertices[mesh.cells]
    centroids = corners.mean(axis=1)
    volumes = mesh.cell_volumes()
    edges = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]
    lengths = np.stack([np.linalg.norm(corners[:, i] - corners[:, j], axis=1) for i, j in edges])
    mean_edge = lengths.mean(axis=0)
    mat_cols = np.broadcast_to([mat.lam, mat.mu], (mesh.n_cells, 2))
    return np.concatenate([centroids, volumes[:, None], mean_edge[:, None], mat_cols], axis=1)


def mesh_processor_forward(params: dict, config: NetworkConfig, mesh: TetMesh, mat: MaterialForceSpec) -> np.ndarray:
    """Per-cell pseudo-cloud bridging the mesh into the set encoder."""
    feats = mesh_cell_features(mesh, mat)
    pseudo, _ = _mlp_forward(_layers(params, config, "mesh_proc"), feats, config.slope, final_linear=True)
    return pseudo


def implicit_decoder_forward(params: dict, config: NetworkConfig, latent, queries) -> np.ndarray:
    """Scalar distance prediction per query from (latent ++ query)."""
    latent = np.asarray(latent, dtype=np.float64)
    queries = np.asarray(queries, dtype=np.float64).reshape(-1, 3)
    x = np.concatenate([np.broadcast_to(latent, (queries.shape[0], latent.size)), queries], axis=1)
    out, _ = _mlp_forward(_layers(params, config, "implicit"), x, config.slope, final_linear=True)
    return out[:, 0]


def phys_decoder_forward(params: dict, config: NetworkConfig, latent, d) -> np.ndarray:
    """Fixed-size (n_points, 3) displacement prediction from (latent ++ d)."""
    latent = np.asarray(latent, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64).reshape(-1)
    if d.size != 7:
        raise ValueError(f"deformation parameter vector must have 7 entries, got {d.size}")
    x = np.concatenate([latent, d])[None, :]
    out, _ = _mlp_forward(_layers(params, config, "phys"), x, config.slope, final_linear=True)
    return out.reshape(config.n_points, 3)


def deformation_vector(mat: MaterialForceSpec) -> np.ndarray:
    """d = (lam, mu, E, nu, f_x, f_y, f_z) with f = magnitude * direction."""
    f = mat.force.magnitude * mat.force.direction
    return np.array([mat.lam, mat.mu, mat.E, mat.nu, f[0], f[1], f[2]], dtype=np.float64)


@dataclass
class TrainingSample:
    """One shape's artifacts bundled for the dual-task objective."""

    points: np.ndarray
    queries: np.ndarray
    gt_udf: np.ndarray
    mesh: TetMesh
    mat: MaterialForceSpec
    u_gt: np.ndarray
    stiffness: sp.csr_matrix
    f_ext: np.ndarray
    free_vertices: np.ndarray
    label: str = ""
    source_id: str = ""

    def __post_init__(self):
        nv = self.mesh.n_vertices
        if self.u_gt.shape != (nv, 3):
            raise DatasetError(f"ground-truth field shape {self.u_gt.shape} does not match {nv} vertices")
        if self.stiffness.shape != (3 * nv, 3 * nv):
            raise DatasetError("stiffness size does not match the mesh")
        if self.mesh.retained_map.max() >= self.points.shape[0]:
            raise DatasetError("mesh references cloud indices beyond the sampled points")


@dataclass(frozen=True)
class LossValues:
    """Loss components for one sample plus the optimized objective."""

    limp: float
    ldf: float
    lpi: float
    lall: float
    objective: float


def _sample_core(params: dict, config: NetworkConfig, sample: TrainingSample,
                 a: float, b: float, include_implicit: bool, want_grads: bool):
    if sample.points.shape[0] != config.n_points:
        raise DatasetError(
            f"sample has {sample.points.shape[0]} points but the config fixes n = {config.n_points}"
        )
    mesh_net = "mesh_encoder" if config.separate_encoders else "encoder"
    mesh = sample.mesh
    nv = mesh.n_vertices

    # implicit branch
    latent_c, enc_cache_c = _encoder_cached(params, config, sample.points, "encoder")
    k = sample.queries.shape[0]
    x_imp = np.concatenate([np.broadcast_to(latent_c, (k, latent_c.size)), sample.queries], axis=1)
    imp_layers = _layers(params, config, "implicit")
    delta, imp_caches = _mlp_forward(imp_layers, x_imp, config.slope, final_linear=True)
    delta = delta[:, 0]
    limp = float(np.mean(np.abs(np.abs(delta) - sample.gt_udf)))

    # physics branch
    feats = mesh_cell_features(mesh, sample.mat)
    proc_layers = _layers(params, config, "mesh_proc")
    pseudo, proc_caches = _mlp_forward(proc_layers, feats, config.slope, final_linear=True)
    latent_p, enc_cache_p = _encoder_cached(params, config, pseudo, mesh_net)
    d_vec = deformation_vector(sample.mat)
    x_phys = np.concatenate([latent_p, d_vec])[None, :]
    phys_layers = _layers(params, config, "phys")
    out, phys_caches = _mlp_forward(phys_layers, x_phys, config.slope, final_linear=True)
    u_full = out.reshape(config.n_points, 3)
    u_mesh = u_full[mesh.retained_map]

    diff = u_mesh - sample.u_gt
    vertex_err = np.linalg.norm(diff, axis=1)
    ldf = float(vertex_err[mesh.cells].mean())

    residual_full = (sample.stiffness @ u_mesh.reshape(-1) - sample.f_ext).reshape(nv, 3)
    r_free = residual_full[sample.free_vertices]
    r_norms = np.linalg.norm(r_free, axis=1)
    lpi = float(r_norms.mean())

    lall = limp + a * ldf + b * lpi
    objective = (limp if include_implicit else 0.0) + a * ldf + b * lpi
    values = LossValues(limp=limp, ldf=ldf, lpi=lpi, lall=lall, objective=objective)
    if not np.isfinite(objective):
        bad = [n for n, v in (("implicit", limp), ("data-fidelity", ldf), ("physics", lpi)) if not np.isfinite(v)]
        raise DatasetError(f"non-finite loss component(s): {', '.join(bad)}")
    if not want_grads:
        return values, None

    grads: dict[str, np.ndarray] = {}

    # implicit branch backward
    if include_implicit:
        ddelta = np.sign(np.abs(delta) - sample.gt_udf) * np.sign(delta) / k
        imp_grads, dx_imp = _mlp_backward(imp_layers, imp_caches, ddelta[:, None], config.slope, final_linear=True)
        _accumulate(grads, "implicit", imp_grads)
        dlatent_c = dx_imp[:, : latent_c.size].sum(axis=0)
        enc_grads, _ = _encoder_backward(params, config, enc_cache_c, dlatent_c, "encoder")
        _accumulate(grads, "encoder", enc_grads)

    # physics branch backward: d objective / d u_mesh from both loss terms
    du_mesh = np.zeros_like(u_mesh)
    if a != 0.0:
        incidence = np.bincount(mesh.cells.reshape(-1), minlength=nv).astype(np.float64)
        safe = np.where(vertex_err > 0.0, vertex_err, 1.0)
        scale = a * incidence / (4.0 * mesh.n_cells * safe)
        du_mesh += np.where(vertex_err[:, None] > 0.0, scale[:, None] * diff, 0.0)
    if b != 0.0:
        s = np.zeros((nv, 3))
        safe = np.where(r_norms > 0.0, r_norms, 1.0)
        s[sample.free_vertices] = np.where(
            r_norms[:, None] > 0.0, r_free / (safe[:, None] * r_norms.size), 0.0
        )
        du_mesh += b * (sample.stiffness @ s.reshape(-1)).reshape(nv, 3)

    du_full = np.zeros_like(u_full)
    du_full[mesh.retained_map] = du_mesh
    phys_grads, dx_phys = _mlp_backward(phys_layers, phys_caches, du_full.reshape(1, -1), config.slope, final_linear=True)
    _accumulate(grads, "phys", phys_grads)
    dlatent_p = dx_phys[0, : latent_p.size]
    enc_grads_p, dpseudo = _encoder_backward(params, config, enc_cache_p, dlatent_p, mesh_net)
    _accumulate(grads, mesh_net, enc_grads_p)
    proc_grads, _ = _mlp_backward(proc_layers, proc_caches, dpseudo, config.slope, final_linear=True)
    _accumulate(grads, "mesh_proc", proc_grads)

    for key, value in params.items():
        if key not in grads:
            grads[key] = np.zeros_like(value)
    return values, grads


def sample_losses(params: dict, config: NetworkConfig, sample: TrainingSample,
                  a: float, b: float, include_implicit: bool = True) -> LossValues:
    """Forward-only evaluation of the dual-task objective on one sample."""
    values, _ = _sample_core(params, config, sample, a, b, include_implicit, want_grads=False)
    return values


def sample_grads(params: dict, config: NetworkConfig, sample: TrainingSample,
                 a: float, b: float, include_implicit: bool = True):
    """Loss values plus exact gradients of the objective for every parameter."""
    return _sample_core(params, config, sample, a, b, include_implicit, want_grads=True)


def save_checkpoint(path, params: dict, config: NetworkConfig, meta: dict | None = None) -> None:
    """Binary checkpoint: magic, JSON header (config + shape table), float64 data."""
    keys = list(params.keys())
    header = {
        "format": 1,
        "config": asdict(config),
        "keys": [[k, list(params[k].shape)] for k in keys],
        "meta": meta or {},
    }
    blob = json.dumps(header).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for k in keys:
            fh.write(np.ascontiguousarray(params[k], dtype="<f8").tobytes())


def load_checkpoint(path):
    """Returns (params, config, meta) from an EPCKPT1 file."""
    blob = Path(path).read_bytes()
    if blob[:8] != CHECKPOINT_MAGIC:
        raise DatasetError(f"bad checkpoint magic {blob[:8]!r}")
    (hlen,) = struct.unpack_from("<Q", blob, 8)
    header = json.loads(blob[16 : 16 + hlen].decode("utf-8"))
    cfg = header["config"]
    for name in ("encoder_hidden", "mesh_hidden", "implicit_hidden", "phys_hidden"):
        cfg[name] = tuple(cfg[name])
    config = NetworkConfig(**cfg)
    params = {}
    offset = 16 + hlen
    for key, shape in header["keys"]:
        size = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(blob, dtype="<f8", count=size, offset=offset).reshape(shape)
        params[key] = arr.astype(np.float64)
        offset += size * 8
    return params, config, header["meta"]
