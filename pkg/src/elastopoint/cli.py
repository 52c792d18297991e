"""Command-line pipeline driver.

Exit codes: 0 success, 1 usage error, 2 pipeline failure. Global flags
--seed/--threads/--config may appear before or after the subcommand; values
in the --config JSON fill in any knob the command line leaves unset.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import dataset as dataset_mod
from . import io, shapes, training
from .continuum import nodal_equilibrium_residual
from .errors import DatasetError, ElastoPointError
from .fem import assemble, make_material, solve_displacement
from .inertia import make_force_spec
from .losses import loss_report
from .network import NetworkConfig, load_checkpoint, save_checkpoint
from .udf import build_query_set


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on usage errors; the pipeline reserves 2 for
    runtime failures, so usage errors are remapped to 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _globals_parent() -> _Parser:
    parent = _Parser(add_help=False)
    parent.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    parent.add_argument("--threads", type=int, default=argparse.SUPPRESS)
    parent.add_argument("--config", default=argparse.SUPPRESS)
    return parent


def build_parser() -> _Parser:
    parser = _Parser(prog="elastopoint", description=__doc__)
    parser.add_argument("--seed", type=int, default=None, help="global RNG seed (default 0)")
    parser.add_argument("--threads", type=int, default=None, help="worker threads for dataset building")
    parser.add_argument("--config", default=None, help="JSON file of default overrides")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    parent = [_globals_parent()]

    p = sub.add_parser("gen-shapes", parents=parent, help="write labeled synthetic clouds")
    p.add_argument("--family", required=True, choices=(*shapes.FAMILIES, "mixed"))
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--n-points", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_shapes)

    p = sub.add_parser("mesh", parents=parent, help="tetrahedralize and prune one cloud")
    p.add_argument("--input", required=True)
    p.add_argument("--prune-factor", type=float, default=None)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_mesh)

    p = sub.add_parser("solve", parents=parent, help="static elastic solve on a mesh")
    p.add_argument("--tet", required=True)
    p.add_argument("--E", type=float, default=None)
    p.add_argument("--nu", type=float, default=None)
    p.add_argument("--force-mag", type=float, default=None)
    p.add_argument("--force-axis", default="auto", choices=("auto", "0", "1", "2"))
    p.add_argument("--band", type=float, default=None)
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--mat-out", default=None, help="also dump the material/force setup as JSON")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sample-udf", parents=parent, help="sample queries with distance ground truth")
    p.add_argument("--points", required=True)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--near", type=float, default=None)
    p.add_argument("--sigma", type=float, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sample_udf)

    p = sub.add_parser("build-dataset", parents=parent, help="run the full pipeline over a cloud directory")
    p.add_argument("--clouds", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--prune-factor", type=float, default=None)
    p.add_argument("--band", type=float, default=None)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--near", type=float, default=None)
    p.add_argument("--sigma", type=float, default=None)
    p.add_argument("--tol", type=float, default=None)
    p.set_defaults(func=cmd_build_dataset)

    p = sub.add_parser("losses", parents=parent, help="evaluate the loss kernels on stored fields")
    p.add_argument("--mesh", required=True)
    p.add_argument("--mat", required=True)
    p.add_argument("--pred-disp", required=True)
    p.add_argument("--gt-disp", required=True)
    p.add_argument("--pred-udf", required=True, help="text file, one predicted distance per line")
    p.add_argument("--queryset", required=True)
    p.add_argument("--a", type=float, default=None)
    p.add_argument("--b", type=float, default=None)
    p.add_argument("--json-out", default=None)
    p.add_argument("--residual-dump", default=None)
    p.set_defaults(func=cmd_losses)

    p = sub.add_parser("pretrain", parents=parent, help="dual-task pretraining on a built dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--wd", type=float, default=None)
    p.add_argument("--a", type=float, default=None)
    p.add_argument("--b", type=float, default=None)
    p.add_argument("--latent-dim", type=int, default=None)
    p.add_argument("--n-points", type=int, default=None)
    p.add_argument("--no-implicit", action="store_true", help="drop the implicit term from the objective")
    p.add_argument("--separate-encoders", action="store_true")
    p.add_argument("--out", required=True)
    p.add_argument("--log", default=None, help="JSONL training log (default: <out>.log.jsonl)")
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("probe", parents=parent, help="linear-probe accuracy of a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True, help="directory of labeled clouds")
    p.add_argument("--train-fraction", type=float, default=None)
    p.set_defaults(func=cmd_probe)

    p = sub.add_parser("ablate", parents=parent, help="pretrain + probe under the three loss wirings")
    p.add_argument("--data", required=True)
    p.add_argument("--probe-clouds", required=True)
    p.add_argument("--seeds", default="0,1,2,3,4", help="comma-separated seed list")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--a", type=float, default=None)
    p.add_argument("--b", type=float, default=None)
    p.add_argument("--latent-dim", type=int, default=None)
    p.add_argument("--n-points", type=int, default=None)
    p.add_argument("--out", default=None, help="write the comparison report as JSON")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("export-embeddings", parents=parent, help="2D latent projection as CSV")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--clouds", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_embeddings)
    return parser


def _load_config(args) -> dict:
    path = getattr(args, "config", None)
    if not path:
        return {}
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _get(args, cfg: dict, name: str, default):
    value = getattr(args, name, None)
    if value is not None:
        return value
    return cfg.get(name, default)


def _seed(args, cfg: dict) -> int:
    return int(_get(args, cfg, "seed", 0))


def _net_config(args, cfg: dict) -> NetworkConfig:
    return NetworkConfig(
        latent_dim=int(_get(args, cfg, "latent_dim", 128)),
        n_points=int(_get(args, cfg, "n_points", 512)),
        separate_encoders=bool(getattr(args, "separate_encoders", False) or cfg.get("separate_encoders", False)),
    )


def _labeled_clouds(directory):
    directory = Path(directory)
    paths = sorted([*directory.glob("*.xyz"), *directory.glob("*.ply")], key=lambda p: p.name)
    if not paths:
        raise DatasetError(f"no cloud files in {directory}")
    clouds, labels = [], []
    for path in paths:
        pc = io.load_point_cloud(path)
        if pc.label is None:
            raise DatasetError(f"cloud {path} has no label sidecar")
        clouds.append(pc)
        labels.append(pc.label)
    return clouds, labels


def cmd_gen_shapes(args) -> int:
    cfg = _load_config(args)
    n_points = int(_get(args, cfg, "n_points", 512))
    paths = shapes.gen_shapes(args.family, args.count, n_points, _seed(args, cfg), args.out)
    print(f"wrote {len(paths)} clouds to {args.out}")
    return 0


def cmd_mesh(args) -> int:
    cfg = _load_config(args)
    pc = io.load_point_cloud(args.input)
    from .delaunay import delaunay3d, prune_oversized

    mesh = delaunay3d(pc.points, _seed(args, cfg))
    mesh = prune_oversized(mesh, float(_get(args, cfg, "prune_factor", 2.5)))
    io.save_tet_mesh(mesh, args.output)
    print(f"meshed {pc.n} points into {mesh.n_cells} cells on {mesh.n_vertices} vertices -> {args.output}")
    return 0


def cmd_solve(args) -> int:
    cfg = _load_config(args)
    mesh = io.load_tet_mesh(args.tet)
    axis = None if args.force_axis == "auto" else int(args.force_axis)
    force = make_force_spec(
        mesh,
        float(_get(args, cfg, "force_mag", 1.0)),
        float(_get(args, cfg, "band", 0.05)),
        axis,
    )
    mat = make_material(float(_get(args, cfg, "E", 1.0)), float(_get(args, cfg, "nu", 0.25)), force)
    system = assemble(mesh, mat)
    tol = float(_get(args, cfg, "tol", 1e-8))
    u = solve_displacement(system, tol=tol)
    io.save_displacement_field(u, args.out)
    residual = system.K @ u.reshape(-1) - system.f
    rel = np.linalg.norm(residual[system.free_dofs]) / np.linalg.norm(system.f)
    if args.mat_out:
        Path(args.mat_out).write_text(
            io.dumps_17g(dataset_mod.material_to_dict(mat)) + "\n", encoding="utf-8"
        )
    print(f"solved {mesh.n_vertices} vertices, relative residual {rel:.3e} -> {args.out}")
    return 0


def cmd_sample_udf(args) -> int:
    cfg = _load_config(args)
    pc = io.load_point_cloud(args.points)
    if np.abs(pc.points).max() > 1.0:
        print("warning: cloud exceeds [-1, 1]^3; expected a normalized cloud", file=sys.stderr)
    qs = build_query_set(
        pc,
        int(_get(args, cfg, "k", 1024)),
        float(_get(args, cfg, "near", 0.5)),
        float(_get(args, cfg, "sigma", 0.05)),
        _seed(args, cfg),
    )
    io.save_query_set(qs, args.out)
    print(f"sampled {qs.k} queries ({qs.strategy}) -> {args.out}")
    return 0


def cmd_build_dataset(args) -> int:
    cfg = _load_config(args)
    clouds_dir = Path(args.clouds)
    paths = sorted([*clouds_dir.glob("*.xyz"), *clouds_dir.glob("*.ply")], key=lambda p: p.name)
    defaults = dataset_mod.DatasetConfig()
    config = dataset_mod.DatasetConfig(
        prune_factor=float(_get(args, cfg, "prune_factor", defaults.prune_factor)),
        band_fraction=float(_get(args, cfg, "band", defaults.band_fraction)),
        k_queries=int(_get(args, cfg, "k", defaults.k_queries)),
        near_fraction=float(_get(args, cfg, "near", defaults.near_fraction)),
        sigma=float(_get(args, cfg, "sigma", defaults.sigma)),
        solver_tol=float(_get(args, cfg, "tol", defaults.solver_tol)),
        seed=_seed(args, cfg),
    )
    threads = int(_get(args, cfg, "threads", 1))
    manifest = dataset_mod.build_dataset(paths, args.out, config, threads=threads)
    print(
        f"built {len(manifest['samples'])} samples"
        f" ({len(manifest['quarantined'])} quarantined) -> {args.out}/manifest.json"
    )
    return 0


def cmd_losses(args) -> int:
    cfg = _load_config(args)
    mesh = io.load_tet_mesh(args.mesh)
    mat = dataset_mod.material_from_dict(json.loads(Path(args.mat).read_text(encoding="utf-8")))
    u_hat = io.load_displacement_field(args.pred_disp)
    u_gt = io.load_displacement_field(args.gt_disp)
    pred_udf = np.loadtxt(args.pred_udf, ndmin=1)
    qs = io.load_query_set(args.queryset)
    report = loss_report(
        mesh, mat, u_gt, u_hat, pred_udf, qs.distances,
        a=float(_get(args, cfg, "a", 1.0)), b=float(_get(args, cfg, "b", 0.1)),
    )
    text = io.dumps_17g(report.as_dict())
    if args.json_out:
        Path(args.json_out).write_text(text + "\n", encoding="utf-8")
    if args.residual_dump:
        res = nodal_equilibrium_residual(mesh, u_hat, mat)
        io.save_displacement_field(res.residuals, args.residual_dump)
    print(text)
    return 0


def cmd_pretrain(args) -> int:
    cfg = _load_config(args)
    net_config = _net_config(args, cfg)
    samples = dataset_mod.load_training_samples(args.data, net_config)
    tc = training.TrainConfig(
        epochs=int(_get(args, cfg, "epochs", training.DEFAULT_EPOCHS)),
        lr0=float(_get(args, cfg, "lr", training.DEFAULT_LR)),
        weight_decay=float(_get(args, cfg, "wd", training.DEFAULT_WEIGHT_DECAY)),
        a=float(_get(args, cfg, "a", 1.0)),
        b=float(_get(args, cfg, "b", 0.1)),
        include_implicit=not args.no_implicit,
        seed=_seed(args, cfg),
    )
    params, log = training.pretrain(samples, net_config, tc)
    save_checkpoint(args.out, params, net_config, meta={
        "train_config": asdict(tc),
        "n_samples": len(samples),
        "final": log[-1],
    })
    log_path = Path(args.log) if args.log else Path(str(args.out) + ".log.jsonl")
    log_path.write_text("\n".join(io.dumps_17g(entry) for entry in log) + "\n", encoding="utf-8")
    first, last = log[0], log[-1]
    print(
        f"trained {tc.epochs} epochs on {len(samples)} samples:"
        f" L_all {first['L_all']:.5f} -> {last['L_all']:.5f} (log: {log_path})"
    )
    return 0


def cmd_probe(args) -> int:
    cfg = _load_config(args)
    params, net_config, _ = load_checkpoint(args.ckpt)
    clouds, labels = _labeled_clouds(args.data)
    accuracy = training.probe_classify(
        params, net_config, clouds, labels,
        seed=_seed(args, cfg),
        train_fraction=float(_get(args, cfg, "train_fraction", 0.7)),
    )
    print(io.dumps_17g({"accuracy": accuracy, "n_clouds": len(clouds), "classes": sorted(set(labels))}))
    return 0


def cmd_ablate(args) -> int:
    cfg = _load_config(args)
    net_config = _net_config(args, cfg)
    samples = dataset_mod.load_training_samples(args.data, net_config)
    probe_clouds, probe_labels = _labeled_clouds(args.probe_clouds)
    base = training.TrainConfig(
        epochs=int(_get(args, cfg, "epochs", training.DEFAULT_EPOCHS)),
        a=float(_get(args, cfg, "a", 1.0)),
        b=float(_get(args, cfg, "b", 0.1)),
        seed=_seed(args, cfg),
    )
    seeds = [int(s) for s in str(_get(args, cfg, "seeds", "0,1,2,3,4")).split(",") if s != ""]
    report = training.ablation_suite(samples, probe_clouds, probe_labels, net_config, base, seeds)
    text = io.dumps_17g(report)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    for name, entry in report["configs"].items():
        mean = "n/a" if entry["mean"] is None else f"{entry['mean']:.4f}"
        std = "n/a" if entry["std"] is None else f"{entry['std']:.4f}"
        print(f"{name}: mean accuracy {mean} (std {std}) over {len(entry['accuracies'])} runs")
    return 0


def cmd_export_embeddings(args) -> int:
    params, net_config, _ = load_checkpoint(args.ckpt)
    clouds, labels = _labeled_clouds(args.clouds)
    coords, labels = training.export_embeddings(params, net_config, clouds, labels)
    lines = ["x,y,label"]
    lines += [f"{io.fmt17(x)},{io.fmt17(y)},{label}" for (x, y), label in zip(coords, labels)]
    Path(args.out).write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote {len(labels)} embeddings -> {args.out}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args) or 0
    except (ElastoPointError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
