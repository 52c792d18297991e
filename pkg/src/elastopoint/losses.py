"""The three loss kernels and their weighted combination.

All three are plain reductions over arrays, usable on solver output or
network predictions alike; nothing here depends on the network.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .continuum import NodalResidualField, nodal_equilibrium_residual
from .fem import MaterialForceSpec
from .geometry import TetMesh

DEFAULT_A = 1.0
DEFAULT_B = 0.1


@dataclass(frozen=True)
class LossReport:
    """Loss components, their weights, and the counts they were reduced over."""

    L_imp: float
    L_df: float
    L_pi: float
    L_all: float
    a: float
    b: float
    counts: dict = field(default_factory=dict)
    config_hash: str = ""

    def __post_init__(self):
        for name in ("L_imp", "L_df", "L_pi", "L_all"):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0.0:
                raise ValueError(f"{name} must be finite and nonnegative, got {value}")
        combined = self.L_imp + self.a * self.L_df + self.b * self.L_pi
        if abs(self.L_all - combined) > 1e-12:
            raise ValueError(f"L_all = {self.L_all} does not equal L_imp + a*L_df + b*L_pi = {combined}")
        if not self.config_hash:
            payload = json.dumps({"a": self.a, "b": self.b, "counts": self.counts}, sort_keys=True)
            object.__setattr__(self, "config_hash", hashlib.sha256(payload.encode()).hexdigest()[:16])

    def as_dict(self) -> dict:
        return {
            "L_imp": self.L_imp,
            "L_df": self.L_df,
            "L_pi": self.L_pi,
            "L_all": self.L_all,
            "a": self.a,
            "b": self.b,
            "counts": self.counts,
            "config_hash": self.config_hash,
        }


def implicit_loss(pred, gt) -> float:
    """Mean absolute error between |pred| and the nonnegative ground truth.

    The inner absolute value makes the loss invariant to the prediction's
    sign, so a network free to emit negative distances is not penalized for
    the sign alone.
    """
    pred = np.asarray(pred, dtype=np.float64).reshape(-1)
    gt = np.asarray(gt, dtype=np.float64).reshape(-1)
    if pred.shape != gt.shape:
        raise ValueError(f"prediction count {pred.shape[0]} != ground-truth count {gt.shape[0]}")
    if bool((gt < 0.0).any()):
        raise ValueError("ground-truth distances must be nonnegative")
    return float(np.mean(np.abs(np.abs(pred) - gt)))


def data_fidelity_loss(u_hat, u, mesh: TetMesh, per_vertex: bool = False) -> float:
    """Displacement error against ground truth.

    Canonical form: mean over cells of the mean vertex error of that cell, so
    a vertex shared by several cells is counted once per incident cell. The
    per_vertex variant averages each vertex once instead.
    """
    u_hat = np.asarray(u_hat, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    expected = (mesh.n_vertices, 3)
    if u_hat.shape != expected or u.shape != expected:
        raise ValueError(f"fields must have shape {expected}, got {u_hat.shape} and {u.shape}")
    errors = np.linalg.norm(u - u_hat, axis=1)
    if per_vertex:
        return float(errors.mean())
    return float(errors[mesh.cells].mean())


def physics_informed_loss(residuals: NodalResidualField) -> float:
    """Mean Euclidean norm of the equilibrium residual over free vertices."""
    if residuals.residuals.shape[0] == 0:
        raise ValueError("residual field is empty")
    return float(residuals.norms().mean())


def total_loss(
    limp: float,
    ldf: float,
    lpi: float,
    a: float = DEFAULT_A,
    b: float = DEFAULT_B,
    counts: dict | None = None,
) -> LossReport:
    """Combine components as L_imp + a * L_df + b * L_pi."""
    for name, value in (("implicit", limp), ("data-fidelity", ldf), ("physics", lpi)):
        if not np.isfinite(value) or value < 0.0:
            raise ValueError(f"{name} loss must be finite and nonnegative, got {value}")
    return LossReport(
        L_imp=float(limp),
        L_df=float(ldf),
        L_pi=float(lpi),
        L_all=float(limp + a * ldf + b * lpi),
        a=float(a),
        b=float(b),
        counts=dict(counts or {}),
    )


def loss_report(
    mesh: TetMesh,
    mat: MaterialForceSpec,
    u_gt,
    u_hat,
    pred_udf,
    gt_udf,
    a: float = DEFAULT_A,
    b: float = DEFAULT_B,
) -> LossReport:
    """Evaluate all three kernels for one sample and combine them."""
    limp = implicit_loss(pred_udf, gt_udf)
    ldf = data_fidelity_loss(u_hat, u_gt, mesh)
    residuals = nodal_equilibrium_residual(mesh, np.asarray(u_hat, dtype=np.float64), mat)
    lpi = physics_informed_loss(residuals)
    counts = {
        "queries": int(np.asarray(pred_udf).size),
        "cells": mesh.n_cells,
        "free_vertices": int(residuals.vertex_indices.size),
    }
    return total_loss(limp, ldf, lpi, a, b, counts)
