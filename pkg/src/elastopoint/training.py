"""Deterministic training loop, linear probe, ablation runner, embeddings.

Single-threaded float64 throughout: a fixed seed and data order reproduce
loss curves bitwise.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from .errors import DatasetError
from .geometry import PointCloud, normalize_unit_sphere
from .losses import total_loss
from .network import NetworkConfig, TrainingSample, encoder_forward, init_params, sample_grads

DEFAULT_EPOCHS = 50
DEFAULT_LR = 1e-3
DEFAULT_WEIGHT_DECAY = 1e-4


@dataclass(frozen=True)
class TrainConfig:
    """Optimization hyperparameters and loss wiring for one pretraining run."""

    epochs: int = DEFAULT_EPOCHS
    lr0: float = DEFAULT_LR
    weight_decay: float = DEFAULT_WEIGHT_DECAY
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    a: float = 1.0
    b: float = 0.1
    include_implicit: bool = True
    seed: int = 0


@dataclass
class TrainState:
    """Parameters plus Adam moments and the schedule position."""

    params: dict
    m: dict
    v: dict
    step: int
    total_steps: int
    config: TrainConfig


def init_state(params: dict, total_steps: int, config: TrainConfig) -> TrainState:
    return TrainState(
        params=params,
        m={k: np.zeros_like(p) for k, p in params.items()},
        v={k: np.zeros_like(p) for k, p in params.items()},
        step=0,
        total_steps=total_steps,
        config=config,
    )


def cosine_lr(step: int, total_steps: int, lr0: float) -> float:
    """lr0 * 0.5 * (1 + cos(pi * step / total_steps)), clamped past the end."""
    if step < 0:
        raise ValueError(f"step must be nonnegative, got {step}")
    if step > total_steps:
        warnings.warn(f"schedule queried past its end ({step} > {total_steps}); returning 0", stacklevel=2)
        return 0.0
    if total_steps == 0:
        return lr0
    return lr0 * 0.5 * (1.0 + np.cos(np.pi * step / total_steps))


def adam_step(state: TrainState, grads: dict) -> TrainState:
    """One decoupled-weight-decay Adam update at the scheduled learning rate."""
    cfg = state.config
    for key in state.params:
        if not np.isfinite(grads[key]).all():
            raise ValueError(f"non-finite gradient for parameter {key}")
    lr = cosine_lr(state.step, state.total_steps, cfg.lr0)
    t = state.step + 1
    bc1 = 1.0 - cfg.beta1**t
    bc2 = 1.0 - cfg.beta2**t
    for key, p in state.params.items():
        g = grads[key]
        m = state.m[key]
        v = state.v[key]
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * g * g
        update = (m / bc1) / (np.sqrt(v / bc2) + cfg.eps)
        p -= lr * (update + cfg.weight_decay * p)
    state.step = t
    return state


def pretrain(samples: list, net_config: NetworkConfig, train_config: TrainConfig):
    """Dual-task optimization over per-sample updates with per-epoch shuffles.

    Returns (params, log) where log holds one entry per epoch: the mean loss
    components as a LossReport dict plus the optimized objective and the
    learning rate at the epoch's final step.
    """
    if not samples:
        raise DatasetError("cannot train on an empty dataset")
    params = init_params(net_config, train_config.seed)
    total_steps = train_config.epochs * len(samples)
    state = init_state(params, total_steps, train_config)
    log = []
    for epoch in range(train_config.epochs):
        order = np.random.default_rng((train_config.seed, epoch)).permutation(len(samples))
        sums = np.zeros(4)
        objective_sum = 0.0
        for idx in order:
            values, grads = sample_grads(
                params, net_config, samples[idx],
                train_config.a, train_config.b, train_config.include_implicit,
            )
            state = adam_step(state, grads)
            sums += (values.limp, values.ldf, values.lpi, values.lall)
            objective_sum += values.objective
        means = sums / len(samples)
        report = total_loss(
            means[0], means[1], means[2], train_config.a, train_config.b,
            counts={"samples": len(samples)},
        )
        log.append({
            "epoch": epoch + 1,
            **report.as_dict(),
            "objective": objective_sum / len(samples),
            "lr": cosine_lr(state.step, total_steps, train_config.lr0),
        })
    return params, log


def featurize(params: dict, config: NetworkConfig, clouds: list) -> np.ndarray:
    """Frozen-encoder latents of normalized clouds, stacked (N, m)."""
    out = np.empty((len(clouds), config.latent_dim))
    for i, pc in enumerate(clouds):
        normalized, _ = normalize_unit_sphere(pc)
        out[i] = encoder_forward(params, config, normalized.points)
    return out


def _one_hot(indices: np.ndarray, n_classes: int) -> np.ndarray:
    eye = np.eye(n_classes)
    return eye[indices]


def fit_linear_probe(train_x: np.ndarray, train_y: np.ndarray, n_classes: int,
                     steps: int = 400, lr: float = 0.5, l2: float = 1e-4):
    """Multinomial logistic head trained by full-batch gradient descent.

    Features are standardized with train-split statistics; zero-initialized
    weights make the fit deterministic without any random draws.
    """
    mean = train_x.mean(axis=0)
    std = np.maximum(train_x.std(axis=0), 1e-8)
    xs = (train_x - mean) / std
    n, dim = xs.shape
    W = np.zeros((dim, n_classes))
    bias = np.zeros(n_classes)
    onehot = _one_hot(train_y, n_classes)
    for _ in range(steps):
        logits = xs @ W + bias
        logits -= logits.max(axis=1, keepdims=True)
        p = np.exp(logits)
        p /= p.sum(axis=1, keepdims=True)
        err = (p - onehot) / n
        W -= lr * (xs.T @ err + 2.0 * l2 * W)
        bias -= lr * err.sum(axis=0)
    return W, bias, mean, std


def _stratified_split(labels: np.ndarray, classes: list, train_fraction: float, seed: int):
    train_idx, test_idx = [], []
    for ci, cls in enumerate(classes):
        members = np.flatnonzero(labels == ci)
        members = members[np.random.default_rng((seed, ci)).permutation(members.size)]
        n_train = int(round(train_fraction * members.size))
        n_train = min(max(n_train, 1), max(members.size - 1, 1))
        train_idx.extend(members[:n_train])
        test_idx.extend(members[n_train:])
    return np.sort(np.array(train_idx, dtype=np.int64)), np.sort(np.array(test_idx, dtype=np.int64))


def probe_classify(params: dict, config: NetworkConfig, clouds: list, labels: list,
                   seed: int = 0, train_fraction: float = 0.7,
                   steps: int = 400, lr: float = 0.5) -> float:
    """Held-out accuracy of a linear probe on frozen encoder latents.

    The clouds are split per class by the seed; the probe never updates the
    encoder.
    """
    classes = sorted(set(labels))
    if len(classes) < 2:
        raise ValueError("probe needs at least two classes")
    y = np.array([classes.index(name) for name in labels], dtype=np.int64)
    features = featurize(params, config, clouds)
    train_idx, test_idx = _stratified_split(y, classes, train_fraction, seed)
    if test_idx.size == 0:
        raise ValueError("probe split left no held-out samples")
    W, bias, mean, std = fit_linear_probe(features[train_idx], y[train_idx], len(classes),
                                          steps=steps, lr=lr)
    logits = (features[test_idx] - mean) / std @ W + bias
    return float((logits.argmax(axis=1) == y[test_idx]).mean())


ABLATION_CONFIGS = ("combined", "implicit_only", "physics_only")


def ablation_suite(samples: list, probe_clouds: list, probe_labels: list,
                   net_config: NetworkConfig, base: TrainConfig, seeds: list):
    """Pretrain + probe under the three loss wirings, for each seed.

    combined keeps all terms; implicit_only zeroes a and b; physics_only
    drops the implicit term from the objective while keeping a and b.
    """
    wirings = {
        "combined": {},
        "implicit_only": {"a": 0.0, "b": 0.0},
        "physics_only": {"include_implicit": False},
    }
    report = {"seeds": [int(s) for s in seeds], "configs": {}}
    for name in ABLATION_CONFIGS:
        accuracies = []
        failures = []
        for seed in seeds:
            cfg = replace(base, seed=int(seed), **wirings[name])
            try:
                params, _ = pretrain(samples, net_config, cfg)
                acc = probe_classify(params, net_config, probe_clouds, probe_labels, seed=int(seed))
            except Exception as exc:  # noqa: BLE001 - partial report by contract
                failures.append(f"seed {seed}: {exc}")
                continue
            accuracies.append(acc)
        entry = {
            "accuracies": accuracies,
            "mean": float(np.mean(accuracies)) if accuracies else None,
            "std": float(np.std(accuracies, ddof=1)) if len(accuracies) > 1 else None,
        }
        if failures:
            entry["failures"] = failures
        report["configs"][name] = entry
    return report


def export_embeddings(params: dict, config: NetworkConfig, clouds: list, labels: list):
    """2D principal-component projection of frozen latents.

    Returns (coords (N, 2), labels). Component signs are fixed so the
    largest-magnitude weight in each is positive.
    """
    if len(clouds) < 2:
        raise ValueError("need at least two clouds to project")
    features = featurize(params, config, clouds)
    centered = features - features.mean(axis=0)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    components = vt[:2].copy()
    for row in components:
        if row[np.argmax(np.abs(row))] < 0.0:
            row *= -1.0
    return centered @ components.T, list(labels)
