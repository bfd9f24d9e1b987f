"""A small unconstrained point-cloud regressor with rotation-augmented training.

Deliberately minimal: per-edge MLP on a geometry embedding (distance + vector,
or solid-harmonic blocks), sum or single-head attention pooling, and per-head
MLP + linear readout. Gradients are hand-written reverse mode over this fixed
layer vocabulary and pinned by finite-difference tests.
"""

from __future__ import annotations

import base64
import json
import math
import os
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .cloud import DecoratedPointCloud, act, pairwise_edges
from .metrics import (
    HeatmapTable,
    ProbeFunction,
    SpectrumReport,
    accumulate_heatmap,
    character_projection,
    equivariance_error,
)
from .o3 import GroupElement, IrrepLabel, real_solid_harmonics, wigner_d
from .quadrature import O3Grid, random_group_element
from .serialize import format_float

__all__ = [
    "HeadSpec",
    "ToyNetConfig",
    "TrainConfig",
    "ToyNet",
    "TrainResult",
    "TrainingDivergedError",
    "train",
    "rho_matrix",
]

EMBEDDINGS = ("distance_vector", "ssh")
POOLINGS = ("sum", "attention")
AUGMENTATIONS = ("none", "rotations", "rotations_and_inversion")


class TrainingDivergedError(RuntimeError):
    def __init__(self, epoch: int):
        super().__init__(f"loss became non-finite at epoch {epoch}")
        self.epoch = epoch


@dataclass(frozen=True)
class HeadSpec:
    """Output head transforming as `blocks` stacked copies of `irrep`."""

    irrep: IrrepLabel
    blocks: int = 1

    @property
    def dim(self) -> int:
        return self.blocks * self.irrep.dim


@dataclass(frozen=True)
class ToyNetConfig:
    hidden_width: int = 32
    depth: int = 2
    embedding: str = "distance_vector"
    lambda_max_emb: int = 0
    pooling: str = "sum"
    heads: Mapping[str, HeadSpec] = field(default_factory=lambda: {"y": HeadSpec(IrrepLabel(0, 1))})
    cutoff: float = 1e6
    scalar_only: bool = False  # ablation: drop all rotation-covariant embedding channels
    seed: int = 0

    def __post_init__(self):
        if self.hidden_width < 1 or self.depth < 1:
            raise ValueError("hidden_width and depth must be >= 1")
        if self.embedding not in EMBEDDINGS:
            raise ValueError(f"embedding must be one of {EMBEDDINGS}")
        if self.embedding == "ssh" and self.lambda_max_emb < 1:
            raise ValueError("ssh embedding needs lambda_max_emb >= 1")
        if self.pooling not in POOLINGS:
            raise ValueError(f"pooling must be one of {POOLINGS}")
        if not self.heads:
            raise ValueError("at least one head is required")

    @property
    def embedding_dim(self) -> int:
        if self.embedding == "distance_vector":
            return 1 if self.scalar_only else 4
        if self.scalar_only:
            return 1  # only the lambda = 0 block survives
        return (self.lambda_max_emb + 1) ** 2


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    batch_size: int = 16
    learning_rate: float = 3e-3
    augmentation: str = "rotations"
    snapshot_stride: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.snapshot_stride < 1:
            raise ValueError("counts must be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if self.augmentation not in AUGMENTATIONS:
            raise ValueError(f"augmentation must be one of {AUGMENTATIONS}")


def rho_matrix(irrep: IrrepLabel, blocks: int, g: GroupElement) -> np.ndarray:
    """Block-diagonal rho(g) on `blocks` stacked irrep copies."""
    D = wigner_d(irrep, g).matrix
    out = np.zeros((blocks * irrep.dim, blocks * irrep.dim))
    for b in range(blocks):
        out[b * irrep.dim : (b + 1) * irrep.dim, b * irrep.dim : (b + 1) * irrep.dim] = D
    return out


class ToyNet:
    """Parameters plus forward/backward for the fixed layer vocabulary."""

    def __init__(self, config: ToyNetConfig):
        self.config = config
        rng = np.random.default_rng(config.seed)
        H, D0 = config.hidden_width, config.embedding_dim
        p: dict[str, np.ndarray] = {}
        dims = [D0] + [H] * config.depth
        for layer in range(config.depth):
            fan_in = dims[layer]
            p[f"mlp.{layer}.W"] = rng.normal(scale=1.0 / math.sqrt(fan_in), size=(fan_in, H))
            p[f"mlp.{layer}.b"] = np.zeros(H)
        if config.pooling == "attention":
            p["attn.a"] = rng.normal(scale=1.0 / math.sqrt(H), size=H)
        for name, head in config.heads.items():
            p[f"head.{name}.W1"] = rng.normal(scale=1.0 / math.sqrt(H), size=(H, H))
            p[f"head.{name}.b1"] = np.zeros(H)
            p[f"head.{name}.Wo"] = rng.normal(scale=1.0 / math.sqrt(H), size=(H, head.dim))
            p[f"head.{name}.bo"] = np.zeros(head.dim)
        self.params = p

    # -- forward ---------------------------------------------------------------

    def _embed(self, x: DecoratedPointCloud) -> np.ndarray:
        edges = pairwise_edges(x, self.config.cutoff)
        if not edges:
            raise ValueError("cloud has no edges within the cutoff")
        vecs = np.stack([e[2] for e in edges])
        dists = np.array([e[3] for e in edges])
        if self.config.embedding == "distance_vector":
            if self.config.scalar_only:
                return dists[:, None]
            return np.concatenate([dists[:, None], vecs], axis=1)
        blocks = real_solid_harmonics(vecs, self.config.lambda_max_emb)
        if self.config.scalar_only:
            return blocks[0]
        return np.concatenate(blocks, axis=1)

    def forward(self, x: DecoratedPointCloud, with_cache: bool = False):
        cfg = self.config
        p = self.params
        phi = self._embed(x)
        taps: dict[str, np.ndarray] = {"geometry": phi.sum(axis=0)}
        hs = [phi]
        h = phi
        for layer in range(cfg.depth):
            h = np.tanh(h @ p[f"mlp.{layer}.W"] + p[f"mlp.{layer}.b"])
            hs.append(h)
        taps["edge"] = h.sum(axis=0)
        if cfg.pooling == "sum":
            pooled = h.sum(axis=0)
            alpha = None
        else:
            scores = h @ p["attn.a"]
            scores = scores - scores.max()
            alpha = np.exp(scores)
            alpha /= alpha.sum()
            pooled = alpha @ h
        taps["pooled"] = pooled
        # sum pooling grows with the edge count; the head sees the mean so its
        # tanh stays in range regardless of cloud size
        head_in = pooled / h.shape[0] if cfg.pooling == "sum" else pooled
        zs: dict[str, np.ndarray] = {}
        for name in cfg.heads:
            z = np.tanh(head_in @ p[f"head.{name}.W1"] + p[f"head.{name}.b1"])
            zs[name] = z
            taps[f"llf:{name}"] = z
            taps[name] = z @ p[f"head.{name}.Wo"] + p[f"head.{name}.bo"]
        if not with_cache:
            return taps
        cache = {"hs": hs, "alpha": alpha, "head_in": head_in, "zs": zs}
        return taps, cache

    # -- backward --------------------------------------------------------------

    def backward(
        self,
        cache: dict,
        d_out: Mapping[str, np.ndarray],
        grads: dict[str, np.ndarray],
    ) -> None:
        """Accumulate parameter gradients for one cloud given dL/d(head output)."""
        cfg = self.config
        p = self.params
        hs, alpha, head_in, zs = cache["hs"], cache["alpha"], cache["head_in"], cache["zs"]
        d_pooled = np.zeros_like(head_in)
        for name, dout in d_out.items():
            z = zs[name]
            grads[f"head.{name}.Wo"] += np.outer(z, dout)
            grads[f"head.{name}.bo"] += dout
            dz = p[f"head.{name}.Wo"] @ dout
            dzpre = dz * (1.0 - z * z)
            grads[f"head.{name}.W1"] += np.outer(head_in, dzpre)
            grads[f"head.{name}.b1"] += dzpre
            d_pooled += p[f"head.{name}.W1"] @ dzpre

        h = hs[-1]
        if cfg.pooling == "sum":
            dh = np.tile(d_pooled / h.shape[0], (h.shape[0], 1))
        else:
            a = p["attn.a"]
            dalpha = h @ d_pooled
            dh = alpha[:, None] * d_pooled[None, :]
            ds = alpha * (dalpha - float(alpha @ dalpha))
            grads["attn.a"] += h.T @ ds
            dh = dh + ds[:, None] * a[None, :]

        for layer in reversed(range(cfg.depth)):
            hout = hs[layer + 1]
            hin = hs[layer]
            dpre = dh * (1.0 - hout * hout)
            grads[f"mlp.{layer}.W"] += hin.T @ dpre
            grads[f"mlp.{layer}.b"] += dpre.sum(axis=0)
            dh = dpre @ p[f"mlp.{layer}.W"].T

    def zero_grads(self) -> dict[str, np.ndarray]:
        return {k: np.zeros_like(v) for k, v in self.params.items()}

    def batch_loss_and_grads(
        self,
        batch: Sequence[tuple[DecoratedPointCloud, Mapping[str, np.ndarray]]],
    ) -> tuple[float, dict[str, np.ndarray]]:
        """Mean per-component squared error over the batch, plus gradients."""
        grads = self.zero_grads()
        loss = 0.0
        for cloud, targets in batch:
            taps, cache = self.forward(cloud, with_cache=True)
            d_out = {}
            for name, head in self.config.heads.items():
                y = np.asarray(targets[name], dtype=float).ravel()
                r = taps[name] - y
                loss += float(r @ r) / head.dim
                d_out[name] = 2.0 * r / (head.dim * len(batch))
            self.backward(cache, d_out, grads)
        return loss / len(batch), grads

    def as_probe(self) -> ProbeFunction:
        irreps = {name: h.irrep for name, h in self.config.heads.items()}
        return ProbeFunction(lambda x: self.forward(x), irreps)

    # -- checkpoints -----------------------------------------------------------

    def save(self, json_path: str, epoch=None) -> None:
        """JSON manifest + little-endian float64 blob next to it (.bin)."""
        bin_path = os.path.splitext(json_path)[0] + ".bin"
        entries = []
        offset = 0
        with open(bin_path, "wb") as f:
            for name in sorted(self.params):
                arr = np.ascontiguousarray(self.params[name], dtype="<f8")
                f.write(arr.tobytes())
                entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
                offset += arr.size * 8
        cfg = self.config
        manifest = {
            "format": "equicheck-toynet-v1",
            "epoch": epoch,
            "config": {
                "hidden_width": cfg.hidden_width,
                "depth": cfg.depth,
                "embedding": cfg.embedding,
                "lambda_max_emb": cfg.lambda_max_emb,
                "pooling": cfg.pooling,
                "cutoff": cfg.cutoff,
                "scalar_only": cfg.scalar_only,
                "seed": cfg.seed,
                "heads": {
                    name: {"lambda": h.irrep.lam, "sigma": h.irrep.sigma, "blocks": h.blocks}
                    for name, h in cfg.heads.items()
                },
            },
            "weights": {"file": os.path.basename(bin_path), "params": entries},
        }
        with open(json_path, "w") as f:
            json.dump(manifest, f, indent=1)

    @classmethod
    def load(cls, json_path: str) -> tuple["ToyNet", object]:
        with open(json_path) as f:
            manifest = json.load(f)
        if manifest.get("format") != "equicheck-toynet-v1":
            raise ValueError(f"unrecognized checkpoint format in {json_path}")
        c = manifest["config"]
        heads = {
            name: HeadSpec(IrrepLabel(h["lambda"], h["sigma"]), h["blocks"])
            for name, h in c["heads"].items()
        }
        config = ToyNetConfig(
            hidden_width=c["hidden_width"],
            depth=c["depth"],
            embedding=c["embedding"],
            lambda_max_emb=c["lambda_max_emb"],
            pooling=c["pooling"],
            heads=heads,
            cutoff=c["cutoff"],
            scalar_only=c["scalar_only"],
            seed=c["seed"],
        )
        net = cls(config)
        bin_path = os.path.join(os.path.dirname(json_path), manifest["weights"]["file"])
        blob = open(bin_path, "rb").read()
        for entry in manifest["weights"]["params"]:
            shape = tuple(entry["shape"])
            size = int(np.prod(shape)) if shape else 1
            arr = np.frombuffer(
                blob, dtype="<f8", count=size, offset=entry["offset"]
            ).reshape(shape)
            net.params[entry["name"]] = arr.copy()
        return net, manifest.get("epoch")


# -- training -----------------------------------------------------------------


@dataclass
class TrainResult:
    net: ToyNet
    history: list[dict]
    heatmaps: HeatmapTable | None


def _augment(
    cloud: DecoratedPointCloud,
    targets: Mapping[str, np.ndarray],
    heads: Mapping[str, HeadSpec],
    g: GroupElement,
) -> tuple[DecoratedPointCloud, dict[str, np.ndarray]]:
    new_targets = {
        name: rho_matrix(head.irrep, head.blocks, g)
        @ np.asarray(targets[name], dtype=float).ravel()
        for name, head in heads.items()
    }
    return act(g, cloud), new_targets


def _snapshot(
    net: ToyNet,
    epoch,
    val: Sequence[tuple[DecoratedPointCloud, Mapping[str, np.ndarray]]],
    grid: O3Grid | None,
    lambda_max: int,
    probe_subset: int,
    heatmaps: HeatmapTable | None,
    history: list[dict],
    train_loss: float | None,
) -> None:
    row: dict = {"epoch": epoch, "train_loss": train_loss}
    for name, head in net.config.heads.items():
        errs = []
        for cloud, targets in val:
            out = net.forward(cloud)[name]
            errs.append(out - np.asarray(targets[name], dtype=float).ravel())
        errs = np.stack(errs)
        row[f"val_rmse:{name}"] = float(np.sqrt(np.mean(errs * errs)))
    if grid is not None:
        probe = net.as_probe()
        subset = [c for c, _ in val[:probe_subset]]
        for name, head in net.config.heads.items():
            a_vals = [
                equivariance_error(probe, name, head.irrep, c, grid) for c in subset
            ]
            row[f"A:{name}"] = float(np.median(a_vals))
        if heatmaps is not None:
            tap_names = ["geometry", "edge", "pooled"] + [
                f"llf:{n}" for n in net.config.heads
            ] + list(net.config.heads)
            for tap in tap_names:
                reports = [
                    character_projection(probe, tap, c, grid, lambda_max)
                    for c in subset
                ]
                accumulate_heatmap(heatmaps, epoch, tap, reports)
    history.append(row)


def train(
    net: ToyNet,
    dataset: Sequence[tuple[DecoratedPointCloud, Mapping[str, np.ndarray]]],
    config: TrainConfig,
    val: Sequence[tuple[DecoratedPointCloud, Mapping[str, np.ndarray]]] = (),
    grid: O3Grid | None = None,
    lambda_max: int = 4,
    probe_subset: int = 8,
) -> TrainResult:
    """Adam training with per-batch group augmentation and metric snapshots.

    Deterministic under fixed seeds and single-threaded execution. Snapshots
    (val RMSE, per-head equivariance error, tap spectra) are recorded every
    snapshot_stride epochs, plus a pre-training "U" column.
    """
    if not dataset:
        raise ValueError("dataset is empty")
    rng = np.random.default_rng(config.seed)
    heads = net.config.heads
    heatmaps = HeatmapTable(lambda_max) if grid is not None else None
    history: list[dict] = []
    if val:
        _snapshot(net, HeatmapTable.UNTRAINED, val, grid, lambda_max, probe_subset,
                  heatmaps, history, None)

    m = {k: np.zeros_like(v) for k, v in net.params.items()}
    v2 = {k: np.zeros_like(v) for k, v in net.params.items()}
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    step = 0
    n = len(dataset)
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        nbatches = 0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            if config.augmentation == "none":
                batch = [dataset[i] for i in idx]
            else:
                include_parity = config.augmentation == "rotations_and_inversion"
                g = random_group_element(rng, include_parity=include_parity)
                batch = [_augment(dataset[i][0], dataset[i][1], heads, g) for i in idx]
            loss, grads = net.batch_loss_and_grads(batch)
            if not np.isfinite(loss):
                raise TrainingDivergedError(epoch)
            epoch_loss += loss
            nbatches += 1
            step += 1
            for k in net.params:
                m[k] = beta1 * m[k] + (1 - beta1) * grads[k]
                v2[k] = beta2 * v2[k] + (1 - beta2) * grads[k] * grads[k]
                mhat = m[k] / (1 - beta1**step)
                vhat = v2[k] / (1 - beta2**step)
                net.params[k] -= config.learning_rate * mhat / (np.sqrt(vhat) + eps)
        if val and ((epoch + 1) % config.snapshot_stride == 0 or epoch == config.epochs - 1):
            _snapshot(net, epoch, val, grid, lambda_max, probe_subset,
                      heatmaps, history, epoch_loss / max(nbatches, 1))
    return TrainResult(net=net, history=history, heatmaps=heatmaps)


def history_to_csv(history: Sequence[dict]) -> str:
    keys: list[str] = []
    for row in history:
        for k in row:
            if k not in keys:
                keys.append(k)
    lines = [",".join(keys)]
    for row in history:
        cells = []
        for k in keys:
            v = row.get(k)
            if v is None:
                cells.append("")
            elif isinstance(v, str):
                cells.append(v)
            elif isinstance(v, (int, np.integer)):
                cells.append(str(int(v)))
            else:
                cells.append(format_float(float(v)))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"
