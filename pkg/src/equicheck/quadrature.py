"""Exact quadrature grids realizing the normalized Haar average over SO(3) and O(3)."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.spatial.transform import Rotation

from . import lebedev
from .o3 import GroupElement

__all__ = [
    "O3Grid",
    "GridCapacityError",
    "build_so3_grid",
    "extend_to_o3",
    "haar_average",
    "orthogonality_residual",
    "random_group_element",
    "grid_to_json",
    "grid_from_json",
]

SCHEMES = ("lebedev_trapezoid", "gauss_product")


class GridCapacityError(ValueError):
    """Requested band limit exceeds what the embedded tables can certify."""


@dataclass(frozen=True)
class O3Grid:
    """Weighted group elements whose weighted sum realizes the Haar average.

    band_limit is the largest lambda for which the Wigner-orthogonality
    identity holds on this grid (certified empirically by the test suite).
    """

    nodes: tuple[GroupElement, ...]
    weights: np.ndarray
    band_limit: int
    covers_parity: bool

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if len(w) != len(self.nodes):
            raise ValueError("weights and nodes length mismatch")
        if np.any(w <= 0):
            raise ValueError("weights must be positive")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights must sum to 1, got {w.sum()!r}")
        object.__setattr__(self, "weights", w)
        self.weights.setflags(write=False)

    def __len__(self) -> int:
        return len(self.nodes)

    def rotations(self) -> np.ndarray:
        """Stacked (n, 3, 3) proper-rotation parts of the nodes."""
        return np.stack([g.rotation for g in self.nodes])


def max_band_limit() -> int:
    return lebedev.max_precision() // 2


def _smallest_precision(minimum: int) -> int:
    for p in lebedev.available_precisions():
        if p >= minimum:
            return p
    raise GridCapacityError(
        f"no embedded Lebedev rule of precision >= {minimum}; "
        f"maximum supported band limit is {max_band_limit()}"
    )


def build_so3_grid(band_limit: int, scheme: str = "lebedev_trapezoid") -> O3Grid:
    """Product grid exact for Wigner-orthogonality up to the band limit.

    The grid integrates any product D^l_mn * D^l'_m'n' with l, l' <= band_limit
    exactly, which is the operative requirement for every metric in this
    package.
    """
    if band_limit < 0:
        raise ValueError("band_limit must be >= 0")
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; choose from {SCHEMES}")
    if band_limit > max_band_limit():
        raise GridCapacityError(
            f"band_limit {band_limit} exceeds the maximum supported "
            f"{max_band_limit()} (largest embedded Lebedev precision "
            f"{lebedev.max_precision()})"
        )

    n_gamma = 2 * band_limit + 2
    gammas = 2.0 * math.pi * np.arange(n_gamma) / n_gamma

    if scheme == "lebedev_trapezoid":
        # Each Lebedev node fixes the rotated z-axis (Euler alpha, beta);
        # the trapezoid sweeps the remaining angle gamma.
        directions, dir_weights = lebedev.lebedev_grid(_smallest_precision(2 * band_limit))
        betas = np.arccos(np.clip(directions[:, 2], -1.0, 1.0))
        alphas = np.arctan2(directions[:, 1], directions[:, 0])
    else:
        n_beta = band_limit + 1
        x, wx = leggauss(n_beta)
        betas_1d = np.arccos(x)
        alphas_1d = 2.0 * math.pi * np.arange(n_gamma) / n_gamma
        alphas, betas, dir_weights = [], [], []
        for b, wb in zip(betas_1d, wx):
            for a in alphas_1d:
                alphas.append(a)
                betas.append(b)
                dir_weights.append(wb / 2.0 / n_gamma)
        alphas = np.array(alphas)
        betas = np.array(betas)
        dir_weights = np.array(dir_weights)
        dir_weights = dir_weights / dir_weights.sum()

    nodes: list[GroupElement] = []
    weights: list[float] = []
    for a, b, wd in zip(alphas, betas, dir_weights):
        Rab = Rotation.from_euler("ZYZ", [a, b, 0.0]).as_matrix()
        for gmat, g in zip(_rz_stack(gammas), gammas):
            nodes.append(GroupElement(Rab @ gmat))
            weights.append(wd / n_gamma)
    return O3Grid(tuple(nodes), np.array(weights), band_limit, covers_parity=False)


def _rz_stack(angles: np.ndarray) -> np.ndarray:
    c, s = np.cos(angles), np.sin(angles)
    out = np.zeros((len(angles), 3, 3))
    out[:, 0, 0] = c
    out[:, 0, 1] = -s
    out[:, 1, 0] = s
    out[:, 1, 1] = c
    out[:, 2, 2] = 1.0
    return out


def extend_to_o3(grid: O3Grid) -> O3Grid:
    """Double an SO(3) grid across the inversion coset with halved weights."""
    if grid.covers_parity:
        raise ValueError("grid already covers parity")
    nodes: list[GroupElement] = []
    weights: list[float] = []
    for g, w in zip(grid.nodes, grid.weights):
        nodes.append(g)
        nodes.append(GroupElement(g.rotation, parity=True))
        weights.extend([w / 2.0, w / 2.0])
    return O3Grid(tuple(nodes), np.array(weights), grid.band_limit, covers_parity=True)


def haar_average(grid: O3Grid, f: Callable[[GroupElement], np.ndarray]) -> np.ndarray:
    """sum_i w_i f(g_i); the normalized Haar average for band-limited f."""
    acc = None
    for g, w in zip(grid.nodes, grid.weights):
        val = w * np.asarray(f(g), dtype=float)
        acc = val if acc is None else acc + val
    return acc


def orthogonality_residual(grid: O3Grid, lam_max: int) -> float:
    """Worst deviation of the grid from exact irrep-matrix-element orthogonality.

    Checks < rho^alpha_mn rho^beta_m'n' > = delta_ab delta_mm' delta_nn' /
    (2 lambda + 1) over every pair of irreps with lambda, lambda' <= lam_max
    (both parities when the grid covers them). A residual at rounding level
    certifies every metric average up to this band limit.
    """
    from .o3 import wigner_rotation_stack

    from .o3 import IrrepLabel as _Label

    D = wigner_rotation_stack(lam_max, grid.rotations())
    parity_mask = np.array([g.parity for g in grid.nodes])
    cols = []
    norms = []
    sigmas = (+1, -1) if grid.covers_parity else (+1,)
    for lam in range(lam_max + 1):
        flat = D[lam].reshape(len(grid), -1)
        for sigma in sigmas:
            signs = np.where(parity_mask, _Label(lam, sigma).inversion_sign(), 1.0)
            cols.append(flat * signs[:, None])
            norms.extend([2 * lam + 1] * (2 * lam + 1) ** 2)
    V = np.concatenate(cols, axis=1)
    G = V.T @ (grid.weights[:, None] * V)
    exact = np.diag(1.0 / np.array(norms, dtype=float))
    return float(np.max(np.abs(G - exact)))


def random_group_element(rng: np.random.Generator, include_parity: bool = False) -> GroupElement:
    """Haar-uniform rotation (uniform unit quaternion), fair-coin parity if asked."""
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    parity = bool(rng.integers(2)) if include_parity else False
    return GroupElement(Rotation.from_quat(q).as_matrix(), parity)


# -- JSON export (CLI-facing) -------------------------------------------------


def grid_to_json(grid: O3Grid) -> str:
    from .serialize import dumps_decimal

    payload = {
        "band_limit": grid.band_limit,
        "covers_parity": grid.covers_parity,
        "nodes": [
            {
                "quaternion": list(Rotation.from_matrix(g.rotation).as_quat()),
                "parity": g.parity,
                "weight": float(w),
            }
            for g, w in zip(grid.nodes, grid.weights)
        ],
    }
    return dumps_decimal(payload)


def grid_from_json(text: str) -> O3Grid:
    payload = json.loads(text)
    nodes = tuple(
        GroupElement(Rotation.from_quat(n["quaternion"]).as_matrix(), bool(n["parity"]))
        for n in payload["nodes"]
    )
    weights = np.array([n["weight"] for n in payload["nodes"]])
    return O3Grid(nodes, weights, int(payload["band_limit"]), bool(payload["covers_parity"]))
