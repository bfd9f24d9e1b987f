"""Analytic targets and datasets: the bond-triple pseudoscalar, exactly
equivariant oracle probes, and rattled-conformer generation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cloud import DecoratedPointCloud
from .metrics import ProbeFunction
from .o3 import IrrepLabel, real_solid_harmonics
from .quadrature import random_group_element

__all__ = [
    "pseudoscalar_Q",
    "pseudoscalar_Q_literal",
    "oracle",
    "constant_vector_probe",
    "random_band_limited_probe",
    "ConformerSpec",
    "rattled_conformers",
    "chbrclf_geometry",
]


def pseudoscalar_Q(x: DecoratedPointCloud) -> float:
    """Sum of bond triple products over all point quadruplets i<j<k<l.

    O(n^3) accumulation: expanding the quadruplet term into position triple
    products T(a,b,c) = det[r_a, r_b, r_c] and counting how often each ordered
    triple a<b<c appears gives the coefficient n - 1 + 2b - 2a - 2c.
    """
    pos = x.positions - x.centroid  # triple products are translation invariant
    n = len(pos)
    if n < 4:
        return 0.0
    total = 0.0
    for a in range(n - 2):
        for b in range(a + 1, n - 1):
            cross_ab = np.cross(pos[a], pos[b])
            for c in range(b + 1, n):
                coeff = n - 1 + 2 * b - 2 * a - 2 * c
                if coeff:
                    total += coeff * float(cross_ab @ pos[c])
    return total


def pseudoscalar_Q_literal(x: DecoratedPointCloud) -> float:
    """The literal O(n^4) quadruple loop; oracle for the accumulation above."""
    pos = x.positions
    n = len(pos)
    total = 0.0
    for i in range(n - 3):
        for j in range(i + 1, n - 2):
            for k in range(j + 1, n - 1):
                for l in range(k + 1, n):
                    bracket = np.cross(pos[j] - pos[l], pos[k] - pos[j])
                    total += float((pos[i] - pos[l]) @ bracket)
    return total


def _weighted_harmonic_sum(x: DecoratedPointCloud, lam: int, order: int) -> np.ndarray:
    u = x.positions - x.centroid
    blocks = real_solid_harmonics(u, lam)[lam]
    weights = np.sum(u * u, axis=1) ** order
    return weights @ np.atleast_2d(blocks)


def oracle(irrep: IrrepLabel, order: int = 1) -> ProbeFunction:
    """A nontrivial, exactly (lambda, sigma)-equivariant polynomial probe.

    sigma = +1: radially weighted solid-harmonic sums over centroid-relative
    positions (their parity under inversion is (-1)**lambda, which is exactly
    the (lambda, +1) action). sigma = -1: the same multiplied by the
    pseudoscalar Q, which flips the inversion sign without touching the
    rotation behavior. order >= 1 sets the radial polynomial degree and keeps
    the lambda = 1 sum from vanishing identically.
    """
    if order < 1:
        raise ValueError("order must be >= 1")
    lam, sigma = irrep.lam, irrep.sigma

    def evaluate(x: DecoratedPointCloud) -> dict[str, np.ndarray]:
        out = _weighted_harmonic_sum(x, lam, order)
        if sigma == -1:
            out = out * pseudoscalar_Q(x)
        return {"value": out}

    return ProbeFunction(evaluate, {"value": irrep})


def constant_vector_probe(c) -> ProbeFunction:
    """f(x) = c for every input; the Schur fixture with A_(1,+1) = ||c||."""
    c = np.asarray(c, dtype=float).ravel()
    if c.size != 3:
        raise ValueError("expected a 3-vector")
    return ProbeFunction(lambda x: {"value": c.copy()}, {"value": IrrepLabel(1, +1)})


def random_band_limited_probe(
    rng: np.random.Generator,
    lambda_max: int,
    out_dim: int = 7,
    order: int = 1,
    include_pseudo: bool = True,
) -> ProbeFunction:
    """A random mixture of exactly equivariant blocks, band-limited at lambda_max.

    Useful as a generic test function: its orbit expansion contains only
    irreps with lambda <= lambda_max, so exact grids of sufficient band limit
    reproduce all Haar averages.
    """
    mixers = []
    for lam in range(lambda_max + 1):
        for sigma in (+1, -1):
            if sigma == -1 and not include_pseudo:
                continue
            mixers.append((IrrepLabel(lam, sigma), rng.normal(size=(out_dim, 2 * lam + 1))))

    def evaluate(x: DecoratedPointCloud) -> dict[str, np.ndarray]:
        q = pseudoscalar_Q(x)
        out = np.zeros(mixers[0][1].shape[0])
        for label, M in mixers:
            block = _weighted_harmonic_sum(x, label.lam, order)
            if label.sigma == -1:
                block = block * q
            out = out + M @ block
        return {"value": out}

    return ProbeFunction(evaluate, {})


# -- datasets -----------------------------------------------------------------


def chbrclf_geometry() -> DecoratedPointCloud:
    """A chiral 5-point CHBrClF-like geometry (documented package constants).

    Tetrahedral heavy-atom placement around the carbon with representative
    covalent bond lengths in Angstrom; the specific values are package
    choices, any chiral 5-point cloud works for the learning experiments.
    """
    d = {"C-H": 1.09, "C-F": 1.35, "C-Cl": 1.77, "C-Br": 1.94}
    t = np.array(
        [
            [1.0, 1.0, 1.0],
            [1.0, -1.0, -1.0],
            [-1.0, 1.0, -1.0],
            [-1.0, -1.0, 1.0],
        ]
    ) / np.sqrt(3.0)
    positions = np.vstack(
        [
            np.zeros(3),                # C
            d["C-H"] * t[0],            # H
            d["C-F"] * t[1],            # F
            d["C-Cl"] * t[2],           # Cl
            d["C-Br"] * t[3],           # Br
        ]
    )
    species = np.array([6.0, 1.0, 9.0, 17.0, 35.0])
    return DecoratedPointCloud(positions, {"species": species})


@dataclass(frozen=True)
class ConformerSpec:
    base: DecoratedPointCloud
    rattle_sigma: float = 0.05
    count: int = 1000
    seed: int = 0
    random_orientation: bool = True

    def __post_init__(self):
        if self.rattle_sigma < 0:
            raise ValueError("rattle_sigma must be >= 0")
        if self.count < 1:
            raise ValueError("count must be >= 1")


def rattled_conformers(spec: ConformerSpec) -> list[tuple[DecoratedPointCloud, float]]:
    """Rattled (and optionally re-oriented) copies of the base, with exact Q labels.

    Each conformer draws from its own counter-based RNG stream, so the dataset
    is reproducible independent of evaluation order or thread count.
    """
    out = []
    for index in range(spec.count):
        rng = np.random.default_rng([spec.seed, index])
        pos = spec.base.positions + rng.normal(
            scale=spec.rattle_sigma, size=spec.base.positions.shape
        ) if spec.rattle_sigma > 0 else spec.base.positions.copy()
        if spec.random_orientation:
            g = random_group_element(rng)
            c = pos.mean(axis=0)
            pos = (pos - c) @ g.rotation.T + c
        cloud = DecoratedPointCloud(
            pos,
            {k: v.copy() for k, v in spec.base.scalar_attrs.items()},
            {k: v.copy() for k, v in spec.base.vector_attrs.items()},
            None if spec.base.cell is None else spec.base.cell.copy(),
        )
        q = pseudoscalar_Q(cloud)
        cloud = DecoratedPointCloud(
            cloud.positions, cloud.scalar_attrs, cloud.vector_attrs, cloud.cell, {"Q": q}
        )
        out.append((cloud, q))
    return out
