"""Equivariance error and character-projection diagnostics over O(3) orbits.

The efficient forms evaluate the probed function exactly once per grid node;
the direct double-average forms cost |grid|^2 evaluations and serve as
independent oracles for the efficient ones.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .cloud import DecoratedPointCloud, act
from .o3 import GroupElement, IrrepLabel, character, wigner_rotation_stack
from .quadrature import GridCapacityError, O3Grid
from .serialize import format_float

__all__ = [
    "ProbeFunction",
    "CountingProbe",
    "SerializingProbe",
    "SpectrumReport",
    "HeatmapTable",
    "NumericalInconsistencyError",
    "DegenerateNormError",
    "equivariance_error",
    "equivariance_error_direct",
    "character_projection",
    "character_projection_direct",
    "sum_rule_check",
    "accumulate_heatmap",
    "mean_normalized",
]

DEGENERATE_NORM = 1e-14
_RADICAND_SLACK = 1e-6


class NumericalInconsistencyError(ArithmeticError):
    """The quadrature produced an impossible value; the grid band limit is too low."""


class DegenerateNormError(ValueError):
    pass


@dataclass(frozen=True)
class ProbeFunction:
    """A deterministic map from a cloud to named flat real vectors."""

    evaluate: Callable[[DecoratedPointCloud], Mapping[str, np.ndarray]]
    declared_irreps: Mapping[str, IrrepLabel] = field(default_factory=dict)

    def __call__(self, x: DecoratedPointCloud) -> dict[str, np.ndarray]:
        out = self.evaluate(x)
        return {k: np.asarray(v, dtype=float).ravel() for k, v in out.items()}


class CountingProbe:
    """Wraps a probe and counts evaluate calls (for the call-budget tests)."""

    def __init__(self, inner: ProbeFunction):
        self.inner = inner
        self.calls = 0
        self.declared_irreps = inner.declared_irreps

    def __call__(self, x: DecoratedPointCloud) -> dict[str, np.ndarray]:
        self.calls += 1
        return self.inner(x)


class SerializingProbe:
    """Adapter that serializes concurrent invocations of a non-thread-safe probe."""

    def __init__(self, inner):
        self.inner = inner
        self._lock = threading.Lock()
        self.declared_irreps = getattr(inner, "declared_irreps", {})

    def __call__(self, x: DecoratedPointCloud) -> dict[str, np.ndarray]:
        with self._lock:
            return self.inner(x)


@dataclass
class SpectrumReport:
    """Irrep decomposition of the orbit-averaged squared norm of one output."""

    output: str
    lambda_max: int
    total_norm: float
    projections: dict[IrrepLabel, float]
    residual: float
    degenerate: bool = False

    @property
    def normalized(self) -> dict[IrrepLabel, float]:
        if self.degenerate:
            return {a: 0.0 for a in self.projections}
        return {a: b / self.total_norm for a, b in self.projections.items()}

    def to_json_dict(self) -> dict:
        return {
            "output": self.output,
            "lambda_max": self.lambda_max,
            "total_norm": self.total_norm,
            "degenerate": self.degenerate,
            "residual": self.residual,
            "projections": [
                {"lambda": a.lam, "sigma": a.sigma, "value": v, "normalized": nv}
                for (a, v), nv in zip(
                    sorted(self.projections.items()),
                    (self.normalized[a] for a in sorted(self.projections)),
                )
            ],
        }


def _orbit_evaluations(probe, output: str, x: DecoratedPointCloud, grid: O3Grid) -> np.ndarray:
    rows = [np.asarray(probe(act(g, x))[output], dtype=float).ravel() for g in grid.nodes]
    return np.stack(rows)


def _rho_stack(alpha: IrrepLabel, grid: O3Grid) -> np.ndarray:
    """rho_alpha(g) for every node, as an (n, d, d) stack."""
    D = wigner_rotation_stack(alpha.lam, grid.rotations())[alpha.lam]
    signs = np.array([alpha.inversion_sign() if g.parity else 1.0 for g in grid.nodes])
    return D * signs[:, None, None]


def _back_transform(F: np.ndarray, rho: np.ndarray, d: int) -> np.ndarray:
    """Apply rho(g^-1) blockwise to each row of F; rho orthogonal."""
    n, dim = F.shape
    k = dim // d
    # row-block b -> rho(g)^T b, i.e. b @ rho(g)
    return np.einsum("nkd,nde->nke", F.reshape(n, k, d), rho).reshape(n, dim)


def equivariance_error(
    probe, output: str, alpha: IrrepLabel, x: DecoratedPointCloud, grid: O3Grid
) -> float:
    """Single-average equivariance error: |grid| model evaluations.

    sqrt( <||f||^2>_G - ||< rho_alpha(g^-1) f(gx) >_G||^2 ), radicand clamped
    at zero; a radicand below -1e-6 * <||f||^2> signals grid insufficiency.
    """
    if not grid.covers_parity:
        raise ValueError("equivariance_error needs a parity-covering grid")
    F = _orbit_evaluations(probe, output, x, grid)
    if F.shape[1] % alpha.dim != 0:
        raise ValueError(
            f"output dim {F.shape[1]} is not a multiple of d_alpha = {alpha.dim}"
        )
    rho = _rho_stack(alpha, grid)
    back = _back_transform(F, rho, alpha.dim)
    w = grid.weights
    mean_back = w @ back
    # variance form: equals <||f||^2> - ||mean||^2 exactly (rho is orthogonal)
    # but avoids the catastrophic cancellation of the subtracted form when the
    # probe is nearly equivariant
    dev = back - mean_back
    radicand = float(w @ np.sum(dev * dev, axis=1))
    return _sqrt_clamped(radicand, float(w @ np.sum(F * F, axis=1)))


def _sqrt_clamped(radicand: float, scale: float) -> float:
    if radicand < -_RADICAND_SLACK * max(scale, 1e-300):
        raise NumericalInconsistencyError(
            f"negative radicand {radicand:.3e} (scale {scale:.3e}); "
            "the grid band limit is insufficient for this probe"
        )
    return float(np.sqrt(max(radicand, 0.0)))


def equivariance_error_direct(
    probe, output: str, alpha: IrrepLabel, x: DecoratedPointCloud, grid: O3Grid
) -> float:
    """Literal double-average form; |grid|^2 evaluations; oracle for the fast path."""
    if not grid.covers_parity:
        raise ValueError("equivariance_error_direct needs a parity-covering grid")
    w = grid.weights
    rho = _rho_stack(alpha, grid)
    d = alpha.dim
    total = 0.0
    for h, wh in zip(grid.nodes, w):
        fh = np.asarray(probe(act(h, x))[output], dtype=float).ravel()
        if fh.size % d != 0:
            raise ValueError(f"output dim {fh.size} is not a multiple of {d}")
        rows = np.stack(
            [
                np.asarray(probe(act(g.compose(h), x))[output], dtype=float).ravel()
                for g in grid.nodes
            ]
        )
        back = _back_transform(rows, rho, d)
        inner = w @ back
        diff = fh - inner
        total += wh * float(diff @ diff)
    return _sqrt_clamped(total, total + 1.0e-30)


def _parity_pairs(grid: O3Grid) -> tuple[np.ndarray, np.ndarray]:
    """Indices of (proper, improper) node pairs sharing a rotation.

    Relies on the pair layout produced by extend_to_o3.
    """
    if not grid.covers_parity or len(grid) % 2 != 0:
        raise ValueError("grid does not cover parity")
    proper = np.arange(0, len(grid), 2)
    improper = proper + 1
    for i, j in zip(proper, improper):
        gi, gj = grid.nodes[i], grid.nodes[j]
        if gi.parity or not gj.parity or not np.array_equal(gi.rotation, gj.rotation):
            raise ValueError("grid nodes are not in (proper, improper) pair layout")
    return proper, improper


def character_projection(
    probe, output: str, x: DecoratedPointCloud, grid: O3Grid, lambda_max: int
) -> SpectrumReport:
    """All B_alpha with lambda <= lambda_max from one sweep over the grid.

    The orbit function F(g) = f(gx) is split into parity-even and parity-odd
    parts across the inversion coset; each part is analyzed with the SO(3)
    group-Fourier transform, whose per-lambda Plancherel weights give B_alpha.
    """
    if lambda_max > grid.band_limit:
        raise GridCapacityError(
            f"lambda_max {lambda_max} exceeds grid band limit {grid.band_limit}"
        )
    proper, improper = _parity_pairs(grid)
    F = _orbit_evaluations(probe, output, x, grid)
    w = grid.weights
    total_norm = float(w @ np.sum(F * F, axis=1))

    w_rot = 2.0 * w[proper]  # SO(3) weights of the shared rotations
    F_even = 0.5 * (F[proper] + F[improper])
    F_odd = 0.5 * (F[proper] - F[improper])
    rots = np.stack([grid.nodes[i].rotation for i in proper])
    D = wigner_rotation_stack(lambda_max, rots)

    projections: dict[IrrepLabel, float] = {}
    for lam in range(lambda_max + 1):
        for eps, part in ((+1, F_even), (-1, F_odd)):
            coeff = np.einsum("g,gmn,gd->mnd", w_rot, D[lam], part)
            b = (2 * lam + 1) * float(np.sum(coeff * coeff))
            sigma = eps * (-1) ** lam
            projections[IrrepLabel(lam, sigma)] = b

    residual = total_norm - sum(projections.values())
    return SpectrumReport(
        output=output,
        lambda_max=lambda_max,
        total_norm=total_norm,
        projections=projections,
        residual=residual,
        degenerate=total_norm < DEGENERATE_NORM,
    )


def character_projection_direct(
    probe, output: str, x: DecoratedPointCloud, grid: O3Grid, alpha: IrrepLabel
) -> float:
    """Literal d^2 <|| <chi(h^-1) t(h g x)>_h ||^2>_g double average; the oracle."""
    if not grid.covers_parity:
        raise ValueError("character_projection_direct needs a parity-covering grid")
    w = grid.weights
    chis = np.array([character(alpha, h) for h in grid.nodes])
    total = 0.0
    for g, wg in zip(grid.nodes, w):
        rows = np.stack(
            [
                np.asarray(probe(act(h.compose(g), x))[output], dtype=float).ravel()
                for h in grid.nodes
            ]
        )
        inner = (w * chis) @ rows
        total += wg * float(inner @ inner)
    return alpha.dim**2 * total


def sum_rule_check(report: SpectrumReport) -> float:
    """(total_norm - sum B_alpha) / total_norm; the truncated tail fraction."""
    if report.degenerate:
        return 0.0
    return report.residual / report.total_norm


# -- heatmaps -----------------------------------------------------------------

UNTRAINED = "U"


@dataclass
class HeatmapTable:
    """Normalized character projections per (layer, epoch) column.

    Epochs are integers, plus the dedicated pre-training slot
    HeatmapTable.UNTRAINED ("U") that sorts before epoch 0.
    """

    lambda_max: int
    columns: dict[tuple[str, object], dict[IrrepLabel, float]] = field(default_factory=dict)

    UNTRAINED = UNTRAINED

    def labels(self) -> list[IrrepLabel]:
        return [
            IrrepLabel(lam, sigma)
            for sigma in (+1, -1)
            for lam in range(self.lambda_max + 1)
        ]

    def epochs(self) -> list[object]:
        seen = {e for (_, e) in self.columns}
        ints = sorted(e for e in seen if e != UNTRAINED)
        return ([UNTRAINED] if UNTRAINED in seen else []) + ints

    def layers(self) -> list[str]:
        return sorted({l for (l, _) in self.columns})

    def to_csv(self) -> str:
        lines = ["layer,epoch,lambda,sigma,value"]
        for layer in self.layers():
            for epoch in self.epochs():
                col = self.columns.get((layer, epoch))
                if col is None:
                    continue
                for a in self.labels():
                    lines.append(
                        f"{layer},{epoch},{a.lam},{a.sigma},{format_float(col.get(a, 0.0))}"
                    )
        return "\n".join(lines) + "\n"

    def to_json_dict(self) -> dict:
        return {
            "lambda_max": self.lambda_max,
            "columns": [
                {
                    "layer": layer,
                    "epoch": epoch,
                    "values": [
                        {"lambda": a.lam, "sigma": a.sigma, "value": v}
                        for a, v in sorted(col.items())
                    ],
                }
                for (layer, epoch), col in sorted(
                    self.columns.items(),
                    key=lambda kv: (kv[0][0], kv[0][1] == UNTRAINED and -1 or 0,
                                    kv[0][1] if kv[0][1] != UNTRAINED else -1),
                )
            ],
        }


def mean_normalized(reports: Sequence[SpectrumReport]) -> dict[IrrepLabel, float]:
    """Arithmetic mean of per-structure normalized projections."""
    if not reports:
        raise ValueError("no reports to average")
    keys = reports[0].projections.keys()
    return {a: float(np.mean([r.normalized[a] for r in reports])) for a in keys}


def accumulate_heatmap(
    table: HeatmapTable, epoch, layer: str, report: SpectrumReport | Sequence[SpectrumReport]
) -> HeatmapTable:
    """Append or overwrite one (layer, epoch) column; lists of reports are averaged."""
    reports = [report] if isinstance(report, SpectrumReport) else list(report)
    for r in reports:
        if r.lambda_max != table.lambda_max:
            raise ValueError(
                f"report lambda_max {r.lambda_max} != table lambda_max {table.lambda_max}"
            )
    table.columns[(layer, epoch)] = mean_normalized(reports)
    return table
