"""Symmetry purification of a linear readout.

Minimizes L = L_mu + gamma * L_sigma in closed form, where L_mu is the
group-averaged prediction error of theta^T phi(gx) against rho(g) y and
L_sigma is the variance of the back-transformed predictions over the orbit
(the squared equivariance error). Everything reduces to moment matrices
accumulated in a single sweep over the training samples.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg

from .metrics import NumericalInconsistencyError
from .o3 import IrrepLabel, wigner_rotation_stack
from .quadrature import O3Grid
from .serialize import dumps_decimal, format_float

__all__ = [
    "ReadoutSample",
    "NormalAccumulator",
    "PurifiedReadout",
    "assemble",
    "solve",
    "evaluate_tradeoff",
    "loss_terms",
    "empirical_loss",
    "tradeoff_to_csv",
    "contaminated_fixture",
]

BASE_RIDGE = 1e-10


@dataclass(frozen=True)
class ReadoutSample:
    """Features phi(g x) tabulated on the grid nodes, plus the target y."""

    features_on_grid: np.ndarray  # (n_nodes, feature_dim)
    target: np.ndarray  # (out_dim,)


def _rho_inverse_stack(grid: O3Grid, irrep: IrrepLabel, blocks: int) -> np.ndarray:
    """Block-diagonal rho(g^-1) on the stacked output, per node: (n, O, O)."""
    d = irrep.dim
    D = wigner_rotation_stack(irrep.lam, grid.rotations())[irrep.lam]
    signs = np.array([irrep.inversion_sign() if g.parity else 1.0 for g in grid.nodes])
    Dinv = np.transpose(D, (0, 2, 1)) * signs[:, None, None]
    n = len(grid)
    out = np.zeros((n, blocks * d, blocks * d))
    for b in range(blocks):
        out[:, b * d : (b + 1) * d, b * d : (b + 1) * d] = Dinv
    return out


@dataclass
class NormalAccumulator:
    """Single-sweep moment matrices for the combined purification loss.

    Merging accumulators is plain addition, so shards computed concurrently
    combine exactly.
    """

    grid_key: tuple
    out_irrep: IrrepLabel
    blocks: int
    feature_dim: int
    count: int = 0
    gram: np.ndarray | None = None          # sum_s <phi phi^T>_g
    cross: np.ndarray | None = None         # sum_s <phi (rho_g y)^T>_g
    target_sq: float = 0.0                  # sum_s ||y||^2
    mean_form: np.ndarray | None = None     # sum_s sum_o P_o P_o^T (FO x FO)

    @property
    def out_dim(self) -> int:
        return self.blocks * self.out_irrep.dim

    def merge(self, other: "NormalAccumulator") -> "NormalAccumulator":
        if (self.grid_key, self.out_irrep, self.blocks, self.feature_dim) != (
            other.grid_key,
            other.out_irrep,
            other.blocks,
            other.feature_dim,
        ):
            raise ValueError("cannot merge accumulators with different problem shapes")
        merged = NormalAccumulator(
            self.grid_key, self.out_irrep, self.blocks, self.feature_dim
        )
        merged.count = self.count + other.count
        merged.gram = self.gram + other.gram
        merged.cross = self.cross + other.cross
        merged.target_sq = self.target_sq + other.target_sq
        merged.mean_form = self.mean_form + other.mean_form
        return merged


def _grid_key(grid: O3Grid) -> tuple:
    return (len(grid), grid.band_limit, grid.covers_parity, float(grid.weights[0]))


def assemble(
    samples: Iterable[ReadoutSample],
    grid: O3Grid,
    out_irrep: IrrepLabel,
    blocks: int = 1,
) -> NormalAccumulator:
    """Accumulate the normal system over a sample stream in one pass.

    Memory is independent of the number of samples. All samples must carry
    features tabulated on the same grid.
    """
    rho_inv = _rho_inverse_stack(grid, out_irrep, blocks)
    w = grid.weights
    O = blocks * out_irrep.dim
    acc: NormalAccumulator | None = None
    for sample in samples:
        phi = np.asarray(sample.features_on_grid, dtype=float)
        y = np.asarray(sample.target, dtype=float).ravel()
        if phi.ndim != 2 or phi.shape[0] != len(grid):
            raise ValueError(
                f"features_on_grid must be ({len(grid)}, feature_dim); got {phi.shape}"
            )
        if y.size != O:
            raise ValueError(f"target must have dimension {O}, got {y.size}")
        if acc is None:
            F = phi.shape[1]
            acc = NormalAccumulator(_grid_key(grid), out_irrep, blocks, F)
            acc.gram = np.zeros((F, F))
            acc.cross = np.zeros((F, O))
            acc.mean_form = np.zeros((F * O, F * O))
        elif phi.shape[1] != acc.feature_dim:
            raise ValueError("feature_dim changed across samples")

        acc.count += 1
        acc.gram += np.einsum("g,gf,ge->fe", w, phi, phi)
        # rho(g) y = (rho(g^-1))^T y
        rho_y = np.einsum("gpo,p->go", rho_inv, y)
        acc.cross += np.einsum("g,gf,go->fo", w, phi, rho_y)
        acc.target_sq += float(y @ y)
        # P[o, f, p] = < rho_inv[o, p] phi[f] >_g
        P = np.einsum("g,gop,gf->ofp", w, rho_inv, phi)
        acc.mean_form += np.einsum("ofp,oqr->fpqr", P, P).reshape(
            acc.feature_dim * O, acc.feature_dim * O
        )
    if acc is None:
        raise ValueError("empty sample stream: the readout problem is underdetermined")
    return acc


def loss_terms(acc: NormalAccumulator, theta: np.ndarray) -> tuple[float, float]:
    """(L_mu, L_sigma) of the accumulated quadratic forms at theta."""
    F, O = acc.feature_dim, acc.out_dim
    theta = np.asarray(theta, dtype=float).reshape(F, O)
    tv = theta.reshape(-1)
    quad_gram = float(np.einsum("fo,fe,eo->", theta, acc.gram, theta))
    l_mu = quad_gram - 2.0 * float(np.sum(theta * acc.cross)) + acc.target_sq
    l_sigma = quad_gram - float(tv @ acc.mean_form @ tv)
    return l_mu, l_sigma


def empirical_loss(
    theta: np.ndarray,
    samples: Sequence[ReadoutSample],
    grid: O3Grid,
    out_irrep: IrrepLabel,
    blocks: int = 1,
) -> tuple[float, float]:
    """(L_mu, L_sigma) recomputed directly from samples in residual form.

    Equals loss_terms on the assembled accumulator, but free of the
    large-term cancellation of the quadratic form, so exact fits report
    losses at the square of machine epsilon.
    """
    rho_inv = _rho_inverse_stack(grid, out_irrep, blocks)
    F, O = theta.shape if np.ndim(theta) == 2 else (len(theta), 1)
    theta = np.asarray(theta, dtype=float).reshape(F, O)
    l_mu = l_sigma = 0.0
    for s in samples:
        e, a = _per_sample_metrics(theta, s, grid, rho_inv)
        l_mu += e
        l_sigma += a
    return l_mu, l_sigma


@dataclass(frozen=True)
class PurifiedReadout:
    theta: np.ndarray
    gamma: float
    ridge: float
    achieved_L_mu: float
    achieved_L_sigma: float
    condition_report: tuple[float, float]  # (smallest, largest eigenvalue)


def solve(acc: NormalAccumulator, gamma: float, ridge: float = 0.0) -> PurifiedReadout:
    """Minimize L_mu + gamma * L_sigma + ridge * ||theta||^2 in closed form.

    A small trace-scaled ridge is always added on top of the caller's, since
    last-layer features are generically rank deficient over small datasets.
    """
    if gamma < 0 or ridge < 0:
        raise ValueError("gamma and ridge must be non-negative")
    F, O = acc.feature_dim, acc.out_dim
    dim = F * O
    gram_kron = np.kron(acc.gram, np.eye(O))
    M = (1.0 + gamma) * gram_kron - gamma * acc.mean_form
    eigs = scipy.linalg.eigvalsh(M)
    scale = max(abs(eigs[0]), abs(eigs[-1]), 1e-300)
    if eigs[0] < -1e-8 * scale:
        raise NumericalInconsistencyError(
            f"normal matrix indefinite (min eig {eigs[0]:.3e} at scale {scale:.3e}); "
            "L_sigma should be a variance"
        )
    ridge_eff = ridge + BASE_RIDGE * np.trace(acc.gram) / F
    A = M + ridge_eff * np.eye(dim)
    b = acc.cross.reshape(-1)
    c, low = scipy.linalg.cho_factor(A)
    theta_vec = scipy.linalg.cho_solve((c, low), b)
    theta = theta_vec.reshape(F, O)
    l_mu, l_sigma = loss_terms(acc, theta)
    return PurifiedReadout(
        theta=theta,
        gamma=gamma,
        ridge=ridge_eff,
        achieved_L_mu=l_mu,
        achieved_L_sigma=l_sigma,
        condition_report=(float(eigs[0] + ridge_eff), float(eigs[-1] + ridge_eff)),
    )


def _per_sample_metrics(
    theta: np.ndarray,
    sample: ReadoutSample,
    grid: O3Grid,
    rho_inv: np.ndarray,
) -> tuple[float, float]:
    """(group-averaged squared error, squared equivariance error) for one sample."""
    w = grid.weights
    pred = sample.features_on_grid @ theta  # (n, O)
    back = np.einsum("gop,gp->go", rho_inv, pred)
    resid = back - sample.target[None, :]
    sq_err = float(w @ np.sum(resid * resid, axis=1))
    mean_back = w @ back
    dev = back - mean_back
    a_sq = float(w @ np.sum(dev * dev, axis=1))
    return sq_err, a_sq


def evaluate_tradeoff(
    readouts: Sequence[PurifiedReadout],
    heldout: Sequence[ReadoutSample],
    grid: O3Grid,
    out_irrep: IrrepLabel,
    blocks: int = 1,
) -> list[dict]:
    """Fig.-style tradeoff rows: one dict (gamma, rmse, equivariance_error) per readout."""
    if not heldout:
        raise ValueError("no held-out samples")
    rho_inv = _rho_inverse_stack(grid, out_irrep, blocks)
    O = blocks * out_irrep.dim
    rows = []
    for r in readouts:
        sq, asq = 0.0, 0.0
        for s in heldout:
            e, a = _per_sample_metrics(r.theta, s, grid, rho_inv)
            sq += e
            asq += a
        n = len(heldout)
        rows.append(
            {
                "gamma": r.gamma,
                "rmse": float(np.sqrt(sq / (n * O))),
                "equivariance_error": float(np.sqrt(max(asq / n, 0.0))),
            }
        )
    return rows


def tradeoff_to_csv(rows: Sequence[dict]) -> str:
    lines = ["gamma,rmse,equivariance_error"]
    for r in rows:
        lines.append(
            ",".join(
                format_float(r[k]) for k in ("gamma", "rmse", "equivariance_error")
            )
        )
    return "\n".join(lines) + "\n"


def contaminated_fixture(
    rng: np.random.Generator,
    grid: O3Grid,
    out_irrep: IrrepLabel = IrrepLabel(1, +1),
    n_train: int = 60,
    n_heldout: int = 30,
    leak_scale: float = 0.1,
    contamination: float = 0.5,
    noise_scale: float = 1.0,
) -> tuple[list[ReadoutSample], list[ReadoutSample]]:
    """Synthetic readout problem where accuracy tempts the fit into asymmetry.

    Features per sample: an exactly equivariant channel carrying the bulk of
    the target, plus a "leaky" channel that carries a small predictable target
    component (scale leak_scale * noise_scale) but transforms incorrectly by a
    contamination-sized perturbation. The target also has an unlearnable white
    component (noise_scale) setting the error floor. A plain least-squares fit
    uses the leaky channel and inherits its equivariance error; down-weighting
    that channel removes most of the error at a small accuracy cost of order
    (leak_scale)^2 / 2 relative.
    """
    d = out_irrep.dim
    rho_inv = _rho_inverse_stack(grid, out_irrep, 1)
    rho = np.transpose(rho_inv, (0, 2, 1))  # rho(g) per node
    # fixed non-equivariant pattern shared by all samples
    omega = rng.normal(size=(len(grid), d))
    sqrt_d = float(np.sqrt(d))

    def make(n: int) -> list[ReadoutSample]:
        samples = []
        for _ in range(n):
            u = rng.normal(size=d)  # learnable equivariant part
            delta = leak_scale * noise_scale * rng.normal(size=d)
            eta = noise_scale * rng.normal(size=d)  # unlearnable floor
            equi = np.einsum("gop,p->go", rho, u)
            leaky = np.einsum("gop,p->go", rho, delta) + contamination * omega * (
                np.linalg.norm(delta) / sqrt_d
            )
            phi = np.concatenate([equi, leaky], axis=1)
            samples.append(ReadoutSample(phi, u + delta + eta))
        return samples

    return make(n_train), make(n_heldout)


def accumulator_to_json(acc: NormalAccumulator) -> str:
    return dumps_decimal(
        {
            "out_irrep": {"lambda": acc.out_irrep.lam, "sigma": acc.out_irrep.sigma},
            "blocks": acc.blocks,
            "feature_dim": acc.feature_dim,
            "count": acc.count,
            "gram": acc.gram,
            "cross": acc.cross,
            "target_sq": acc.target_sq,
            "mean_form": acc.mean_form,
        }
    )


def readout_to_json(r: PurifiedReadout) -> str:
    return dumps_decimal(
        {
            "theta": r.theta,
            "gamma": r.gamma,
            "ridge": r.ridge,
            "achieved_L_mu": r.achieved_L_mu,
            "achieved_L_sigma": r.achieved_L_sigma,
            "condition_report": list(r.condition_report),
        }
    )
