"""Representation theory of O(3) in the real spherical-harmonic basis.

Irrep labels (lambda, sigma), group elements (rotation + parity), real
Wigner-D blocks, characters, real solid harmonics, and the conversion of
symmetric rank-2 Cartesian tensors into their (0,+1) and (2,+1) parts.

Conventions (fixed here, self-consistent throughout the package):
  * real spherical harmonics, orthonormal on the sphere, component order
    m = -lambda .. +lambda; for lambda = 1 this is (y, z, x) up to the
    common normalization constant,
  * spatial inversion acts on irrep (lambda, sigma) as
    sigma * (-1)**lambda * identity, so that vectors are (1, +1) and
    pseudovectors (1, -1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "IrrepLabel",
    "GroupElement",
    "WignerBlock",
    "wigner_d",
    "wigner_rotation_stack",
    "character",
    "real_solid_harmonics",
    "cartesian_rank2_to_spherical",
    "spherical_to_cartesian_rank2",
]

_ORTHO_TOL = 1e-12


@dataclass(frozen=True, order=True)
class IrrepLabel:
    """An O(3) irrep (lambda, sigma); dimension 2*lambda + 1."""

    lam: int
    sigma: int

    def __post_init__(self):
        if self.lam < 0 or int(self.lam) != self.lam:
            raise ValueError(f"lambda must be a non-negative integer, got {self.lam}")
        if self.sigma not in (+1, -1):
            raise ValueError(f"sigma must be +1 or -1, got {self.sigma}")

    @property
    def dim(self) -> int:
        return 2 * self.lam + 1

    def inversion_sign(self) -> int:
        """Scalar by which spatial inversion acts on this irrep."""
        return self.sigma * (-1) ** self.lam

    def __str__(self) -> str:
        return f"({self.lam},{'+' if self.sigma > 0 else '-'}1)"


@dataclass(frozen=True)
class GroupElement:
    """An element of O(3): a proper rotation optionally composed with inversion."""

    rotation: np.ndarray
    parity: bool = False

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=float)
        if R.shape != (3, 3):
            raise ValueError("rotation must be a 3x3 matrix")
        if not np.allclose(R.T @ R, np.eye(3), atol=_ORTHO_TOL * 10):
            raise ValueError("rotation part is not orthogonal")
        if np.linalg.det(R) < 0:
            raise ValueError("rotation part must have determinant +1; use parity=True")
        object.__setattr__(self, "rotation", R)
        self.rotation.setflags(write=False)

    @classmethod
    def identity(cls) -> "GroupElement":
        return cls(np.eye(3))

    @classmethod
    def inversion(cls) -> "GroupElement":
        return cls(np.eye(3), parity=True)

    def compose(self, other: "GroupElement") -> "GroupElement":
        """self * other: inversion commutes with every rotation."""
        return GroupElement(self.rotation @ other.rotation, self.parity ^ other.parity)

    def inverse(self) -> "GroupElement":
        return GroupElement(self.rotation.T, self.parity)

    def matrix(self) -> np.ndarray:
        """The full O(3) matrix acting on Cartesian vectors."""
        return -self.rotation if self.parity else self.rotation

    def rotation_angle(self) -> float:
        """Angle of the proper-rotation part, in [0, pi]."""
        c = (np.trace(self.rotation) - 1.0) / 2.0
        return math.acos(min(1.0, max(-1.0, c)))

    def apply(self, vectors: np.ndarray) -> np.ndarray:
        """Act on an (..., 3) array of Cartesian vectors."""
        return np.asarray(vectors) @ self.matrix().T


@dataclass(frozen=True)
class WignerBlock:
    label: IrrepLabel
    matrix: np.ndarray


def _rotation_in_yzx(R: np.ndarray) -> np.ndarray:
    """Permute a Cartesian rotation matrix into the m = (-1, 0, 1) ~ (y, z, x) order."""
    perm = [1, 2, 0]
    return R[np.ix_(perm, perm)]


def _wigner_next(lam: int, Dlm1: np.ndarray, D1: np.ndarray) -> np.ndarray:
    """One step of the real-basis recursion: D^lam from D^(lam-1) and D^1.

    Vectorized over a leading batch axis: D1 is (N, 3, 3), Dlm1 is
    (N, 2*lam-1, 2*lam-1); returns (N, 2*lam+1, 2*lam+1).
    """
    size = 2 * lam + 1
    N = D1.shape[0]
    out = np.empty((N, size, size))

    def prev(a, b):
        return Dlm1[:, a + lam - 1, b + lam - 1]

    def r1(i, j):
        return D1[:, i + 1, j + 1]

    def P(i, a, b):
        if b == lam:
            return r1(i, 1) * prev(a, lam - 1) - r1(i, -1) * prev(a, -lam + 1)
        if b == -lam:
            return r1(i, 1) * prev(a, -lam + 1) + r1(i, -1) * prev(a, lam - 1)
        return r1(i, 0) * prev(a, b)

    for m in range(-lam, lam + 1):
        for n in range(-lam, lam + 1):
            d = 1.0 if m == 0 else 0.0
            if abs(n) < lam:
                denom = (lam + n) * (lam - n)
            else:
                denom = (2 * lam) * (2 * lam - 1)
            u = math.sqrt((lam + m) * (lam - m) / denom)
            v = 0.5 * math.sqrt((1 + d) * (lam + abs(m) - 1) * (lam + abs(m)) / denom) * (1 - 2 * d)
            w = -0.5 * math.sqrt((lam - abs(m) - 1) * (lam - abs(m)) / denom) * (1 - d)

            term = 0.0
            if u != 0.0:
                term = u * P(0, m, n)
            if v != 0.0:
                if m == 0:
                    V = P(1, 1, n) + P(-1, -1, n)
                elif m > 0:
                    V = P(1, m - 1, n) * math.sqrt(1 + (1.0 if m == 1 else 0.0))
                    if m != 1:
                        V = V - P(-1, -m + 1, n)
                else:
                    V = P(-1, -m - 1, n) * math.sqrt(1 + (1.0 if m == -1 else 0.0))
                    if m != -1:
                        V = V + P(1, m + 1, n)
                term = term + v * V
            if w != 0.0:
                if m > 0:
                    W = P(1, m + 1, n) + P(-1, -m - 1, n)
                else:
                    W = P(1, m - 1, n) - P(-1, -m + 1, n)
                term = term + w * W
            out[:, m + lam, n + lam] = term
    return out


def wigner_rotation_stack(lam_max: int, rotations: np.ndarray) -> list[np.ndarray]:
    """Real Wigner-D matrices of proper rotations for all lambda <= lam_max.

    rotations: (N, 3, 3) Cartesian rotation matrices. Returns a list whose
    lam-th entry has shape (N, 2*lam+1, 2*lam+1).
    """
    rotations = np.asarray(rotations, dtype=float)
    squeeze = rotations.ndim == 2
    if squeeze:
        rotations = rotations[None]
    N = rotations.shape[0]
    blocks = [np.ones((N, 1, 1))]
    if lam_max >= 1:
        D1 = np.empty((N, 3, 3))
        perm = [1, 2, 0]
        D1[:] = rotations[:, perm][:, :, perm]
        blocks.append(D1)
    for lam in range(2, lam_max + 1):
        blocks.append(_wigner_next(lam, blocks[-1], blocks[1]))
    if squeeze:
        blocks = [b[0] for b in blocks]
    return blocks


def wigner_d(label: IrrepLabel, g: GroupElement) -> WignerBlock:
    """The real-basis representation matrix of g for irrep (lambda, sigma)."""
    D = wigner_rotation_stack(label.lam, g.rotation)[label.lam]
    if g.parity:
        D = label.inversion_sign() * D
    return WignerBlock(label, D)


def character(label: IrrepLabel, g: GroupElement) -> float:
    """chi_alpha(g) = Tr rho_alpha(g), evaluated from the rotation angle."""
    omega = g.rotation_angle()
    lam = label.lam
    # Dirichlet-kernel form sin((2l+1)w/2)/sin(w/2) written as a cosine sum:
    # exact for every omega, no small-denominator limit handling needed.
    chi = 1.0 + 2.0 * sum(math.cos(k * omega) for k in range(1, lam + 1))
    if g.parity:
        chi *= label.inversion_sign()
    return chi


# -- real solid harmonics ----------------------------------------------------


def real_solid_harmonics(r: np.ndarray, lam_max: int) -> list[np.ndarray]:
    """Real solid harmonics r^lam * Y_lam^m(r_hat) for all lam <= lam_max.

    r: (..., 3) Cartesian points (the origin is fine: solid harmonics are
    homogeneous polynomials). Returns a list of (..., 2*lam+1) blocks in
    m = -lam..lam order, orthonormal-on-the-sphere normalization. Each block
    transforms under a rotation R by the matrix wigner_d((lam, +1), R).
    """
    if lam_max < 0:
        raise ValueError("lam_max must be >= 0")
    r = np.asarray(r, dtype=float)
    squeeze = r.ndim == 1
    pts = np.atleast_2d(r)
    x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
    r2 = x * x + y * y + z * z
    n = pts.shape[0]

    # Homogeneous-polynomial recursion on the solid harmonics themselves,
    # so r = 0 needs no special casing.
    c0 = 1.0 / math.sqrt(4.0 * math.pi)
    if lam_max == 0:
        blk = np.full((n, 1), c0)
        return [blk[0] if squeeze else blk]

    # Unnormalized building blocks: P[m] = r^lam * (assoc Legendre) parts via
    # the standard sectoral/tesseral recurrences in Cartesian form.
    # S_l^m for m >= 0: c_l^m * A_l^m where A follows:
    #   A_l^l   = (2l-1) * (x * A_{l-1}^{l-1} - y * B_{l-1}^{l-1})   (cos-sector)
    #   B_l^l   = (2l-1) * (y * A_{l-1}^{l-1} + x * B_{l-1}^{l-1})   (sin-sector)
    #   A_l^m   = ((2l-1) z A_{l-1}^m - (l-1+m) r^2 A_{l-2}^m) / (l - m)
    A = {(0, 0): np.ones(n)}
    B = {(0, 0): np.zeros(n)}
    for lam in range(1, lam_max + 1):
        A[(lam, lam)] = (2 * lam - 1) * (x * A[(lam - 1, lam - 1)] - y * B[(lam - 1, lam - 1)])
        B[(lam, lam)] = (2 * lam - 1) * (y * A[(lam - 1, lam - 1)] + x * B[(lam - 1, lam - 1)])
        for m in range(0, lam):
            upper = (2 * lam - 1) * z * A[(lam - 1, m)]
            if lam >= m + 2:
                upper = upper - (lam - 1 + m) * r2 * A[(lam - 2, m)]
            A[(lam, m)] = upper / (lam - m)
            if m > 0:
                upperB = (2 * lam - 1) * z * B[(lam - 1, m)]
                if lam >= m + 2:
                    upperB = upperB - (lam - 1 + m) * r2 * B[(lam - 2, m)]
                B[(lam, m)] = upperB / (lam - m)

    out = [np.full((n, 1), c0)]
    for lam in range(1, lam_max + 1):
        blk = np.empty((n, 2 * lam + 1))
        for m in range(0, lam + 1):
            norm = math.sqrt(
                (2 * lam + 1)
                / (4.0 * math.pi)
                * math.factorial(lam - m)
                / math.factorial(lam + m)
            )
            if m > 0:
                norm *= math.sqrt(2.0)
            blk[:, lam + m] = norm * A[(lam, m)]
            if m > 0:
                blk[:, lam - m] = norm * B[(lam, m)]
        out.append(blk)
    if squeeze:
        out = [b[0] for b in out]
    return out


# -- symmetric rank-2 Cartesian tensors --------------------------------------

_SQ2 = math.sqrt(2.0)
_SQ3 = math.sqrt(3.0)
_SQ6 = math.sqrt(6.0)


def cartesian_rank2_to_spherical(T: np.ndarray) -> tuple[float, np.ndarray]:
    """Split a symmetric 3x3 tensor into its (0,+1) scalar and (2,+1) 5-vector.

    The embedding is orthonormal in the Frobenius inner product:
    ||T||_F^2 = scalar^2 + ||vec||^2, identity maps to (sqrt(3), 0).
    """
    T = np.asarray(T, dtype=float)
    if T.shape != (3, 3):
        raise ValueError("expected a 3x3 tensor")
    if not np.allclose(T, T.T, atol=1e-10):
        raise ValueError("tensor is not symmetric")
    scalar = np.trace(T) / _SQ3
    vec = np.array(
        [
            _SQ2 * T[0, 1],                                # ~ xy
            _SQ2 * T[1, 2],                                # ~ yz
            (2.0 * T[2, 2] - T[0, 0] - T[1, 1]) / _SQ6,    # ~ 3z^2 - r^2
            _SQ2 * T[0, 2],                                # ~ xz
            (T[0, 0] - T[1, 1]) / _SQ2,                    # ~ x^2 - y^2
        ]
    )
    return float(scalar), vec


def spherical_to_cartesian_rank2(scalar: float, vec: np.ndarray) -> np.ndarray:
    """Inverse of cartesian_rank2_to_spherical."""
    vec = np.asarray(vec, dtype=float)
    T = np.empty((3, 3))
    T[0, 1] = T[1, 0] = vec[0] / _SQ2
    T[1, 2] = T[2, 1] = vec[1] / _SQ2
    T[0, 2] = T[2, 0] = vec[3] / _SQ2
    iso = scalar / _SQ3
    T[2, 2] = iso + 2.0 * vec[2] / _SQ6
    T[0, 0] = iso - vec[2] / _SQ6 + vec[4] / _SQ2
    T[1, 1] = iso - vec[2] / _SQ6 - vec[4] / _SQ2
    return T
