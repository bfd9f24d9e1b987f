"""Decorated point clouds, the O(3) action on them, and extended-XYZ I/O."""

from __future__ import annotations

import io
import re
from dataclasses import dataclass, field
from typing import Iterable, TextIO

import numpy as np

from .o3 import GroupElement
from .serialize import format_float

__all__ = [
    "DecoratedPointCloud",
    "act",
    "pairwise_edges",
    "read_xyz",
    "write_xyz",
    "XYZParseError",
    "CoincidentPointsError",
    "SPECIES_SYMBOLS",
]

# Symbol table for the species scalar attribute: symbol -> integer code
# (atomic number). Covers the elements that plausibly appear in desk-scale
# molecular files; unknown symbols get negative ad-hoc codes on read.
SPECIES_SYMBOLS = (
    "H He Li Be B C N O F Ne Na Mg Al Si P S Cl Ar K Ca Sc Ti V Cr Mn Fe Co Ni "
    "Cu Zn Ga Ge As Se Br Kr Rb Sr Y Zr Nb Mo Tc Ru Rh Pd Ag Cd In Sn Sb Te I Xe"
).split()
_SYMBOL_TO_CODE = {s: i + 1 for i, s in enumerate(SPECIES_SYMBOLS)}
_CODE_TO_SYMBOL = {i + 1: s for i, s in enumerate(SPECIES_SYMBOLS)}


class XYZParseError(ValueError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class CoincidentPointsError(ValueError):
    def __init__(self, i: int, j: int):
        super().__init__(f"points {i} and {j} coincide (zero separation)")
        self.pair = (i, j)


@dataclass(frozen=True)
class DecoratedPointCloud:
    """Positions plus named per-point decorations; the model input x.

    scalar_attrs are invariant under the group action; vector_attrs co-rotate
    with the positions. info carries per-cloud scalars (e.g. a target value)
    and is not touched by the group action.
    """

    positions: np.ndarray
    scalar_attrs: dict[str, np.ndarray] = field(default_factory=dict)
    vector_attrs: dict[str, np.ndarray] = field(default_factory=dict)
    cell: np.ndarray | None = None
    info: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        if pos.ndim != 2 or pos.shape[1] != 3 or pos.shape[0] < 1:
            raise ValueError("positions must be an (n, 3) array with n >= 1")
        object.__setattr__(self, "positions", pos)
        n = pos.shape[0]
        for name, arr in list(self.scalar_attrs.items()):
            a = np.asarray(arr, dtype=float)
            if a.shape != (n,):
                raise ValueError(f"scalar attribute {name!r} must have shape ({n},)")
            self.scalar_attrs[name] = a
        for name, arr in list(self.vector_attrs.items()):
            a = np.asarray(arr, dtype=float)
            if a.shape != (n, 3):
                raise ValueError(f"vector attribute {name!r} must have shape ({n}, 3)")
            self.vector_attrs[name] = a
        if self.cell is not None:
            c = np.asarray(self.cell, dtype=float)
            if c.shape != (3, 3):
                raise ValueError("cell must be a 3x3 matrix")
            object.__setattr__(self, "cell", c)

    def __len__(self) -> int:
        return self.positions.shape[0]

    @property
    def centroid(self) -> np.ndarray:
        return self.positions.mean(axis=0)

    def species_symbols(self) -> list[str]:
        codes = self.scalar_attrs.get("species")
        if codes is None:
            return ["X"] * len(self)
        return [_CODE_TO_SYMBOL.get(int(c), "X") for c in codes]


def act(g: GroupElement, x: DecoratedPointCloud) -> DecoratedPointCloud:
    """Apply a group element about the centroid of the positions.

    The cloud is re-centered, transformed by the O(3) matrix of g, and the
    centroid restored; vector attributes and the cell transform without the
    centroid shift. Scalar attributes and info are unchanged.
    """
    M = g.matrix()
    if np.array_equal(M, np.eye(3)):  # identity must be an exact no-op
        return DecoratedPointCloud(
            x.positions.copy(),
            dict(x.scalar_attrs),
            {k: v.copy() for k, v in x.vector_attrs.items()},
            None if x.cell is None else x.cell.copy(),
            dict(x.info),
        )
    c = x.centroid
    positions = (x.positions - c) @ M.T + c
    vector_attrs = {k: v @ M.T for k, v in x.vector_attrs.items()}
    cell = None if x.cell is None else x.cell @ M.T
    return DecoratedPointCloud(
        positions, dict(x.scalar_attrs), vector_attrs, cell, dict(x.info)
    )


def pairwise_edges(
    x: DecoratedPointCloud, cutoff: float
) -> list[tuple[int, int, np.ndarray, float]]:
    """All ordered pairs (i, j, r_ij, |r_ij|) with 0 < |r_ij| <= cutoff.

    With a periodic cell, only orthorhombic (diagonal) cells are supported and
    the minimum image of each pair is used.
    """
    if cutoff <= 0:
        raise ValueError("cutoff must be positive")
    pos = x.positions
    n = len(x)
    box = None
    if x.cell is not None:
        offdiag = x.cell - np.diag(np.diag(x.cell))
        if np.max(np.abs(offdiag)) > 1e-10:
            raise ValueError(
                "minimum-image edges support only orthorhombic (diagonal) cells"
            )
        box = np.diag(x.cell)
    edges = []
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            r = pos[j] - pos[i]
            if box is not None:
                r = r - box * np.round(r / box)
            d = float(np.linalg.norm(r))
            if d == 0.0:
                raise CoincidentPointsError(i, j)
            if d <= cutoff:
                edges.append((i, j, r, d))
    return edges


# -- extended XYZ -------------------------------------------------------------

_TOKEN_RE = re.compile(r'(\w[\w-]*)=(?:"([^"]*)"|(\S+))')


def _parse_comment(comment: str, lineno: int) -> dict[str, str]:
    return {m.group(1): m.group(2) if m.group(2) is not None else m.group(3)
            for m in _TOKEN_RE.finditer(comment)}


def _parse_properties(spec: str, lineno: int) -> list[tuple[str, str, int]]:
    parts = spec.split(":")
    if len(parts) % 3 != 0:
        raise XYZParseError(f"malformed Properties spec {spec!r}", lineno)
    out = []
    for k in range(0, len(parts), 3):
        name, kind, cols = parts[k], parts[k + 1], parts[k + 2]
        if kind not in ("S", "R", "I"):
            raise XYZParseError(f"unsupported column type {kind!r} in Properties", lineno)
        out.append((name, kind, int(cols)))
    return out


def read_xyz(source: str | TextIO) -> list[DecoratedPointCloud]:
    """Parse an extended-XYZ file (path, text, or stream) into clouds."""
    if isinstance(source, str):
        if "\n" in source:
            stream: TextIO = io.StringIO(source)
        else:
            stream = open(source)
    else:
        stream = source
    lines = stream.read().splitlines()
    clouds = []
    i = 0
    while i < len(lines):
        if not lines[i].strip():
            i += 1
            continue
        try:
            natoms = int(lines[i].strip())
        except ValueError:
            raise XYZParseError(f"expected an atom count, got {lines[i]!r}", i + 1)
        if i + 1 >= len(lines):
            raise XYZParseError("missing comment line", i + 2)
        header = _parse_comment(lines[i + 1], i + 2)
        props = _parse_properties(
            header.get("Properties", "species:S:1:pos:R:3"), i + 2
        )
        cell = None
        if "Lattice" in header:
            vals = [float(v) for v in header["Lattice"].split()]
            if len(vals) != 9:
                raise XYZParseError("Lattice must have 9 numbers", i + 2)
            cell = np.array(vals).reshape(3, 3)
        info = {}
        for key, val in header.items():
            if key in ("Properties", "Lattice"):
                continue
            try:
                info[key] = float(val)
            except ValueError:
                pass

        body = lines[i + 2 : i + 2 + natoms]
        if len(body) < natoms:
            raise XYZParseError(f"expected {natoms} atom lines", i + 2 + len(body) + 1)
        columns: dict[str, list] = {name: [] for name, _, _ in props}
        for k, line in enumerate(body):
            fields = line.split()
            want = sum(c for _, _, c in props)
            if len(fields) != want:
                raise XYZParseError(
                    f"expected {want} fields, got {len(fields)}", i + 3 + k
                )
            pos_f = 0
            for name, kind, cols in props:
                vals = fields[pos_f : pos_f + cols]
                pos_f += cols
                if kind == "S":
                    columns[name].append(vals[0] if cols == 1 else vals)
                else:
                    try:
                        nums = [float(v) for v in vals]
                    except ValueError:
                        raise XYZParseError(f"bad number in column {name!r}", i + 3 + k)
                    columns[name].append(nums[0] if cols == 1 else nums)

        if "pos" not in columns:
            raise XYZParseError("Properties must include pos:R:3", i + 2)
        positions = np.array(columns.pop("pos"))
        scalar_attrs: dict[str, np.ndarray] = {}
        vector_attrs: dict[str, np.ndarray] = {}
        for name, kind, cols in props:
            if name == "pos":
                continue
            col = columns[name]
            if name == "species":
                codes = [_SYMBOL_TO_CODE.get(s, -(h + 1)) for h, s in enumerate(col)]
                scalar_attrs["species"] = np.array(codes, dtype=float)
            elif kind == "S":
                continue  # non-species string columns are dropped
            elif cols == 1:
                scalar_attrs[name] = np.array(col)
            elif cols == 3:
                vector_attrs[name] = np.array(col)
            else:
                raise XYZParseError(
                    f"column {name!r} has unsupported width {cols}", i + 2
                )
        clouds.append(
            DecoratedPointCloud(positions, scalar_attrs, vector_attrs, cell, info)
        )
        i += 2 + natoms
    return clouds


def write_xyz(clouds: Iterable[DecoratedPointCloud], dest: str | TextIO | None = None) -> str:
    """Write clouds in extended XYZ; positions at 17 significant digits."""
    out = io.StringIO()
    for x in clouds:
        props = ["species:S:1", "pos:R:3"]
        extra_scalars = [k for k in sorted(x.scalar_attrs) if k != "species"]
        for k in extra_scalars:
            props.append(f"{k}:R:1")
        for k in sorted(x.vector_attrs):
            props.append(f"{k}:R:3")
        header = [f"Properties={':'.join(props)}"]
        if x.cell is not None:
            header.append(
                'Lattice="' + " ".join(format_float(v) for v in x.cell.ravel()) + '"'
            )
        for k in sorted(x.info):
            header.append(f"{k}={format_float(x.info[k])}")
        out.write(f"{len(x)}\n{' '.join(header)}\n")
        symbols = x.species_symbols()
        for idx in range(len(x)):
            fields = [symbols[idx]]
            fields += [format_float(v) for v in x.positions[idx]]
            for k in extra_scalars:
                fields.append(format_float(x.scalar_attrs[k][idx]))
            for k in sorted(x.vector_attrs):
                fields += [format_float(v) for v in x.vector_attrs[k][idx]]
            out.write(" ".join(fields) + "\n")
    text = out.getvalue()
    if isinstance(dest, str):
        with open(dest, "w") as f:
            f.write(text)
    elif dest is not None:
        dest.write(text)
    return text
