"""Lebedev spherical quadrature, expanded from octahedral generator parameters."""

from __future__ import annotations

import math

import numpy as np

from ._lebedev_data import GENERATOR_RULES

__all__ = ["available_precisions", "max_precision", "lebedev_grid"]


def available_precisions() -> list[int]:
    return sorted(GENERATOR_RULES)


def max_precision() -> int:
    return max(GENERATOR_RULES)


def _gen_oh(code: int, a: float, b: float) -> np.ndarray:
    """All points equivalent to (a, b, c) under the octahedral group, per family code."""
    if code == 0:
        a = 1.0
        pts = [(a, 0, 0), (-a, 0, 0), (0, a, 0), (0, -a, 0), (0, 0, a), (0, 0, -a)]
    elif code == 1:
        a = 1.0 / math.sqrt(2.0)
        pts = []
        for i, j in [(0, 1), (0, 2), (1, 2)]:
            for si in (a, -a):
                for sj in (a, -a):
                    p = [0.0, 0.0, 0.0]
                    p[i], p[j] = si, sj
                    pts.append(tuple(p))
    elif code == 2:
        a = 1.0 / math.sqrt(3.0)
        pts = [(sx * a, sy * a, sz * a) for sx in (1, -1) for sy in (1, -1) for sz in (1, -1)]
    elif code == 3:
        b = math.sqrt(1.0 - 2.0 * a * a)
        pts = []
        for perm in [(a, a, b), (a, b, a), (b, a, a)]:
            for sx in (1, -1):
                for sy in (1, -1):
                    for sz in (1, -1):
                        p = (sx * perm[0], sy * perm[1], sz * perm[2])
                        if p not in pts:
                            pts.append(p)
    elif code == 4:
        b = math.sqrt(1.0 - a * a)
        pts = []
        for u, v in [(a, b), (b, a)]:
            for perm in [(u, v, 0.0), (u, 0.0, v), (0.0, u, v)]:
                for sx in (1, -1):
                    for sy in (1, -1):
                        for sz in (1, -1):
                            p = (sx * perm[0], sy * perm[1], sz * perm[2])
                            if p not in pts:
                                pts.append(p)
    elif code == 5:
        c = math.sqrt(1.0 - a * a - b * b)
        pts = []
        import itertools

        for perm in set(itertools.permutations((0, 1, 2))):
            base = (a, b, c)
            q = (base[perm[0]], base[perm[1]], base[perm[2]])
            for sx in (1, -1):
                for sy in (1, -1):
                    for sz in (1, -1):
                        pts.append((sx * q[0], sy * q[1], sz * q[2]))
        pts = sorted(set(pts))
    else:
        raise ValueError(f"unknown generator code {code}")
    return np.array(pts, dtype=float)


_EXPECTED = {0: 6, 1: 12, 2: 8, 3: 24, 4: 24, 5: 48}


def lebedev_grid(precision: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes (n, 3) and weights (n,) of the Lebedev rule of the given precision.

    Weights are normalized to sum to 1 (mean over the sphere, not the 4*pi
    surface integral). Raises KeyError for precisions not in the embedded set.
    """
    if precision not in GENERATOR_RULES:
        raise KeyError(
            f"no embedded Lebedev rule of precision {precision}; "
            f"available: {available_precisions()}"
        )
    nodes, weights = [], []
    for code, a, b, v in GENERATOR_RULES[precision]:
        pts = _gen_oh(code, a, b)
        if len(pts) != _EXPECTED[code]:
            raise RuntimeError(f"generator code {code} produced {len(pts)} points")
        nodes.append(pts)
        weights.append(np.full(len(pts), v))
    return np.vstack(nodes), np.concatenate(weights)
