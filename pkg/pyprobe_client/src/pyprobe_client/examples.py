"""Ready-made wrapped models, mostly for smoke tests and documentation."""

from __future__ import annotations

import numpy as np

from .server import Cloud, WrappedModel

__all__ = ["centroid_r2"]


def _centroid_r2(cloud: Cloud) -> dict[str, np.ndarray]:
    u = cloud.positions - cloud.positions.mean(axis=0)
    return {"r2": np.array([float(np.sum(u * u))])}


def centroid_r2() -> WrappedModel:
    """Sum of squared distances from the centroid: exactly invariant under
    rotations, inversion, and translations, so any equivariance-error probe
    against it must report (numerically) zero."""
    return WrappedModel(_centroid_r2, {"r2": 1})
