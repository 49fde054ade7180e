"""Point containers, voxel filtering and second-moment (PCA) statistics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

import numpy as np


class CloudError(ValueError):
    """Invalid point data or configuration."""


def as_points(points, *, min_count: int = 1) -> np.ndarray:
    """Validate and return an (N, 3) float64 array of finite coordinates."""
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim == 1 and arr.size == 3:
        arr = arr.reshape(1, 3)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise CloudError(f"expected an (N, 3) point array, got shape {arr.shape}")
    if len(arr) == 0:
        raise CloudError("empty input")
    if len(arr) < min_count:
        raise CloudError(f"need at least {min_count} points, got {len(arr)}")
    if not np.all(np.isfinite(arr)):
        raise CloudError("non-finite coordinate in point data")
    return arr


@dataclass(frozen=True)
class PipelineConfig:
    """Tunable parameters. Lengths are in meters, theta_min in radians.

    ``l_min``, ``plane_boundary_voxel`` and ``surface_boundary_voxel`` default
    to 1.5, 5 and 3 times ``a_voxel`` when left as None.
    """

    a_voxel: float = 0.03
    N_em: int = 200
    r_min: float = 2.0
    N_min: int = 40
    theta_min: float = math.radians(15.0)
    l_min: float | None = None
    plane_boundary_voxel: float | None = None
    surface_boundary_voxel: float | None = None
    rng_seed: int = 0

    def __post_init__(self):
        a = float(self.a_voxel)
        if not a > 0 or not math.isfinite(a):
            raise CloudError("a_voxel must be a positive length")
        object.__setattr__(self, "a_voxel", a)
        if self.l_min is None:
            object.__setattr__(self, "l_min", 1.5 * a)
        if self.plane_boundary_voxel is None:
            object.__setattr__(self, "plane_boundary_voxel", 5.0 * a)
        if self.surface_boundary_voxel is None:
            object.__setattr__(self, "surface_boundary_voxel", 3.0 * a)
        for name in ("l_min", "plane_boundary_voxel", "surface_boundary_voxel", "r_min", "theta_min"):
            object.__setattr__(self, name, float(getattr(self, name)))
        object.__setattr__(self, "N_em", int(self.N_em))
        object.__setattr__(self, "N_min", int(self.N_min))
        object.__setattr__(self, "rng_seed", int(self.rng_seed))
        self.validate()

    def validate(self):
        a = self.a_voxel
        if not (self.N_em > self.N_min >= 4):
            raise CloudError("require N_em > N_min >= 4")
        if not (2.0 <= self.r_min <= 3.0):
            raise CloudError("r_min must lie in [2, 3]")
        # tolerance so that l_min = 2 * a_voxel typed in decimal is accepted
        if not (a * (1 - 1e-12) <= self.l_min <= 2 * a * (1 + 1e-12)):
            raise CloudError("l_min must lie in [a_voxel, 2 a_voxel]")
        if not (self.plane_boundary_voxel > 0 and self.surface_boundary_voxel > 0):
            raise CloudError("boundary voxel sizes must be positive")
        if not (0.0 < self.theta_min < math.pi / 2):
            raise CloudError("theta_min must lie in (0, pi/2)")

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class Moments:
    """Mean, covariance and descending eigen-decomposition of a cluster.

    ``eigvecs`` holds v0, v1, v2 as columns (the PCA frame Q); it is
    orthonormal and right-handed.
    """

    mean: np.ndarray
    covariance: np.ndarray
    eigvals: np.ndarray
    eigvecs: np.ndarray
    count: int = 0

    @property
    def normal(self) -> np.ndarray:
        return self.eigvecs[:, 2]

    @property
    def axes(self) -> np.ndarray:
        """Three-sigma semi-axes 3*sqrt(lambda_j)*v_j as columns."""
        return self.eigvecs * (3.0 * np.sqrt(self.eigvals))[None, :]


def _fix_sign(v: np.ndarray) -> np.ndarray:
    k = int(np.argmax(np.abs(v)))
    return -v if v[k] < 0 else v


def eigen_frame(cov: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Descending eigenvalues and a deterministic right-handed eigenbasis.

    v0 and v2 take the sign making their largest-magnitude component
    positive; v1 = v2 x v0 completes the frame.
    """
    w, v = np.linalg.eigh(cov)
    w = np.clip(w[::-1], 0.0, None)
    v = v[:, ::-1]
    v0 = _fix_sign(v[:, 0] / np.linalg.norm(v[:, 0]))
    v2 = v[:, 2] - (v[:, 2] @ v0) * v0
    v2 = _fix_sign(v2 / np.linalg.norm(v2))
    v1 = np.cross(v2, v0)
    v1 /= np.linalg.norm(v1)
    return w, np.column_stack([v0, v1, v2])


def compute_moments(cluster) -> Moments:
    pts = np.asarray(cluster, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise CloudError(f"expected an (N, 3) point array, got shape {pts.shape}")
    n = len(pts)
    if n < 2:
        raise CloudError("cluster too small")
    mean = pts.mean(axis=0)
    centered = pts - mean
    cov = centered.T @ centered / (n - 1)
    cov = 0.5 * (cov + cov.T)
    w, q = eigen_frame(cov)
    return Moments(mean=mean, covariance=cov, eigvals=w, eigvecs=q, count=n)


def voxel_keys(points: np.ndarray, a_voxel: float) -> np.ndarray:
    """Integer voxel index of every point on the origin-anchored lattice."""
    return np.floor(points / a_voxel).astype(np.int64)


def voxel_filter(cloud, a_voxel: float) -> np.ndarray:
    """Replace the points of every occupied voxel by their centroid.

    Output rows are ordered lexicographically by integer voxel index.
    """
    pts = as_points(cloud)
    if not a_voxel > 0:
        raise CloudError("a_voxel must be positive")
    keys = voxel_keys(pts, a_voxel)
    uniq, inverse, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.reshape(-1)
    sums = np.column_stack(
        [np.bincount(inverse, weights=pts[:, d], minlength=len(uniq)) for d in range(3)]
    )
    return sums / counts[:, None]
