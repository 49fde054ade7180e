"""Resampling a scene model into points and RMSE-based evaluation."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import _kernels
from .boundary import BoundaryGrid
from .bspline import surface_heights
from .cloud import CloudError, as_points, voxel_filter
from .model import SceneModel

# bitmaps cost one float per 32 cells in the parameter count
BITMAP_CELLS_PER_FLOAT = 32


def grid_lattice(grid: BoundaryGrid, pitch: float) -> np.ndarray:
    """Local xy lattice with spacing ~pitch inside occupied cells, clip lines applied."""
    per_cell = max(1, int(math.ceil(grid.cell / pitch - 1e-9)))
    step = grid.cell / per_cell
    offs = (np.arange(per_cell) + 0.5) * step
    ox, oy = np.meshgrid(offs, offs, indexing="ij")
    local = np.column_stack([ox.ravel(), oy.ravel()])
    cells = np.argwhere(grid.occupied)
    base = grid.origin + grid.cell * cells.astype(np.float64)
    xy = (base[:, None, :] + local[None, :, :]).reshape(-1, 2)
    return xy[grid.keep_mask(xy)]


def sample_gaussian(rng: np.random.Generator, mean, cov, k: int) -> np.ndarray:
    """k draws from N(mean, cov) restricted to the three-sigma ellipsoid."""
    w, v = np.linalg.eigh(np.asarray(cov, dtype=np.float64))
    w = np.clip(w, 0.0, None)
    live = w > 1e-12 * max(float(w.max()), np.finfo(float).tiny)
    out = np.empty((0, 3))
    while len(out) < k:
        z = rng.standard_normal((max(2 * (k - len(out)), 8), 3))
        z[:, ~live] = 0.0
        z = z[(z ** 2).sum(axis=1) < 9.0]
        out = np.concatenate([out, z])
    return np.asarray(mean, dtype=np.float64) + (out[:k] * np.sqrt(w)) @ v.T


def resample(model: SceneModel) -> np.ndarray:
    """Point cloud generated from every primitive of the model, deterministically."""
    pitch = model.config.a_voxel
    parts = []
    for p in model.planes:
        xy = grid_lattice(p.grid, pitch)
        local = np.column_stack([xy, np.zeros(len(xy))])
        parts.append(local @ p.basis.T + p.origin)
    for s in model.surfaces:
        xy = grid_lattice(s.grid, pitch)
        local = np.column_stack([xy, surface_heights(s.patch, xy)])
        parts.append(local @ s.basis.T + s.origin)
    rng = np.random.default_rng(model.config.rng_seed)
    for g in model.gaussians:
        parts.append(sample_gaussian(rng, g.mean, g.covariance, max(4, int(g.count))))
    if not parts:
        return np.empty((0, 3))
    return np.concatenate(parts)


def rmse(source, target) -> float:
    """sqrt of the mean squared nearest-neighbour distance from source to target."""
    src = as_points(source)
    tgt = as_points(target)
    return float(math.sqrt(np.mean(_kernels.nn_sqdist(src, tgt))))


@dataclass
class EvalReport:
    precision_rmse: float
    completeness_rmse: float
    filtered_precision_rmse: float
    filtered_completeness_rmse: float
    generated_count: int
    original_count: int
    filtered_count: int
    parameter_count: float
    compression_ratio: float
    gaussians: int
    planes: int
    surfaces: int

    def as_dict(self) -> dict:
        return asdict(self)

    def to_text(self) -> str:
        return "\n".join(f"{k}: {v}" for k, v in self.as_dict().items())


def _grid_params(grid: BoundaryGrid) -> float:
    cells = grid.nx * grid.ny
    return 2 * cells / BITMAP_CELLS_PER_FLOAT + 3 * int(grid.boundary.sum())


def parameter_count(model: SceneModel) -> float:
    """Model size in float equivalents.

    Gaussian: 3 mean + 6 covariance. Plane: 12 pose + two bitmaps at 1/32 per
    cell + 3 per clip tuple. Surface: plane cost + one height per control point.
    """
    total = 9.0 * len(model.gaussians)
    for p in model.planes:
        total += 12 + _grid_params(p.grid)
    for s in model.surfaces:
        total += 12 + _grid_params(s.grid) + s.patch.z.size
    return total


def evaluate(model: SceneModel, original) -> EvalReport:
    orig = as_points(original)
    gen = resample(model)
    if len(gen) == 0:
        raise CloudError("model generates no points")
    filtered = voxel_filter(orig, model.config.a_voxel)
    params = parameter_count(model)
    return EvalReport(
        precision_rmse=rmse(gen, orig),
        completeness_rmse=rmse(orig, gen),
        filtered_precision_rmse=rmse(gen, filtered),
        filtered_completeness_rmse=rmse(filtered, gen),
        generated_count=len(gen),
        original_count=len(orig),
        filtered_count=len(filtered),
        parameter_count=params,
        compression_ratio=3.0 * len(orig) / params if params > 0 else math.inf,
        gaussians=len(model.gaussians),
        planes=len(model.planes),
        surfaces=len(model.surfaces),
    )
