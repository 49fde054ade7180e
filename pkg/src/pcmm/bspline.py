"""Clamped bicubic B-spline height fields over a boundary grid.

Control points sit at the centres of the boundary cells plus one extra ring
of cells around them; only their heights are free. Heights are fitted so the
surface passes as close as possible to the mean of every occupied cell.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import _kernels
from .boundary import BoundaryGrid
from .cloud import CloudError

DEGREE = 3
# Tikhonov weight pulling each control height toward its initial value
# (smoothed fits only; the plain fit leaves unobserved controls untouched)
REG_WEIGHT = 1e-8
# curvature penalty used by the pipeline; exact interpolation of the cell
# means is badly conditioned on real data and extrapolates wildly
SMOOTH_WEIGHT = 1e-6
CG_TOL = 1e-10


def build_knots(n: int, degree: int = DEGREE) -> np.ndarray:
    """Clamped uniform knot vector of length n + degree + 3 on [0, 1].

    Interior knots are (i - T) / (n + 2 - T); this is the standard clamped
    vector for n + 2 control points, and it stays inside [0, 1].
    """
    if n < 1:
        raise CloudError("knot count must be positive")
    t = degree
    size = n + t + 3
    knots = np.empty(size)
    for i in range(size):
        if i <= t:
            knots[i] = 0.0
        elif i >= n + 2:
            knots[i] = 1.0
        else:
            knots[i] = (i - t) / (n + 2 - t)
    return knots


def effective_degree(n: int, degree: int = DEGREE) -> int:
    """Highest usable degree for n + 2 control points."""
    return min(degree, n + 1)


@dataclass
class SplinePatch:
    """Height-field spline; ``z`` has shape (nx + 2, ny + 2)."""

    nx: int
    ny: int
    origin: np.ndarray
    cell: float
    degree_x: int
    degree_y: int
    knots_x: np.ndarray
    knots_y: np.ndarray
    z: np.ndarray
    # solver diagnostics from fit_heights
    iterations: int = field(default=0, compare=False, repr=False)
    history: list = field(default_factory=list, compare=False, repr=False)

    @property
    def control_x(self) -> np.ndarray:
        return self.origin[0] + (np.arange(self.nx + 2) - 0.5) * self.cell

    @property
    def control_y(self) -> np.ndarray:
        return self.origin[1] + (np.arange(self.ny + 2) - 0.5) * self.cell

    def control_points(self) -> np.ndarray:
        gx, gy = np.meshgrid(self.control_x, self.control_y, indexing="ij")
        return np.stack([gx, gy, self.z], axis=-1)

    def param(self, xy) -> np.ndarray:
        """Map local xy to (u, v): the grid origin goes to 0 and a span of
        (n + 1) cells to 1."""
        xy = np.atleast_2d(np.asarray(xy, dtype=np.float64))
        span = self.cell * np.array([self.nx + 1, self.ny + 1], dtype=np.float64)
        return (xy - self.origin) / span


def patch_for_grid(nx: int, ny: int, origin, cell: float, z=None) -> SplinePatch:
    dx, dy = effective_degree(nx), effective_degree(ny)
    if z is None:
        z = np.zeros((nx + 2, ny + 2))
    return SplinePatch(nx, ny, np.asarray(origin, dtype=np.float64), float(cell), dx, dy,
                       build_knots(nx, dx), build_knots(ny, dy), np.asarray(z, dtype=np.float64))


def init_control_points(grid: BoundaryGrid) -> SplinePatch:
    if grid.nx == 0 or grid.ny == 0:
        raise CloudError("empty surface support")
    z = np.zeros((grid.nx + 2, grid.ny + 2))
    inner = np.where(grid.occupied, grid.means[..., 2], 0.0)
    z[1:-1, 1:-1] = inner
    return patch_for_grid(grid.nx, grid.ny, grid.origin, grid.cell, z)


def _check_range(u):
    u = np.atleast_1d(np.asarray(u, dtype=np.float64))
    if np.any(~np.isfinite(u)) or np.any(u < 0.0) or np.any(u > 1.0):
        raise CloudError("parameter out of range")
    return u


def basis_weights(u: float, v: float, patch: SplinePatch) -> np.ndarray:
    """Tensor-product weights W[alpha, beta] at (u, v)."""
    uu = _check_range(u)
    vv = _check_range(v)
    bx = _kernels.bspline_basis(patch.knots_x, patch.degree_x, uu)[0]
    by = _kernels.bspline_basis(patch.knots_y, patch.degree_y, vv)[0]
    return np.outer(bx, by)


def eval_surface(patch: SplinePatch, u: float, v: float) -> np.ndarray:
    w = basis_weights(u, v, patch)
    cp = patch.control_points()
    return np.einsum("ab,abk->k", w, cp)


def _window(basis: np.ndarray, degree: int):
    n = basis.shape[1]
    start = np.minimum(np.argmax(basis != 0.0, axis=1), n - degree - 1)
    cols = start[:, None] + np.arange(degree + 1)[None, :]
    vals = np.take_along_axis(basis, cols, axis=1)
    return cols, vals


def design_matrix(patch: SplinePatch, uv: np.ndarray) -> sp.csr_matrix:
    """Sparse rows of tensor weights, columns flattened as alpha * (ny + 2) + beta."""
    uv = np.atleast_2d(uv)
    u = _check_range(uv[:, 0])
    v = _check_range(uv[:, 1])
    bx = _kernels.bspline_basis(patch.knots_x, patch.degree_x, u)
    by = _kernels.bspline_basis(patch.knots_y, patch.degree_y, v)
    cx, wx = _window(bx, patch.degree_x)
    cy, wy = _window(by, patch.degree_y)
    m = len(u)
    ncol_y = patch.ny + 2
    cols = (cx[:, :, None] * ncol_y + cy[:, None, :]).reshape(m, -1)
    vals = (wx[:, :, None] * wy[:, None, :]).reshape(m, -1)
    rows = np.repeat(np.arange(m), cols.shape[1])
    mat = sp.csr_matrix((vals.ravel(), (rows, cols.ravel())),
                        shape=(m, (patch.nx + 2) * (patch.ny + 2)))
    mat.eliminate_zeros()
    return mat


def surface_heights(patch: SplinePatch, xy: np.ndarray) -> np.ndarray:
    """Spline height at local xy positions."""
    uv = np.clip(patch.param(xy), 0.0, 1.0)
    return design_matrix(patch, uv) @ patch.z.ravel()


def observations(grid: BoundaryGrid, patch: SplinePatch):
    """(u, v) of every occupied cell mean and the mean's height."""
    occ = np.argwhere(grid.occupied)
    means = grid.means[occ[:, 0], occ[:, 1]]
    return patch.param(means[:, :2]), means[:, 2]


def objective(patch: SplinePatch, grid: BoundaryGrid) -> float:
    uv, target = observations(grid, patch)
    r = design_matrix(patch, uv) @ patch.z.ravel() - target
    return float(r @ r)


def pcg(apply, rhs: np.ndarray, x0: np.ndarray, diag: np.ndarray, tol: float, max_iter: int,
        quad=None):
    """Jacobi-preconditioned conjugate gradient for a symmetric PSD operator.

    ``quad``, if given, is evaluated at every iterate and its values returned
    alongside the solution.
    """
    x = x0.copy()
    r = rhs - apply(x)
    inv = np.where(diag > 0, 1.0 / np.where(diag > 0, diag, 1.0), 1.0)
    zv = inv * r
    p = zv.copy()
    rz = r @ zv
    stop = tol * max(np.linalg.norm(rhs), np.finfo(float).tiny)
    history = [quad(x)] if quad else []
    it = 0
    while it < max_iter and np.linalg.norm(r) > stop:
        ap = apply(p)
        pap = p @ ap
        if pap <= 0:
            break
        alpha = rz / pap
        x += alpha * p
        r -= alpha * ap
        zv = inv * r
        rz_new = r @ zv
        p = zv + (rz_new / rz) * p
        rz = rz_new
        it += 1
        if quad:
            history.append(quad(x))
    return x, it, history


def second_differences(nx: int, ny: int) -> sp.csr_matrix:
    """Stacked second-difference operators along both axes of an nx x ny control net."""
    def d2(n):
        if n < 3:
            return sp.csr_matrix((0, n))
        return sp.diags([np.ones(n - 2), -2.0 * np.ones(n - 2), np.ones(n - 2)], [0, 1, 2], shape=(n - 2, n))
    return sp.vstack([sp.kron(d2(nx), sp.eye(ny)), sp.kron(sp.eye(nx), d2(ny))]).tocsr()


def fit_heights(patch: SplinePatch, grid: BoundaryGrid, track: bool = False,
                smoothing: float = 0.0) -> SplinePatch:
    """Least-squares fit of control heights to the occupied cell means.

    With ``smoothing == 0`` this minimises sum ||z_mean - z_spline||^2 alone:
    CG on the normal equations restricted to the observed controls, started at
    the initial heights, so the result is the least-squares optimum closest to
    the initialisation and control heights that no observation touches keep
    their initial value.

    With ``smoothing > 0`` the objective gains smoothing * ||D z||^2 (second
    differences of the control net) + REG_WEIGHT * ||z - z_init||^2, which
    trades a small residual for a surface that extrapolates sanely.
    """
    if not np.any(grid.occupied):
        raise CloudError("empty surface support")
    if smoothing < 0:
        raise CloudError("smoothing must be non-negative")
    uv, target = observations(grid, patch)
    if not np.all(np.isfinite(target)) or not np.all(np.isfinite(patch.z)):
        raise CloudError("non-finite heights")
    a = design_matrix(patch, uv)
    z0 = patch.z.ravel().copy()
    if smoothing > 0:
        d = second_differences(patch.nx + 2, patch.ny + 2)
        h = (a.T @ a + smoothing * (d.T @ d) + REG_WEIGHT * sp.eye(len(z0))).tocsr()
        free = np.ones(len(z0), dtype=bool)
        rhs = a.T @ target + REG_WEIGHT * z0
        start = z0.copy()
    else:
        free = np.asarray(abs(a).sum(axis=0)).ravel() > 0
        af = a[:, free]
        h = (af.T @ af).tocsr()
        rhs = af.T @ target
        start = z0[free]

    def full(x):
        z = z0.copy()
        z[free] = x
        return z

    quad = None
    if track:
        dd = second_differences(patch.nx + 2, patch.ny + 2) if smoothing > 0 else None

        def quad(x):
            z = full(x)
            r = a @ z - target
            val = float(r @ r)
            if dd is not None:
                c = dd @ z
                e = z - z0
                val += smoothing * float(c @ c) + REG_WEIGHT * float(e @ e)
            return val

    n = int(free.sum())
    x, iters, history = pcg(lambda v: h @ v, rhs, start, h.diagonal(), CG_TOL, 10 * n, quad)
    z = full(x)
    if not np.all(np.isfinite(z)):
        raise CloudError("non-finite heights")
    fitted = patch_for_grid(patch.nx, patch.ny, patch.origin, patch.cell, z.reshape(patch.z.shape))
    fitted.iterations = iters
    fitted.history = history
    return fitted
