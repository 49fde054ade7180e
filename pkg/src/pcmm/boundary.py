"""Local PCA frame and 2D voxel boundary description of planes and surfaces."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cloud import CloudError, compute_moments

DEGENERATE_RTOL = 1e-10

# corner ids in tie-break order: (min-x,min-y), (min-x,max-y), (max-x,min-y), (max-x,max-y)
CORNER_SIGNS = ((0, 0), (0, 1), (1, 0), (1, 1))


@dataclass
class LocalFrame:
    origin: np.ndarray
    basis: np.ndarray
    local: np.ndarray

    def to_world(self, local_points: np.ndarray) -> np.ndarray:
        return np.asarray(local_points) @ self.basis.T + self.origin


def to_local_frame(cluster) -> LocalFrame:
    """Express a cluster in its PCA frame: p~ = Q^T (p - mean)."""
    pts = np.asarray(cluster, dtype=np.float64)
    if len(pts) < 3:
        raise CloudError("degenerate plane support")
    m = compute_moments(pts)
    if m.eigvals[1] <= DEGENERATE_RTOL * m.eigvals[0] or m.eigvals[0] == 0.0:
        raise CloudError("degenerate plane support")
    local = (pts - m.mean) @ m.eigvecs
    return LocalFrame(origin=m.mean, basis=m.eigvecs, local=local)


@dataclass
class BoundaryGrid:
    """Occupancy/boundary masks over an ``nx`` x ``ny`` lattice of ``cell``-sized squares.

    Per-cell arrays are indexed [i, j] with i along local x. ``corner`` holds the
    chosen empty-corner id (see CORNER_SIGNS) and ``lines`` the (lx, ly, lxy)
    clip offsets; both are meaningful only where ``boundary`` is set.
    """

    cell: float
    origin: np.ndarray
    nx: int
    ny: int
    occupied: np.ndarray
    boundary: np.ndarray
    corner: np.ndarray
    lines: np.ndarray
    means: np.ndarray
    counts: np.ndarray = field(repr=False, default=None)

    def cell_min(self, i, j) -> np.ndarray:
        return self.origin + self.cell * np.stack([np.asarray(i, float), np.asarray(j, float)], axis=-1)

    def corner_xy(self, i, j, corner_id) -> np.ndarray:
        sx = np.asarray([CORNER_SIGNS[c][0] for c in np.atleast_1d(corner_id)], float)
        sy = np.asarray([CORNER_SIGNS[c][1] for c in np.atleast_1d(corner_id)], float)
        base = self.cell_min(np.atleast_1d(i), np.atleast_1d(j))
        return base + self.cell * np.column_stack([sx, sy])

    def cell_index(self, xy: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        xy = np.asarray(xy, dtype=np.float64)
        ij = np.floor((xy - self.origin) / self.cell).astype(np.int64)
        # the far edge of the grid belongs to the last cell
        top = self.origin + self.cell * np.array([self.nx, self.ny])
        for d, n in ((0, self.nx), (1, self.ny)):
            edge = (ij[:, d] == n) & (xy[:, d] <= top[d])
            ij[edge, d] = n - 1
        return ij[:, 0], ij[:, 1]

    def keep_mask(self, xy: np.ndarray) -> np.ndarray:
        """Which local xy positions fall in an occupied cell and survive its clip lines."""
        xy = np.asarray(xy, dtype=np.float64)
        i, j = self.cell_index(xy)
        inside = (i >= 0) & (i < self.nx) & (j >= 0) & (j < self.ny)
        keep = np.zeros(len(xy), dtype=bool)
        ii, jj = i[inside], j[inside]
        ok = self.occupied[ii, jj]
        lines = self.lines[ii, jj]
        clip = self.boundary[ii, jj] & np.any(lines > 0, axis=1)
        if np.any(clip):
            c = self.corner_xy(ii[clip], jj[clip], self.corner[ii[clip], jj[clip]])
            dx = np.abs(xy[inside][clip, 0] - c[:, 0])
            dy = np.abs(xy[inside][clip, 1] - c[:, 1])
            l = lines[clip]
            sub = (dx >= l[:, 0]) & (dy >= l[:, 1]) & (dx + dy >= l[:, 2])
            ok_clip = ok[clip] & sub
            ok = ok.copy()
            ok[clip] = ok_clip
        keep[inside] = ok
        return keep


def boundary_mask(occupied: np.ndarray) -> np.ndarray:
    """Occupied cells on the map edge or with an empty 4-neighbour."""
    occ = np.asarray(occupied, dtype=bool)
    padded = np.pad(occ, 1, constant_values=False)
    all_nb = padded[2:, 1:-1] & padded[:-2, 1:-1] & padded[1:-1, 2:] & padded[1:-1, :-2]
    return occ & ~all_nb


def _grid_dims(extent: float, cell: float) -> int:
    return max(1, int(math.ceil(extent / cell)))


def build_boundary(frame: LocalFrame, a_bnd: float) -> BoundaryGrid:
    if not a_bnd > 0:
        raise CloudError("boundary voxel size must be positive")
    xy = frame.local[:, :2]
    lo = xy.min(axis=0)
    ext = xy.max(axis=0) - lo
    nx, ny = _grid_dims(ext[0], a_bnd), _grid_dims(ext[1], a_bnd)
    ij = np.floor((xy - lo) / a_bnd).astype(np.int64)
    i = np.clip(ij[:, 0], 0, nx - 1)
    j = np.clip(ij[:, 1], 0, ny - 1)
    flat = i * ny + j
    counts = np.bincount(flat, minlength=nx * ny)
    sums = np.column_stack([np.bincount(flat, weights=frame.local[:, d], minlength=nx * ny) for d in range(3)])
    occupied = (counts > 0).reshape(nx, ny)
    means = np.zeros((nx * ny, 3))
    nz = counts > 0
    means[nz] = sums[nz] / counts[nz, None]
    means = means.reshape(nx, ny, 3)
    boundary = boundary_mask(occupied)

    # empty corner: the one farthest from the in-cell mean, first wins on ties
    gi, gj = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    base = lo + a_bnd * np.stack([gi, gj], axis=-1)
    dists = np.stack(
        [np.linalg.norm(base + a_bnd * np.array(s, float) - means[..., :2], axis=-1) for s in CORNER_SIGNS],
        axis=-1,
    )
    corner = np.argmax(dists, axis=-1).astype(np.int8)
    corner[~boundary] = 0
    return BoundaryGrid(
        cell=float(a_bnd),
        origin=lo.astype(np.float64),
        nx=nx,
        ny=ny,
        occupied=occupied,
        boundary=boundary,
        corner=corner,
        lines=np.zeros((nx, ny, 3)),
        means=means,
        counts=counts.reshape(nx, ny),
    )


def corner_surrounded(occupied: np.ndarray, i: int, j: int, corner_id: int) -> bool:
    """True if the three other cells touching the chosen corner are all occupied."""
    nx, ny = occupied.shape
    sx, sy = CORNER_SIGNS[corner_id]
    di = 1 if sx else -1
    dj = 1 if sy else -1
    for a, b in ((i + di, j), (i, j + dj), (i + di, j + dj)):
        if not (0 <= a < nx and 0 <= b < ny) or not occupied[a, b]:
            return False
    return True


def fit_clip_lines(grid: BoundaryGrid, frame: LocalFrame, a_voxel: float) -> BoundaryGrid:
    """Fill in the (lx, ly, lxy) offsets of every boundary cell.

    Each offset is the smallest in-cell distance to the empty corner (L1 for
    the diagonal) minus a margin of 0.5 a_voxel, resp. sqrt(2)/2 a_voxel,
    clamped at zero.
    """
    xy = frame.local[:, :2]
    ij = np.floor((xy - grid.origin) / grid.cell).astype(np.int64)
    i = np.clip(ij[:, 0], 0, grid.nx - 1)
    j = np.clip(ij[:, 1], 0, grid.ny - 1)
    lines = np.zeros((grid.nx, grid.ny, 3))
    bi, bj = np.nonzero(grid.boundary)
    todo = np.zeros((grid.nx, grid.ny), dtype=bool)
    for a, b in zip(bi, bj):
        if not corner_surrounded(grid.occupied, a, b, int(grid.corner[a, b])):
            todo[a, b] = True
    sel = todo[i, j]
    if np.any(sel):
        pi, pj, pxy = i[sel], j[sel], xy[sel]
        c = grid.corner_xy(pi, pj, grid.corner[pi, pj])
        dx = np.abs(pxy[:, 0] - c[:, 0])
        dy = np.abs(pxy[:, 1] - c[:, 1])
        flat = pi * grid.ny + pj
        size = grid.nx * grid.ny
        for k, (vals, margin) in enumerate(
            ((dx, 0.5 * a_voxel), (dy, 0.5 * a_voxel), (dx + dy, math.sqrt(2) / 2 * a_voxel))
        ):
            mins = np.full(size, np.inf)
            np.minimum.at(mins, flat, vals)
            got = np.isfinite(mins)
            out = np.zeros(size)
            out[got] = np.maximum(mins[got] - margin, 0.0)
            lines[..., k] = out.reshape(grid.nx, grid.ny)
    grid.lines = lines
    return grid
