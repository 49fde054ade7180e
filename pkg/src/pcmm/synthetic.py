"""Synthetic test scenes: box room, half cylinder, mixed scene."""

from __future__ import annotations

import numpy as np


def _grid(nu: int, nv: int):
    u, v = np.meshgrid(np.arange(nu), np.arange(nv), indexing="ij")
    return u.ravel(), v.ravel()


def room(size: float = 3.0, pitch: float = 0.01, sigma: float = 0.005,
         seed: int = 0, origin=(0.0, 0.0, 0.0)) -> np.ndarray:
    """The six inner faces of an axis-aligned cube sampled on a square lattice."""
    rng = np.random.default_rng(seed)
    k = int(round(size / pitch)) + 1
    u, v = _grid(k, k)
    a = u * pitch
    b = v * pitch
    faces = []
    for axis in range(3):
        others = [d for d in range(3) if d != axis]
        for level in (0.0, size):
            f = np.empty((len(a), 3))
            f[:, axis] = level
            f[:, others[0]] = a
            f[:, others[1]] = b
            faces.append(f)
    pts = np.concatenate(faces) + np.asarray(origin, dtype=float)
    return pts + rng.normal(scale=sigma, size=pts.shape)


def half_cylinder(radius: float = 1.0, height: float = 1.0, pitch: float = 0.01,
                  sigma: float = 0.003, seed: int = 0, center=(0.0, 0.0, 0.0)) -> np.ndarray:
    """Half of a vertical cylinder wall (angles 0..pi) sampled at arc-length pitch."""
    rng = np.random.default_rng(seed)
    n_arc = int(round(np.pi * radius / pitch)) + 1
    n_h = int(round(height / pitch)) + 1
    i, j = _grid(n_arc, n_h)
    theta = i * (np.pi / (n_arc - 1))
    pts = np.column_stack([radius * np.cos(theta), radius * np.sin(theta), j * pitch])
    pts = pts + np.asarray(center, dtype=float)
    return pts + rng.normal(scale=sigma, size=pts.shape)


def plane_patch(width: float, depth: float, pitch: float = 0.01, sigma: float = 0.003,
                seed: int = 0, origin=(0.0, 0.0, 0.0)) -> np.ndarray:
    """Horizontal rectangle z = origin_z."""
    rng = np.random.default_rng(seed)
    nu = int(round(width / pitch)) + 1
    nv = int(round(depth / pitch)) + 1
    u, v = _grid(nu, nv)
    pts = np.column_stack([u * pitch, v * pitch, np.zeros(len(u))]) + np.asarray(origin, dtype=float)
    return pts + rng.normal(scale=sigma, size=pts.shape)


def blob(center, n: int = 200, sigma: float = 0.08, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return np.asarray(center, dtype=float) + rng.normal(scale=sigma, size=(n, 3))


def mixed_scene(seed: int = 0) -> np.ndarray:
    """A floor plane, a half-cylinder section and three random blobs."""
    floor = plane_patch(2.0, 2.0, sigma=0.003, seed=seed, origin=(-3.0, -1.0, 0.0))
    cyl = half_cylinder(seed=seed + 1, center=(1.5, 0.0, 0.0))
    rng = np.random.default_rng(seed + 2)
    blobs = [blob(c, 200, 0.08, seed=int(rng.integers(1 << 31)))
             for c in ((0.0, 3.0, 1.5), (-2.0, 3.0, 2.0), (2.0, 3.5, 2.5))]
    return np.concatenate([floor, cyl] + blobs)
