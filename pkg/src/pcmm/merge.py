"""Merging of flat clusters into planes and curved surfaces.

Two flat clusters are joined when d = d_a * d_n * d_g * d_p = 1; connected
components of the resulting graph are concatenated and classified by the
flatness test on the merged points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .cloud import Moments, PipelineConfig, compute_moments
from .clustering import ClusterSet

# lambda_1 / lambda_0 below this marks collinear support
DEGENERATE_RTOL = 1e-10


def judge_angle(mi: Moments, mj: Moments, theta_min: float) -> int:
    return int(abs(float(mi.normal @ mj.normal)) > math.cos(theta_min))


def judge_normal_distance(mi: Moments, mj: Moments, l_min: float) -> int:
    delta = mi.mean - mj.mean
    li = abs(float(mi.normal @ delta))
    lj = abs(float(mj.normal @ delta))
    return int((li + lj) / 2.0 < l_min)


def ellipsoid_extent(m: Moments, direction: np.ndarray) -> float:
    """3 * sum_k sqrt(lambda_k) |v_k . d| for a unit direction d."""
    return 3.0 * float(np.sqrt(m.eigvals) @ np.abs(m.eigvecs.T @ direction))


def gaussian_gap(mi: Moments, mj: Moments) -> float:
    delta = mi.mean - mj.mean
    dist = float(np.linalg.norm(delta))
    if dist == 0.0:
        return 0.0
    d = delta / dist
    return dist - ellipsoid_extent(mi, d) - ellipsoid_extent(mj, d)


def judge_gaussian_gap(mi: Moments, mj: Moments, a_voxel: float) -> int:
    if np.array_equal(mi.mean, mj.mean):
        return 1
    return int(gaussian_gap(mi, mj) < 5.0 * a_voxel)


def judge_point_adjacency(pi, pj, a_voxel: float) -> int:
    return int(_kernels.any_pair_within(pi, pj, 3.0 * a_voxel))


@dataclass
class MergeGraph:
    nodes: int
    edges: list[tuple[int, int]] = field(default_factory=list)


@dataclass
class DetectionResult:
    gaussians: list[Moments]
    planes: list[np.ndarray]
    surfaces: list[np.ndarray]
    plane_indices: list[np.ndarray] = field(default_factory=list)
    surface_indices: list[np.ndarray] = field(default_factory=list)
    gaussian_indices: list[np.ndarray] = field(default_factory=list)
    graph: MergeGraph | None = None
    components: list[list[int]] = field(default_factory=list)
    demoted: int = 0


def _pair_prefilter(ms: list[Moments], cfg: PipelineConfig, use_gap: bool = True):
    """Candidate pairs (i < j) passing d_a, d_n and optionally d_g, vectorised."""
    k = len(ms)
    if k < 2:
        return np.empty((0, 2), dtype=np.int64)
    means = np.array([m.mean for m in ms])
    normals = np.array([m.normal for m in ms])
    iu, ju = np.triu_indices(k, 1)
    keep = np.abs(np.einsum("ij,ij->i", normals[iu], normals[ju])) > math.cos(cfg.theta_min)
    iu, ju = iu[keep], ju[keep]
    delta = means[iu] - means[ju]
    li = np.abs(np.einsum("ij,ij->i", normals[iu], delta))
    lj = np.abs(np.einsum("ij,ij->i", normals[ju], delta))
    keep = (li + lj) / 2.0 < cfg.l_min
    iu, ju, delta = iu[keep], ju[keep], delta[keep]
    if use_gap and len(iu):
        dist = np.linalg.norm(delta, axis=1)
        safe = np.where(dist > 0, dist, 1.0)
        d = delta / safe[:, None]
        sq = np.sqrt(np.array([m.eigvals for m in ms]))
        vecs = np.array([m.eigvecs for m in ms])
        ext_i = 3.0 * (sq[iu] * np.abs(np.einsum("nij,ni->nj", vecs[iu], d))).sum(axis=1)
        ext_j = 3.0 * (sq[ju] * np.abs(np.einsum("nij,ni->nj", vecs[ju], d))).sum(axis=1)
        gap = np.where(dist > 0, dist - ext_i - ext_j, 0.0)
        keep = gap < 5.0 * cfg.a_voxel
        iu, ju = iu[keep], ju[keep]
    return np.column_stack([iu, ju])


def merge_edges(points: list[np.ndarray], ms: list[Moments], cfg: PipelineConfig,
                use_gap: bool = True) -> list[tuple[int, int]]:
    """Edges (i, j), i < j, with d = 1. ``use_gap=False`` skips the d_g prefilter."""
    edges = []
    for i, j in _pair_prefilter(ms, cfg, use_gap):
        if judge_point_adjacency(points[i], points[j], cfg.a_voxel):
            edges.append((int(i), int(j)))
    return edges


class UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, x: int) -> int:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a: int, b: int):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            # smaller index becomes the root
            if rb < ra:
                ra, rb = rb, ra
            self.parent[rb] = ra


def connected_components(n: int, edges) -> list[list[int]]:
    """Components as sorted member lists, ordered by smallest member."""
    uf = UnionFind(n)
    for i, j in edges:
        uf.union(i, j)
    groups: dict[int, list[int]] = {}
    for i in range(n):
        groups.setdefault(uf.find(i), []).append(i)
    return sorted(groups.values(), key=lambda g: g[0])


def detect(clusters: ClusterSet, cfg: PipelineConfig) -> DetectionResult:
    gaussians, g_idx = [], []
    flat_pts, flat_ms, flat_idx = [], [], []
    for c in clusters:
        if c.flat:
            flat_pts.append(c.points)
            flat_ms.append(c.moments)
            flat_idx.append(c.indices)
        else:
            gaussians.append(c.moments)
            g_idx.append(c.indices)
    edges = merge_edges(flat_pts, flat_ms, cfg)
    comps = connected_components(len(flat_pts), edges)
    result = DetectionResult(gaussians, [], [], gaussian_indices=g_idx,
                             graph=MergeGraph(len(flat_pts), edges), components=comps)
    for comp in comps:
        pts = np.concatenate([flat_pts[i] for i in comp])
        idx = np.concatenate([flat_idx[i] for i in comp])
        m = compute_moments(pts)
        if len(pts) < cfg.N_min or m.eigvals[1] <= DEGENERATE_RTOL * m.eigvals[0]:
            # too small or collinear to carry a 2D boundary: keep as a Gaussian
            result.gaussians.append(m)
            result.gaussian_indices.append(idx)
            result.demoted += 1
        elif 6.0 * math.sqrt(m.eigvals[2]) < cfg.a_voxel:
            result.planes.append(pts)
            result.plane_indices.append(idx)
        else:
            result.surfaces.append(pts)
            result.surface_indices.append(idx)
    return result
