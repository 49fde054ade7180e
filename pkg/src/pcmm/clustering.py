"""Integrated hierarchical clustering.

The filtered cloud is bipartitioned recursively (2-means for large clusters,
two-component EM-GMM for small ones) until every cluster passes the
termination predicate ``f = min(1, f_l * f_p * f_c + f_n)``.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from .cloud import CloudError, Moments, PipelineConfig, compute_moments

KMEANS_MAX_ITER = 25
EM_MAX_ITER = 50
EM_TOL = 1e-4
EM_REG = 1e-8

# eigenvalues below this fraction of lambda_0 are treated as exactly zero
NULL_EIG_RTOL = 1e-12
# offsets along a null direction below this fraction of sqrt(lambda_0) count as zero
NULL_OFFSET_RTOL = 1e-9


@dataclass
class Cluster:
    points: np.ndarray
    indices: np.ndarray
    moments: Moments
    flat: bool
    creation: int


@dataclass
class ClusterSet:
    clusters: list[Cluster]

    @property
    def I(self) -> int:
        return len(self.clusters)

    def __len__(self):
        return len(self.clusters)

    def __iter__(self):
        return iter(self.clusters)


@dataclass(frozen=True)
class Termination:
    f_l: int
    f_p: int
    f_c: int
    f_n: int

    @property
    def flat(self) -> int:
        return self.f_l * self.f_p * self.f_c

    @property
    def f(self) -> int:
        return min(1, self.flat + self.f_n)


def squared_mahalanobis(points: np.ndarray, m: Moments) -> np.ndarray:
    """Squared Mahalanobis distance of each point from the cluster mean.

    Uses the pseudo-inverse of the covariance; a point with a nonzero offset
    along a zero-variance direction gets +inf.
    """
    coords = (points - m.mean) @ m.eigvecs
    lam = m.eigvals
    scale = math.sqrt(max(float(lam[0]), 0.0))
    null = lam <= NULL_EIG_RTOL * max(float(lam[0]), np.finfo(float).tiny)
    d2 = np.zeros(len(points))
    live = ~null
    if np.any(live):
        d2 += (coords[:, live] ** 2 / lam[live]).sum(axis=1)
    if np.any(null):
        off = np.abs(coords[:, null]).max(axis=1)
        d2[off > NULL_OFFSET_RTOL * scale] = np.inf
    return d2


def termination_terms(points: np.ndarray, m: Moments, cfg: PipelineConfig) -> Termination:
    n = len(points)
    lam = m.eigvals
    f_l = int(np.all(squared_mahalanobis(points, m) < 9.0))
    f_p = int(6.0 * math.sqrt(lam[2]) < cfg.a_voxel)
    f_c = int(n * cfg.a_voxel ** 2 > math.pi * cfg.r_min ** 2 * math.sqrt(lam[0] * lam[1]))
    f_n = int(n < cfg.N_min)
    return Termination(f_l, f_p, f_c, f_n)


def termination_check(points, m: Moments, cfg: PipelineConfig) -> tuple[int, int]:
    """Return ``(f, flat)`` for a cluster."""
    t = termination_terms(np.asarray(points, dtype=np.float64), m, cfg)
    return t.f, t.flat


def _median_split(points: np.ndarray, m: Moments) -> np.ndarray:
    proj = (points - m.mean) @ m.eigvecs[:, 0]
    order = np.argsort(proj, kind="stable")
    labels = np.ones(len(points), dtype=bool)
    labels[order[: len(points) // 2]] = False
    return labels


def kmeans2(points: np.ndarray, m: Moments, max_iter: int = KMEANS_MAX_ITER) -> np.ndarray:
    """Lloyd 2-means seeded at mean +- sqrt(lambda_0) v0; returns boolean labels."""
    offset = math.sqrt(m.eigvals[0]) * m.eigvecs[:, 0]
    centers = np.stack([m.mean - offset, m.mean + offset])
    labels = None
    for _ in range(max_iter):
        d0 = ((points - centers[0]) ** 2).sum(axis=1)
        d1 = ((points - centers[1]) ** 2).sum(axis=1)
        new = d1 < d0
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        if labels.all() or not labels.any():
            break
        centers = np.stack([points[~labels].mean(axis=0), points[labels].mean(axis=0)])
    return labels


def _gauss_logpdf(points, mean, cov):
    cov = cov + EM_REG * np.eye(3)
    chol = np.linalg.cholesky(cov)
    sol = np.linalg.solve(chol, (points - mean).T)
    maha = (sol ** 2).sum(axis=0)
    logdet = 2.0 * np.log(np.diag(chol)).sum()
    return -0.5 * (maha + logdet + 3.0 * math.log(2.0 * math.pi))


def em_gmm2(points: np.ndarray, init_labels: np.ndarray) -> np.ndarray:
    """Two-component full-covariance EM from hard initial labels.

    Returns hardened labels (True = second component).
    """
    n = len(points)
    resp = np.column_stack([~init_labels, init_labels]).astype(np.float64)
    prev_ll = -np.inf
    for _ in range(EM_MAX_ITER):
        nk = resp.sum(axis=0)
        if np.any(nk < 1e-9):
            break
        weights = nk / n
        means = (resp.T @ points) / nk[:, None]
        logp = np.empty((n, 2))
        for k in range(2):
            c = points - means[k]
            cov = (resp[:, k, None] * c).T @ c / nk[k]
            try:
                logp[:, k] = math.log(weights[k]) + _gauss_logpdf(points, means[k], cov)
            except np.linalg.LinAlgError:
                return resp[:, 1] > resp[:, 0]
        top = logp.max(axis=1, keepdims=True)
        norm = top[:, 0] + np.log(np.exp(logp - top).sum(axis=1))
        ll = float(norm.sum())
        resp = np.exp(logp - norm[:, None])
        if ll - prev_ll < EM_TOL:
            break
        prev_ll = ll
    return resp[:, 1] > resp[:, 0]


def bipartition(points, cfg: PipelineConfig, moments: Moments | None = None):
    """Split a cluster in two; returns boolean labels (False/True side).

    2-means is used for more than ``N_em`` points, EM-GMM otherwise. If
    either side ends with fewer than two points the split falls back to the
    median along v0.
    """
    pts = np.asarray(points, dtype=np.float64)
    n = len(pts)
    if n < 4:
        raise CloudError("cluster too small to split")
    m = moments if moments is not None else compute_moments(pts)
    labels = kmeans2(pts, m)
    if n <= cfg.N_em:
        labels = em_gmm2(pts, labels)
    k = int(labels.sum())
    if k < 2 or n - k < 2:
        labels = _median_split(pts, m)
    return labels


def hierarchical_cluster(cloud, cfg: PipelineConfig) -> ClusterSet:
    pts = np.asarray(cloud, dtype=np.float64)
    if len(pts) < 2:
        raise CloudError("cluster too small")
    done: list[Cluster] = []
    queue = deque([(np.arange(len(pts)), 0)])
    created = 1
    while queue:
        idx, creation = queue.popleft()
        sub = pts[idx]
        m = compute_moments(sub)
        t = termination_terms(sub, m, cfg)
        if t.f == 1 or len(idx) < 4:
            done.append(Cluster(sub, idx, m, bool(t.flat), creation))
            continue
        labels = bipartition(sub, cfg, m)
        queue.append((idx[~labels], created))
        queue.append((idx[labels], created + 1))
        created += 2
    done.sort(key=lambda c: c.creation)
    return ClusterSet(done)
