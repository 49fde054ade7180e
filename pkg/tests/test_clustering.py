import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pcmm import synthetic
from pcmm.cloud import CloudError, Moments, PipelineConfig, compute_moments, voxel_filter
from pcmm.clustering import (
    bipartition,
    em_gmm2,
    hierarchical_cluster,
    kmeans2,
    squared_mahalanobis,
    termination_check,
    termination_terms,
)


def iso_moments(mean=(0, 0, 0), lam=(1.0, 1.0, 1.0), n=100):
    lam = np.asarray(lam, dtype=np.float64)
    return Moments(np.asarray(mean, dtype=np.float64), np.diag(lam), lam, np.eye(3), n)


# exactly representable thresholds: a = 0.75 -> a/6 = 0.125
CFG = PipelineConfig(a_voxel=0.75)


class TestLinearityTerm:
    def test_at_below_above(self):
        m = iso_moments()
        assert termination_terms(np.array([[3.0, 0, 0]]), m, CFG).f_l == 0
        assert termination_terms(np.array([[np.nextafter(3.0, 0), 0, 0]]), m, CFG).f_l == 1
        assert termination_terms(np.array([[3.5, 0, 0]]), m, CFG).f_l == 0

    def test_null_direction(self):
        m = iso_moments(lam=(1.0, 1.0, 0.0))
        assert squared_mahalanobis(np.array([[0.5, 0.5, 0.0]]), m)[0] == pytest.approx(0.5)
        assert np.isinf(squared_mahalanobis(np.array([[0.0, 0.0, 1e-3]]), m)[0])

    def test_two_blobs_must_split(self):
        rng = np.random.default_rng(0)
        pts = np.concatenate([rng.normal(size=(100, 3)) * 0.01, rng.normal(size=(100, 3)) * 0.01 + [1, 0, 0]])
        m = compute_moments(pts)
        # oracle: Mahalanobis distances from the joint fit, computed directly
        d = pts - m.mean
        d2 = np.einsum("ij,jk,ik->i", d, np.linalg.inv(m.covariance), d)
        assert np.any(d2 >= 9.0)
        t = termination_terms(pts, m, PipelineConfig())
        assert t.f_l == 0 and t.f_n == 0
        assert t.f == 0


class TestPlanarityTerm:
    def test_at_below_above(self):
        pts = np.zeros((1, 3))
        assert termination_terms(pts, iso_moments(lam=(1, 1, 0.125 ** 2)), CFG).f_p == 0
        below = np.nextafter(0.125 ** 2, 0)
        assert termination_terms(pts, iso_moments(lam=(1, 1, below)), CFG).f_p == 1
        assert termination_terms(pts, iso_moments(lam=(1, 1, 0.2 ** 2)), CFG).f_p == 0


def _density_threshold_lambda(n, a, r):
    """Largest-eigenvalue pair at which n a^2 == pi r^2 sqrt(l l) in floating point."""
    lam = n * a * a / (math.pi * r * r)
    for _ in range(200):
        lhs, rhs = n * a * a, math.pi * r ** 2 * math.sqrt(lam * lam)
        if lhs == rhs:
            return lam
        lam = np.nextafter(lam, 0 if rhs > lhs else np.inf)
    pytest.skip("no exactly representable threshold")


class TestDensityTerm:
    def test_at_below_above(self):
        n = 50
        pts = np.zeros((n, 3))
        lam = _density_threshold_lambda(n, CFG.a_voxel, CFG.r_min)
        assert termination_terms(pts, iso_moments(lam=(lam, lam, 0)), CFG).f_c == 0
        small = np.nextafter(lam, 0)
        assert termination_terms(pts, iso_moments(lam=(small, small, 0)), CFG).f_c == 1
        assert termination_terms(pts, iso_moments(lam=(2 * lam, 2 * lam, 0)), CFG).f_c == 0


class TestCountTerm:
    @pytest.mark.parametrize("n,want", [(39, 1), (40, 0), (41, 0)])
    def test_at_below_above(self, n, want):
        pts = np.random.default_rng(n).normal(size=(n, 3)) * 5
        t = termination_terms(pts, compute_moments(pts), PipelineConfig())
        assert t.f_n == want
        if n == 39:
            assert t.f == 1


def test_exact_plane_sparse_fails_density():
    # 200 points over 1 m^2: planar and linear, but N a^2 = 0.18 < 4 pi / 12
    rng = np.random.default_rng(1)
    pts = np.column_stack([rng.random((200, 2)), np.zeros(200)])
    t = termination_terms(pts, compute_moments(pts), PipelineConfig())
    assert (t.f_l, t.f_p, t.f_c, t.f_n) == (1, 1, 0, 0)


def test_exact_plane_dense_is_flat():
    rng = np.random.default_rng(1)
    pts = np.column_stack([rng.random((1500, 2)), np.zeros(1500)])
    f, flat = termination_check(pts, compute_moments(pts), PipelineConfig())
    assert (f, flat) == (1, 1)


def test_kmeans_branch_vs_em_branch(monkeypatch):
    import pcmm.clustering as clu
    calls = []
    monkeypatch.setattr(clu, "em_gmm2", lambda p, l: calls.append(len(p)) or l)
    rng = np.random.default_rng(2)
    clu.bipartition(rng.normal(size=(500, 3)), PipelineConfig())
    assert calls == []
    clu.bipartition(rng.normal(size=(150, 3)), PipelineConfig())
    assert calls == [150]


def test_bipartition_separates_blobs():
    rng = np.random.default_rng(3)
    a = rng.normal(size=(50, 3)) * 0.1
    b = rng.normal(size=(50, 3)) * 0.1 + [10, 0, 0]
    labels = bipartition(np.concatenate([a, b]), PipelineConfig())
    assert len(set(labels[:50])) == 1 and len(set(labels[50:])) == 1
    assert labels[0] != labels[50]


def test_bipartition_four_points():
    eps = 1e-3
    pts = np.array([[0, 0, 0], [eps, 0, 0], [1, 0, 0], [1 + eps, 0, 0]], dtype=float)
    labels = bipartition(pts, PipelineConfig())
    assert labels[0] == labels[1] and labels[2] == labels[3] and labels[0] != labels[2]


def test_bipartition_degenerate_falls_back_to_median():
    pts = np.zeros((10, 3))
    pts[:, 0] = [0, 0, 0, 0, 0, 0, 0, 0, 0, 1.0]
    labels = bipartition(pts, PipelineConfig())
    assert labels.sum() >= 2 and (~labels).sum() >= 2


def test_bipartition_too_small():
    with pytest.raises(CloudError):
        bipartition(np.zeros((3, 3)), PipelineConfig())


def test_em_and_kmeans_deterministic():
    rng = np.random.default_rng(4)
    pts = rng.normal(size=(120, 3))
    m = compute_moments(pts)
    l1 = kmeans2(pts, m)
    assert np.array_equal(l1, kmeans2(pts, m))
    assert np.array_equal(em_gmm2(pts, l1), em_gmm2(pts, l1))


def test_single_blob_accepted_at_root():
    pts = np.random.default_rng(5).normal(size=(30, 3)) * 0.01
    cs = hierarchical_cluster(pts, PipelineConfig())
    assert cs.I == 1 and len(cs) == 1


def _check_clusterset(cloud, cs, cfg):
    idx = np.sort(np.concatenate([c.indices for c in cs]))
    assert np.array_equal(idx, np.arange(len(cloud)))
    for c in cs:
        np.testing.assert_array_equal(c.points, cloud[c.indices])
        assert c.moments.eigvals[0] >= c.moments.eigvals[1] >= c.moments.eigvals[2]
        if len(c.points) >= 4:
            f, flat = termination_check(c.points, c.moments, cfg)
            assert f == 1
            assert bool(flat) == c.flat
        if c.flat:
            assert 6 * math.sqrt(c.moments.eigvals[2]) < cfg.a_voxel


def test_room_clusters_consistent():
    cfg = PipelineConfig()
    # a coarse room keeps this quick: about 2000 filtered points per wall
    cloud = voxel_filter(synthetic.room(pitch=0.06, sigma=0.003, seed=1), cfg.a_voxel)
    cs = hierarchical_cluster(cloud, cfg)
    _check_clusterset(cloud, cs, cfg)
    assert any(c.flat for c in cs)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(5, 400))
def test_partition_and_termination_property(seed, n):
    rng = np.random.default_rng(seed)
    cloud = rng.normal(size=(n, 3)) * rng.uniform(0.01, 1.0, size=3)
    cfg = PipelineConfig()
    cs = hierarchical_cluster(cloud, cfg)
    _check_clusterset(cloud, cs, cfg)
    again = hierarchical_cluster(cloud, cfg)
    assert [c.indices.tolist() for c in cs] == [c.indices.tolist() for c in again]
