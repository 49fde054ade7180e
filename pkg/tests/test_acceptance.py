"""Acceptance suite: one PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -v``; the summary lines appear in
the "acceptance criteria" section at the end of the run. Criterion 9 needs
the TUM RGB-D freiburg3 frames; point ``PCMM_TUM_D2`` at a directory of
.ply/.xyz frames to enable it.
"""

import math
import os
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from oracles import (
    best_plane_rmse,
    brute_min_pair_sqdist,
    brute_rmse,
    de_boor,
    pinv_residual,
    random_height_grid,
)

from pcmm import _kernels, synthetic
from pcmm.bspline import basis_weights, design_matrix, eval_surface, fit_heights, init_control_points, \
    observations, patch_for_grid
from pcmm.cloud import Moments, PipelineConfig, compute_moments
from pcmm.clustering import termination_terms
from pcmm.evaluation import evaluate, grid_lattice, rmse
from pcmm.bspline import surface_heights
from pcmm.io import read_cloud
from pcmm.merge import judge_angle, judge_gaussian_gap, judge_normal_distance, merge_edges
from pcmm.model import dumps, loads, model_differences
from pcmm.pipeline import run_pipeline


def record(number, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def timed_run(points, cfg=None):
    t0 = time.perf_counter()
    model, stats = run_pipeline(points, cfg, keep_intermediate=True)
    return model, stats, time.perf_counter() - t0


@pytest.fixture(scope="module")
def room():
    pts = synthetic.room()
    return (pts,) + timed_run(pts)


@pytest.fixture(scope="module")
def cylinder():
    pts = synthetic.half_cylinder()
    return (pts,) + timed_run(pts)


@pytest.fixture(scope="module")
def mixed():
    pts = synthetic.mixed_scene(0)
    return (pts,) + timed_run(pts)


def test_criterion_01_room(room):
    pts, model, stats, elapsed = room
    rep = evaluate(model, pts)
    ok = (len(model.planes) == 6 and len(model.surfaces) == 0 and rep.precision_rmse <= 0.03
          and rep.completeness_rmse <= 0.03 and elapsed < 5.0)
    record(1, ok, f"planes={len(model.planes)} surfaces={len(model.surfaces)} "
                  f"precision={rep.precision_rmse:.4f} completeness={rep.completeness_rmse:.4f} "
                  f"runtime={elapsed:.2f}s (limits: 6, 0, <=0.03, <=0.03, <5s)")


def test_criterion_02_cylinder(cylinder):
    pts, model, stats, _ = cylinder
    gen = []
    for s in model.surfaces:
        xy = grid_lattice(s.grid, model.config.a_voxel)
        local = np.column_stack([xy, surface_heights(s.patch, xy)])
        gen.append(local @ s.basis.T + s.origin)
    if not gen:
        record(2, False, "no surface detected")
    surf_prec = rmse(np.concatenate(gen), pts)
    det = stats.extra["detection"]
    support = np.concatenate(det.surfaces)
    plane_raw = best_plane_rmse(pts)
    plane_support = best_plane_rmse(support)
    baseline = min(plane_raw, plane_support)
    ok = surf_prec <= 0.03 and surf_prec < baseline
    record(2, ok, f"surfaces={len(model.surfaces)} surface precision={surf_prec:.4f} "
                  f"best single plane rmse={baseline:.4f} (limit <=0.03 and < plane)")


def test_criterion_03_mixed(mixed):
    pts, model, stats, _ = mixed
    types = (len(model.gaussians), len(model.planes), len(model.surfaces))
    accounted = sum(g.count for g in model.gaussians) + sum(p.count for p in model.planes) + \
        sum(s.count for s in model.surfaces)
    blob = dumps(model)
    back = loads(blob)
    ok = min(types) >= 1 and accounted == stats.filtered_points and model_differences(model, back) == [] \
        and dumps(back) == blob
    record(3, ok, f"(gaussians, planes, surfaces)={types} accounted={accounted} "
                  f"filtered={stats.filtered_points} round trip exact={dumps(back) == blob}")


def test_criterion_04_least_squares():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(25):
        nx, ny = (int(v) for v in rng.integers(1, 13, size=2))
        g = random_height_grid(rng, nx, ny)
        p0 = init_control_points(g)
        fitted = fit_heights(p0, g)
        uv, target = observations(g, p0)
        a = design_matrix(p0, uv)
        r = float(np.linalg.norm(a @ fitted.z.ravel() - target))
        oracle = pinv_residual(a.toarray(), target)
        worst = max(worst, abs(r - oracle) / max(np.linalg.norm(target), 1e-300))
    record(4, worst <= 1e-6, f"worst relative residual gap vs pseudo-inverse={worst:.2e} (limit 1e-6)")


def test_criterion_05_basis():
    rng = np.random.default_rng(5)
    p = patch_for_grid(7, 5, [0.0, 0.0], 0.1, rng.normal(size=(9, 7)))
    pou = max(abs(basis_weights(u, v, p).sum() - 1.0) for u, v in rng.random((1000, 2)))
    corners = all(
        np.array_equal(eval_surface(p, u, v), p.control_points()[a, b])
        for (u, v), (a, b) in zip([(0, 0), (0, 1), (1, 0), (1, 1)], [(0, 0), (0, -1), (-1, 0), (-1, -1)])
    )
    cp = p.control_points()
    worst = 0.0
    for u, v in rng.random((100, 2)):
        rows = np.array([[de_boor(p.knots_y, p.degree_y, cp[a, :, k], v) for k in range(3)] for a in range(9)])
        want = np.array([de_boor(p.knots_x, p.degree_x, rows[:, k], u) for k in range(3)])
        worst = max(worst, float(np.abs(eval_surface(p, u, v) - want).max()))
    ok = pou < 1e-9 and corners and worst <= 1e-12
    record(5, ok, f"partition of unity err={pou:.1e} corners exact={corners} de Boor err={worst:.1e}")


def test_criterion_06_metric():
    rng = np.random.default_rng(6)
    worst = 0.0
    backends = [b for b in (_kernels.compiled_backend, _kernels.python_backend) if b is not None]
    for _ in range(50):
        a = rng.normal(size=(500, 3)) * rng.uniform(0.1, 2)
        b = rng.normal(size=(500, 3)) * rng.uniform(0.1, 2) + rng.normal(size=3)
        want = brute_rmse(a, b)
        for be in backends:
            got = math.sqrt(be.nn_sqdist(a, b).mean())
            worst = max(worst, abs(got - want))
        worst = max(worst, abs(rmse(a, b) - want))
    names = ",".join(b.BACKEND for b in backends)
    record(6, worst <= 1e-12, f"max |accelerated - brute force|={worst:.1e} over 50 pairs [{names}]")


def _moments(mean=(0, 0, 0), lam=(1.0, 1.0, 1.0), vecs=None, n=100):
    lam = np.asarray(lam, dtype=np.float64)
    q = np.eye(3) if vecs is None else np.asarray(vecs, dtype=np.float64)
    return Moments(np.asarray(mean, dtype=np.float64), q @ np.diag(lam) @ q.T, lam, q, n)


def _predicate_cases():
    """(name, [(expected, actual) at / below / above the threshold])."""
    cfg = PipelineConfig(a_voxel=0.75, l_min=1.125)
    a = cfg.a_voxel
    one = np.zeros((1, 3))
    cases = {}
    m = _moments()
    cases["f_l (d^2 < 9)"] = [
        (0, termination_terms(np.array([[3.0, 0, 0]]), m, cfg).f_l),
        (1, termination_terms(np.array([[2.5, 0, 0]]), m, cfg).f_l),
        (0, termination_terms(np.array([[3.5, 0, 0]]), m, cfg).f_l),
    ]
    t = a / 6
    cases["f_p (6 sqrt(l2) < a)"] = [
        (0, termination_terms(one, _moments(lam=(1, 1, t * t)), cfg).f_p),
        (1, termination_terms(one, _moments(lam=(1, 1, np.nextafter(t * t, 0))), cfg).f_p),
        (0, termination_terms(one, _moments(lam=(1, 1, 4 * t * t)), cfg).f_p),
    ]
    n = 50
    lam = n * a * a / (math.pi * cfg.r_min ** 2)
    for _ in range(200):
        rhs = math.pi * cfg.r_min ** 2 * math.sqrt(lam * lam)
        if rhs == n * a * a:
            break
        lam = np.nextafter(lam, 0 if rhs > n * a * a else np.inf)
    pts = np.zeros((n, 3))
    cases["f_c (N a^2 > pi r^2 sqrt(l0 l1))"] = [
        (0, termination_terms(pts, _moments(lam=(lam, lam, 0)), cfg).f_c),
        (1, termination_terms(pts, _moments(lam=(np.nextafter(lam, 0),) * 2 + (0,)), cfg).f_c),
        (0, termination_terms(pts, _moments(lam=(2 * lam, 2 * lam, 0)), cfg).f_c),
    ]
    rng = np.random.default_rng(0)
    cases["f_n (N < N_min)"] = [
        (0, termination_terms(rng.normal(size=(40, 3)), compute_moments(rng.normal(size=(40, 3))), cfg).f_n),
        (1, termination_terms(rng.normal(size=(39, 3)), compute_moments(rng.normal(size=(39, 3))), cfg).f_n),
        (0, termination_terms(rng.normal(size=(41, 3)), compute_moments(rng.normal(size=(41, 3))), cfg).f_n),
    ]
    th = cfg.theta_min
    flat = _moments(lam=(1, 1, 0))

    def tilted(angle):
        return _moments(lam=(1, 1, 0), vecs=[[0, -math.cos(angle), math.sin(angle)], [1, 0, 0],
                                             [0, math.sin(angle), math.cos(angle)]])
    cases["d_a (|n.n| > cos theta)"] = [
        (0, judge_angle(flat, _moments(lam=(1, 1, 0), vecs=[[0, -math.cos(th), math.sin(th)], [1, 0, 0],
                                                            [0, math.sin(th), math.cos(th)]]), th)),
        (1, judge_angle(flat, tilted(0.9 * th), th)),
        (0, judge_angle(flat, tilted(1.1 * th), th)),
    ]
    cases["d_n (mean normal offset < l_min)"] = [
        (0, judge_normal_distance(flat, _moments(mean=(0, 0, 1.125), lam=(1, 1, 0)), cfg.l_min)),
        (1, judge_normal_distance(flat, _moments(mean=(0, 0, 1.0), lam=(1, 1, 0)), cfg.l_min)),
        (0, judge_normal_distance(flat, _moments(mean=(0, 0, 1.25), lam=(1, 1, 0)), cfg.l_min)),
    ]
    r = 0.5
    sph = _moments(lam=(r * r,) * 3)
    cases["d_g (gap < 5a)"] = [
        (0, judge_gaussian_gap(sph, _moments(mean=(6 * r + 5 * a, 0, 0), lam=(r * r,) * 3), a)),
        (1, judge_gaussian_gap(sph, _moments(mean=(6 * r + 4 * a, 0, 0), lam=(r * r,) * 3), a)),
        (0, judge_gaussian_gap(sph, _moments(mean=(6 * r + 6 * a, 0, 0), lam=(r * r,) * 3), a)),
    ]
    xs, ys = np.meshgrid(np.arange(-1.0, 0.125, 0.25), np.arange(0.0, 0.75, 0.25), indexing="ij")
    p = np.column_stack([xs.ravel(), ys.ravel(), np.zeros(xs.size)])
    dp = []
    for shift in (1.0 + 3 * a, 1.0 + 2.5 * a, 1.0 + 3.5 * a):
        q = p + [shift, 0, 0]
        dp.append(len(merge_edges([p, q], [compute_moments(p), compute_moments(q)], cfg)))
    assert brute_min_pair_sqdist(p, p + [1.0 + 3 * a, 0, 0]) == (3 * a) ** 2
    cases["d_p (closest pair < 3a)"] = [(0, dp[0]), (1, dp[1]), (0, dp[2])]
    return cases


def test_criterion_07_predicates():
    cases = _predicate_cases()
    bad = [name for name, triples in cases.items() if any(want != got for want, got in triples)]
    record(7, not bad, f"{len(cases)} predicates x (at, below, above) checked; failures={bad or 'none'}")


def test_criterion_08_determinism(room, cylinder, mixed):
    same = {}
    for name, (pts, model, _, _) in (("room", room), ("cylinder", cylinder), ("mixed", mixed)):
        again, _ = run_pipeline(pts)
        same[name] = dumps(again) == dumps(model)
    record(8, all(same.values()), f"byte-identical reruns: {same}")


def _tum_frames():
    root = os.environ.get("PCMM_TUM_D2")
    if not root:
        return None
    root = Path(root)
    files = sorted(p for p in root.iterdir() if p.suffix.lower() in (".ply", ".xyz")) if root.is_dir() else [root]
    return files


def test_criterion_09_dataset():
    files = _tum_frames()
    if not files:
        line = "SKIP criterion 9: optional dataset check; set PCMM_TUM_D2 to a directory of frames"
        ACCEPTANCE_LINES.append(line)
        pytest.skip(line)
    cfg = PipelineConfig(a_voxel=0.03)
    precs, comps, fit_ms = [], [], []
    for f in files:
        pts = read_cloud(f)
        model, stats = run_pipeline(pts, cfg)
        rep = evaluate(model, pts)
        precs.append(rep.precision_rmse)
        comps.append(rep.completeness_rmse)
        fit_ms.append(stats.plane_fit_ms + stats.surface_fit_ms)
    p, c, t = float(np.mean(precs)), float(np.mean(comps)), float(np.mean(fit_ms))
    ok = 0.02 <= p <= 0.05 and 0.015 <= c <= 0.04 and t <= 41.0
    record(9, ok, f"frames={len(files)} precision={p:.4f} completeness={c:.4f} fitting={t:.2f}ms")


def test_criterion_10_compression(room):
    pts, model, _, _ = room
    rep = evaluate(model, pts)
    record(10, rep.compression_ratio > 20, f"compression ratio={rep.compression_ratio:.1f} (limit > 20)")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
