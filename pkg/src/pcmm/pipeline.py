"""End-to-end fitting: filter, cluster, merge/detect, fit planes and surfaces."""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .boundary import build_boundary, fit_clip_lines, to_local_frame
from .bspline import SMOOTH_WEIGHT, fit_heights, init_control_points
from .cloud import PipelineConfig, as_points, voxel_filter
from .clustering import hierarchical_cluster
from .merge import detect
from .model import GaussianPrimitive, PlanePrimitive, SceneModel, SurfacePrimitive


class PipelineError(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class RunStats:
    filter_ms: float = 0.0
    clustering_ms: float = 0.0
    detect_ms: float = 0.0
    plane_fit_ms: float = 0.0
    surface_fit_ms: float = 0.0
    total_ms: float = 0.0
    input_points: int = 0
    filtered_points: int = 0
    clusters: int = 0
    gaussians: int = 0
    planes: int = 0
    surfaces: int = 0
    extra: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return asdict(self)

    def to_text(self) -> str:
        return "\n".join(f"{k}: {v}" for k, v in self.as_dict().items() if k != "extra")


class _Stage:
    def __init__(self, name, stats, attr):
        self.name, self.stats, self.attr = name, stats, attr

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, kind, exc, tb):
        setattr(self.stats, self.attr, getattr(self.stats, self.attr) + 1e3 * (time.perf_counter() - self.t0))
        if exc is not None and not isinstance(exc, PipelineError):
            raise PipelineError(self.name, exc) from exc
        return False


def fit_plane(points: np.ndarray, cfg: PipelineConfig) -> PlanePrimitive:
    frame = to_local_frame(points)
    grid = build_boundary(frame, cfg.plane_boundary_voxel)
    fit_clip_lines(grid, frame, cfg.a_voxel)
    return PlanePrimitive(frame.origin, frame.basis, grid, len(points))


def fit_surface(points: np.ndarray, cfg: PipelineConfig) -> SurfacePrimitive:
    frame = to_local_frame(points)
    grid = build_boundary(frame, cfg.surface_boundary_voxel)
    fit_clip_lines(grid, frame, cfg.a_voxel)
    patch = fit_heights(init_control_points(grid), grid, smoothing=SMOOTH_WEIGHT)
    return SurfacePrimitive(frame.origin, frame.basis, grid, patch, len(points))


def run_pipeline(cloud, cfg: PipelineConfig | None = None, keep_intermediate: bool = False):
    """Fit a scene model to a raw point cloud; returns (SceneModel, RunStats)."""
    cfg = cfg or PipelineConfig()
    stats = RunStats()
    t0 = time.perf_counter()
    with _Stage("input", stats, "filter_ms"):
        pts = as_points(cloud)
    stats.input_points = len(pts)
    with _Stage("filter", stats, "filter_ms"):
        filtered = voxel_filter(pts, cfg.a_voxel)
    stats.filtered_points = len(filtered)
    with _Stage("clustering", stats, "clustering_ms"):
        if len(filtered) >= 2:
            clusters = hierarchical_cluster(filtered, cfg)
        else:
            clusters = None
    with _Stage("detect", stats, "detect_ms"):
        det = detect(clusters, cfg) if clusters is not None else None

    model = SceneModel(config=cfg)
    if det is None:
        # a single surviving voxel: one zero-covariance Gaussian
        model.gaussians.append(GaussianPrimitive(filtered[0].copy(), np.zeros((3, 3)), 1))
    else:
        stats.clusters = len(clusters)
        for m in det.gaussians:
            model.gaussians.append(GaussianPrimitive(m.mean, m.covariance, m.count))
        with _Stage("plane fitting", stats, "plane_fit_ms"):
            for p in det.planes:
                model.planes.append(fit_plane(p, cfg))
        with _Stage("surface fitting", stats, "surface_fit_ms"):
            for s in det.surfaces:
                model.surfaces.append(fit_surface(s, cfg))
        stats.extra["demoted_components"] = det.demoted
    stats.total_ms = 1e3 * (time.perf_counter() - t0)
    stats.gaussians = len(model.gaussians)
    stats.planes = len(model.planes)
    stats.surfaces = len(model.surfaces)
    model.stats = {
        "input_points": stats.input_points,
        "filtered_points": stats.filtered_points,
        "clusters": stats.clusters,
        "gaussians": stats.gaussians,
        "planes": stats.planes,
        "surfaces": stats.surfaces,
    }
    if keep_intermediate:
        stats.extra["filtered"] = filtered
        stats.extra["clusters"] = clusters
        stats.extra["detection"] = det
    return model, stats
