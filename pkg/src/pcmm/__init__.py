"""Compact multi-model point cloud maps.

A cloud is voxel filtered, split hierarchically into Gaussian clusters,
and flat clusters are merged into planes (boundary grid + clip lines) or
curved surfaces (clamped bicubic B-spline height fields). The model can be
saved, resampled into points and scored by nearest-neighbour RMSE.
"""

from ._kernels import BACKEND
from .cloud import CloudError, Moments, PipelineConfig, compute_moments, voxel_filter
from .evaluation import EvalReport, evaluate, resample, rmse
from .io import read_cloud, write_cloud
from .model import ModelFormatError, ModelVersionError, SceneModel, load_model, save_model
from .pipeline import PipelineError, RunStats, run_pipeline

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "CloudError",
    "EvalReport",
    "ModelFormatError",
    "ModelVersionError",
    "Moments",
    "PipelineConfig",
    "PipelineError",
    "RunStats",
    "SceneModel",
    "compute_moments",
    "evaluate",
    "load_model",
    "read_cloud",
    "resample",
    "rmse",
    "run_pipeline",
    "save_model",
    "voxel_filter",
    "write_cloud",
]
