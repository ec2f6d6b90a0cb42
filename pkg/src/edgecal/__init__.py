"""Targetless camera-LiDAR extrinsic calibration from depth, reflectivity and object edges."""

from .config import PipelineConfig
from .geometry import CameraIntrinsics, ExtrinsicParams, PanoramaGeometry
from .objective import CalibrationResult, CostBreakdown
from .pipeline import calibrate

__all__ = [
    "CalibrationResult",
    "CameraIntrinsics",
    "CostBreakdown",
    "ExtrinsicParams",
    "PanoramaGeometry",
    "PipelineConfig",
    "calibrate",
]

__version__ = "0.1.0"
