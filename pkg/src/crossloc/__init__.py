"""Cross-view localization: refine a coarse 3-DoF vehicle pose by matching
sparse on-ground keypoints from ground cameras against an overhead map."""

from .geometry import (
    Anchor,
    Camera,
    CameraExtrinsics,
    CameraIntrinsics,
    GroundPoint3D,
    Pose3DoF,
    SatelliteFrame,
    meters_per_pixel,
)
from .optimizer import LMConfig, OptimizeReport

__all__ = [
    "Anchor",
    "Camera",
    "CameraExtrinsics",
    "CameraIntrinsics",
    "GroundPoint3D",
    "LMConfig",
    "OptimizeReport",
    "Pose3DoF",
    "SatelliteFrame",
    "meters_per_pixel",
]

__version__ = "0.1.0"
