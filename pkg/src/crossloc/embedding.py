"""Three-channel spatial embedding maps appended to images before feature extraction.

Channel 0 (heading): cosine of the angle between the pixel's ground direction
and the forward axis. Channel 1 (distance): on-ground radial distance
normalized by the maximum visible distance, clamped to [0, 1]. Channel 2
(height): the raw down-component of the back-projected ray for ground views,
a constant sentinel for the top-down satellite view.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .geometry import (
    Anchor,
    Camera,
    EPS_RAY,
    GroundPoint3D,
    SatelliteFrame,
    heading_rotation,
    inverse_project_grid,
)


@dataclass(frozen=True)
class EmbeddingConfig:
    max_visible_distance: float = 200.0  # meters
    satellite_height_value: float = -1.0

    def __post_init__(self):
        if self.max_visible_distance <= 0:
            raise ValueError("max_visible_distance must be positive")


@dataclass(frozen=True)
class GroundView:
    camera: Camera


@dataclass(frozen=True)
class SatelliteView:
    frame: SatelliteFrame
    anchor: Anchor  # coarse pose the overhead embedding is expressed against


def heading_channel(point) -> float:
    """Cosine of the ground-plane angle to the forward axis: x / sqrt(x^2 + y^2).

    The degenerate (0, 0) column has no preferred direction and maps to 0.
    """
    x, y = float(point[0]), float(point[1])
    r = math.hypot(x, y)
    if r == 0.0:
        return 0.0
    return x / r


def distance_channel(point: GroundPoint3D, cfg: EmbeddingConfig) -> float:
    """Normalized radial ground distance, clamped to [0, 1]."""
    d = math.hypot(point.x, point.y) / cfg.max_visible_distance
    return min(max(d, 0.0), 1.0)


def height_channel(ray, is_satellite: bool, cfg: EmbeddingConfig) -> float:
    """Raw down-component of the ray; satellite pixels get the constant sentinel."""
    if is_satellite:
        return cfg.satellite_height_value
    return float(ray[2])


def _heading_grid(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    r = np.hypot(x, y)
    out = np.zeros_like(x)
    np.divide(x, r, out=out, where=r > 0)
    return out


def build_ground_embedding(camera: Camera, cfg: EmbeddingConfig) -> np.ndarray:
    """Per-pixel embedding for a perspective ground camera; shape (h, w, 3).

    Horizon-failed pixels (ray not descending) keep their true ray height but
    receive the saturated distance 1.0.
    """
    rays = inverse_project_grid(camera.intrinsics, camera.extrinsics.rot_cam_to_vehicle)
    height = rays[..., 2]

    below = height > EPS_RAY
    t = camera.extrinsics.trans_cam_to_vehicle
    with np.errstate(divide="ignore", invalid="ignore"):
        s = camera.extrinsics.cam_height / height
    gx = np.where(below, s * rays[..., 0] + t[0], 0.0)
    gy = np.where(below, s * rays[..., 1] + t[1], 0.0)
    # Heading is measured from the vehicle origin to the lifted ground point,
    # matching the overhead view; the raw ray direction would be offset by the
    # camera mount position. Horizon-failed pixels fall back to the ray.
    heading = np.where(
        below,
        _heading_grid(gx, gy),
        _heading_grid(rays[..., 0], rays[..., 1]),
    )
    dist = np.hypot(gx, gy) / cfg.max_visible_distance
    dist = np.where(below, np.clip(dist, 0.0, 1.0), 1.0)
    return np.stack([heading, dist, height], axis=-1)


def build_satellite_embedding(sat: SatelliteFrame, anchor: Anchor, cfg: EmbeddingConfig) -> np.ndarray:
    """Per-pixel embedding for the overhead view, relative to the anchor vehicle origin."""
    u = (np.arange(sat.width) - sat.center_u) * sat.gamma
    v = (np.arange(sat.height) - sat.center_v) * sat.gamma
    east, south = np.meshgrid(u, v)
    rel = np.stack([east - anchor.position[0], south - anchor.position[1]], axis=-1)
    r = heading_rotation(anchor.heading)[:2, :2]
    # world -> anchor-vehicle plane coordinates
    plane = rel @ r
    heading = _heading_grid(plane[..., 0], plane[..., 1])
    dist = np.clip(np.hypot(plane[..., 0], plane[..., 1]) / cfg.max_visible_distance, 0.0, 1.0)
    height = np.full_like(heading, cfg.satellite_height_value)
    return np.stack([heading, dist, height], axis=-1)


def build_embedding(view: Union[GroundView, SatelliteView], cfg: EmbeddingConfig) -> np.ndarray:
    if isinstance(view, GroundView):
        return build_ground_embedding(view.camera, cfg)
    if isinstance(view, SatelliteView):
        return build_satellite_embedding(view.frame, view.anchor, cfg)
    raise TypeError(f"unsupported view descriptor: {type(view)!r}")
