"""Coordinate frames, camera models, projections and pose parametrization.

Conventions used throughout the package:

Vehicle ground frame (right-handed):
  - x: forward (direction of motion)
  - y: right
  - z: down
  - ground plane: z = 0, camera optical centers sit at z = -height

Satellite world frame (right-handed, north-up imagery):
  - x: East  (= +u image direction)
  - y: South (= +v image direction)
  - z: down
  - origin at the satellite image center

Camera frame (standard computer vision):
  - x: right, y: down, z: forward (optical axis)

Heading is a compass angle in radians: 0 points North, increasing
clockwise (pi/2 points East). Yaw is stored in radians and wrapped to
(-pi, pi]; degrees appear only at CLI/service boundaries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import HorizonError

# Web-mercator ground resolution at zoom 0, meters per pixel at the equator.
WEB_MERCATOR_BASE = 156543.03392

# Rays with a down-component below this never intersect the ground plane
# at a useful distance (pixel at or above the horizon).
EPS_RAY = 1e-3


def wrap_angle(a: float) -> float:
    """Wrap an angle in radians to (-pi, pi]."""
    return -((math.pi - a) % (2.0 * math.pi) - math.pi)


@dataclass(frozen=True)
class Pose3DoF:
    """Optimized vehicle state: lateral (m, right), longitudinal (m, forward), yaw (rad)."""

    lateral: float = 0.0
    longitudinal: float = 0.0
    yaw: float = 0.0

    def __post_init__(self):
        for v in (self.lateral, self.longitudinal, self.yaw):
            if not math.isfinite(v):
                raise ValueError(f"non-finite pose component: {self}")
        object.__setattr__(self, "yaw", wrap_angle(self.yaw))

    def as_array(self) -> np.ndarray:
        return np.array([self.lateral, self.longitudinal, self.yaw])


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError(f"focal lengths must be positive: fx={self.fx} fy={self.fy}")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError(f"principal point ({self.cx}, {self.cy}) outside image")

    def k_matrix(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )


@dataclass(frozen=True)
class CameraExtrinsics:
    """Camera-to-vehicle placement. trans_cam_to_vehicle is the optical center
    in the vehicle frame; cam_height is the height above the ground plane."""

    rot_cam_to_vehicle: np.ndarray  # (3, 3)
    trans_cam_to_vehicle: np.ndarray  # (3,)
    cam_height: float

    def __post_init__(self):
        r = np.asarray(self.rot_cam_to_vehicle, dtype=float)
        t = np.asarray(self.trans_cam_to_vehicle, dtype=float)
        if r.shape != (3, 3) or t.shape != (3,):
            raise ValueError("extrinsics must be a 3x3 rotation and a 3-vector")
        if not np.allclose(r.T @ r, np.eye(3), atol=1e-9) or abs(np.linalg.det(r) - 1.0) > 1e-9:
            raise ValueError("rot_cam_to_vehicle is not a proper rotation")
        if self.cam_height <= 0:
            raise ValueError("cam_height must be positive")
        object.__setattr__(self, "rot_cam_to_vehicle", r)
        object.__setattr__(self, "trans_cam_to_vehicle", t)


@dataclass(frozen=True)
class Camera:
    name: str
    intrinsics: CameraIntrinsics
    extrinsics: CameraExtrinsics


@dataclass(frozen=True)
class SatelliteFrame:
    """Parallel-projection overhead camera: pixels relate to world meters by gamma."""

    center_u: float
    center_v: float
    gamma: float  # meters per pixel
    width: int
    height: int
    latitude: Optional[float] = None
    zoom: Optional[int] = None
    scale: Optional[int] = None

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if self.latitude is not None and self.zoom is not None and self.scale is not None:
            expected = meters_per_pixel(self.latitude, self.zoom, self.scale)
            if abs(expected - self.gamma) > 1e-9 * max(abs(expected), abs(self.gamma)):
                raise ValueError(
                    f"gamma {self.gamma} inconsistent with geo metadata "
                    f"(expected {expected})"
                )


@dataclass(frozen=True)
class GroundPoint3D:
    """Point in the vehicle ground frame. z is 0 for lifted on-ground points."""

    x: float
    y: float
    z: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])


@dataclass(frozen=True)
class Anchor:
    """World placement of the coarse initial pose: heading (rad, compass) and
    position (east, south) in meters from the satellite image center."""

    heading: float
    position: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float))

    @staticmethod
    def from_pixel(sat: SatelliteFrame, heading_deg: float, pixel_u: float, pixel_v: float) -> "Anchor":
        pos = np.array([(pixel_u - sat.center_u) * sat.gamma, (pixel_v - sat.center_v) * sat.gamma])
        return Anchor(heading=math.radians(heading_deg), position=pos)


@dataclass(frozen=True)
class RigidTransform:
    """Vehicle-frame -> satellite-world-frame rigid transform."""

    rotation: np.ndarray  # (3, 3)
    translation: np.ndarray  # (3,)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform points of shape (..., 3)."""
        return np.asarray(points) @ self.rotation.T + self.translation


def meters_per_pixel(latitude: float, zoom: int, scale: int) -> float:
    """Web-map ground resolution in meters per pixel at the given latitude."""
    if abs(latitude) >= 90.0:
        raise ValueError(f"latitude must satisfy |lat| < 90, got {latitude}")
    if zoom < 0 or scale < 1:
        raise ValueError(f"invalid zoom/scale: {zoom}/{scale}")
    return WEB_MERCATOR_BASE * math.cos(math.radians(latitude)) / (2 ** zoom * scale)


def heading_rotation(psi: float) -> np.ndarray:
    """Rotation mapping vehicle axes to world axes for compass heading psi.

    Columns are the world-frame images of (forward, right, down):
    forward = (sin psi, -cos psi, 0), right = (cos psi, sin psi, 0).
    """
    s, c = math.sin(psi), math.cos(psi)
    return np.array([[s, c, 0.0], [-c, s, 0.0], [0.0, 0.0, 1.0]])


def inverse_project(intr: CameraIntrinsics, rot_cam_to_vehicle: np.ndarray, pixel) -> np.ndarray:
    """Back-project a pixel to a homogeneous ray in vehicle-axis orientation.

    Returns R_cam2vehicle @ K^-1 @ (u, v, 1); the scale is unknown and the
    ray is deliberately NOT normalized.
    """
    u, v = float(pixel[0]), float(pixel[1])
    d = np.array([(u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, 1.0])
    return np.asarray(rot_cam_to_vehicle) @ d


def inverse_project_grid(intr: CameraIntrinsics, rot_cam_to_vehicle: np.ndarray) -> np.ndarray:
    """Rays for every pixel center of the image; shape (height, width, 3)."""
    u = (np.arange(intr.width) - intr.cx) / intr.fx
    v = (np.arange(intr.height) - intr.cy) / intr.fy
    uu, vv = np.meshgrid(u, v)
    d = np.stack([uu, vv, np.ones_like(uu)], axis=-1)
    return d @ np.asarray(rot_cam_to_vehicle).T


def lift_to_ground(ray: np.ndarray, extr: CameraExtrinsics) -> GroundPoint3D:
    """Intersect a vehicle-oriented camera ray with the ground plane.

    Scales the ray so that it descends cam_height meters, then offsets by the
    camera position. The result lies on the plane by construction (z = 0).
    """
    rz = float(ray[2])
    if rz <= EPS_RAY:
        raise HorizonError(f"ray z-component {rz} <= {EPS_RAY}: no ground intersection")
    s = extr.cam_height / rz
    p = s * np.asarray(ray, dtype=float) + extr.trans_cam_to_vehicle
    return GroundPoint3D(float(p[0]), float(p[1]), 0.0)


def pose_to_transform(pose: Pose3DoF, anchor: Anchor) -> RigidTransform:
    """Compose the 3-DoF perturbation on the right of the anchor placement.

    The translation offset is expressed in the anchor's vehicle frame
    (longitudinal along forward, lateral along right); the heading adds yaw.
    """
    r_anchor = heading_rotation(anchor.heading)
    rotation = heading_rotation(anchor.heading + pose.yaw)
    offset = r_anchor @ np.array([pose.longitudinal, pose.lateral, 0.0])
    translation = np.array([anchor.position[0], anchor.position[1], 0.0]) + offset
    return RigidTransform(rotation=rotation, translation=translation)


def satellite_project(sat: SatelliteFrame, transform: RigidTransform, point) -> tuple:
    """Parallel-project a vehicle-frame ground point into the satellite image.

    Returns (pixel (2,), valid). valid is False when the pixel leaves the
    image; this is signaled by the flag, never by an exception.
    """
    p = point.as_array() if isinstance(point, GroundPoint3D) else np.asarray(point, dtype=float)
    w = transform.apply(p)
    pix = np.array([w[0] / sat.gamma + sat.center_u, w[1] / sat.gamma + sat.center_v])
    valid = bool(0 <= pix[0] < sat.width and 0 <= pix[1] < sat.height)
    return pix, valid


def satellite_project_batch(sat: SatelliteFrame, transform: RigidTransform, points: np.ndarray):
    """Vectorized satellite_project for points of shape (n, 3)."""
    w = transform.apply(points)
    pix = w[:, :2] / sat.gamma + np.array([sat.center_u, sat.center_v])
    valid = (
        (pix[:, 0] >= 0) & (pix[:, 0] < sat.width) & (pix[:, 1] >= 0) & (pix[:, 1] < sat.height)
    )
    return pix, valid


def pose_jacobian(sat: SatelliteFrame, pose: Pose3DoF, anchor: Anchor, point) -> np.ndarray:
    """Analytic 2x3 derivative of the projected pixel w.r.t. (lateral, longitudinal, yaw)."""
    p = point.as_array() if isinstance(point, GroundPoint3D) else np.asarray(point, dtype=float)
    return pose_jacobian_batch(sat, pose, anchor, p[None, :])[0]


def pose_jacobian_batch(sat: SatelliteFrame, pose: Pose3DoF, anchor: Anchor, points: np.ndarray) -> np.ndarray:
    """Vectorized pose_jacobian for points of shape (n, 3); returns (n, 2, 3).

    Translation columns are the world images of the anchor-frame right and
    forward axes over gamma; the yaw column differentiates the heading
    rotation applied to each point.
    """
    n = points.shape[0]
    sa, ca = math.sin(anchor.heading), math.cos(anchor.heading)
    psi = anchor.heading + pose.yaw
    s, c = math.sin(psi), math.cos(psi)
    jac = np.zeros((n, 2, 3))
    jac[:, 0, 0] = ca / sat.gamma  # d u / d lateral   (right axis, east comp.)
    jac[:, 1, 0] = sa / sat.gamma
    jac[:, 0, 1] = sa / sat.gamma  # d u / d longitudinal (forward axis)
    jac[:, 1, 1] = -ca / sat.gamma
    # d(R(psi) p)/d psi, east/south components only.
    jac[:, 0, 2] = (c * points[:, 0] - s * points[:, 1]) / sat.gamma
    jac[:, 1, 2] = (s * points[:, 0] + c * points[:, 1]) / sat.gamma
    return jac


def perspective_project(point: np.ndarray, intr: CameraIntrinsics, extr: CameraExtrinsics):
    """Project a vehicle-frame point into a perspective camera.

    Returns (pixel (2,), visible). Visible requires positive depth and the
    pixel inside the image bounds.
    """
    pix, vis = perspective_project_batch(np.asarray(point, dtype=float)[None, :], intr, extr)
    return pix[0], bool(vis[0])


def perspective_project_batch(points: np.ndarray, intr: CameraIntrinsics, extr: CameraExtrinsics):
    """Vectorized perspective projection for points of shape (n, 3)."""
    cam = (points - extr.trans_cam_to_vehicle) @ extr.rot_cam_to_vehicle
    depth = cam[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = intr.fx * cam[:, 0] / depth + intr.cx
        v = intr.fy * cam[:, 1] / depth + intr.cy
    pix = np.stack([u, v], axis=-1)
    visible = (depth > 1e-9) & (u >= 0) & (u < intr.width) & (v >= 0) & (v < intr.height)
    pix[~np.isfinite(pix)] = -1.0
    return pix, visible
