"""Synthetic scene generation and scene-directory IO.

Scenes are planar: ground views are rendered by inverse-warping the
satellite texture through each camera's ground homography, so every
on-plane ground pixel corresponds exactly to the satellite texture at its
lifted location. Off-plane distractors are painted over the ground views
(breaking the plane correspondence) together with oracle on-ground masks.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
from PIL import Image

from ..configs import camera_from_dict, camera_to_dict, satellite_from_dict, satellite_to_dict
from ..errors import ConfigError
from ..geometry import (
    Anchor,
    Camera,
    CameraExtrinsics,
    CameraIntrinsics,
    EPS_RAY,
    Pose3DoF,
    SatelliteFrame,
    inverse_project_grid,
    pose_to_transform,
)
from ..pyramid import bilinear_lookup_batch

TEXTURES = ("blobs", "checker", "roadmarks")


def make_camera(
    name: str,
    mount_yaw_deg: float,
    pitch_down_deg: float = 8.0,
    position: Tuple[float, float] = (0.0, 0.0),
    cam_height: float = 1.6,
    width: int = 320,
    height: int = 240,
    focal: float = 200.0,
) -> Camera:
    """Perspective camera mounted on the vehicle, yawed about the down axis
    and pitched toward the ground."""
    kappa = math.radians(mount_yaw_deg)
    tau = math.radians(pitch_down_deg)
    forward = np.array([math.cos(kappa) * math.cos(tau), math.sin(kappa) * math.cos(tau), math.sin(tau)])
    right = np.array([-math.sin(kappa), math.cos(kappa), 0.0])
    down = np.cross(forward, right)
    rot = np.stack([right, down, forward], axis=1)  # columns: cam x, y, z in vehicle frame
    intr = CameraIntrinsics(fx=focal, fy=focal, cx=width / 2 - 0.5, cy=height / 2 - 0.5, width=width, height=height)
    extr = CameraExtrinsics(
        rot_cam_to_vehicle=rot,
        trans_cam_to_vehicle=np.array([position[0], position[1], -cam_height]),
        cam_height=cam_height,
    )
    return Camera(name=name, intrinsics=intr, extrinsics=extr)


def front_rig() -> List[Camera]:
    return [make_camera("front", 0.0, position=(0.5, 0.0))]


def four_camera_rig() -> List[Camera]:
    return [
        make_camera("front", 0.0, position=(0.5, 0.0)),
        make_camera("left", -90.0, position=(0.0, -0.4)),
        make_camera("right", 90.0, position=(0.0, 0.4)),
        make_camera("rear", 180.0, position=(-0.5, 0.0)),
    ]


def rig_by_name(name: str) -> List[Camera]:
    if name == "front":
        return front_rig()
    if name == "4cam":
        return four_camera_rig()
    raise ConfigError(f"unknown rig '{name}' (expected 'front' or '4cam')")


@dataclass(frozen=True)
class SceneSpec:
    seed: int
    texture: str = "blobs"
    sat_size: int = 256
    gamma: float = 0.25  # meters per pixel
    rig: str = "front"
    distractors: int = 0
    distractor_size: Tuple[int, int] = (8, 24)  # pixel range in the ground view
    gt_pose: Pose3DoF = field(default_factory=Pose3DoF)
    anchor_heading_deg: float = 0.0

    def __post_init__(self):
        if self.texture not in TEXTURES:
            raise ConfigError(f"unknown texture '{self.texture}' (expected one of {TEXTURES})")
        if self.sat_size < 16 or self.gamma <= 0:
            raise ConfigError("sat_size must be >= 16 and gamma positive")


@dataclass
class Scene:
    spec: SceneSpec
    sat_image: np.ndarray  # (h, w) in [0, 1]
    sat_frame: SatelliteFrame
    anchor: Anchor
    cameras: List[Camera]
    ground_images: List[np.ndarray]  # each (h, w) in [0, 1]
    masks: List[np.ndarray]  # oracle on-ground masks, 1 = plane-consistent
    gt_pose: Pose3DoF


def _texture_blobs(rng: np.random.Generator, n: int) -> np.ndarray:
    """Mixture of broad and medium Gaussian bumps: broad structure gives the
    coarse levels a wide basin, medium bumps (1-2.5 m) localize precisely
    without aliasing against the cross-view resampling chain."""
    yy, xx = np.mgrid[0:n, 0:n]
    img = np.zeros((n, n))
    for count, lo, hi in ((28, n / 16, n / 6), (50, 4.0, 10.0)):
        cx = rng.uniform(0, n, count)
        cy = rng.uniform(0, n, count)
        sigma = rng.uniform(lo, hi, count)
        amp = rng.uniform(-1.0, 1.0, count)
        for i in range(count):
            d2 = (xx - cx[i]) ** 2 + (yy - cy[i]) ** 2
            img += amp[i] * np.exp(-d2 / (2.0 * sigma[i] ** 2))
    lo, hi = img.min(), img.max()
    return (img - lo) / (hi - lo) if hi > lo else np.full_like(img, 0.5)


def _texture_checker(rng: np.random.Generator, n: int) -> np.ndarray:
    cell = max(8, n // 16)
    yy, xx = np.mgrid[0:n, 0:n]
    base = ((xx // cell + yy // cell) % 2).astype(float)
    from scipy.ndimage import gaussian_filter

    img = gaussian_filter(base, sigma=cell / 3.0)
    img += 0.05 * rng.standard_normal((n, n))
    img = gaussian_filter(img, sigma=1.0)
    lo, hi = img.min(), img.max()
    return (img - lo) / (hi - lo)


def _texture_roadmarks(rng: np.random.Generator, n: int) -> np.ndarray:
    from scipy.ndimage import gaussian_filter

    img = np.full((n, n), 0.25)
    img += 0.03 * rng.standard_normal((n, n))
    yy, xx = np.mgrid[0:n, 0:n]
    for _ in range(14):
        x0, y0 = rng.uniform(0, n, 2)
        angle = rng.uniform(0, math.pi)
        width = rng.uniform(1.5, 4.0)
        nx, ny = -math.sin(angle), math.cos(angle)
        dist = np.abs((xx - x0) * nx + (yy - y0) * ny)
        along = (xx - x0) * math.cos(angle) + (yy - y0) * math.sin(angle)
        length = rng.uniform(n / 6, n / 2)
        img = np.where((dist < width) & (np.abs(along) < length), 0.95, img)
    img = gaussian_filter(img, sigma=1.2)
    lo, hi = img.min(), img.max()
    return (img - lo) / (hi - lo)


_TEXTURE_FN = {"blobs": _texture_blobs, "checker": _texture_checker, "roadmarks": _texture_roadmarks}


def render_ground_view(
    camera: Camera,
    sat_image: np.ndarray,
    sat_frame: SatelliteFrame,
    anchor: Anchor,
    vehicle_pose: Pose3DoF,
) -> np.ndarray:
    """Inverse-warp the satellite texture through the camera's ground homography."""
    intr = camera.intrinsics
    rays = inverse_project_grid(intr, camera.extrinsics.rot_cam_to_vehicle)
    rz = rays[..., 2]
    below = rz > EPS_RAY
    t = camera.extrinsics.trans_cam_to_vehicle
    with np.errstate(divide="ignore", invalid="ignore"):
        s = camera.extrinsics.cam_height / rz
    gx = np.where(below, s * rays[..., 0] + t[0], 0.0)
    gy = np.where(below, s * rays[..., 1] + t[1], 0.0)
    pts = np.stack([gx, gy, np.zeros_like(gx)], axis=-1).reshape(-1, 3)
    world = pose_to_transform(vehicle_pose, anchor).apply(pts)
    coords = world[:, :2] / sat_frame.gamma + np.array([sat_frame.center_u, sat_frame.center_v])
    vals, _ = bilinear_lookup_batch(sat_image, coords)
    img = vals.reshape(intr.height, intr.width)
    return np.where(below, img, 0.0)


def synth_scene(spec: SceneSpec) -> Scene:
    """Deterministic scene render; the seed fully determines every output."""
    cameras = rig_by_name(spec.rig)
    for cam in cameras:
        if cam.extrinsics.trans_cam_to_vehicle[2] > 0:
            raise ConfigError(f"camera '{cam.name}' sits below the ground plane")
    rng = np.random.default_rng(spec.seed)
    n = spec.sat_size
    sat_image = _TEXTURE_FN[spec.texture](rng, n)
    sat_frame = SatelliteFrame(
        center_u=(n - 1) / 2.0, center_v=(n - 1) / 2.0, gamma=spec.gamma, width=n, height=n
    )
    anchor = Anchor(heading=math.radians(spec.anchor_heading_deg), position=np.zeros(2))

    ground_images, masks = [], []
    for cam in cameras:
        img = render_ground_view(cam, sat_image, sat_frame, anchor, spec.gt_pose)
        mask = np.zeros_like(img)
        rays = inverse_project_grid(cam.intrinsics, cam.extrinsics.rot_cam_to_vehicle)
        mask[rays[..., 2] > EPS_RAY] = 1.0
        h, w = img.shape
        for _ in range(spec.distractors):
            dh = int(rng.integers(spec.distractor_size[0], spec.distractor_size[1] + 1))
            dw = int(rng.integers(spec.distractor_size[0], spec.distractor_size[1] + 1))
            r0 = int(rng.integers(h // 2, max(h - dh, h // 2) + 1))
            c0 = int(rng.integers(0, max(w - dw, 1)))
            img[r0 : r0 + dh, c0 : c0 + dw] = rng.uniform(0.0, 1.0)
            mask[r0 : r0 + dh, c0 : c0 + dw] = 0.0
        ground_images.append(img)
        masks.append(mask)
    return Scene(
        spec=spec,
        sat_image=sat_image,
        sat_frame=sat_frame,
        anchor=anchor,
        cameras=cameras,
        ground_images=ground_images,
        masks=masks,
        gt_pose=spec.gt_pose,
    )


def _save_png(img: np.ndarray, path: Path) -> None:
    arr = np.clip(np.round(img * 65535.0), 0, 65535).astype(np.uint16)
    Image.fromarray(arr).save(path)


def _load_png(path: Path) -> np.ndarray:
    arr = np.asarray(Image.open(path), dtype=np.float64)
    return arr / 65535.0


def save_scene(scene: Scene, out_dir) -> List[str]:
    """Write the scene directory: satellite PNG + metadata JSON, per-camera
    PNG + oracle mask, rig JSON and ground-truth pose JSON."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    _save_png(scene.sat_image, out / "satellite.png")
    written.append("satellite.png")
    (out / "satellite.json").write_text(
        json.dumps(satellite_to_dict(scene.sat_frame, scene.anchor), indent=2, sort_keys=True) + "\n"
    )
    written.append("satellite.json")
    (out / "rig.json").write_text(
        json.dumps([camera_to_dict(c) for c in scene.cameras], indent=2, sort_keys=True) + "\n"
    )
    written.append("rig.json")
    (out / "gt_pose.json").write_text(
        json.dumps(
            {
                "lateral": scene.gt_pose.lateral,
                "longitudinal": scene.gt_pose.longitudinal,
                "yaw_deg": math.degrees(scene.gt_pose.yaw),
            },
            indent=2,
            sort_keys=True,
        )
        + "\n"
    )
    written.append("gt_pose.json")
    for cam, img, mask in zip(scene.cameras, scene.ground_images, scene.masks):
        _save_png(img, out / f"cam_{cam.name}.png")
        _save_png(mask, out / f"mask_{cam.name}.png")
        written.extend([f"cam_{cam.name}.png", f"mask_{cam.name}.png"])
    return written


def load_scene(scene_dir) -> Scene:
    d = Path(scene_dir)
    if not (d / "satellite.json").exists():
        raise ConfigError(f"{d} is not a scene directory (missing satellite.json)")
    sat_frame, anchor = satellite_from_dict(json.loads((d / "satellite.json").read_text()))
    cameras = [camera_from_dict(c) for c in json.loads((d / "rig.json").read_text())]
    gt = json.loads((d / "gt_pose.json").read_text())
    gt_pose = Pose3DoF(
        lateral=gt["lateral"], longitudinal=gt["longitudinal"], yaw=math.radians(gt["yaw_deg"])
    )
    sat_image = _load_png(d / "satellite.png")
    ground_images = [_load_png(d / f"cam_{c.name}.png") for c in cameras]
    masks = []
    for c in cameras:
        mp = d / f"mask_{c.name}.png"
        masks.append(_load_png(mp) if mp.exists() else np.ones_like(ground_images[0]))
    spec = SceneSpec(seed=-1, sat_size=sat_frame.width, gamma=sat_frame.gamma, distractors=0)
    return Scene(
        spec=spec,
        sat_image=sat_image,
        sat_frame=sat_frame,
        anchor=anchor,
        cameras=cameras,
        ground_images=ground_images,
        masks=masks,
        gt_pose=gt_pose,
    )
