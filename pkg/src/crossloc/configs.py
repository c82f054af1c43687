"""JSON config ingestion: camera rigs and satellite metadata sidecars."""

from __future__ import annotations

import json
from pathlib import Path
from typing import List, Tuple

import numpy as np

from .errors import ConfigError
from .geometry import (
    Anchor,
    Camera,
    CameraExtrinsics,
    CameraIntrinsics,
    SatelliteFrame,
    meters_per_pixel,
)


def _require(obj: dict, key: str, where: str):
    if key not in obj:
        raise ConfigError(f"missing '{key}' in {where}")
    return obj[key]


def camera_from_dict(d: dict) -> Camera:
    name = _require(d, "name", "camera entry")
    try:
        intr = CameraIntrinsics(
            fx=float(d["fx"]),
            fy=float(d["fy"]),
            cx=float(d["cx"]),
            cy=float(d["cy"]),
            width=int(d["width"]),
            height=int(d["height"]),
        )
        rot = np.array([float(x) for x in d["rot_cam_to_vehicle"]]).reshape(3, 3)
        extr = CameraExtrinsics(
            rot_cam_to_vehicle=rot,
            trans_cam_to_vehicle=np.array([float(x) for x in d["trans_cam_to_vehicle"]]),
            cam_height=float(d["cam_height"]),
        )
    except KeyError as e:
        raise ConfigError(f"camera '{name}': missing field {e}") from e
    except ValueError as e:
        raise ConfigError(f"camera '{name}': {e}") from e
    return Camera(name=name, intrinsics=intr, extrinsics=extr)


def camera_to_dict(cam: Camera) -> dict:
    intr, extr = cam.intrinsics, cam.extrinsics
    return {
        "name": cam.name,
        "fx": intr.fx,
        "fy": intr.fy,
        "cx": intr.cx,
        "cy": intr.cy,
        "width": intr.width,
        "height": intr.height,
        "rot_cam_to_vehicle": [float(x) for x in extr.rot_cam_to_vehicle.ravel()],
        "trans_cam_to_vehicle": [float(x) for x in extr.trans_cam_to_vehicle],
        "cam_height": extr.cam_height,
    }


def load_rig(path) -> List[Camera]:
    """Read a camera rig config: a JSON array of camera objects."""
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read rig config {path}: {e}") from e
    if not isinstance(data, list) or not data:
        raise ConfigError(f"rig config {path} must be a non-empty array of cameras")
    return [camera_from_dict(d) for d in data]


def save_rig(cameras: List[Camera], path) -> None:
    Path(path).write_text(json.dumps([camera_to_dict(c) for c in cameras], indent=2) + "\n")


def satellite_from_dict(d: dict) -> Tuple[SatelliteFrame, Anchor]:
    width = int(_require(d, "width", "satellite metadata"))
    height = int(_require(d, "height", "satellite metadata"))
    lat = d.get("latitude")
    zoom = d.get("zoom")
    scale = d.get("scale")
    gamma = d.get("gamma")
    if gamma is None:
        if lat is None or zoom is None or scale is None:
            raise ConfigError("satellite metadata needs 'gamma' or latitude/zoom/scale")
        try:
            gamma = meters_per_pixel(float(lat), int(zoom), int(scale))
        except ValueError as e:
            raise ConfigError(str(e)) from e
    try:
        sat = SatelliteFrame(
            center_u=float(_require(d, "center_u", "satellite metadata")),
            center_v=float(_require(d, "center_v", "satellite metadata")),
            gamma=float(gamma),
            width=width,
            height=height,
            latitude=None if lat is None else float(lat),
            zoom=None if zoom is None else int(zoom),
            scale=None if scale is None else int(scale),
        )
    except ValueError as e:
        raise ConfigError(f"satellite metadata: {e}") from e
    anchor_pixel = _require(d, "anchor_pixel", "satellite metadata")
    anchor = Anchor.from_pixel(
        sat,
        heading_deg=float(_require(d, "anchor_heading_deg", "satellite metadata")),
        pixel_u=float(anchor_pixel[0]),
        pixel_v=float(anchor_pixel[1]),
    )
    return sat, anchor


def satellite_to_dict(sat: SatelliteFrame, anchor: Anchor) -> dict:
    import math

    u = anchor.position[0] / sat.gamma + sat.center_u
    v = anchor.position[1] / sat.gamma + sat.center_v
    d = {
        "center_u": sat.center_u,
        "center_v": sat.center_v,
        "gamma": sat.gamma,
        "width": sat.width,
        "height": sat.height,
        "anchor_heading_deg": math.degrees(anchor.heading),
        "anchor_pixel": [float(u), float(v)],
    }
    if sat.latitude is not None:
        d.update(latitude=sat.latitude, zoom=sat.zoom, scale=sat.scale)
    return d


def load_satellite_meta(path) -> Tuple[SatelliteFrame, Anchor]:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read satellite metadata {path}: {e}") from e
    return satellite_from_dict(data)
