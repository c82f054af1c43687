"""Multi-camera fusion of keypoint weights and features.

A ground point detected by one camera may fall inside another camera's field
of view; the fused weight is the maximum over visible cameras of the V*O
lookup at the projected pixel, and the feature comes from the argmax camera
("max" strategy). The "mean" strategy averages weights and features over the
visible cameras instead.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from .errors import NotVisible
from .geometry import Camera, perspective_project_batch
from .pyramid import FeaturePyramid, bilinear_lookup_batch

STRATEGIES = ("max", "mean")


@dataclass
class FusedPoint:
    ground_point: np.ndarray  # (3,)
    weight: float
    feature: np.ndarray  # (c,)
    source_camera: int  # -1 for mean fusion (no single source)


def _level_coords(pixels: np.ndarray, cam: Camera, level_shape) -> np.ndarray:
    h_l, w_l = level_shape
    scale = np.array([w_l / cam.intrinsics.width, h_l / cam.intrinsics.height])
    return pixels * scale


def fuse_keypoints_batch(
    points: np.ndarray,
    pyramids: Sequence[FeaturePyramid],
    cameras: Sequence[Camera],
    level: int,
    strategy: str = "max",
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Fuse ground points (n, 3) across cameras at one pyramid level.

    Returns (weights (n,), features (n, c), source (n,), visible (n,)).
    Rows with visible=False saw no camera and must be excluded upstream.
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown fusion strategy {strategy!r}")
    n = points.shape[0]
    n_cams = len(cameras)
    c = pyramids[0].levels[level].features.shape[2]
    weights = np.zeros((n_cams, n))
    feats = np.zeros((n_cams, n, c))
    vis = np.zeros((n_cams, n), dtype=bool)
    for ci, (cam, pyr) in enumerate(zip(cameras, pyramids)):
        lvl = pyr.levels[level]
        pix, visible = perspective_project_batch(points, cam.intrinsics, cam.extrinsics)
        coords = _level_coords(pix, cam, lvl.view_consistent.shape)
        w, w_inb = bilinear_lookup_batch(lvl.view_consistent * lvl.on_ground, coords)
        f, _ = bilinear_lookup_batch(lvl.features, coords)
        ok = visible & w_inb
        vis[ci] = ok
        weights[ci] = np.where(ok, w, 0.0)
        feats[ci] = np.where(ok[:, None], f, 0.0)

    any_vis = vis.any(axis=0)
    if strategy == "max":
        # Invisible cameras carry -inf so argmax (lowest index on ties) only
        # ever picks a visible camera for rows with any_vis.
        masked = np.where(vis, weights, -np.inf)
        src = masked.argmax(axis=0)
        fused_w = np.where(any_vis, weights[src, np.arange(n)], 0.0)
        fused_f = feats[src, np.arange(n)]
        source = np.where(any_vis, src, -1)
    else:
        counts = np.maximum(vis.sum(axis=0), 1)
        fused_w = weights.sum(axis=0) / counts
        fused_f = feats.sum(axis=0) / counts[:, None]
        source = np.full(n, -1)
    return fused_w, fused_f, source, any_vis


def project_to_camera(point: np.ndarray, cam: Camera):
    """Perspective projection of a vehicle-frame point into one camera.

    Returns (pixel (2,), visible); visible requires positive depth and the
    pixel inside the image bounds.
    """
    pix, vis = perspective_project_batch(np.asarray(point, dtype=float)[None, :], cam.intrinsics, cam.extrinsics)
    return pix[0], bool(vis[0])


def fuse_point(
    point: np.ndarray,
    pyramids: Sequence[FeaturePyramid],
    cameras: Sequence[Camera],
    level: int,
    strategy: str = "max",
) -> FusedPoint:
    """Single-point fusion; raises NotVisible when no camera sees the point."""
    p = np.asarray(point, dtype=float).reshape(1, 3)
    w, f, src, vis = fuse_keypoints_batch(p, pyramids, cameras, level, strategy)
    if not vis[0]:
        raise NotVisible(f"ground point {p[0]} is outside every camera's view")
    return FusedPoint(
        ground_point=p[0],
        weight=float(w[0]),
        feature=f[0],
        source_camera=int(src[0]),
    )
