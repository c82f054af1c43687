"""View-consistent on-ground keypoint detection.

Fuses the per-level confidence maps to the finest resolution, masks to the
image region strictly below the principal-point row, enforces one keypoint
per patch (grid NMS) and keeps the top-K scores. Detected coordinates are
emitted at image resolution; the associated 3D points come from lifting the
pixels onto the ground plane.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .errors import EmptyRegion, HorizonError
from .geometry import Camera, CameraExtrinsics, CameraIntrinsics, inverse_project, lift_to_ground
from .pyramid import FeaturePyramid, _minmax_normalize, resize_bilinear

DEFAULT_KEYPOINT_BUDGET = 256
DEFAULT_PATCH = 8


@dataclass
class FusedConfidence:
    grid: np.ndarray  # (h_L, w_L), finest-level resolution


@dataclass
class KeypointSet:
    """Detected keypoints of one or more cameras, with lifted ground points."""

    pixels: np.ndarray  # (n, 2) image-resolution (u, v)
    scores: np.ndarray  # (n,)
    ground_points: np.ndarray  # (n, 3) vehicle ground frame, z = 0
    camera_indices: np.ndarray  # (n,)
    dropped: int = 0  # points discarded by the horizon guard

    def __len__(self) -> int:
        return len(self.scores)

    @staticmethod
    def concatenate(sets: list) -> "KeypointSet":
        return KeypointSet(
            pixels=np.concatenate([s.pixels for s in sets]),
            scores=np.concatenate([s.scores for s in sets]),
            ground_points=np.concatenate([s.ground_points for s in sets]),
            camera_indices=np.concatenate([s.camera_indices for s in sets]),
            dropped=sum(s.dropped for s in sets),
        )


def fuse_confidence(pyr: FeaturePyramid) -> FusedConfidence:
    """Sum of per-level min-max-normalized V*O maps, resized to the finest level.

    A level whose V*O map is constant normalizes to a uniform 0.5 (the
    degenerate 0/0 of min-max normalization gets a neutral confidence).
    """
    if not pyr.levels:
        raise ValueError("pyramid has no levels")
    h, w = pyr.finest.view_consistent.shape
    total = np.zeros((h, w))
    for lvl in pyr.levels:
        norm = _minmax_normalize(lvl.view_consistent * lvl.on_ground)
        total += norm if norm.shape == (h, w) else resize_bilinear(norm, (h, w))
    return FusedConfidence(grid=total)


def detect_keypoints(
    conf: FusedConfidence,
    intr: CameraIntrinsics,
    budget: int = DEFAULT_KEYPOINT_BUDGET,
    patch: int = DEFAULT_PATCH,
) -> Tuple[np.ndarray, np.ndarray]:
    """Grid-NMS top-K detection on the fused confidence map.

    Cells whose image row is not strictly below the principal-point row are
    masked out; each patch keeps only its argmax cell; the K best survivors
    win. Ties break by ascending (row, column). Returns (pixels (n, 2) at
    image resolution, scores (n,)).
    """
    if budget < 1 or patch < 1:
        raise ValueError(f"budget and patch must be >= 1, got {budget}/{patch}")
    grid = conf.grid
    hf, wf = grid.shape
    row_scale = intr.height / hf
    col_scale = intr.width / wf

    scores = grid.astype(float).copy()
    rows_img = np.arange(hf) * row_scale
    scores[rows_img <= intr.cy, :] = -np.inf
    if not np.any(np.isfinite(scores)):
        raise EmptyRegion(f"no confidence cell below principal row {intr.cy}")

    # Pad to a patch multiple, then per-patch argmax. Row-major argmax order
    # realizes the ascending (row, column) tie-break within each patch.
    hp = -(-hf // patch) * patch
    wp = -(-wf // patch) * patch
    padded = np.full((hp, wp), -np.inf)
    padded[:hf, :wf] = scores
    blocks = padded.reshape(hp // patch, patch, wp // patch, patch).transpose(0, 2, 1, 3)
    blocks = blocks.reshape(hp // patch, wp // patch, patch * patch)
    arg = blocks.argmax(axis=-1)
    best = np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]
    pr, pc = np.nonzero(np.isfinite(best))
    cand_rows = pr * patch + arg[pr, pc] // patch
    cand_cols = pc * patch + arg[pr, pc] % patch
    cand_scores = best[pr, pc]

    order = np.lexsort((cand_cols, cand_rows, -cand_scores))
    keep = order[: min(budget, len(order))]
    pixels = np.stack([cand_cols[keep] * col_scale, cand_rows[keep] * row_scale], axis=-1)
    return pixels, cand_scores[keep]


def lift_keypoints(
    pixels: np.ndarray,
    scores: np.ndarray,
    camera: Camera,
    camera_index: int = 0,
) -> KeypointSet:
    """Lift detected pixels onto the ground plane; horizon failures are dropped
    and counted, never fatal."""
    kept_pix, kept_scores, points = [], [], []
    dropped = 0
    for pix, score in zip(np.atleast_2d(pixels), np.atleast_1d(scores)):
        ray = inverse_project(camera.intrinsics, camera.extrinsics.rot_cam_to_vehicle, pix)
        try:
            gp = lift_to_ground(ray, camera.extrinsics)
        except HorizonError:
            dropped += 1
            continue
        kept_pix.append(pix)
        kept_scores.append(score)
        points.append(gp.as_array())
    n = len(points)
    return KeypointSet(
        pixels=np.array(kept_pix).reshape(n, 2),
        scores=np.array(kept_scores),
        ground_points=np.array(points).reshape(n, 3),
        camera_indices=np.full(n, camera_index, dtype=int),
        dropped=dropped,
    )


def dump_keypoints_jsonl(kps: KeypointSet, path, camera_names=None) -> None:
    """Debug dump: one JSON record per point {camera, u, v, x, y, score}."""
    import json

    with open(path, "w") as f:
        for i in range(len(kps)):
            ci = int(kps.camera_indices[i])
            rec = {
                "camera": camera_names[ci] if camera_names else ci,
                "u": float(kps.pixels[i, 0]),
                "v": float(kps.pixels[i, 1]),
                "x": float(kps.ground_points[i, 0]),
                "y": float(kps.ground_points[i, 1]),
                "score": float(kps.scores[i]),
            }
            f.write(json.dumps(rec) + "\n")
