"""Shared fixtures: small scenes and an exactly-consistent localization
problem whose residual is zero at the ground-truth pose by construction."""

import numpy as np
import pytest

from crossloc.geometry import (
    Anchor,
    Camera,
    CameraExtrinsics,
    CameraIntrinsics,
    SatelliteFrame,
)
from crossloc.keypoints import KeypointSet
from crossloc.optimizer import LocalizationProblem
from crossloc.pyramid import toy_extract


def nadir_camera(sat: SatelliteFrame, height: float = 40.0) -> Camera:
    """Virtual top-down camera whose perspective projection reproduces the
    satellite pixel coordinates exactly (for a zero pose and zero anchor).

    Camera x maps to vehicle right (+y), camera y to vehicle backward (-x),
    camera z straight down; with focal = height / gamma and principal point at
    the satellite center, a ground point (x, y, 0) projects to the same
    (u, v) as the satellite parallel projection under a north-heading anchor.
    """
    rot = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    intr = CameraIntrinsics(
        fx=height / sat.gamma,
        fy=height / sat.gamma,
        cx=sat.center_u,
        cy=sat.center_v,
        width=sat.width,
        height=sat.height,
    )
    extr = CameraExtrinsics(
        rot_cam_to_vehicle=rot,
        trans_cam_to_vehicle=np.array([0.0, 0.0, -height]),
        cam_height=height,
    )
    return Camera(name="nadir", intrinsics=intr, extrinsics=extr)


def smooth_texture(rng: np.random.Generator, n: int) -> np.ndarray:
    """Random smooth bump field in [0, 1] with structure at several scales."""
    yy, xx = np.mgrid[0:n, 0:n]
    img = np.zeros((n, n))
    for _ in range(40):
        cx, cy = rng.uniform(0, n, 2)
        sigma = rng.uniform(n / 24, n / 6)
        img += rng.uniform(-1, 1) * np.exp(
            -((xx - cx) ** 2 + (yy - cy) ** 2) / (2 * sigma**2)
        )
    lo, hi = img.min(), img.max()
    return (img - lo) / (hi - lo)


def make_exact_problem(seed: int = 0, n: int = 256, gamma: float = 0.25):
    """Localization problem whose ground features equal the satellite lookups
    at the ground-truth (zero) pose exactly.

    The satellite pyramid doubles as the single ground camera's pyramid; the
    nadir camera projects every ground point to its satellite pixel, so the
    fused ground feature is the identical bilinear lookup and the residual
    vanishes at the ground truth.
    """
    rng = np.random.default_rng(seed)
    sat_image = smooth_texture(rng, n)
    sat = SatelliteFrame(
        center_u=(n - 1) / 2.0, center_v=(n - 1) / 2.0, gamma=gamma, width=n, height=n
    )
    anchor = Anchor(heading=0.0, position=np.zeros(2))
    cam = nadir_camera(sat)

    from crossloc.embedding import EmbeddingConfig, build_satellite_embedding

    emb = build_satellite_embedding(sat, anchor, EmbeddingConfig())
    pyr = toy_extract(sat_image, emb, levels=3)

    half = n * gamma / 2.0
    xs = np.linspace(-half * 0.5, half * 0.5, 12)
    ys = np.linspace(-half * 0.5, half * 0.5, 12)
    gx, gy = np.meshgrid(xs, ys)
    pts = np.stack([gx.ravel(), gy.ravel(), np.zeros(gx.size)], axis=-1)
    kps = KeypointSet(
        pixels=np.zeros((len(pts), 2)),
        scores=np.ones(len(pts)),
        ground_points=pts,
        camera_indices=np.zeros(len(pts), dtype=int),
    )
    return LocalizationProblem(
        sat_frame=sat,
        anchor=anchor,
        sat_pyramid=pyr,
        cameras=[cam],
        ground_pyramids=[pyr],
        keypoints=kps,
    )


@pytest.fixture(scope="session")
def exact_problem():
    return make_exact_problem(seed=0)
