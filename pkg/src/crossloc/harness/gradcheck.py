"""Finite-difference verification of the analytic derivative chain.

Shared by the `gradcheck` CLI/endpoint and the acceptance tests: random
poses, rigs, scales and feature maps are generated per seed and the analytic
projection Jacobian (and the full feature-lookup chain) is compared against
central differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from ..geometry import (
    Anchor,
    Pose3DoF,
    SatelliteFrame,
    pose_jacobian,
    pose_to_transform,
    satellite_project,
)
from ..pyramid import bilinear_lookup, spatial_gradient

FD_STEP_TRANSLATION = 1e-4  # meters
FD_STEP_YAW = 1e-5  # radians


@dataclass
class GradCheckReport:
    max_rel_error_projection: float
    max_rel_error_chain: float
    configurations: int


def _random_config(rng: np.random.Generator):
    gamma = rng.uniform(0.05, 0.5)
    size = int(rng.integers(128, 512))
    sat = SatelliteFrame(
        center_u=size / 2.0, center_v=size / 2.0, gamma=gamma, width=size, height=size
    )
    anchor = Anchor(
        heading=rng.uniform(-math.pi, math.pi),
        position=rng.uniform(-5, 5, size=2),
    )
    pose = Pose3DoF(
        lateral=rng.uniform(-3, 3),
        longitudinal=rng.uniform(-3, 3),
        yaw=rng.uniform(-0.4, 0.4),
    )
    point = np.array([rng.uniform(2, 12), rng.uniform(-6, 6), 0.0])
    return sat, anchor, pose, point


def _perturbed(pose: Pose3DoF, axis: int, h: float) -> Pose3DoF:
    vals = [pose.lateral, pose.longitudinal, pose.yaw]
    vals[axis] += h
    return Pose3DoF(*vals)


def _fd_projection(sat, anchor, pose, point) -> np.ndarray:
    jac = np.zeros((2, 3))
    for axis in range(3):
        h = FD_STEP_YAW if axis == 2 else FD_STEP_TRANSLATION
        hi, _ = satellite_project(sat, pose_to_transform(_perturbed(pose, axis, h), anchor), point)
        lo, _ = satellite_project(sat, pose_to_transform(_perturbed(pose, axis, -h), anchor), point)
        jac[:, axis] = (hi - lo) / (2.0 * h)
    return jac


def _rel_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = max(float(np.abs(numeric).max()), 1e-9)
    return float(np.abs(analytic - numeric).max()) / scale


def check_projection_jacobian(seeds: int = 500, seed: int = 0) -> float:
    """Max relative error of pose_jacobian vs central differences."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(seeds):
        sat, anchor, pose, point = _random_config(rng)
        analytic = pose_jacobian(sat, pose, anchor, point)
        numeric = _fd_projection(sat, anchor, pose, point)
        worst = max(worst, _rel_error(analytic, numeric))
    return worst


def check_feature_chain(seeds: int = 500, seed: int = 0) -> float:
    """Max relative error of the full residual chain (feature-map gradient
    times projection Jacobian) against central differences of the lookup."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    trials = 0
    while trials < seeds:
        sat, anchor, pose, point = _random_config(rng)
        grid_n = 48
        grid = rng.standard_normal((grid_n, grid_n, 3))
        scale = np.array([grid_n / sat.width, grid_n / sat.height])

        def lookup(p: Pose3DoF) -> np.ndarray:
            pix, _ = satellite_project(sat, pose_to_transform(p, anchor), point)
            return bilinear_lookup(grid, pix * scale).value

        pix0, valid = satellite_project(sat, pose_to_transform(pose, anchor), point)
        coords = pix0 * scale
        # keep away from cell boundaries so the FD step stays inside one cell
        if not valid or np.any(np.abs(coords - np.round(coords)) < 1e-2):
            continue
        if np.any(coords < 1) or np.any(coords > grid_n - 2):
            continue
        trials += 1
        grad = spatial_gradient(grid, coords).value  # (2, c)
        dpix = pose_jacobian(sat, pose, anchor, point)
        analytic = grad.T @ (scale[:, None] * dpix)  # (c, 3)
        numeric = np.zeros_like(analytic)
        for axis in range(3):
            h = FD_STEP_YAW if axis == 2 else FD_STEP_TRANSLATION
            numeric[:, axis] = (
                lookup(_perturbed(pose, axis, h)) - lookup(_perturbed(pose, axis, -h))
            ) / (2.0 * h)
        worst = max(worst, _rel_error(analytic, numeric))
    return worst


def run_gradcheck(seeds: int = 500, seed: int = 0) -> GradCheckReport:
    return GradCheckReport(
        max_rel_error_projection=check_projection_jacobian(seeds, seed),
        max_rel_error_chain=check_feature_chain(seeds, seed),
        configurations=seeds,
    )
