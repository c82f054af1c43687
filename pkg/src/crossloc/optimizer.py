"""Residual construction, robust weighting, damped LM updates and the
coarse-to-fine schedule, plus the two training-facing loss functions.

Residuals are feature-metric: r = F_sat[projected pixel] - F_ground[point],
weighted by the product of satellite and ground confidence lookups and
(optionally) the Huber IRLS factor. The Jacobian chains the satellite
feature-map gradient through the projection derivative; the normal equations
are damped multiplicatively on their diagonal.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import DegenerateSystem, SingularHessian
from .fusion import fuse_keypoints_batch
from .geometry import (
    Anchor,
    Camera,
    Pose3DoF,
    SatelliteFrame,
    pose_jacobian_batch,
    pose_to_transform,
    satellite_project_batch,
)
from .keypoints import KeypointSet
from .pyramid import FeaturePyramid, bilinear_lookup_batch, spatial_gradient_batch


@dataclass(frozen=True)
class LMConfig:
    levels: int = 3
    iters_per_level: int = 20
    lambda_init: float = 0.01
    lambda_decrease: float = 0.1
    lambda_increase: float = 10.0
    lambda_min: float = 1e-6
    lambda_max: float = 1e4
    huber_scale: float = 1.0  # feature units
    alpha: float = 10.0  # triplet sharpness
    use_irls_weight: bool = True
    fusion_strategy: str = "max"
    # componentwise early-stop thresholds: lateral (m), longitudinal (m), yaw (rad)
    step_tol: Tuple[float, float, float] = (1e-4, 1e-4, 1e-6)

    def __post_init__(self):
        if self.levels < 1 or self.iters_per_level < 1:
            raise ValueError("levels and iters_per_level must be >= 1")
        if self.lambda_init <= 0:
            raise ValueError("lambda_init must be positive")


@dataclass
class ResidualSystem:
    residuals: np.ndarray  # (n, c)
    weights: np.ndarray  # (n,), confidence product times IRLS factor
    jacobians: np.ndarray  # (n, c, 3)
    active_count: int
    cost: float  # sum of confidence-weighted robust costs
    weight_total: float = 0.0  # sum of confidence weights

    @property
    def mean_cost(self) -> float:
        """Robust cost per unit of confidence weight.

        Step acceptance compares this instead of the raw sum: the raw sum
        can be driven down simply by pushing points off the map or into
        low-confidence areas, which must not look like progress.
        """
        return self.cost / self.weight_total if self.weight_total > 0 else float("inf")


@dataclass
class TraceEntry:
    level: int
    iteration: int
    lam: float
    cost: float
    pose: Pose3DoF
    step_norm: float
    accepted: bool

    def to_json(self) -> str:
        return json.dumps(
            {
                "level": self.level,
                "iter": self.iteration,
                "lambda": self.lam,
                "cost": self.cost,
                "pose": [self.pose.lateral, self.pose.longitudinal, math.degrees(self.pose.yaw)],
                "step_norm": self.step_norm,
                "accepted": self.accepted,
            }
        )


@dataclass
class OptimizeReport:
    final_pose: Pose3DoF
    trajectory: List[Pose3DoF]
    trace: List[TraceEntry]
    level_costs: List[float]
    converged: bool
    early_stopped_levels: List[int] = field(default_factory=list)


@dataclass
class LocalizationProblem:
    """Everything the LM loop needs: overhead map, rig, pyramids, keypoints."""

    sat_frame: SatelliteFrame
    anchor: Anchor
    sat_pyramid: FeaturePyramid
    cameras: Sequence[Camera]
    ground_pyramids: Sequence[FeaturePyramid]
    keypoints: KeypointSet


def robust_weight(sq_norm, cfg: LMConfig):
    """Huber cost and IRLS weight as functions of the squared residual norm.

    For s = sqrt(sq_norm) and threshold k: cost is s^2 inside, k(2s - k)
    outside; the weight is the derivative of the cost w.r.t. s^2 (1 inside,
    k/s outside), the standard IRLS multiplier.
    """
    sq = np.asarray(sq_norm, dtype=float)
    if np.any(sq < 0):
        raise ValueError("squared residual norm must be nonnegative")
    k = cfg.huber_scale
    s = np.sqrt(sq)
    inside = s <= k
    cost = np.where(inside, sq, k * (2.0 * s - k))
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.where(inside, 1.0, np.where(s > 0, k / np.maximum(s, 1e-300), 1.0))
    if np.isscalar(sq_norm) or np.ndim(sq_norm) == 0:
        return float(cost), float(w)
    return cost, w


def build_system(
    pose: Pose3DoF,
    ground_points: np.ndarray,
    ground_weights: np.ndarray,
    ground_features: np.ndarray,
    sat_pyramid: FeaturePyramid,
    level: int,
    sat_frame: SatelliteFrame,
    anchor: Anchor,
    cfg: LMConfig,
) -> ResidualSystem:
    """Assemble the weighted residual system for one pyramid level.

    Ground-side features/weights are fixed inputs (pose-independent); the
    satellite side is looked up at the pose-projected pixels. Out-of-bounds
    projections get zero weight and contribute nothing.
    """
    lvl = sat_pyramid.levels[level]
    h_l, w_l = lvl.view_consistent.shape
    transform = pose_to_transform(pose, anchor)
    pix, valid = satellite_project_batch(sat_frame, transform, ground_points)
    scale = np.array([w_l / sat_frame.width, h_l / sat_frame.height])
    coords = pix * scale

    f_sat, inb = bilinear_lookup_batch(lvl.features, coords)
    w_sat, _ = bilinear_lookup_batch(lvl.view_consistent * lvl.on_ground, coords)
    grads, _ = spatial_gradient_batch(lvl.features, coords)

    residuals = f_sat - ground_features
    conf_w = np.where(valid & inb, w_sat * ground_weights, 0.0)

    sq = np.einsum("nc,nc->n", residuals, residuals)
    rho_cost, irls = robust_weight(sq, cfg)
    weights = conf_w * irls if cfg.use_irls_weight else conf_w

    # chain: dF/d(level coords) * diag(scale) * d(image pixel)/d(pose)
    dpix = pose_jacobian_batch(sat_frame, pose, anchor, ground_points)
    dlvl = scale[None, :, None] * dpix
    jac = np.einsum("ndc,ndk->nck", grads, dlvl)

    active = int(np.count_nonzero(weights > 0))
    if active < 3:
        raise DegenerateSystem(f"only {active} active residuals (need >= 3)")
    cost = float(np.sum(conf_w * rho_cost))
    return ResidualSystem(
        residuals=residuals,
        weights=weights,
        jacobians=jac,
        active_count=active,
        cost=cost,
        weight_total=float(np.sum(conf_w)),
    )


def normal_equations(system: ResidualSystem) -> Tuple[np.ndarray, np.ndarray]:
    """H = J^T W J and g = J^T W r, accumulated in fixed keypoint order."""
    wj = system.jacobians * system.weights[:, None, None]
    h = np.einsum("nck,ncl->kl", wj, system.jacobians)
    g = np.einsum("nck,nc->k", wj, system.residuals)
    return h, g


def lm_step(system: ResidualSystem, lam: float) -> np.ndarray:
    """Solve the damped normal equations; returns the additive 3-vector update
    (lateral, longitudinal, yaw). Raises SingularHessian when not invertible."""
    h, g = normal_equations(system)
    a = h + lam * np.diag(np.diag(h))
    cond = np.linalg.cond(a)
    if not np.isfinite(cond) or cond > 1e14:
        raise SingularHessian("damped normal matrix is not invertible", cond)
    return -np.linalg.solve(a, g)


def _apply_step(pose: Pose3DoF, delta: np.ndarray) -> Pose3DoF:
    return Pose3DoF(
        lateral=pose.lateral + float(delta[0]),
        longitudinal=pose.longitudinal + float(delta[1]),
        yaw=pose.yaw + float(delta[2]),
    )


def optimize(
    initial: Pose3DoF,
    problem: LocalizationProblem,
    cfg: LMConfig = LMConfig(),
    level_order: Optional[Sequence[int]] = None,
) -> OptimizeReport:
    """Coarse-to-fine damped LM over the pyramid levels.

    Runs up to iters_per_level iterations at each level; each candidate step
    rebuilds the satellite side at the trial pose and is accepted only if the
    robust weighted cost does not increase (lambda adapts multiplicatively).
    level_order overrides the schedule for A/B experiments.
    """
    n_levels = min(cfg.levels, len(problem.sat_pyramid.levels))
    order = list(level_order) if level_order is not None else list(range(n_levels))
    pose = initial
    trajectory: List[Pose3DoF] = []
    trace: List[TraceEntry] = []
    level_costs: List[float] = []
    early: List[int] = []
    converged = True

    for level in order:
        gw, gf, _, vis = fuse_keypoints_batch(
            problem.keypoints.ground_points,
            problem.ground_pyramids,
            problem.cameras,
            level,
            cfg.fusion_strategy,
        )
        pts = problem.keypoints.ground_points[vis]
        gw, gf = gw[vis], gf[vis]

        def system_at(p: Pose3DoF) -> ResidualSystem:
            return build_system(
                p, pts, gw, gf, problem.sat_pyramid, level, problem.sat_frame, problem.anchor, cfg
            )

        lam = cfg.lambda_init
        current = system_at(pose)
        for it in range(cfg.iters_per_level):
            try:
                delta = lm_step(current, lam)
            except SingularHessian:
                converged = False
                break
            candidate = _apply_step(pose, delta)
            cand_system = system_at(candidate)
            accepted = cand_system.mean_cost <= current.mean_cost
            if accepted:
                pose, current = candidate, cand_system
                lam = max(lam * cfg.lambda_decrease, cfg.lambda_min)
            else:
                lam = min(lam * cfg.lambda_increase, cfg.lambda_max)
            trajectory.append(pose)
            trace.append(
                TraceEntry(
                    level=level,
                    iteration=it,
                    lam=lam,
                    cost=current.mean_cost,
                    pose=pose,
                    step_norm=float(np.linalg.norm(delta)),
                    accepted=accepted,
                )
            )
            if accepted and np.all(np.abs(delta) < np.asarray(cfg.step_tol)):
                early.append(level)
                break
        level_costs.append(current.mean_cost)

    return OptimizeReport(
        final_pose=pose,
        trajectory=trajectory,
        trace=trace,
        level_costs=level_costs,
        converged=converged,
        early_stopped_levels=early,
    )


def weighted_cost(system: ResidualSystem) -> float:
    return system.cost


def triplet_loss(system_at_init: ResidualSystem, system_at_gt: ResidualSystem, alpha: float = 10.0) -> float:
    """Softplus of the sharpened (1 - cost ratio); overflow-safe via logaddexp.

    A zero ground-truth cost would make the ratio blow up; the loss is capped
    at its alpha-limit log(1 + e^alpha) instead (training-only pathology).
    """
    c_init = system_at_init.cost
    c_gt = system_at_gt.cost
    if c_gt == 0.0:
        return float(np.logaddexp(0.0, alpha))
    ratio = c_init / c_gt
    return float(np.logaddexp(0.0, alpha * (1.0 - ratio)))


def reprojection_loss(
    pred: Pose3DoF,
    gt: Pose3DoF,
    ground_points: np.ndarray,
    sat_frame: SatelliteFrame,
    anchor: Anchor,
) -> float:
    """Sum of squared pixel distances between the pred- and gt-projected keypoints."""
    pix_pred, _ = satellite_project_batch(sat_frame, pose_to_transform(pred, anchor), ground_points)
    pix_gt, _ = satellite_project_batch(sat_frame, pose_to_transform(gt, anchor), ground_points)
    d = pix_pred - pix_gt
    return float(np.sum(d * d))


def write_trace(trace: List[TraceEntry], path) -> None:
    with open(path, "w") as f:
        for entry in trace:
            f.write(entry.to_json() + "\n")
