"""Request/response models for the localization service."""

from __future__ import annotations

from typing import List, Optional, Tuple

from pydantic import BaseModel, Field


class PoseModel(BaseModel):
    lateral: float = 0.0
    longitudinal: float = 0.0
    yaw_deg: float = 0.0


class NoiseModelSchema(BaseModel):
    lateral: float = 5.0
    longitudinal: float = 5.0
    yaw_deg: float = 15.0


class LMConfigSchema(BaseModel):
    levels: int = 3
    iters_per_level: int = 20
    huber_scale: float = 1.0
    fusion_strategy: str = "max"


class PipelineConfigSchema(BaseModel):
    keypoint_budget: int = 256
    patch: int = 4
    oracle_masks: bool = True
    lm: LMConfigSchema = Field(default_factory=LMConfigSchema)


class SynthRequest(BaseModel):
    seed: int
    out_dir: str
    texture: str = "blobs"
    sat_size: int = 256
    gamma: float = 0.25
    rig: str = "front"
    distractors: int = 0


class SynthResponse(BaseModel):
    out_dir: str
    files: List[str]
    gt_pose: PoseModel


class LocalizeRequest(BaseModel):
    scene_dir: str
    init: PoseModel
    config: PipelineConfigSchema = Field(default_factory=PipelineConfigSchema)
    trace_path: Optional[str] = None
    keypoints_path: Optional[str] = None


class LocalizeResponse(BaseModel):
    final_pose: PoseModel
    level_costs: List[float]
    iterations: int
    converged: bool
    keypoint_count: int
    dropped_keypoints: int


class EvalRequest(BaseModel):
    scenes: int = 20
    trials_per_scene: int = 10
    noises: List[NoiseModelSchema] = Field(default_factory=lambda: [NoiseModelSchema()])
    texture: str = "blobs"
    sat_size: int = 256
    gamma: float = 0.25
    rig: str = "front"
    distractors: int = 0
    base_seed: int = 0
    scene_seed_start: int = 0
    config: PipelineConfigSchema = Field(default_factory=PipelineConfigSchema)
    report_path: Optional[str] = None


class MetricsRow(BaseModel):
    noise: NoiseModelSchema
    lat_mean: float
    lat_median: float
    lon_mean: float
    lon_median: float
    yaw_mean: float
    yaw_median: float
    recall_lat: Tuple[float, float, float, float]
    recall_lon: Tuple[float, float, float, float]
    recall_yaw: Tuple[float, float, float]
    trials: int
    failures: int


class EvalResponse(BaseModel):
    rows: List[MetricsRow]
    csv: str
    report_path: Optional[str] = None


class GradcheckRequest(BaseModel):
    seeds: int = 500
    seed: int = 0


class GradcheckResponse(BaseModel):
    max_rel_error_projection: float
    max_rel_error_chain: float
    configurations: int


class ErrorResponse(BaseModel):
    detail: str
