"""FastAPI service wrapping the localization engine.

Endpoints operate on server-local paths (scene directories, report files);
the CLI is a thin client that talks to these endpoints either in-process or
over the network.
"""

from __future__ import annotations

import math

from fastapi import FastAPI, HTTPException

from .. import __version__
from ..errors import ConfigError, CrosslocError
from ..geometry import Pose3DoF
from ..harness.evaluate import NoiseModel, evaluate, tables_to_csv
from ..harness.gradcheck import run_gradcheck
from ..harness.pipeline import PipelineConfig, localize
from ..harness.scene import SceneSpec, load_scene, save_scene, synth_scene
from ..keypoints import dump_keypoints_jsonl
from ..optimizer import LMConfig, write_trace
from . import schemas


def _pose_from_model(m: schemas.PoseModel) -> Pose3DoF:
    return Pose3DoF(lateral=m.lateral, longitudinal=m.longitudinal, yaw=math.radians(m.yaw_deg))


def _pose_to_model(p: Pose3DoF) -> schemas.PoseModel:
    return schemas.PoseModel(lateral=p.lateral, longitudinal=p.longitudinal, yaw_deg=math.degrees(p.yaw))


def _pipeline_config(m: schemas.PipelineConfigSchema) -> PipelineConfig:
    return PipelineConfig(
        keypoint_budget=m.keypoint_budget,
        patch=m.patch,
        oracle_masks=m.oracle_masks,
        lm=LMConfig(
            levels=m.lm.levels,
            iters_per_level=m.lm.iters_per_level,
            huber_scale=m.lm.huber_scale,
            fusion_strategy=m.lm.fusion_strategy,
        ),
    )


def create_app() -> FastAPI:
    app = FastAPI(title="crossloc", version=__version__)

    @app.get("/health")
    def health():
        return {"status": "ok", "version": __version__}

    @app.post("/synth", response_model=schemas.SynthResponse)
    def synth(req: schemas.SynthRequest):
        try:
            spec = SceneSpec(
                seed=req.seed,
                texture=req.texture,
                sat_size=req.sat_size,
                gamma=req.gamma,
                rig=req.rig,
                distractors=req.distractors,
            )
            scene = synth_scene(spec)
            files = save_scene(scene, req.out_dir)
        except (ConfigError, OSError) as e:
            raise HTTPException(status_code=422, detail=str(e))
        return schemas.SynthResponse(
            out_dir=req.out_dir, files=files, gt_pose=_pose_to_model(scene.gt_pose)
        )

    @app.post("/localize", response_model=schemas.LocalizeResponse)
    def localize_endpoint(req: schemas.LocalizeRequest):
        try:
            scene = load_scene(req.scene_dir)
        except (ConfigError, OSError, KeyError, ValueError) as e:
            raise HTTPException(status_code=422, detail=f"cannot load scene: {e}")
        cfg = _pipeline_config(req.config)
        try:
            report, problem = localize(scene, _pose_from_model(req.init), cfg)
        except CrosslocError as e:
            raise HTTPException(status_code=422, detail=str(e))
        if req.trace_path:
            write_trace(report.trace, req.trace_path)
        if req.keypoints_path:
            dump_keypoints_jsonl(
                problem.keypoints, req.keypoints_path, [c.name for c in scene.cameras]
            )
        return schemas.LocalizeResponse(
            final_pose=_pose_to_model(report.final_pose),
            level_costs=report.level_costs,
            iterations=len(report.trace),
            converged=report.converged,
            keypoint_count=len(problem.keypoints),
            dropped_keypoints=problem.keypoints.dropped,
        )

    @app.post("/eval", response_model=schemas.EvalResponse)
    def eval_endpoint(req: schemas.EvalRequest):
        try:
            specs = [
                SceneSpec(
                    seed=req.scene_seed_start + i,
                    texture=req.texture,
                    sat_size=req.sat_size,
                    gamma=req.gamma,
                    rig=req.rig,
                    distractors=req.distractors,
                )
                for i in range(req.scenes)
            ]
        except ConfigError as e:
            raise HTTPException(status_code=422, detail=str(e))
        cfg = _pipeline_config(req.config)
        tables = []
        for nz in req.noises:
            noise = NoiseModel(lateral=nz.lateral, longitudinal=nz.longitudinal, yaw_deg=nz.yaw_deg)
            tables.append(evaluate(specs, noise, cfg, req.trials_per_scene, req.base_seed))
        csv = tables_to_csv(tables)
        if req.report_path:
            try:
                with open(req.report_path, "w", newline="") as f:
                    f.write(csv)
            except OSError as e:
                raise HTTPException(status_code=422, detail=str(e))
        rows = [
            schemas.MetricsRow(
                noise=schemas.NoiseModelSchema(
                    lateral=t.noise.lateral, longitudinal=t.noise.longitudinal, yaw_deg=t.noise.yaw_deg
                ),
                lat_mean=t.lat_mean,
                lat_median=t.lat_median,
                lon_mean=t.lon_mean,
                lon_median=t.lon_median,
                yaw_mean=t.yaw_mean,
                yaw_median=t.yaw_median,
                recall_lat=t.recall_lat,
                recall_lon=t.recall_lon,
                recall_yaw=t.recall_yaw,
                trials=t.trials,
                failures=t.failures,
            )
            for t in tables
        ]
        return schemas.EvalResponse(rows=rows, csv=csv, report_path=req.report_path)

    @app.post("/gradcheck", response_model=schemas.GradcheckResponse)
    def gradcheck_endpoint(req: schemas.GradcheckRequest):
        report = run_gradcheck(seeds=req.seeds, seed=req.seed)
        return schemas.GradcheckResponse(
            max_rel_error_projection=report.max_rel_error_projection,
            max_rel_error_chain=report.max_rel_error_chain,
            configurations=report.configurations,
        )

    return app


app = create_app()
