from .evaluate import MetricsTable, NoiseModel, evaluate, evaluate_sweep, sample_initial_pose
from .pipeline import PipelineConfig, localize, prepare_problem
from .scene import Scene, SceneSpec, save_scene, load_scene, synth_scene

__all__ = [
    "MetricsTable",
    "NoiseModel",
    "PipelineConfig",
    "Scene",
    "SceneSpec",
    "evaluate",
    "evaluate_sweep",
    "load_scene",
    "localize",
    "prepare_problem",
    "sample_initial_pose",
    "save_scene",
    "synth_scene",
]
