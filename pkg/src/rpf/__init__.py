"""Camera relocalization from fused pairwise relative pose estimates."""

from . import errors
from .evaluation import (
    FeatureRetrieval,
    PoseOracleRetrieval,
    PredictionSource,
    SceneReport,
    SynthSource,
    median,
    pose_error,
    run_pipeline,
    run_viewpoint_experiment,
)
from .fusion import FusionConfig, LocalizationResult, fuse_rotation, fuse_translation, localize
from .relpose import (
    NoiseConfig,
    PredictionSet,
    RelativePoseEstimate,
    load_predictions,
    pose_metric,
    relative_pose,
    save_predictions,
    synth_predict,
)
from .retrieval import (
    FeatureStore,
    RankedList,
    load_features,
    rank_by_dot,
    rank_by_pose_metric,
    save_features,
    viewpoint_sets,
)
from .scene import (
    ImageRecord,
    Pose,
    SceneDatabase,
    TrainingPair,
    apply_rigid_transform,
    generate_pairs,
    load_scene,
    load_scenes,
    synth_scene,
    write_scene,
)

__version__ = "0.1.0"

__all__ = [
    "errors",
    "FeatureRetrieval",
    "PoseOracleRetrieval",
    "PredictionSource",
    "SceneReport",
    "SynthSource",
    "median",
    "pose_error",
    "run_pipeline",
    "run_viewpoint_experiment",
    "FusionConfig",
    "LocalizationResult",
    "fuse_rotation",
    "fuse_translation",
    "localize",
    "NoiseConfig",
    "PredictionSet",
    "RelativePoseEstimate",
    "load_predictions",
    "pose_metric",
    "relative_pose",
    "save_predictions",
    "synth_predict",
    "FeatureStore",
    "RankedList",
    "load_features",
    "rank_by_dot",
    "rank_by_pose_metric",
    "save_features",
    "viewpoint_sets",
    "ImageRecord",
    "Pose",
    "SceneDatabase",
    "TrainingPair",
    "apply_rigid_transform",
    "generate_pairs",
    "load_scene",
    "load_scenes",
    "synth_scene",
    "write_scene",
    "__version__",
]
