"""matchforge: video correspondence self-labeling and matcher benchmarking."""

from .correspondence import (
    CorrespondenceSet,
    FrameId,
    Match,
    fuse,
    meets_budget,
    merge,
    propagate,
)
from .estimation import (
    ModelKind,
    RansacConfig,
    TwoViewModel,
    estimate_essential,
    estimate_fundamental_8pt,
    estimate_homography_dlt,
    filter_matches,
    ransac,
)
from .geometry import (
    CameraIntrinsics,
    DepthMap,
    EssentialMatrix,
    Homography,
    Pose,
    pose_error,
    relative_pose,
    rotation_angular_error,
    translation_angular_error,
)
from .matchers import FrameSource, MatcherKind, MatcherSpec, run_matcher
from .pipeline import AugmentConfig, PipelineConfig, TrainingPair, run_label_pipeline
from .benchmark import BenchmarkConfig, EvalFrame, EvalPair, auc, mean_rank, overlap_ratio, run_benchmark

__all__ = [
    "AugmentConfig",
    "BenchmarkConfig",
    "CameraIntrinsics",
    "CorrespondenceSet",
    "DepthMap",
    "EssentialMatrix",
    "EvalFrame",
    "EvalPair",
    "FrameId",
    "FrameSource",
    "Homography",
    "Match",
    "MatcherKind",
    "MatcherSpec",
    "ModelKind",
    "PipelineConfig",
    "Pose",
    "RansacConfig",
    "TrainingPair",
    "TwoViewModel",
    "auc",
    "estimate_essential",
    "estimate_fundamental_8pt",
    "estimate_homography_dlt",
    "filter_matches",
    "fuse",
    "mean_rank",
    "meets_budget",
    "merge",
    "overlap_ratio",
    "pose_error",
    "propagate",
    "ransac",
    "relative_pose",
    "rotation_angular_error",
    "run_benchmark",
    "run_label_pipeline",
    "run_matcher",
    "translation_angular_error",
]

__version__ = "0.1.0"
