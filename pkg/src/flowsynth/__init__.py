"""flowsynth: geometry-aware synthesis of optical-flow supervision from
single images with depth, outlier-robust flow losses, affine-consistency
reference flows, and LiDAR-projected flow benchmarks.
"""

from .benchmark import (
    CameraRig,
    LidarFrame,
    MetricReport,
    SparseFlowGT,
    focal_normalize,
    lidar_to_flow,
    score,
    split_sequence,
)
from .config import PipelineConfig
from .consistency import (
    AffineSamplingConfig,
    AffineTransform2D,
    consistency_loss,
    derive_transformed_flow,
    sample_affine,
    warp_image_affine,
)
from .errors import ConfigError, EmptyInputError, FlowFileError, ValidationError
from .geometry import (
    CameraIntrinsics,
    DepthMap,
    FlowField,
    PoseSamplingConfig,
    RigidPose,
    lift,
    reproject,
    rotation_validity_check,
    sample_intrinsics,
    sample_pose,
    synth_flow,
)
from .losses import (
    CombinedLossWeights,
    FeatureDistanceConfig,
    TrimConfig,
    combined_objective,
    feature_distance,
    flow_loss_subgradient,
    masked_flow_loss,
    photometric_loss,
    photometric_mask,
    trimmed_flow_loss,
)
from .pipeline import FlowTriplet, frame_rng, make_triplet, run_evaluate, synthesize_manifest
from .renderer import ImageBuffer, RenderResult, backward_warp, forward_render

__version__ = "0.1.0"

__all__ = [
    "AffineSamplingConfig",
    "AffineTransform2D",
    "CameraIntrinsics",
    "CameraRig",
    "CombinedLossWeights",
    "ConfigError",
    "DepthMap",
    "EmptyInputError",
    "FeatureDistanceConfig",
    "FlowField",
    "FlowFileError",
    "FlowTriplet",
    "ImageBuffer",
    "LidarFrame",
    "MetricReport",
    "PipelineConfig",
    "PoseSamplingConfig",
    "RenderResult",
    "RigidPose",
    "SparseFlowGT",
    "TrimConfig",
    "ValidationError",
    "backward_warp",
    "combined_objective",
    "consistency_loss",
    "derive_transformed_flow",
    "feature_distance",
    "flow_loss_subgradient",
    "focal_normalize",
    "forward_render",
    "frame_rng",
    "lidar_to_flow",
    "lift",
    "make_triplet",
    "masked_flow_loss",
    "photometric_loss",
    "photometric_mask",
    "reproject",
    "rotation_validity_check",
    "run_evaluate",
    "sample_affine",
    "sample_intrinsics",
    "sample_pose",
    "score",
    "split_sequence",
    "synth_flow",
    "synthesize_manifest",
    "trimmed_flow_loss",
    "warp_image_affine",
]
