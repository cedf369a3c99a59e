"""Instance-aware, similarity-balanced contrastive units for LiDAR point
clouds, with a cross-modal InfoNCE objective and a desk-scale simulator."""

__version__ = "0.1.0"

from .camera import (
    CameraCalibration,
    FeatureMap,
    PixelLocation,
    fuse_levels,
    pool_cameras,
    project_point,
    sample_feature,
)
from .geom import (
    AugmentationParams,
    ClusterFilterConfig,
    ClusterSet,
    GroundSegConfig,
    PointCloud,
    augment,
    bev_fps,
    filter_clusters,
    knn_context,
    pillar_context,
    rbnn_cluster,
    segment_ground,
)
from .mlp import Mlp, init_mlp
from .objective import (
    LossOutput,
    NegativeSets,
    alignment_score,
    contrastive_accuracy,
    head_backward,
    head_forward,
    infonce,
    negative_sets,
    similarity_matrix,
)
from .scene import FeatureRenderConfig, SceneSpec, SyntheticScene, generate_scene, render_feature_maps
from .train import (
    RunTrace,
    TrainConfig,
    TrainState,
    encoder_backward,
    encoder_forward,
    run_pretrain,
    train_step,
)
from .units import ContrastiveUnit, UnitConfig, UnitSet, build_units, sampling_space, unit_stats
