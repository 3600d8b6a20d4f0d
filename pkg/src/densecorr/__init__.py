"""Dense visual correspondence with a learned metric.

Fully convolutional features trained with a correspondence contrastive loss
and on-the-fly hard-negative mining, plus nearest-neighbour matching, PCK
evaluation and essential-matrix pose recovery.
"""

from .correspondences import CorrespondenceSet, read_correspondences, write_correspondences
from .estimator import DenseCorrespondenceEstimator
from .evaluation import PckCurve, pck, pck_alpha, pck_curve
from .featuremap import FeatureMap, feature_at
from .geometry import (
    CalibratedPair,
    PoseEstimate,
    decompose_essential,
    eight_point,
    estimate_pose,
    ransac_essential,
    rotation_deviation_deg,
    select_pose,
    translation_deviation_deg,
)
from .loss import (
    LossConfig,
    contrastive_loss_backward,
    contrastive_loss_forward,
    mine_hard_negatives,
    random_negatives,
)
from .matching import MatchResult, extract_features, match_keypoints, ratio_test_filter
from .network import FeatureNetwork
from .synth import WarpSpec, generate_pair, generate_texture, generate_two_view_scene
from .trainer import TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "CalibratedPair",
    "CorrespondenceSet",
    "DenseCorrespondenceEstimator",
    "FeatureMap",
    "FeatureNetwork",
    "LossConfig",
    "MatchResult",
    "PckCurve",
    "PoseEstimate",
    "TrainConfig",
    "WarpSpec",
    "contrastive_loss_backward",
    "contrastive_loss_forward",
    "decompose_essential",
    "eight_point",
    "estimate_pose",
    "extract_features",
    "feature_at",
    "generate_pair",
    "generate_texture",
    "generate_two_view_scene",
    "match_keypoints",
    "mine_hard_negatives",
    "pck",
    "pck_alpha",
    "pck_curve",
    "random_negatives",
    "ransac_essential",
    "ratio_test_filter",
    "read_correspondences",
    "rotation_deviation_deg",
    "select_pose",
    "train",
    "translation_deviation_deg",
    "write_correspondences",
]
