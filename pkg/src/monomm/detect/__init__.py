from .anchors import (
    IGNORE,
    NEGATIVE,
    POSITIVE,
    Anchor,
    AnchorConfig,
    AnchorSet,
    AnchorStats,
    MatchResult,
    generate_anchors,
    match_anchors,
)
from .coder import N_REG, BoxGeometry, Detection, decode_boxes, encode_targets, geometry_to_box3d
from .head import DetectionHead
from .losses import (
    FrameTargets,
    LossWeights,
    build_targets,
    focal_loss,
    sigmoid_focal_loss,
    smooth_l1,
    softmax_focal_loss,
    total_loss,
)
from .nms import nms, nms_indices

__all__ = [
    "IGNORE", "NEGATIVE", "POSITIVE", "Anchor", "AnchorConfig", "AnchorSet", "AnchorStats", "MatchResult",
    "generate_anchors", "match_anchors", "N_REG", "BoxGeometry", "Detection", "decode_boxes", "encode_targets",
    "geometry_to_box3d", "DetectionHead", "FrameTargets", "LossWeights", "build_targets", "focal_loss",
    "sigmoid_focal_loss", "smooth_l1", "softmax_focal_loss", "total_loss", "nms", "nms_indices",
]
