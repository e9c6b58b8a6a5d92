from .ap import (
    DEFAULT_RULES,
    DEFAULT_THRESHOLDS,
    Difficulty,
    DifficultyRule,
    EvalConfig,
    ap40,
    classify_detections,
    difficulty,
    interpolated_ap,
)
from .iou import bev_iou, box7, clip_polygon, footprint, iou2d, iou2d_matrix, iou3d, polygon_area, vertical_overlap
from .report import MetricsReport, evaluate_dirs, evaluate_frames

__all__ = [
    "DEFAULT_RULES", "DEFAULT_THRESHOLDS", "Difficulty", "DifficultyRule", "EvalConfig", "ap40",
    "classify_detections", "difficulty", "interpolated_ap", "bev_iou", "box7", "clip_polygon", "footprint",
    "iou2d", "iou2d_matrix", "iou3d", "polygon_area", "vertical_overlap", "MetricsReport", "evaluate_dirs",
    "evaluate_frames",
]
