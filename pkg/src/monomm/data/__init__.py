from .geometry import BehindCameraError, backproject, box3d_corners, project_box3d, project_points, rotation_y
from .kitti import (
    Frame,
    GroundTruthObject,
    KittiFormatError,
    check_p2,
    parse_kitti_label,
    read_calib_p2,
    read_label_file,
    wrap_angle,
    write_calib,
    write_kitti_result,
)
from .preprocess import crop_top, frame_from_scene, hflip, resize
from .synth import SynthConfig, SyntheticScene, sparsify_depth, synth_scene

__all__ = [
    "BehindCameraError", "backproject", "box3d_corners", "project_box3d", "project_points", "rotation_y",
    "Frame", "GroundTruthObject", "KittiFormatError", "check_p2", "parse_kitti_label", "read_calib_p2",
    "read_label_file", "wrap_angle", "write_calib", "write_kitti_result", "crop_top", "frame_from_scene",
    "hflip", "resize", "SynthConfig", "SyntheticScene", "sparsify_depth", "synth_scene",
]
