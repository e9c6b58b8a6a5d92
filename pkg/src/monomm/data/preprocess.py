"""Frame transforms that keep image, calibration, labels and depth consistent."""

from __future__ import annotations

import copy
import math

import numpy as np
from scipy import ndimage

from .kitti import Frame, wrap_angle
from .synth import SyntheticScene, sparsify_depth


def _apply_to_p2(T: np.ndarray, P2: np.ndarray) -> np.ndarray:
    return T @ np.asarray(P2, dtype=np.float64)


def _map_boxes(frame: Frame, fn) -> list:
    objects = []
    for obj in frame.objects:
        o = copy.copy(obj)
        o.bbox2d = fn(o.bbox2d)
        objects.append(o)
    return objects


def crop_top(frame: Frame, pixels: int) -> Frame:
    """Remove the top ``pixels`` rows; boxes move up and are clipped at row 0."""
    if pixels < 0 or pixels >= frame.image.shape[1]:
        raise ValueError(f"cannot crop {pixels} rows from height {frame.image.shape[1]}")
    T = np.array([[1.0, 0, 0], [0, 1, -pixels], [0, 0, 1]])

    def shift(b):
        return (b[0], max(b[1] - pixels, 0.0), b[2], max(b[3] - pixels, 0.0))

    depth = None if frame.depth is None else frame.depth[pixels:]
    return Frame(frame.image[:, pixels:], _apply_to_p2(T, frame.P2), _map_boxes(frame, shift), depth, frame.name)


def resize(frame: Frame, height: int, width: int) -> Frame:
    """Bilinear image resize (nearest for depth) with pixel-centre alignment."""
    _, h0, w0 = frame.image.shape
    sy, sx = height / h0, width / w0
    ys = (np.arange(height) + 0.5) / sy - 0.5
    xs = (np.arange(width) + 0.5) / sx - 0.5
    grid = np.meshgrid(ys, xs, indexing="ij")
    image = np.stack([ndimage.map_coordinates(ch, grid, order=1, mode="nearest") for ch in frame.image])
    depth = None
    if frame.depth is not None:
        iy = np.clip(np.floor(ys + 0.5).astype(int), 0, h0 - 1)
        ix = np.clip(np.floor(xs + 0.5).astype(int), 0, w0 - 1)
        depth = frame.depth[np.ix_(iy, ix)]
    T = np.diag([sx, sy, 1.0])
    objects = _map_boxes(frame, lambda b: (b[0] * sx, b[1] * sy, b[2] * sx, b[3] * sy))
    return Frame(image.astype(frame.image.dtype), _apply_to_p2(T, frame.P2), objects, depth, frame.name)


def hflip(frame: Frame) -> Frame:
    """Mirror the image horizontally; 3-D labels mirror through the camera's y-z plane."""
    W = frame.image.shape[2]
    img_flip = np.array([[-1.0, 0, W], [0, 1, 0], [0, 0, 1]])
    world_flip = np.diag([-1.0, 1, 1, 1])
    P2 = img_flip @ np.asarray(frame.P2, dtype=np.float64) @ world_flip
    objects = []
    for obj in frame.objects:
        o = copy.copy(obj)
        x1, y1, x2, y2 = o.bbox2d
        o.bbox2d = (W - x2, y1, W - x1, y2)
        if o.cls != "DontCare":
            x, y, z = o.location
            o.location = (-x, y, z)
            o.rotation_y = float(wrap_angle(math.pi - o.rotation_y))
            o.alpha = float(wrap_angle(math.pi - o.alpha))
        objects.append(o)
    depth = None if frame.depth is None else frame.depth[:, ::-1].copy()
    return Frame(frame.image[:, :, ::-1].copy(), P2, objects, depth, frame.name)


def frame_from_scene(scene: SyntheticScene, lidar_density: float = 1.0) -> Frame:
    """Wrap a synthetic scene as a frame, optionally thinning the depth map."""
    depth = sparsify_depth(scene.depth, lidar_density, scene.seed)
    return Frame(scene.image.astype(np.float64), scene.P2.copy(), list(scene.objects), depth, scene.name)
