"""Synthetic driving scenes: flat-shaded cuboids on a ground plane.

Each pixel is ray-cast against the ground plane and every placed box, so the
depth map is exact and the labels are consistent with the rendering.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import BehindCameraError, box3d_corners, project_points, rotation_y
from .kitti import GroundTruthObject, wrap_angle

CLASS_DIMS = {  # mean (h, w, l) in meters
    "Car": (1.53, 1.63, 3.88),
    "Pedestrian": (1.76, 0.66, 0.84),
    "Cyclist": (1.74, 0.60, 1.76),
}
CLASS_COLORS = {
    "Car": (0.85, 0.25, 0.20),
    "Pedestrian": (0.20, 0.75, 0.30),
    "Cyclist": (0.25, 0.35, 0.90),
}


@dataclass
class SynthConfig:
    height: int = 96
    width: int = 320
    focal: float = 300.0
    horizon: float = 0.35
    camera_height: float = 1.65
    classes: tuple[str, ...] = ("Car", "Pedestrian", "Cyclist")
    class_weights: tuple[float, ...] | None = None
    min_objects: int = 1
    max_objects: int = 3
    z_range: tuple[float, float] = (6.0, 20.0)
    x_range: tuple[float, float] = (-6.0, 6.0)
    dim_jitter: float = 0.05
    min_box_height: float = 24.0
    allow_truncation: bool = False
    max_tries: int = 200
    noise: float = 0.02

    def P2(self) -> np.ndarray:
        return np.array(
            [
                [self.focal, 0.0, self.width / 2.0, 0.0],
                [0.0, self.focal, self.height * self.horizon, 0.0],
                [0.0, 0.0, 1.0, 0.0],
            ]
        )


@dataclass
class SyntheticScene:
    image: np.ndarray
    depth: np.ndarray
    objects: list[GroundTruthObject]
    seed: int
    P2: np.ndarray = field(default_factory=lambda: SynthConfig().P2())
    name: str = "000000"


def _hull(pts2d: np.ndarray) -> tuple[float, float, float, float]:
    return float(pts2d[:, 0].min()), float(pts2d[:, 1].min()), float(pts2d[:, 0].max()), float(pts2d[:, 1].max())


def clip_box(box, width: int, height: int) -> tuple[float, float, float, float]:
    x1, y1, x2, y2 = box
    return (
        float(np.clip(x1, 0, width - 1)),
        float(np.clip(y1, 0, height - 1)),
        float(np.clip(x2, 0, width - 1)),
        float(np.clip(y2, 0, height - 1)),
    )


def _area(b) -> float:
    return max(b[2] - b[0], 0.0) * max(b[3] - b[1], 0.0)


def _overlaps(a, b, margin: float = 2.0) -> bool:
    return not (a[2] + margin < b[0] or b[2] + margin < a[0] or a[3] + margin < b[1] or b[3] + margin < a[1])


def _pixel_rays(cfg: SynthConfig) -> np.ndarray:
    """Unit-z ray directions (H, W, 3) through pixel centres."""
    P = cfg.P2()
    v, u = np.mgrid[0 : cfg.height, 0 : cfg.width] + 0.5
    dx = (u - P[0, 2]) / P[0, 0]
    dy = (v - P[1, 2]) / P[1, 1]
    return np.stack([dx, dy, np.ones_like(dx)], axis=-1)


def ray_box_depth(rays: np.ndarray, obj: GroundTruthObject) -> tuple[np.ndarray, np.ndarray]:
    """Camera depth of the first hit of each ray with the box (NaN on miss) and the hit axis."""
    h, w, l = obj.dims
    R = rotation_y(obj.rotation_y)
    centre = obj.center3d
    o = -(R.T @ centre)
    d = rays @ R  # row-vector form of R.T @ ray
    ext = np.array([l / 2.0, h / 2.0, w / 2.0])
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (-ext - o) / d
        t2 = (ext - o) / d
    near = np.minimum(t1, t2)
    far = np.maximum(t1, t2)
    t_in = near.max(axis=-1)
    t_out = far.min(axis=-1)
    hit = (t_out >= t_in) & (t_in > 0)
    depth = np.where(hit, t_in * rays[..., 2], np.nan)
    return depth, near.argmax(axis=-1)


def _sample_object(rng: np.random.Generator, cfg: SynthConfig, cls: str) -> GroundTruthObject:
    base = np.array(CLASS_DIMS[cls])
    dims = base * (1.0 + rng.uniform(-cfg.dim_jitter, cfg.dim_jitter, size=3))
    z = rng.uniform(*cfg.z_range)
    x = rng.uniform(*cfg.x_range)
    ry = float(wrap_angle(rng.uniform(-np.pi, np.pi)))
    alpha = float(wrap_angle(ry - np.arctan2(x, z)))
    return GroundTruthObject(cls, 0.0, 0, alpha, (0.0, 0.0, 0.0, 0.0), tuple(dims), (x, cfg.camera_height, z), ry)


def synth_scene(seed: int, cfg: SynthConfig | None = None) -> SyntheticScene:
    """Deterministically generate one scene from ``seed``."""
    cfg = cfg or SynthConfig()
    rng = np.random.default_rng(seed)
    P2 = cfg.P2()
    H, W = cfg.height, cfg.width
    weights = np.asarray(cfg.class_weights or [1.0] * len(cfg.classes), dtype=float)
    n_target = int(rng.integers(cfg.min_objects, cfg.max_objects + 1)) if cfg.max_objects > 0 else 0

    placed: list[tuple[GroundTruthObject, tuple]] = []
    tries = 0
    while len(placed) < n_target and tries < cfg.max_tries:
        tries += 1
        cls = cfg.classes[int(rng.choice(len(cfg.classes), p=weights / weights.sum()))]
        obj = _sample_object(rng, cfg, cls)
        corners = box3d_corners(obj.dims, obj.location, obj.rotation_y)
        if corners[:, 2].min() < 0.5:
            continue
        try:
            full = _hull(project_points(P2, corners))
        except BehindCameraError:
            continue
        clipped = clip_box(full, W, H)
        inside = clipped == full
        if not inside and not cfg.allow_truncation:
            continue
        if clipped[3] - clipped[1] < cfg.min_box_height or _area(clipped) <= 0:
            continue
        if any(_overlaps(clipped, other) for _, other in placed):
            continue
        obj.bbox2d = clipped
        obj.truncation = float(np.clip(1.0 - _area(clipped) / _area(full), 0.0, 1.0))
        placed.append((obj, full))

    rays = _pixel_rays(cfg)
    depth = np.full((H, W), np.nan)
    ground = rays[..., 1] > 1e-6
    depth[ground] = cfg.camera_height / rays[..., 1][ground]
    shade = np.clip(1.0 - np.nan_to_num(depth, nan=0.0) / 80.0, 0.2, 1.0)
    image = np.empty((3, H, W))
    for c, (sky_c, ground_c) in enumerate(zip((0.55, 0.70, 0.95), (0.45, 0.42, 0.38))):
        image[c] = np.where(ground, ground_c * shade, sky_c)

    owner = np.full((H, W), -1)
    for i, (obj, _) in enumerate(placed):
        d, axis = ray_box_depth(rays, obj)
        closer = np.isfinite(d) & ~(d >= depth)
        depth[closer] = d[closer]
        owner[closer] = i
        color = np.array(CLASS_COLORS[obj.cls])
        face_shade = np.array([0.75, 1.0, 0.55])[axis]
        for c in range(3):
            image[c][closer] = color[c] * face_shade[closer]

    for i, (obj, _) in enumerate(placed):
        d, _ = ray_box_depth(rays, obj)
        own = np.isfinite(d).sum()
        visible = (owner == i).sum() / max(own, 1)
        obj.occlusion = 0 if visible > 0.9 else 1 if visible > 0.5 else 2

    image = np.clip(image + rng.normal(0.0, cfg.noise, size=image.shape), 0.0, 1.0)
    return SyntheticScene(image, depth, [obj for obj, _ in placed], seed, P2, name=f"{seed:06d}")


def sparsify_depth(depth: np.ndarray, density: float, seed: int) -> np.ndarray:
    """Keep a random ``density`` fraction of pixels (simulated LiDAR coverage)."""
    if density >= 1.0:
        return depth.copy()
    keep = np.random.default_rng(seed).random(depth.shape) < density
    return np.where(keep, depth, np.nan)
