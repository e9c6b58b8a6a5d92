"""Regression target encoding and its inverse.

Target layout (11 values per anchor)::

    tx, ty, tw, th                  2-D box centre offset and log size ratio
    tx_p, ty_p                      projected 3-D centre offset / anchor size
    tz                              standardised depth
    tw3d, th3d, tl3d                log ratio to the template's mean dimensions
    t_theta                         wrapped observation-angle residual
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..data.geometry import backproject, project_points
from ..data.kitti import GroundTruthObject, wrap_angle

N_REG = 11
LOG_CLAMP = 8.0  # keeps exp() finite for untrained outputs


@dataclass
class BoxGeometry:
    """Per-object geometry arrays in the form the coder works with."""

    box2d: np.ndarray  # (n, 4) x1, y1, x2, y2
    center_proj: np.ndarray  # (n, 2) projected 3-D centre (u, v)
    z: np.ndarray  # (n,)
    dims3d: np.ndarray  # (n, 3) w, h, l
    theta: np.ndarray  # (n,) observation angle

    def __len__(self) -> int:
        return len(self.z)

    @classmethod
    def from_objects(cls, objects, P2: np.ndarray) -> "BoxGeometry":
        if not objects:
            return cls(np.zeros((0, 4)), np.zeros((0, 2)), np.zeros(0), np.zeros((0, 3)), np.zeros(0))
        centers = np.array([o.center3d for o in objects])
        return cls(
            np.array([o.bbox2d for o in objects], dtype=np.float64),
            project_points(P2, centers),
            centers[:, 2],
            np.array([(o.dims[1], o.dims[0], o.dims[2]) for o in objects], dtype=np.float64),
            np.array([o.alpha for o in objects], dtype=np.float64),
        )


@dataclass
class Detection:
    cls_id: int
    score: float
    box2d: tuple[float, float, float, float]
    box3d: tuple[float, float, float, float, float, float, float]  # x, y, z, w, h, l, ry

    def __post_init__(self):
        x1, y1, x2, y2 = self.box2d
        if not (x2 > x1 and y2 > y1):
            raise ValueError(f"degenerate detection box {self.box2d}")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score {self.score} outside [0, 1]")

    def to_object(self, class_names) -> GroundTruthObject:
        x, y, z, w, h, l, ry = self.box3d
        alpha = float(wrap_angle(ry - np.arctan2(x, z)))
        return GroundTruthObject(class_names[self.cls_id], -1.0, -1, alpha, tuple(self.box2d), (h, w, l),
                                 (x, y, z), ry, self.score)


def _check_positive(name: str, arr: np.ndarray) -> None:
    if np.any(~(arr > 0)):
        raise ValueError(f"{name} must be positive")


def encode_targets(centers: np.ndarray, sizes: np.ndarray, prior_mean: np.ndarray, prior_std: np.ndarray,
                   gt: BoxGeometry, theta_prior: np.ndarray | float = 0.0) -> np.ndarray:
    """Targets ``(n, 11)`` for anchors paired row-wise with ground truths."""
    _check_positive("anchor sizes", sizes)
    _check_positive("prior dimensions", prior_mean[:, 1:])
    gw = gt.box2d[:, 2] - gt.box2d[:, 0]
    gh = gt.box2d[:, 3] - gt.box2d[:, 1]
    _check_positive("ground-truth box sizes", np.stack([gw, gh]))
    _check_positive("ground-truth dimensions", gt.dims3d)
    aw, ah = sizes[:, 0], sizes[:, 1]
    gx = (gt.box2d[:, 0] + gt.box2d[:, 2]) / 2.0
    gy = (gt.box2d[:, 1] + gt.box2d[:, 3]) / 2.0
    return np.stack(
        [
            (gx - centers[:, 0]) / aw,
            (gy - centers[:, 1]) / ah,
            np.log(gw / aw),
            np.log(gh / ah),
            (gt.center_proj[:, 0] - centers[:, 0]) / aw,
            (gt.center_proj[:, 1] - centers[:, 1]) / ah,
            (gt.z - prior_mean[:, 0]) / prior_std[:, 0],
            np.log(gt.dims3d[:, 0] / prior_mean[:, 1]),
            np.log(gt.dims3d[:, 1] / prior_mean[:, 2]),
            np.log(gt.dims3d[:, 2] / prior_mean[:, 3]),
            wrap_angle(gt.theta - theta_prior),
        ],
        axis=1,
    )


def decode_boxes(centers: np.ndarray, sizes: np.ndarray, prior_mean: np.ndarray, prior_std: np.ndarray,
                 deltas: np.ndarray, theta_prior: np.ndarray | float = 0.0) -> BoxGeometry:
    """Inverse of :func:`encode_targets`."""
    _check_positive("anchor sizes", sizes)
    d = np.asarray(deltas, dtype=np.float64)
    logs = np.clip(d[:, [2, 3, 7, 8, 9]], -LOG_CLAMP, LOG_CLAMP)
    aw, ah = sizes[:, 0], sizes[:, 1]
    cx = centers[:, 0] + d[:, 0] * aw
    cy = centers[:, 1] + d[:, 1] * ah
    w = aw * np.exp(logs[:, 0])
    h = ah * np.exp(logs[:, 1])
    box2d = np.stack([cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2], axis=1)
    proj = np.stack([centers[:, 0] + d[:, 4] * aw, centers[:, 1] + d[:, 5] * ah], axis=1)
    z = prior_mean[:, 0] + d[:, 6] * prior_std[:, 0]
    dims = prior_mean[:, 1:] * np.exp(logs[:, 2:])
    theta = wrap_angle(theta_prior + d[:, 10])
    return BoxGeometry(box2d, proj, z, dims, np.asarray(theta, dtype=np.float64))


def geometry_to_box3d(geom: BoxGeometry, P2: np.ndarray) -> np.ndarray:
    """``(n, 7)`` boxes ``(x, y, z, w, h, l, ry)`` with ``y`` at the bottom face."""
    x, yc = backproject(P2, geom.center_proj[:, 0], geom.center_proj[:, 1], geom.z)
    w, h, l = geom.dims3d.T
    ry = wrap_angle(geom.theta + np.arctan2(x, geom.z))
    return np.stack([x, yc + h / 2.0, geom.z, w, h, l, ry], axis=1)
