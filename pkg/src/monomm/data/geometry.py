"""Pinhole projection of points and 3-D boxes."""

from __future__ import annotations

import numpy as np


class BehindCameraError(ValueError):
    pass


def project_points(P2: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Project ``(n, 3)`` camera-frame points to ``(n, 2)`` pixel coordinates."""
    pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
    hom = np.concatenate([pts, np.ones((len(pts), 1))], axis=1) @ np.asarray(P2).T
    if np.any(hom[:, 2] <= 0):
        raise BehindCameraError("point at or behind the image plane")
    return hom[:, :2] / hom[:, 2:3]


def rotation_y(ry: float) -> np.ndarray:
    c, s = np.cos(ry), np.sin(ry)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def box3d_corners(dims, location, ry: float) -> np.ndarray:
    """Eight corners (8, 3) of a box with ``dims=(h, w, l)`` and bottom-centre ``location``.

    Corners 0-3 lie on the bottom face, 4-7 on the top face.
    """
    h, w, l = dims
    xs = np.array([l, l, -l, -l, l, l, -l, -l]) / 2.0
    ys = np.array([0, 0, 0, 0, -h, -h, -h, -h], dtype=np.float64)
    zs = np.array([w, -w, -w, w, w, -w, -w, w]) / 2.0
    return (rotation_y(ry) @ np.stack([xs, ys, zs])).T + np.asarray(location, dtype=np.float64)


def project_box3d(obj, P2: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Projected 3-D centre ``(2,)`` and corners ``(8, 2)`` of a labelled object."""
    if obj.location[2] <= 0:
        raise BehindCameraError(f"object at z={obj.location[2]} is behind the camera")
    corners = box3d_corners(obj.dims, obj.location, obj.rotation_y)
    center = project_points(P2, obj.center3d[None])[0]
    return center, project_points(P2, corners)


def backproject(P2: np.ndarray, u, v, z) -> tuple[np.ndarray, np.ndarray]:
    """Solve ``P2 @ [x, y, z, 1] ~ [u, v, 1]`` for x and y at known camera depth z."""
    P = np.asarray(P2, dtype=np.float64)
    u, v, z = (np.asarray(a, dtype=np.float64) for a in (u, v, z))
    rhs_w = P[2, 2] * z + P[2, 3]
    a11, a12 = P[0, 0] - u * P[2, 0], P[0, 1] - u * P[2, 1]
    a21, a22 = P[1, 0] - v * P[2, 0], P[1, 1] - v * P[2, 1]
    b1 = u * rhs_w - (P[0, 2] * z + P[0, 3])
    b2 = v * rhs_w - (P[1, 2] * z + P[1, 3])
    det = a11 * a22 - a12 * a21
    return (b1 * a22 - a12 * b2) / det, (a11 * b2 - b1 * a21) / det
