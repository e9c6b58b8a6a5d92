"""Axis-aligned 2-D IoU and rotated bird's-eye / 3-D IoU.

3-D boxes are 7-vectors ``(x, y, z, h, w, l, ry)`` in camera coordinates with
``(x, y, z)`` the bottom-centre, so the box spans ``[y - h, y]`` vertically.
"""

from __future__ import annotations

import numpy as np

AREA_EPS = 1e-9


def iou2d(a, b) -> float:
    """IoU of two ``(x1, y1, x2, y2)`` boxes; degenerate boxes give 0."""
    ax1, ay1, ax2, ay2 = a
    bx1, by1, bx2, by2 = b
    area_a = (ax2 - ax1) * (ay2 - ay1)
    area_b = (bx2 - bx1) * (by2 - by1)
    if ax2 <= ax1 or ay2 <= ay1 or bx2 <= bx1 or by2 <= by1:
        return 0.0
    iw = min(ax2, bx2) - max(ax1, bx1)
    ih = min(ay2, by2) - max(ay1, by1)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return float(inter / (area_a + area_b - inter))


def iou2d_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise IoU between ``(n, 4)`` and ``(m, 4)`` box arrays."""
    a = np.asarray(a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 4)
    wa = np.clip(a[:, 2] - a[:, 0], 0, None)
    ha = np.clip(a[:, 3] - a[:, 1], 0, None)
    wb = np.clip(b[:, 2] - b[:, 0], 0, None)
    hb = np.clip(b[:, 3] - b[:, 1], 0, None)
    iw = np.clip(np.minimum(a[:, None, 2], b[None, :, 2]) - np.maximum(a[:, None, 0], b[None, :, 0]), 0, None)
    ih = np.clip(np.minimum(a[:, None, 3], b[None, :, 3]) - np.maximum(a[:, None, 1], b[None, :, 1]), 0, None)
    inter = iw * ih
    union = (wa * ha)[:, None] + (wb * hb)[None, :] - inter
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(union > 0, inter / union, 0.0)
    degenerate = (wa * ha <= 0)[:, None] | (wb * hb <= 0)[None, :]
    return np.where(degenerate, 0.0, out)


def footprint(box) -> np.ndarray:
    """Counter-clockwise ``(4, 2)`` polygon of the box footprint in the (x, z) plane."""
    x, _, z, _, w, l, ry = (float(v) for v in box)
    c, s = np.cos(ry), np.sin(ry)
    local = np.array([[l, w], [-l, w], [-l, -w], [l, -w]]) / 2.0
    # rotation about the camera y axis: x' = c x + s z, z' = -s x + c z
    pts = np.stack([c * local[:, 0] + s * local[:, 1], -s * local[:, 0] + c * local[:, 1]], axis=1)
    pts += (x, z)
    return pts if polygon_area(pts) >= 0 else pts[::-1]


def polygon_area(poly: np.ndarray) -> float:
    """Signed shoelace area (positive for counter-clockwise)."""
    if len(poly) < 3:
        return 0.0
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def clip_polygon(subject: np.ndarray, clip: np.ndarray) -> np.ndarray:
    """Sutherland-Hodgman clipping of ``subject`` by the convex CCW polygon ``clip``."""
    out = [tuple(p) for p in subject]
    n = len(clip)
    for i in range(n):
        if not out:
            break
        a, b = clip[i], clip[(i + 1) % n]
        ex, ey = b[0] - a[0], b[1] - a[1]

        def side(p):
            return ex * (p[1] - a[1]) - ey * (p[0] - a[0])

        pts, out = out, []
        for j, cur in enumerate(pts):
            prev = pts[j - 1]
            s_cur, s_prev = side(cur), side(prev)
            if s_cur >= 0:
                if s_prev < 0:
                    out.append(_intersect(prev, cur, s_prev, s_cur))
                out.append(cur)
            elif s_prev >= 0:
                out.append(_intersect(prev, cur, s_prev, s_cur))
    return np.array(out, dtype=np.float64).reshape(-1, 2)


def _intersect(p, q, sp, sq):
    t = sp / (sp - sq)
    return (p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1]))


def bev_intersection(a, b) -> float:
    area = polygon_area(clip_polygon(footprint(a), footprint(b)))
    return area if area > AREA_EPS else 0.0


def bev_iou(a, b) -> float:
    inter = bev_intersection(a, b)
    union = a[4] * a[5] + b[4] * b[5] - inter
    return float(inter / union) if union > 0 and inter > 0 else 0.0


def vertical_overlap(a, b) -> float:
    top = max(a[1] - a[3], b[1] - b[3])
    bottom = min(a[1], b[1])
    return max(bottom - top, 0.0)


def iou3d(a, b) -> float:
    inter = bev_intersection(a, b) * vertical_overlap(a, b)
    union = a[3] * a[4] * a[5] + b[3] * b[4] * b[5] - inter
    return float(inter / union) if union > 0 and inter > 0 else 0.0


def box7(obj) -> np.ndarray:
    """``(x, y, z, h, w, l, ry)`` from a labelled object."""
    return np.array([*obj.location, *obj.dims, obj.rotation_y], dtype=np.float64)
