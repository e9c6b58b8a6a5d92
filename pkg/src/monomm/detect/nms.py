"""Score filtering and per-class greedy non-maximum suppression."""

from __future__ import annotations

import numpy as np

from ..eval.iou import iou2d_matrix


def nms_indices(boxes: np.ndarray, scores: np.ndarray, iou_thr: float) -> np.ndarray:
    """Indices kept by greedy suppression, highest score first (ties keep input order)."""
    order = np.argsort(-np.asarray(scores), kind="stable")
    boxes = np.asarray(boxes, dtype=np.float64)[order]
    iou = iou2d_matrix(boxes, boxes)
    alive = np.ones(len(order), bool)
    keep = []
    for i in range(len(order)):
        if alive[i]:
            keep.append(order[i])
            alive[i + 1 :] &= iou[i, i + 1 :] <= iou_thr
    return np.array(keep, dtype=np.int64)


def nms(dets, iou_thr: float = 0.4, score_thr: float = 0.75) -> list:
    """Drop detections scoring below ``score_thr``, then suppress per class.

    ``dets`` are objects with ``cls_id``, ``score`` and ``box2d`` attributes.
    The survivors are returned in descending score order.
    """
    dets = [d for d in dets if d.score >= score_thr]
    kept = []
    for cls_id in sorted({d.cls_id for d in dets}):
        group = [d for d in dets if d.cls_id == cls_id]
        idx = nms_indices(np.array([d.box2d for d in group]), np.array([d.score for d in group]), iou_thr)
        kept.extend(group[i] for i in idx)
    return sorted(kept, key=lambda d: -d.score)
