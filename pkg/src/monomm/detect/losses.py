"""Training targets for one frame and the weighted detection + depth objective."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..dap import DepthBinMap, depth_loss, discretize_depth, downsample_depth
from ..eval.iou import iou2d_matrix
from ..losses import focal_loss, sigmoid_focal_loss, smooth_l1, softmax_focal_loss
from ..tensor import Tensor
from .anchors import IGNORE, NEGATIVE, POSITIVE, AnchorSet, match_anchors
from .coder import BoxGeometry, encode_targets

__all__ = [
    "FrameTargets", "LossWeights", "build_targets", "total_loss", "focal_loss", "sigmoid_focal_loss",
    "smooth_l1", "softmax_focal_loss",
]


@dataclass
class LossWeights:
    cls: float = 1.0
    reg: float = 1.0
    dep: float = 1.0
    alpha: float = 0.25
    gamma: float = 2.0
    delta: float = 1.0


@dataclass
class FrameTargets:
    labels: np.ndarray  # (A,) POSITIVE / NEGATIVE / IGNORE
    cls_target: np.ndarray  # (A,) class id for positives, -1 elsewhere
    pos_index: np.ndarray  # (P,) positive anchor indices
    reg_target: np.ndarray  # (P, 11)
    depth: DepthBinMap | None

    @property
    def num_pos(self) -> int:
        return len(self.pos_index)


def build_targets(anchors: AnchorSet, objects, P2: np.ndarray, class_names, depth: np.ndarray | None = None,
                  stride: int = 8, pos_iou: float = 0.5, neg_iou: float = 0.4, n_bins: int = 96,
                  d_min: float = 1.0, d_max: float = 80.0) -> FrameTargets:
    """Match anchors to the frame's objects and encode regression and depth targets.

    Objects whose class is not being trained (DontCare, Van, ...) never
    produce positives; anchors overlapping them by ``neg_iou`` or more are ignored.
    """
    known = [o for o in objects if o.cls in class_names]
    other = [o for o in objects if o.cls not in class_names]
    match = match_anchors(anchors.boxes, np.array([o.bbox2d for o in known]).reshape(-1, 4), pos_iou, neg_iou)
    labels = match.labels.copy()
    if other:
        near_other = iou2d_matrix(anchors.boxes, np.array([o.bbox2d for o in other])).max(axis=1) >= neg_iou
        labels[near_other & (labels == NEGATIVE)] = IGNORE
    pos = np.flatnonzero(labels == POSITIVE)
    cls_target = np.full(len(labels), -1)
    if len(pos):
        gt_idx = match.gt_index[pos]
        cls_target[pos] = [list(class_names).index(known[g].cls) for g in gt_idx]
        geom = BoxGeometry.from_objects([known[g] for g in gt_idx], P2)
        reg = encode_targets(anchors.centers[pos], anchors.sizes[pos], anchors.prior_mean[pos],
                             anchors.prior_std[pos], geom)
    else:
        reg = np.zeros((0, 11))
    bins = None
    if depth is not None:
        bins = discretize_depth(downsample_depth(depth, stride), n_bins, d_min, d_max)
    return FrameTargets(labels, cls_target, pos, reg, bins)


def total_loss(cls_out: Tensor, reg_out: Tensor, depth_logits: Tensor | None, targets: FrameTargets,
               weights: LossWeights | None = None) -> tuple[Tensor, dict[str, float]]:
    """``w_cls L_cls + w_reg L_reg + w_dep L_dep`` and the unweighted components.

    The classification term is the per-class sigmoid focal loss summed over
    non-ignored anchors and divided by the number of positives. The
    regression term is the mean smooth-L1 over all positive target entries.
    """
    w = weights or LossWeights()
    keep = np.flatnonzero(targets.labels != IGNORE)
    onehot = np.zeros((len(keep), cls_out.shape[1]), dtype=bool)
    pos_rows = targets.labels[keep] == POSITIVE
    onehot[np.flatnonzero(pos_rows), targets.cls_target[keep][pos_rows]] = True
    l_cls = sigmoid_focal_loss(cls_out[keep], onehot, w.alpha, w.gamma, reduction="sum",
                               normalizer=max(targets.num_pos, 1))
    if targets.num_pos:
        l_reg = smooth_l1(reg_out[targets.pos_index], targets.reg_target, w.delta)
    else:
        l_reg = (reg_out * 0.0).sum()
    if depth_logits is not None and targets.depth is not None:
        l_dep = depth_loss(depth_logits, targets.depth, w.alpha, w.gamma)
    else:
        l_dep = None
    total = l_cls * w.cls + l_reg * w.reg
    if l_dep is not None:
        total = total + l_dep * w.dep
    parts = {"cls": l_cls.item(), "reg": l_reg.item(), "dep": 0.0 if l_dep is None else l_dep.item()}
    parts["total"] = total.item()
    return total, parts
