"""KITTI-style difficulty buckets and AP at 40 recall positions."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .iou import bev_iou, box7, iou2d, iou3d

N_RECALL = 40


class Difficulty(enum.IntEnum):
    EASY = 0
    MODERATE = 1
    HARD = 2
    IGNORED = 3


@dataclass(frozen=True)
class DifficultyRule:
    min_height: float
    max_occlusion: int
    max_truncation: float


DEFAULT_RULES = (
    DifficultyRule(40.0, 0, 0.15),
    DifficultyRule(25.0, 1, 0.30),
    DifficultyRule(25.0, 2, 0.50),
)
DEFAULT_THRESHOLDS = {"Car": 0.7, "Pedestrian": 0.5, "Cyclist": 0.5}
# labels that are neither counted nor penalised when evaluating the key class
NEIGHBOUR_CLASSES = {"Car": ("Van",), "Pedestrian": ("Person_sitting",), "Cyclist": ()}


@dataclass
class EvalConfig:
    thresholds: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_THRESHOLDS))
    rules: tuple[DifficultyRule, ...] = DEFAULT_RULES

    def __post_init__(self):
        for cls, thr in self.thresholds.items():
            if not 0.0 < thr <= 1.0:
                raise ValueError(f"IoU threshold for {cls} must be in (0, 1], got {thr}")
        if len(self.rules) != 3:
            raise ValueError("need exactly three difficulty rules (easy, moderate, hard)")


def difficulty(gt, rules: Sequence[DifficultyRule] = DEFAULT_RULES) -> Difficulty:
    """Easiest bucket whose size, occlusion and truncation limits the object satisfies."""
    for level, rule in zip((Difficulty.EASY, Difficulty.MODERATE, Difficulty.HARD), rules):
        if gt.height2d >= rule.min_height and gt.occlusion <= rule.max_occlusion and gt.truncation <= rule.max_truncation:
            return level
    return Difficulty.IGNORED


def match_2d(det, gt) -> float:
    return iou2d(det.bbox2d, gt.bbox2d)


def match_bev(det, gt) -> float:
    return bev_iou(box7(det), box7(gt))


def match_3d(det, gt) -> float:
    return iou3d(box7(det), box7(gt))


IOU_FUNCTIONS: dict[str, Callable] = {"2d": match_2d, "bev": match_bev, "3d": match_3d}


def _dontcare_covers(det, region, thr: float) -> bool:
    x1, y1, x2, y2 = det.bbox2d
    area = (x2 - x1) * (y2 - y1)
    if area <= 0:
        return False
    iw = min(x2, region.bbox2d[2]) - max(x1, region.bbox2d[0])
    ih = min(y2, region.bbox2d[3]) - max(y1, region.bbox2d[1])
    return iw > 0 and ih > 0 and iw * ih / area >= thr


@dataclass
class _FrameGts:
    valid: list
    ignored: list
    dontcare: list


def _split_gts(gts, cls: str, bucket: Difficulty, rules) -> _FrameGts:
    valid, ignored, dontcare = [], [], []
    for g in gts:
        if g.cls == "DontCare":
            dontcare.append(g)
        elif g.cls == cls:
            (valid if difficulty(g, rules) <= bucket else ignored).append(g)
        elif g.cls in NEIGHBOUR_CLASSES.get(cls, ()):
            ignored.append(g)
    return _FrameGts(valid, ignored, dontcare)


def classify_detections(dets, gts, cls, iou_fn, thr, bucket=Difficulty.MODERATE,
                        rules=DEFAULT_RULES) -> tuple[list[tuple[float, str]], int]:
    """Label each detection of ``cls`` as ``"tp"``, ``"fp"`` or ``"ignore"``.

    ``dets`` and ``gts`` are per-frame lists. Detections are processed in
    descending score order (ties keep input order) and greedily take the
    highest-IoU unmatched valid ground truth with IoU >= ``thr``. Returns the
    labelled ``(score, label)`` sequence in processing order and the number
    of valid ground truths.
    """
    if len(dets) != len(gts):
        raise ValueError(f"{len(dets)} detection frames but {len(gts)} ground-truth frames")
    min_height = rules[min(int(bucket), 2)].min_height
    frames = [_split_gts(g, cls, bucket, rules) for g in gts]
    n_valid = sum(len(f.valid) for f in frames)
    flat = [(d.score, fi, di, d) for fi, fd in enumerate(dets) for di, d in enumerate(fd) if d.cls == cls]
    flat.sort(key=lambda item: (-item[0], item[1], item[2]))
    used_valid = [np.zeros(len(f.valid), bool) for f in frames]
    used_ignored = [np.zeros(len(f.ignored), bool) for f in frames]
    out = []
    for score, fi, _, det in flat:
        frame = frames[fi]
        best, best_j = -1.0, -1
        for j, g in enumerate(frame.valid):
            if not used_valid[fi][j]:
                ov = iou_fn(det, g)
                if ov >= thr and ov > best:
                    best, best_j = ov, j
        if best_j >= 0:
            used_valid[fi][best_j] = True
            out.append((score, "tp"))
            continue
        label = "fp"
        for j, g in enumerate(frame.ignored):
            if not used_ignored[fi][j] and iou_fn(det, g) >= thr:
                used_ignored[fi][j] = True
                label = "ignore"
                break
        if label == "fp" and (
            det.height2d < min_height or any(_dontcare_covers(det, r, thr) for r in frame.dontcare)
        ):
            label = "ignore"
        out.append((score, label))
    return out, n_valid


def interpolated_ap(labels: Sequence[str], n_gt: int, n_recall: int = N_RECALL) -> float:
    """Mean of interpolated precision at recall ``k / n_recall``, ``k = 1..n_recall``.

    Evaluated in exact rational arithmetic and rounded once.
    """
    if n_gt == 0:
        return 0.0
    points = []  # (tp, tp + fp) after each counted detection
    tp = fp = 0
    for lab in labels:
        if lab == "tp":
            tp += 1
        elif lab == "fp":
            fp += 1
        else:
            continue
        points.append((tp, tp + fp))
    # suffix maximum of precision, so best[i] covers every point at or after i
    best = [Fraction(0)] * (len(points) + 1)
    for i in range(len(points) - 1, -1, -1):
        t, n = points[i]
        best[i] = max(best[i + 1], Fraction(t, n))
    total = Fraction(0)
    i = 0
    for k in range(1, n_recall + 1):
        while i < len(points) and points[i][0] * n_recall < k * n_gt:
            i += 1
        total += best[i]
    return float(total / n_recall)


def ap40(dets, gts, cls: str, iou_fn: Callable | str = "3d", thr: float | None = None,
         bucket: Difficulty = Difficulty.MODERATE, rules=DEFAULT_RULES) -> float:
    """AP|40 for one class and difficulty bucket over a list of frames."""
    if isinstance(iou_fn, str):
        iou_fn = IOU_FUNCTIONS[iou_fn]
    if thr is None:
        thr = DEFAULT_THRESHOLDS.get(cls, 0.5)
    labelled, n_gt = classify_detections(dets, gts, cls, iou_fn, thr, bucket, rules)
    return interpolated_ap([lab for _, lab in labelled], n_gt)
