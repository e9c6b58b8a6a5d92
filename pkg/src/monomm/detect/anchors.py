"""Anchor templates with 3-D priors, dataset statistics and IoU matching."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..data.geometry import project_points
from ..eval.iou import iou2d_matrix

STAT_FIELDS = ("z", "w3d", "h3d", "l3d")
DEFAULT_STATS = (20.0, 1.6, 1.5, 3.5)  # used before any statistics are collected
DEFAULT_STD = (10.0, 0.5, 0.5, 1.0)

POSITIVE = 1
NEGATIVE = 0
IGNORE = -1


@dataclass
class AnchorConfig:
    base: float = 16.0
    scales: int = 16
    scale_step: float = 1.0 / 3.0
    ratios: tuple[float, ...] = (0.5, 1.0, 1.5)
    stride: int = 8
    pos_iou: float = 0.5
    neg_iou: float = 0.4
    min_std: float = 0.1

    def __post_init__(self):
        if self.scales < 1 or not self.ratios:
            raise ValueError("anchor config needs at least one scale and one ratio")
        if self.base <= 0 or any(r <= 0 for r in self.ratios):
            raise ValueError("anchor base and ratios must be positive")
        if not 0 <= self.neg_iou <= self.pos_iou <= 1:
            raise ValueError("need 0 <= neg_iou <= pos_iou <= 1")

    @property
    def n_templates(self) -> int:
        return self.scales * len(self.ratios)

    def templates(self) -> np.ndarray:
        """``(n_templates, 2)`` anchor (width, height); ``ratio = height / width``.

        Templates are ordered scale-major: index ``k * len(ratios) + r``.
        """
        heights = self.base * 2.0 ** (np.arange(self.scales) * self.scale_step)
        ratios = np.asarray(self.ratios, dtype=np.float64)
        h = np.repeat(heights, len(ratios))
        w = h / np.tile(ratios, self.scales)
        return np.stack([w, h], axis=1)


@dataclass
class Anchor:
    x2d: float
    y2d: float
    w2d: float
    h2d: float
    xp: float
    yp: float
    z: float
    w3d: float
    h3d: float
    l3d: float
    theta: float


@dataclass
class AnchorStats:
    """Per-template mean and variance of matched ground-truth ``(z, w3d, h3d, l3d)``."""

    mean: np.ndarray
    var: np.ndarray
    count: np.ndarray = field(default=None)

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.var = np.asarray(self.var, dtype=np.float64)
        if self.count is None:
            self.count = np.zeros(len(self.mean), dtype=np.int64)
        if self.mean.shape != self.var.shape or self.mean.shape[1:] != (4,):
            raise ValueError("stats must be (n_templates, 4) arrays")
        if np.any(self.var < 0):
            raise ValueError("variance must be non-negative")
        if np.any(self.mean[:, 1:] <= 0):
            raise ValueError("mean dimensions must be positive")

    @classmethod
    def default(cls, n_templates: int) -> "AnchorStats":
        return cls(np.tile(DEFAULT_STATS, (n_templates, 1)), np.tile(np.square(DEFAULT_STD), (n_templates, 1)))

    def std(self, min_std: float = 0.1) -> np.ndarray:
        return np.maximum(np.sqrt(self.var), min_std)

    @classmethod
    def fit(cls, frames, cfg: AnchorConfig, min_count: int = 2) -> "AnchorStats":
        """Collect statistics from the ground truths matched to each template.

        Templates with fewer than ``min_count`` matches fall back to the
        statistics pooled over all matches.
        """
        per_template: list[list[np.ndarray]] = [[] for _ in range(cfg.n_templates)]
        for frame in frames:
            objs = [o for o in frame.objects if o.cls != "DontCare"]
            if not objs:
                continue
            _, h, w = frame.image.shape
            anchors = generate_anchors(h // cfg.stride, w // cfg.stride, cfg.stride, cfg)
            match = match_anchors(anchors.boxes, np.array([o.bbox2d for o in objs]), cfg.pos_iou, cfg.neg_iou)
            for i in np.flatnonzero(match.labels == POSITIVE):
                o = objs[match.gt_index[i]]
                h3, w3, l3 = o.dims
                per_template[anchors.template[i]].append(np.array([o.location[2], w3, h3, l3]))
        pooled = [v for vals in per_template for v in vals]
        if not pooled:
            return cls.default(cfg.n_templates)
        pooled = np.array(pooled)
        g_mean, g_var = pooled.mean(axis=0), pooled.var(axis=0)
        mean = np.tile(g_mean, (cfg.n_templates, 1))
        var = np.tile(g_var, (cfg.n_templates, 1))
        count = np.array([len(v) for v in per_template])
        for t, vals in enumerate(per_template):
            if len(vals) >= min_count:
                mean[t] = np.mean(vals, axis=0)
                var[t] = np.var(vals, axis=0)
        return cls(mean, var, count)


@dataclass
class AnchorSet:
    """Anchors in ``(y * W + x) * n_templates + t`` order."""

    centers: np.ndarray  # (A, 2) pixel centre (x, y)
    sizes: np.ndarray  # (A, 2) width, height
    template: np.ndarray  # (A,)
    stats: AnchorStats
    feat_shape: tuple[int, int]
    min_std: float = 0.1

    def __len__(self) -> int:
        return len(self.centers)

    @property
    def boxes(self) -> np.ndarray:
        half = self.sizes / 2.0
        return np.concatenate([self.centers - half, self.centers + half], axis=1)

    @property
    def prior_mean(self) -> np.ndarray:
        return self.stats.mean[self.template]

    @property
    def prior_std(self) -> np.ndarray:
        return self.stats.std(self.min_std)[self.template]

    def __getitem__(self, i: int) -> Anchor:
        z, w3, h3, l3 = self.prior_mean[i]
        (x, y), (w, h) = self.centers[i], self.sizes[i]
        return Anchor(x, y, w, h, x, y, z, w3, h3, l3, 0.0)


def generate_anchors(feat_h: int, feat_w: int, stride: int, cfg: AnchorConfig | None = None,
                     stats: AnchorStats | None = None) -> AnchorSet:
    cfg = cfg or AnchorConfig()
    if feat_h < 1 or feat_w < 1:
        raise ValueError(f"empty feature grid {(feat_h, feat_w)}")
    tmpl = cfg.templates()
    T = len(tmpl)
    stats = stats or AnchorStats.default(T)
    if len(stats.mean) != T:
        raise ValueError(f"stats cover {len(stats.mean)} templates, config has {T}")
    ys, xs = np.mgrid[0:feat_h, 0:feat_w]
    cell = (np.stack([xs.ravel(), ys.ravel()], axis=1) + 0.5) * stride
    centers = np.repeat(cell, T, axis=0)
    sizes = np.tile(tmpl, (feat_h * feat_w, 1))
    template = np.tile(np.arange(T), feat_h * feat_w)
    return AnchorSet(centers, sizes, template, stats, (feat_h, feat_w), cfg.min_std)


@dataclass
class MatchResult:
    labels: np.ndarray  # POSITIVE / NEGATIVE / IGNORE per anchor
    gt_index: np.ndarray  # best ground truth per anchor (-1 without ground truths)
    max_iou: np.ndarray


def match_anchors(anchor_boxes: np.ndarray, gt_boxes: np.ndarray, pos_iou: float = 0.5,
                  neg_iou: float = 0.4) -> MatchResult:
    """Positive above ``pos_iou``, negative below ``neg_iou``, ignored in between.

    Each anchor takes its highest-IoU ground truth; ties go to the lowest index.
    """
    A = len(anchor_boxes)
    gt_boxes = np.asarray(gt_boxes, dtype=np.float64).reshape(-1, 4)
    if len(gt_boxes) == 0:
        return MatchResult(np.full(A, NEGATIVE), np.full(A, -1), np.zeros(A))
    iou = iou2d_matrix(anchor_boxes, gt_boxes)
    best = iou.argmax(axis=1)
    best_iou = iou[np.arange(A), best]
    labels = np.full(A, IGNORE)
    labels[best_iou > pos_iou] = POSITIVE
    labels[best_iou < neg_iou] = NEGATIVE
    return MatchResult(labels, best, best_iou)


def projected_center(obj, P2: np.ndarray) -> np.ndarray:
    return project_points(P2, obj.center3d[None])[0]
