"""Depth-assisted perception: depth-bin supervision and depth/visual fusion."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .losses import softmax_focal_loss
from .features import FeatureMap
from .nn import Conv2d, Module
from .tensor import Tensor

SENTINEL_INVALID = -1


@dataclass
class DapConfig:
    layers: int = 3
    channels: int = 256
    n_bins: int = 96
    d_min: float = 1.0
    d_max: float = 80.0

    def __post_init__(self):
        if self.n_bins < 2:
            raise ValueError("n_bins must be >= 2")
        if not self.d_min < self.d_max:
            raise ValueError("d_min must be smaller than d_max")


@dataclass
class DepthBinMap:
    bins: np.ndarray
    n_bins: int

    def __post_init__(self):
        valid = self.bins != SENTINEL_INVALID
        if np.any(self.bins[valid] < 0) or np.any(self.bins[valid] >= self.n_bins):
            raise ValueError("depth bins out of range")

    @property
    def valid(self) -> np.ndarray:
        return self.bins != SENTINEL_INVALID


def lid_boundaries(n_bins: int, d_min: float, d_max: float) -> np.ndarray:
    """Linear-increasing discretisation: ``b_k = d_min + (d_max - d_min) k (k + 1) / (n (n + 1))``."""
    k = np.arange(n_bins + 1, dtype=np.float64)
    return d_min + (d_max - d_min) * k * (k + 1) / (n_bins * (n_bins + 1))


def bin_centers(n_bins: int, d_min: float, d_max: float) -> np.ndarray:
    b = lid_boundaries(n_bins, d_min, d_max)
    return 0.5 * (b[:-1] + b[1:])


def discretize_depth(depth: np.ndarray, n_bins: int, d_min: float, d_max: float) -> DepthBinMap:
    """Map metric depth to LID bins; NaN or non-positive depth is marked invalid.

    Depths outside ``[d_min, d_max]`` clamp to the edge bins.
    """
    if not d_min < d_max or n_bins < 2:
        raise ValueError("need d_min < d_max and n_bins >= 2")
    depth = np.asarray(depth, dtype=np.float64)
    invalid = ~np.isfinite(depth) | (depth <= 0)
    b = lid_boundaries(n_bins, d_min, d_max)
    idx = np.searchsorted(b, np.where(invalid, d_min, depth), side="right") - 1
    idx = np.clip(idx, 0, n_bins - 1)
    return DepthBinMap(np.where(invalid, SENTINEL_INVALID, idx).astype(np.int64), n_bins)


def downsample_depth(depth: np.ndarray, stride: int) -> np.ndarray:
    """Nearest-neighbour sample at the centre pixel of each ``stride x stride`` cell."""
    h, w = depth.shape
    return depth[stride // 2 : h : stride, stride // 2 : w : stride][: h // stride, : w // stride]


class DAP(Module):
    """Conv stack producing depth-aware features and per-pixel depth-bin logits."""

    def __init__(self, c_in: int, cfg: DapConfig | None = None, fuse: bool = True, rng=None):
        cfg = cfg or DapConfig()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.cfg = cfg
        widths = [c_in] + [cfg.channels] * cfg.layers
        self.convs = [Conv2d(widths[i], widths[i + 1], 3, rng=rng) for i in range(cfg.layers)]
        self.depth_head = Conv2d(widths[-1], cfg.n_bins, 1, rng=rng)
        # 3x3 context conv on the visual path; only built when the fused map is consumed
        self.context = Conv2d(c_in, widths[-1], 3, rng=rng) if fuse else None

    def forward(self, visual: FeatureMap) -> tuple[FeatureMap, Tensor]:
        x = visual.data
        for conv in self.convs:
            x = conv(x).relu()
        return FeatureMap(x, visual.stride), self.depth_head(x)

    def fuse(self, visual: FeatureMap, depth_feat: FeatureMap) -> FeatureMap:
        if self.context is None:
            raise RuntimeError("DAP was built without the fusion context conv")
        return fuse_depth_visual(visual, depth_feat, self.context)


def fuse_depth_visual(visual: FeatureMap, depth_feat: FeatureMap, context: Conv2d) -> FeatureMap:
    """``context(visual) + depth_feat``."""
    ctx = context(visual.data)
    if ctx.shape != depth_feat.shape:
        raise ValueError(f"cannot fuse {ctx.shape} with {depth_feat.shape}")
    return FeatureMap(ctx + depth_feat.data, visual.stride)


def depth_loss(logits: Tensor, gt: DepthBinMap, alpha: float = 0.25, gamma: float = 2.0) -> Tensor:
    """Mean multiclass focal loss over pixels with a valid depth bin (0 if there are none)."""
    if logits.shape[1:] != gt.bins.shape:
        raise ValueError(f"logits {logits.shape} do not match depth bins {gt.bins.shape}")
    ys, xs = np.nonzero(gt.valid)
    if ys.size == 0:
        return (logits * 0.0).sum()
    picked = logits[:, ys, xs]
    return softmax_focal_loss(picked, gt.bins[ys, xs], axis=0, alpha=alpha, gamma=gamma)
