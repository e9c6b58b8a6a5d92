"""Focused multi-scale fusion: cross-scale concatenation, then parallel
depthwise-separable refinement with a residual and a 2x transposed-conv upsample."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import functional as F
from .features import BackboneFeatures, FeatureMap
from .nn import Conv2d, ConvTranspose2d, Module
from .tensor import Tensor, concat, stack


@dataclass
class FmfConfig:
    c_mid: int = 256
    dw_kernels: tuple[int, ...] = (3, 5, 7)
    c_out: int = 256
    aconv_kernel: int = 3
    residual: str = "outside"

    def __post_init__(self):
        if any(k % 2 == 0 for k in self.dw_kernels):
            raise ValueError(f"depthwise kernels must be odd, got {self.dw_kernels}")
        if self.residual not in ("outside", "inside"):
            raise ValueError(f"residual must be 'outside' or 'inside', got {self.residual!r}")
        if self.c_mid < 1 or self.c_out < 1:
            raise ValueError("channel counts must be positive")


class AConv(Module):
    """Sum of avg-pool+conv and max-pool+conv paths; halves the resolution."""

    def __init__(self, c_in: int, c_out: int, kernel: int = 3, rng=None):
        self.avg_conv = Conv2d(c_in, c_out, kernel, rng=rng)
        self.max_conv = Conv2d(c_in, c_out, kernel, rng=rng)

    def forward(self, x: FeatureMap) -> FeatureMap:
        _, h, w = x.shape
        if h < 2 or w < 2:
            raise ValueError(f"spatial extent {(h, w)} smaller than the pooling kernel")
        out = self.avg_conv(F.pool2d(x.data, "avg", 2)) + self.max_conv(F.pool2d(x.data, "max", 2))
        return FeatureMap(out, x.stride * 2)


class DWSeparable(Module):
    def __init__(self, channels: int, kernel: int, rng=None):
        self.depthwise = Conv2d(channels, channels, kernel, groups=channels, rng=rng)
        self.pointwise = Conv2d(channels, channels, 1, rng=rng)

    def forward(self, x: Tensor) -> Tensor:
        return self.pointwise(self.depthwise(x))


class FMF(Module):
    def __init__(self, in_channels: tuple[int, int, int], cfg: FmfConfig | None = None, rng=None):
        cfg = cfg or FmfConfig()
        rng = rng if rng is not None else np.random.default_rng(0)
        c1, c2, c3 = in_channels
        cat = 3 * cfg.c_mid
        self.cfg = cfg
        self.aconv = AConv(c1, cfg.c_mid, cfg.aconv_kernel, rng=rng)
        self.lateral2 = Conv2d(c2, cfg.c_mid, 1, rng=rng)
        self.lateral3 = Conv2d(c3, cfg.c_mid, 1, rng=rng)
        self.branches = [DWSeparable(cat, k, rng=rng) for k in cfg.dw_kernels]
        self.reduce = Conv2d(cat, cfg.c_out, 1, rng=rng)
        self.residual_proj = Conv2d(cat, cfg.c_out, 1, rng=rng) if cfg.residual == "outside" else None
        self.upsample = ConvTranspose2d(cfg.c_out, cfg.c_out, 2, 2, rng=rng)

    def initial_fusion(self, feats: BackboneFeatures) -> FeatureMap:
        """Resample all three scales to stride 16 and concatenate (f1 | f2 | f3)."""
        if (feats.f1.stride, feats.f2.stride, feats.f3.stride) != (8, 16, 32):
            raise ValueError("initial fusion needs stride 8/16/32 inputs")
        x1 = self.aconv(feats.f1).data
        x2 = self.lateral2(feats.f2.data)
        x3 = F.upsample_nearest(self.lateral3(feats.f3.data), 2)
        return FeatureMap(concat([x1, x2, x3], axis=0), 16)

    def detail_fusion(self, fused: FeatureMap) -> FeatureMap:
        x = fused.data
        if x.shape[0] != 3 * self.cfg.c_mid:
            raise ValueError(f"expected {3 * self.cfg.c_mid} channels, got {x.shape[0]}")
        paths = [branch(x) for branch in self.branches] + [x]
        merged = stack(paths, axis=0).sum(axis=0)
        if self.residual_proj is not None:
            feature = self.reduce(merged) + self.residual_proj(x)
        else:
            feature = self.reduce(merged + x)
        return FeatureMap(self.upsample(feature), fused.stride // 2)

    def forward(self, feats: BackboneFeatures) -> FeatureMap:
        return self.detail_fusion(self.initial_fusion(feats))


class PlainFusion(Module):
    """Ablation baseline neck: 1x1 laterals, nearest upsampling to stride 8, summed."""

    def __init__(self, in_channels: tuple[int, int, int], c_out: int = 256, rng=None):
        self.laterals = [Conv2d(c, c_out, 1, rng=rng) for c in in_channels]

    def forward(self, feats: BackboneFeatures) -> FeatureMap:
        l1, l2, l3 = self.laterals
        out = l1(feats.f1.data) + F.upsample_nearest(l2(feats.f2.data), 2) + F.upsample_nearest(l3(feats.f3.data), 4)
        return FeatureMap(out, 8)
