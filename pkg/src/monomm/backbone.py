"""Small plain CNN producing stride-8/16/32 feature maps."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .features import BackboneFeatures, FeatureMap
from .nn import Conv2d, Module
from .tensor import Tensor


@dataclass
class BackboneConfig:
    channels: tuple[int, ...] = (32, 64, 128, 256, 256)
    blocks: int = 2

    def __post_init__(self):
        if len(self.channels) != 5:
            raise ValueError(f"backbone needs 5 stage widths, got {len(self.channels)}")
        if self.blocks < 0:
            raise ValueError("blocks must be >= 0")


class ResidualBlock(Module):
    def __init__(self, channels: int, rng=None):
        self.conv1 = Conv2d(channels, channels, 3, rng=rng)
        self.conv2 = Conv2d(channels, channels, 3, rng=rng)
        # near-identity at initialisation keeps activations bounded through the stack
        self.conv2.weight.data *= 0.1

    def forward(self, x: Tensor) -> Tensor:
        return (x + self.conv2(self.conv1(x).relu())).relu()


class Stage(Module):
    def __init__(self, c_in: int, c_out: int, blocks: int, rng=None):
        self.down = Conv2d(c_in, c_out, 3, stride=2, rng=rng)
        self.blocks = [ResidualBlock(c_out, rng=rng) for _ in range(blocks)]

    def forward(self, x: Tensor) -> Tensor:
        x = self.down(x).relu()
        for block in self.blocks:
            x = block(x)
        return x


class Backbone(Module):
    """Five stride-2 stages; the last three outputs are the stride 8, 16 and 32 maps."""

    def __init__(self, cfg: BackboneConfig | None = None, in_channels: int = 3, rng=None):
        cfg = cfg or BackboneConfig()
        rng = rng if rng is not None else np.random.default_rng(0)
        widths = (in_channels,) + tuple(cfg.channels)
        self.stages = [Stage(widths[i], widths[i + 1], cfg.blocks, rng=rng) for i in range(5)]
        self.out_channels = tuple(cfg.channels[2:])

    def forward(self, image: Tensor) -> BackboneFeatures:
        if image.ndim != 3:
            raise ValueError(f"expected a (3, H, W) image, got {image.shape}")
        _, h, w = image.shape
        if h % 32 or w % 32:
            raise ValueError(f"input extents {(h, w)} must be divisible by 32")
        x = image
        outs = []
        for stage in self.stages:
            x = stage(x)
            outs.append(x)
        return BackboneFeatures(FeatureMap(outs[2], 8), FeatureMap(outs[3], 16), FeatureMap(outs[4], 32))

