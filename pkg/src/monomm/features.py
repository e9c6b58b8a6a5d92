from __future__ import annotations

from dataclasses import dataclass

from .tensor import Tensor

VALID_STRIDES = (8, 16, 32)


@dataclass
class FeatureMap:
    """A ``(C, H, W)`` tensor together with its stride relative to the input image."""

    data: Tensor
    stride: int

    def __post_init__(self):
        if self.stride not in VALID_STRIDES:
            raise ValueError(f"stride must be one of {VALID_STRIDES}, got {self.stride}")
        if self.data.ndim != 3 or self.data.shape[0] < 1:
            raise ValueError(f"feature map must be (C, H, W) with C > 0, got {self.data.shape}")

    @property
    def shape(self) -> tuple:
        return self.data.shape


@dataclass
class BackboneFeatures:
    f1: FeatureMap
    f2: FeatureMap
    f3: FeatureMap

    def __post_init__(self):
        if (self.f1.stride, self.f2.stride, self.f3.stride) != VALID_STRIDES:
            raise ValueError("backbone features must have strides 8, 16 and 32")
