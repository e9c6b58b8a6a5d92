"""Shared 3x3 conv followed by per-anchor classification and regression convs."""

from __future__ import annotations

import math

import numpy as np

from ..features import FeatureMap
from ..nn import Conv2d, Module
from ..tensor import Tensor
from .coder import N_REG

PRIOR_PROB = 0.01


class DetectionHead(Module):
    def __init__(self, c_in: int, n_classes: int, n_templates: int = 48, hidden: int | None = None, rng=None):
        rng = rng if rng is not None else np.random.default_rng(0)
        hidden = hidden or c_in
        self.n_classes = n_classes
        self.n_templates = n_templates
        self.shared = Conv2d(c_in, hidden, 3, rng=rng)
        self.cls = Conv2d(hidden, n_templates * n_classes, 1, rng=rng)
        self.reg = Conv2d(hidden, n_templates * N_REG, 1, rng=rng)
        # background-biased start so the focal loss is not swamped by easy negatives
        self.cls.weight.data *= 0.01
        self.cls.bias.data[...] = -math.log((1 - PRIOR_PROB) / PRIOR_PROB)
        self.reg.weight.data *= 0.01

    def _per_anchor(self, out: Tensor, k: int) -> Tensor:
        _, h, w = out.shape
        return out.reshape(self.n_templates, k, h, w).transpose(2, 3, 0, 1).reshape(h * w * self.n_templates, k)

    def forward(self, feat: FeatureMap) -> tuple[Tensor, Tensor]:
        """``(A, n_classes)`` logits and ``(A, 11)`` regression in anchor order."""
        x = self.shared(feat.data).relu()
        return self._per_anchor(self.cls(x), self.n_classes), self._per_anchor(self.reg(x), N_REG)
