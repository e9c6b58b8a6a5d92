"""Depthwise deformable convolution over token sequences and token grids.

Each kernel tap samples the input at its regular position plus a learned,
per-location fractional offset. Samples are interpolated (linearly in 1-D,
bilinearly in 2-D) and read as zero outside the valid range.
"""

from __future__ import annotations

import numpy as np

from .. import functional as F
from ..nn import Linear, Module, Parameter
from ..tensor import Tensor


def _gather_rows(x: np.ndarray, idx: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    valid = (idx >= 0) & (idx < x.shape[0])
    vals = x[np.clip(idx, 0, x.shape[0] - 1)] * valid[..., None]
    return vals, valid


def deformable_conv1d(x: Tensor, offsets: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Deformable depthwise 1-D convolution.

    Parameters
    ----------
    x : Tensor (T, E)
    offsets : Tensor (T, K), fractional shift of each tap at each position
    weight : Tensor (E, K), one kernel per channel, centred on tap ``K // 2``
    bias : optional Tensor (E,)
    """
    xd, od, wd = x.data, offsets.data, weight.data
    T, E = xd.shape
    K = wd.shape[1]
    if od.shape != (T, K) or wd.shape != (E, K):
        raise ValueError(f"offsets must be {(T, K)} and weight {(E, K)}, got {od.shape} and {wd.shape}")
    pos = np.arange(T)[:, None] + (np.arange(K) - K // 2)[None, :] + od
    i0 = np.floor(pos).astype(np.int64)
    frac = (pos - i0).astype(xd.dtype)[..., None]
    x0, v0 = _gather_rows(xd, i0)
    x1, v1 = _gather_rows(xd, i0 + 1)
    sampled = (1 - frac) * x0 + frac * x1  # (T, K, E)
    out = np.einsum("tke,ek->te", sampled, wd)
    parents = [x, offsets, weight]
    if bias is not None:
        out += bias.data
        parents.append(bias)

    def backward(g):
        gs = g[:, None, :] * wd.T[None]
        gx = np.zeros_like(xd)
        np.add.at(gx, i0[v0], ((1 - frac) * gs)[v0])
        np.add.at(gx, i0[v1] + 1, (frac * gs)[v1])
        goff = (gs * (x1 - x0)).sum(axis=-1)
        gw = np.einsum("tke,te->ek", sampled, g)
        grads = [gx, goff, gw]
        if bias is not None:
            grads.append(g.sum(axis=0))
        return tuple(grads)

    return Tensor._result(out, parents, backward)


def deformable_conv2d(x: Tensor, offsets: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Deformable depthwise 2-D convolution on a channels-last grid.

    Parameters
    ----------
    x : Tensor (H, W, E)
    offsets : Tensor (H, W, K, 2) holding (dy, dx) per tap, taps in row-major kernel order
    weight : Tensor (E, K) with ``K = k * k`` for a square kernel
    """
    xd, od, wd = x.data, offsets.data, weight.data
    H, W, E = xd.shape
    K = wd.shape[1]
    k = int(round(np.sqrt(K)))
    if k * k != K or od.shape != (H, W, K, 2):
        raise ValueError(f"expected square kernel taps and offsets of shape {(H, W, K, 2)}, got {od.shape}")
    ky, kx = np.meshgrid(np.arange(k) - k // 2, np.arange(k) - k // 2, indexing="ij")
    py = np.arange(H)[:, None, None] + ky.reshape(-1)[None, None, :] + od[..., 0]
    px = np.arange(W)[None, :, None] + kx.reshape(-1)[None, None, :] + od[..., 1]
    y0 = np.floor(py).astype(np.int64)
    x0 = np.floor(px).astype(np.int64)
    fy = (py - y0).astype(xd.dtype)[..., None]
    fx = (px - x0).astype(xd.dtype)[..., None]
    corners = []
    for dy, dx, wgt in ((0, 0, (1 - fy) * (1 - fx)), (0, 1, (1 - fy) * fx), (1, 0, fy * (1 - fx)), (1, 1, fy * fx)):
        yy, xx = y0 + dy, x0 + dx
        valid = (yy >= 0) & (yy < H) & (xx >= 0) & (xx < W)
        vals = xd[np.clip(yy, 0, H - 1), np.clip(xx, 0, W - 1)] * valid[..., None]
        corners.append((yy, xx, valid, wgt, vals))
    sampled = sum(wgt * vals for _, _, _, wgt, vals in corners)  # (H, W, K, E)
    out = np.einsum("hwke,ek->hwe", sampled, wd)
    parents = [x, offsets, weight]
    if bias is not None:
        out += bias.data
        parents.append(bias)

    def backward(g):
        gs = g[:, :, None, :] * wd.T[None, None]
        gx = np.zeros_like(xd)
        for yy, xx, valid, wgt, _ in corners:
            np.add.at(gx, (yy[valid], xx[valid]), (wgt * gs)[valid])
        v00, v01, v10, v11 = (c[4] for c in corners)
        d_dy = ((1 - fx) * (v10 - v00) + fx * (v11 - v01)) * gs
        d_dx = ((1 - fy) * (v01 - v00) + fy * (v11 - v10)) * gs
        goff = np.stack([d_dy.sum(-1), d_dx.sum(-1)], axis=-1)
        gw = np.einsum("hwke,hwe->ek", sampled, g)
        grads = [gx, goff, gw]
        if bias is not None:
            grads.append(g.sum(axis=(0, 1)))
        return tuple(grads)

    return Tensor._result(out, parents, backward)


class DeformConv(Module):
    """Depthwise deformable convolution whose offsets are predicted from each token.

    Offsets start at zero (zero-initialised offset head) and are bounded to
    ``[-offset_range, offset_range]`` through a tanh.
    """

    def __init__(self, dim: int, kernel: int = 3, offset_range: float = 2.0, mode: str = "1d", rng=None):
        rng = rng if rng is not None else np.random.default_rng(0)
        if mode not in ("1d", "2d"):
            raise ValueError(f"unknown deformable mode {mode!r}")
        self.mode = mode
        self.kernel = kernel
        self.offset_range = offset_range
        taps = kernel if mode == "1d" else kernel * kernel
        self.offset_head = Linear(dim, taps * (1 if mode == "1d" else 2), rng=rng)
        self.offset_head.weight.data[...] = 0.0
        self.weight = Parameter(rng.normal(0.0, 1.0 / np.sqrt(taps), size=(dim, taps)))
        self.bias = Parameter(np.zeros(dim))

    def forward(self, x: Tensor, grid: tuple[int, int] | None = None) -> Tensor:
        off = self.offset_head(x).tanh() * self.offset_range
        if self.mode == "1d":
            return deformable_conv1d(x, off, self.weight, self.bias)
        rows, cols = grid
        taps = self.kernel * self.kernel
        out = deformable_conv2d(
            x.reshape(rows, cols, -1), off.reshape(rows, cols, taps, 2), self.weight, self.bias
        )
        return out.reshape(rows * cols, -1)


class CausalConv1d(Module):
    """Depthwise convolution over time with left zero padding."""

    def __init__(self, dim: int, kernel: int = 4, rng=None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.kernel = kernel
        self.weight = Parameter(rng.normal(0.0, 1.0 / np.sqrt(kernel), size=(dim, 1, 1, kernel)))
        self.bias = Parameter(np.zeros(dim))

    def forward(self, x: Tensor) -> Tensor:
        T, E = x.shape
        seq = F.pad(x.transpose().reshape(E, 1, T), [(0, 0), (0, 0), (self.kernel - 1, 0)])
        out = F.conv2d(seq, self.weight, self.bias, groups=E)
        return out.reshape(E, T).transpose()
