"""Patch embedding, bidirectional selective SSM, and the residual DMB block."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import functional as F
from ..nn import LayerNorm, Linear, Module, Parameter
from ..tensor import Tensor
from .deform import CausalConv1d, DeformConv
from .scan import selective_scan


@dataclass
class DmbConfig:
    patch: tuple[int, int] = (4, 4)
    width: int = 256
    inner: int = 512
    state: int = 16
    layers: int = 2
    conv_kernel: int = 4
    dcn_kernel: int = 3
    dcn_offset_range: float = 2.0
    dcn_mode: str = "1d"
    norm_after_ssm: bool = True
    pos_embed: str = "learned"
    share_directions: bool = False

    def __post_init__(self):
        if self.layers < 0:
            raise ValueError("layers must be >= 0")
        if min(self.width, self.inner, self.state) < 1:
            raise ValueError("width, inner and state must be positive")
        if self.pos_embed not in ("learned", "sinusoidal"):
            raise ValueError(f"unknown positional embedding {self.pos_embed!r}")


@dataclass
class TokenSequence:
    tokens: Tensor
    grid: tuple[int, int]
    pos_added: bool = True

    def __post_init__(self):
        rows, cols = self.grid
        if rows * cols != self.tokens.shape[0]:
            raise ValueError(f"grid {self.grid} does not hold {self.tokens.shape[0]} tokens")


def sinusoidal_embedding(length: int, dim: int) -> np.ndarray:
    pos = np.arange(length)[:, None]
    freq = np.exp(-np.log(10000.0) * (np.arange(0, dim, 2) / dim))
    out = np.zeros((length, dim))
    out[:, 0::2] = np.sin(pos * freq)
    out[:, 1::2] = np.cos(pos * freq[: dim // 2])
    return out


class SelectiveSSM(Module):
    """One scan direction: linear -> causal conv -> SiLU -> selective scan."""

    def __init__(self, dim: int, state: int, conv_kernel: int = 4, rng=None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.in_proj = Linear(dim, dim, rng=rng)
        self.conv = CausalConv1d(dim, conv_kernel, rng=rng)
        self.proj_B = Linear(dim, state, bias=False, rng=rng)
        self.proj_C = Linear(dim, state, bias=False, rng=rng)
        self.proj_delta = Linear(dim, dim, rng=rng)
        # step sizes start in [1e-3, 1e-1] (inverse softplus of a log-uniform draw)
        dt = np.exp(rng.uniform(np.log(1e-3), np.log(1e-1), size=dim))
        self.proj_delta.bias.data[...] = dt + np.log(-np.expm1(-dt))
        self.A_log = Parameter(np.log(np.tile(np.arange(1, state + 1, dtype=float), (dim, 1))))
        self.D = Parameter(np.ones(dim))

    def forward(self, x: Tensor) -> Tensor:
        v = F.silu(self.conv(self.in_proj(x)))
        delta = self.proj_delta(v).softplus()
        A = -self.A_log.exp()
        return selective_scan(v, delta, A, self.proj_B(v), self.proj_C(v), self.D)


class DSSM(Module):
    """Bidirectional selective SSM gated by a SiLU branch.

    The forward scan and the scan of the reversed sequence (re-reversed) are
    summed, multiplied elementwise by ``silu(gate(x))``, then projected.
    """

    def __init__(self, dim: int, state: int, conv_kernel: int = 4, share_directions: bool = False, rng=None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.forward_ssm = SelectiveSSM(dim, state, conv_kernel, rng=rng)
        self.backward_ssm = self.forward_ssm if share_directions else SelectiveSSM(dim, state, conv_kernel, rng=rng)
        self.gate = Linear(dim, dim, rng=rng)
        self.out_proj = Linear(dim, dim, rng=rng)
        self.use_backward = True

    def forward(self, x: Tensor) -> Tensor:
        y = self.forward_ssm(x)
        if self.use_backward:
            y = y + self.backward_ssm(x.flip(0)).flip(0)
        return self.out_proj(y * F.silu(self.gate(x)))


class DMBBlock(Module):
    """Residual block: ``T + out(D * O)`` with D the deformable/SSM branch and O the gate."""

    def __init__(self, cfg: DmbConfig, rng=None):
        rng = rng if rng is not None else np.random.default_rng(0)
        C, E = cfg.width, cfg.inner
        self.norm_in = LayerNorm(C)
        self.proj_d = Linear(C, E, rng=rng)
        self.dcn = DeformConv(E, cfg.dcn_kernel, cfg.dcn_offset_range, cfg.dcn_mode, rng=rng)
        self.dssm = DSSM(E, cfg.state, cfg.conv_kernel, cfg.share_directions, rng=rng)
        self.norm_d = LayerNorm(E) if cfg.norm_after_ssm else None
        self.proj_o = Linear(C, E, rng=rng)
        self.proj_out = Linear(E, C, rng=rng)

    def forward(self, seq: TokenSequence) -> TokenSequence:
        t = self.norm_in(seq.tokens)
        d = self.dssm(F.silu(self.dcn(self.proj_d(t), seq.grid)))
        if self.norm_d is not None:
            d = self.norm_d(d)
        o = F.silu(self.proj_o(t))
        return TokenSequence(seq.tokens + self.proj_out(d * o), seq.grid, seq.pos_added)


class DMB(Module):
    """Patchify -> L residual blocks -> SiLU(Norm) -> un-patchify.

    Patches are taken in row-major raster order over the patch grid and each
    patch is flattened channel-major before the linear embedding.
    """

    def __init__(self, channels: int, grid: tuple[int, int], cfg: DmbConfig | None = None, rng=None):
        cfg = cfg or DmbConfig()
        rng = rng if rng is not None else np.random.default_rng(0)
        ph, pw = cfg.patch
        self.cfg = cfg
        self.channels = channels
        self.grid = tuple(grid)
        patch_dim = channels * ph * pw
        n_tokens = grid[0] * grid[1]
        self.embed = Linear(patch_dim, cfg.width, rng=rng)
        if cfg.pos_embed == "learned":
            self.pos_embed = Parameter(rng.normal(0.0, 0.02, size=(n_tokens, cfg.width)))
        else:
            self._pos_table = Tensor(sinusoidal_embedding(n_tokens, cfg.width))
        self.blocks = [DMBBlock(cfg, rng=rng) for _ in range(cfg.layers)]
        self.norm_out = LayerNorm(cfg.width)
        self.unembed = Linear(cfg.width, patch_dim, rng=rng)

    def _positions(self) -> Tensor:
        return self.pos_embed if self.cfg.pos_embed == "learned" else self._pos_table

    def patchify(self, fd: Tensor) -> TokenSequence:
        C, H, W = fd.shape
        ph, pw = self.cfg.patch
        if H % ph or W % pw:
            raise ValueError(f"feature extents {(H, W)} not divisible by patch size {(ph, pw)}")
        rows, cols = H // ph, W // pw
        if (rows, cols) != self.grid:
            raise ValueError(f"patch grid {(rows, cols)} does not match the configured grid {self.grid}")
        patches = fd.reshape(C, rows, ph, cols, pw).transpose(1, 3, 0, 2, 4).reshape(rows * cols, C * ph * pw)
        return TokenSequence(self.embed(patches) + self._positions(), (rows, cols))

    def unpatchify(self, tokens: Tensor) -> Tensor:
        rows, cols = self.grid
        ph, pw = self.cfg.patch
        C = self.channels
        patches = self.unembed(tokens)
        return patches.reshape(rows, cols, C, ph, pw).transpose(2, 0, 3, 1, 4).reshape(C, rows * ph, cols * pw)

    def forward(self, fd: Tensor) -> Tensor:
        seq = self.patchify(fd)
        for block in self.blocks:
            seq = block(seq)
        return self.unpatchify(F.silu(self.norm_out(seq.tokens)))
