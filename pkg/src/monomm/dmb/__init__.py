"""Depth-aware feature enhancement with selective state-space blocks."""

from .block import DMB, DMBBlock, DSSM, DmbConfig, SelectiveSSM, TokenSequence, sinusoidal_embedding
from .deform import CausalConv1d, DeformConv, deformable_conv1d, deformable_conv2d
from .scan import linear_recurrence, scan_blocked, scan_sequential, selective_scan

__all__ = [
    "DMB",
    "DMBBlock",
    "DSSM",
    "DmbConfig",
    "SelectiveSSM",
    "TokenSequence",
    "sinusoidal_embedding",
    "CausalConv1d",
    "DeformConv",
    "deformable_conv1d",
    "deformable_conv2d",
    "linear_recurrence",
    "scan_blocked",
    "scan_sequential",
    "selective_scan",
]
