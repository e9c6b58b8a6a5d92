"""Focal and smooth-L1 losses."""

from __future__ import annotations

import numpy as np

from . import functional as F
from .tensor import Tensor, where


def _reduce(values: Tensor, reduction: str, normalizer: float | None = None) -> Tensor:
    if values.size == 0:
        return (values * 0.0).sum()
    if reduction == "mean":
        return values.mean()
    if reduction == "sum":
        total = values.sum()
        return total if normalizer is None else total * (1.0 / max(normalizer, 1.0))
    if reduction == "none":
        return values
    raise ValueError(f"unknown reduction {reduction!r}")


def focal_loss(scores: Tensor, targets: np.ndarray, alpha: float = 0.25, gamma: float = 2.0,
               reduction: str = "mean", normalizer: float | None = None) -> Tensor:
    """Binary focal loss ``-alpha * (1 - p_t)**gamma * log(p_t)`` on probabilities.

    ``scores`` are probabilities in (0, 1); ``targets`` has the same shape with
    entries in {0, 1}. ``p_t`` is the probability assigned to the target outcome.
    """
    t = np.asarray(targets, dtype=bool)
    p_t = where(t, scores, 1.0 - scores)
    values = ((1.0 - p_t) ** gamma) * p_t.log() * (-alpha)
    return _reduce(values, reduction, normalizer)


def sigmoid_focal_loss(logits: Tensor, targets: np.ndarray, alpha: float = 0.25, gamma: float = 2.0,
                       reduction: str = "mean", normalizer: float | None = None) -> Tensor:
    """:func:`focal_loss` on ``sigmoid(logits)``, evaluated in log space for stability."""
    t = np.asarray(targets, dtype=bool)
    signed = where(t, logits, -logits)
    log_pt = F.log_sigmoid(signed)
    values = ((1.0 - log_pt.exp()) ** gamma) * log_pt * (-alpha)
    return _reduce(values, reduction, normalizer)


def softmax_focal_loss(logits: Tensor, labels: np.ndarray, axis: int = 0, alpha: float = 0.25,
                       gamma: float = 2.0, reduction: str = "mean") -> Tensor:
    """Multiclass focal loss on ``softmax(logits, axis)`` at integer ``labels``.

    ``labels`` has the shape of ``logits`` with ``axis`` removed.
    """
    logp = F.log_softmax(logits, axis=axis)
    labels = np.asarray(labels, dtype=np.int64)
    index = list(np.indices(labels.shape))
    index.insert(axis % logits.ndim, labels)
    log_pt = logp[tuple(index)]
    values = ((1.0 - log_pt.exp()) ** gamma) * log_pt * (-alpha)
    return _reduce(values, reduction)


def smooth_l1(pred: Tensor, target, delta: float = 1.0, reduction: str = "mean") -> Tensor:
    """``0.5 d**2 / delta`` for ``|d| < delta``, else ``|d| - 0.5 delta``."""
    d = pred - Tensor.wrap(target, pred)
    ad = d.abs()
    quad = d * d * (0.5 / delta)
    lin = ad - 0.5 * delta
    return _reduce(where(ad.data < delta, quad, lin), reduction)
