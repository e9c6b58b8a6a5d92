"""Central finite-difference check of analytic gradients."""

from __future__ import annotations

from typing import Callable

import numpy as np

from .tensor import Tensor


def numerical_grad(f: Callable[[Tensor], Tensor], x: Tensor, eps: float = 1e-6) -> np.ndarray:
    flat = x.data.reshape(-1)
    out = np.zeros_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = float(f(x).data.sum())
        flat[i] = orig - eps
        fm = float(f(x).data.sum())
        flat[i] = orig
        out[i] = (fp - fm) / (2 * eps)
    return out.reshape(x.shape)


def analytic_grad(f: Callable[[Tensor], Tensor], x: Tensor) -> np.ndarray:
    x.requires_grad = True
    x.grad = None
    loss = f(x)
    loss.backward()
    return np.zeros_like(x.data) if x.grad is None else x.grad.copy()


def noise_floor(value: float, eps: float) -> float:
    """Derivative size below which a central difference of step ``eps`` is mostly rounding noise.

    Evaluating ``f`` rounds to about ``ulp(f)``, so the difference quotient
    carries an absolute error near ``ulp(f) / eps``. Relative comparisons only
    mean something well above that, hence the factor of 1e4.
    """
    return max(1e-8, 1e4 * np.finfo(np.float64).eps * max(1.0, abs(value)) / eps)


def finite_diff_check(f: Callable[[Tensor], Tensor], x: Tensor, eps: float = 1e-6) -> float:
    """Max over elements of ``|analytic - central| / max(|analytic|, |central|, floor)``.

    ``floor`` is :func:`noise_floor`, so derivatives smaller than the central
    difference can resolve are compared in absolute terms. ``f`` maps ``x`` to a
    scalar tensor and must be deterministic. ``x`` should be 64-bit; it is
    perturbed in place and restored.
    """
    ana = analytic_grad(f, x)
    num = numerical_grad(f, x, eps)
    floor = noise_floor(float(f(x).data.sum()), eps)
    denom = np.maximum(np.maximum(np.abs(ana), np.abs(num)), floor)
    return float(np.max(np.abs(ana - num) / denom)) if ana.size else 0.0
