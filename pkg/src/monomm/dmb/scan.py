"""Selective state-space scan.

Per channel ``e`` and state ``n`` the recurrence is

    h_t = exp(delta_t * A) * h_{t-1} + delta_t * B_t * u_t
    y_t = sum_n C_t[n] * h_t[:, n] + D * u_t

with ``h_0 = 0``. Shapes: ``u, delta: (T, E)``, ``A: (E, N)``,
``B, C: (T, N)``, ``D: (E,)``.
"""

from __future__ import annotations

import numpy as np

from ..tensor import Tensor

TARGET_BLOCK_ELEMENTS = 16384


def default_block(state_size: int) -> int:
    """Block length keeping one block of states near a cache-friendly size."""
    blk = TARGET_BLOCK_ELEMENTS // max(state_size, 1)
    return int(min(64, max(4, 1 << max(blk.bit_length() - 1, 0))))


def _check_finite(*arrays: np.ndarray) -> None:
    for arr in arrays:
        if not np.all(np.isfinite(arr)):
            raise ValueError("selective scan received non-finite parameters")


def scan_sequential(u, delta, A, B, C, D) -> np.ndarray:
    """Reference step-by-step recurrence; the oracle for :func:`scan_blocked`."""
    T, E = u.shape
    h = np.zeros(A.shape, dtype=u.dtype)
    y = np.empty((T, E), dtype=u.dtype)
    for t in range(T):
        h = np.exp(delta[t][:, None] * A) * h + (delta[t] * u[t])[:, None] * B[t][None, :]
        y[t] = h @ C[t] + D * u[t]
    return y


def linear_recurrence(a: np.ndarray, b: np.ndarray, block: int | None = None, h0: np.ndarray | None = None) -> np.ndarray:
    """All states of ``h_t = a_t * h_{t-1} + b_t`` along axis 0.

    The sequence is cut into blocks; inside a block the prefix is computed by a
    log-depth (Hillis-Steele) associative scan over the pairs ``(a, b)``, and
    the carried state of the previous block is folded in afterwards.
    """
    T = a.shape[0]
    if block is None:
        block = default_block(int(np.prod(b.shape[1:])))
    out = np.empty_like(b)
    carry = np.zeros(b.shape[1:], dtype=b.dtype) if h0 is None else h0
    for start in range(0, T, block):
        ca = a[start : start + block].copy()
        cb = b[start : start + block].copy()
        n = ca.shape[0]
        step = 1
        while step < n:
            # right-hand sides are evaluated before the in-place update
            cb[step:] += ca[step:] * cb[:-step]
            ca[step:] *= ca[:-step]
            step *= 2
        ca *= carry
        ca += cb
        out[start : start + n] = ca
        carry = ca[-1]
    return out


def discretize(u, delta, A, B) -> tuple[np.ndarray, np.ndarray]:
    decay = np.exp(delta[:, :, None] * A[None])
    drive = (delta * u)[:, :, None] * B[:, None, :]
    return decay, drive


def scan_blocked(u, delta, A, B, C, D, block: int | None = None, return_states: bool = False):
    """Vectorised selective scan; equal to :func:`scan_sequential` up to rounding."""
    _check_finite(u, delta, A, B, C, D)
    decay, drive = discretize(u, delta, A, B)
    h = linear_recurrence(decay, drive, block)
    y = np.matmul(h, C[:, :, None])[..., 0] + D * u
    if return_states:
        return y, h, decay
    return y


def selective_scan(u: Tensor, delta: Tensor, A: Tensor, B: Tensor, C: Tensor, D: Tensor, block: int | None = None) -> Tensor:
    """Differentiable selective scan (fast path forward, adjoint scan backward)."""
    ud, dd, Ad, Bd, Cd, Dd = (t.data for t in (u, delta, A, B, C, D))
    if ud.ndim != 2 or dd.shape != ud.shape:
        raise ValueError(f"u and delta must share a (T, E) shape, got {ud.shape} and {dd.shape}")
    T, E = ud.shape
    if Ad.shape[0] != E or Bd.shape != (T, Ad.shape[1]) or Cd.shape != Bd.shape or Dd.shape != (E,):
        raise ValueError(f"inconsistent scan shapes: A{Ad.shape} B{Bd.shape} C{Cd.shape} D{Dd.shape}")
    y, h, decay = scan_blocked(ud, dd, Ad, Bd, Cd, Dd, block, return_states=True)

    def backward(gy):
        # adjoint recurrence gh_t = gy_t C_t + decay_{t+1} gh_{t+1}, run as a reversed scan
        src = (gy[:, :, None] * Cd[:, None, :])[::-1]
        shifted = np.concatenate([np.zeros_like(decay[:1]), decay[:0:-1]])
        gh = linear_recurrence(shifted, src, block)[::-1]
        h_prev = np.concatenate([np.zeros_like(h[:1]), h[:-1]])
        gdecay = gh * h_prev * decay
        gC = np.einsum("te,ten->tn", gy, h)
        gD = (gy * ud).sum(axis=0)
        ghB = np.einsum("ten,tn->te", gh, Bd)
        gu = ghB * dd + gy * Dd
        gdelta = np.einsum("ten,en->te", gdecay, Ad) + ghB * ud
        gA = np.einsum("ten,te->en", gdecay, dd)
        gB = np.einsum("ten,te->tn", gh, dd * ud)
        return gu, gdelta, gA, gB, gC, gD

    return Tensor._result(y, (u, delta, A, B, C, D), backward)
