"""Differentiable operators on unbatched ``[C, H, W]`` / ``[T, C]`` tensors.

Convolutions follow the cross-correlation convention (no kernel flip) and use
an im2col lowering so that the forward pass and both adjoints are a single
batched matrix product per call.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import as_strided
from scipy.special import expit

from .tensor import Tensor

LAYER_NORM_EPS = 1e-5


def _pair(v) -> tuple[int, int]:
    if isinstance(v, (int, np.integer)):
        return int(v), int(v)
    a, b = v
    return int(a), int(b)


@dataclass(frozen=True)
class ConvSpec:
    kernel: tuple[int, int]
    stride: tuple[int, int] = (1, 1)
    padding: tuple[int, int] = (0, 0)
    dilation: tuple[int, int] = (1, 1)
    groups: int = 1

    @classmethod
    def make(cls, kernel, stride=1, padding=0, dilation=1, groups=1) -> "ConvSpec":
        spec = cls(_pair(kernel), _pair(stride), _pair(padding), _pair(dilation), int(groups))
        if spec.groups < 1 or min(spec.stride + spec.dilation + spec.kernel) < 1 or min(spec.padding) < 0:
            raise ValueError(f"invalid convolution parameters: {spec}")
        return spec

    def output_size(self, h: int, w: int) -> tuple[int, int]:
        (kh, kw), (sh, sw), (ph, pw), (dh, dw) = self.kernel, self.stride, self.padding, self.dilation
        ho = (h + 2 * ph - dh * (kh - 1) - 1) // sh + 1
        wo = (w + 2 * pw - dw * (kw - 1) - 1) // sw + 1
        return ho, wo

    def transposed_output_size(self, h: int, w: int, output_padding=(0, 0)) -> tuple[int, int]:
        (kh, kw), (sh, sw), (ph, pw), (dh, dw) = self.kernel, self.stride, self.padding, self.dilation
        oh, ow = output_padding
        return (h - 1) * sh - 2 * ph + dh * (kh - 1) + oh + 1, (w - 1) * sw - 2 * pw + dw * (kw - 1) + ow + 1


def _im2col(x: np.ndarray, spec: ConvSpec, out_hw: tuple[int, int]) -> np.ndarray:
    """Return a contiguous ``(C, kh, kw, ho, wo)`` patch array."""
    (kh, kw), (sh, sw), (ph, pw), (dh, dw) = spec.kernel, spec.stride, spec.padding, spec.dilation
    if ph or pw:
        x = np.pad(x, ((0, 0), (ph, ph), (pw, pw)))
    ho, wo = out_hw
    s0, s1, s2 = x.strides
    view = as_strided(
        x, shape=(x.shape[0], kh, kw, ho, wo), strides=(s0, s1 * dh, s2 * dw, s1 * sh, s2 * sw), writeable=False
    )
    return np.ascontiguousarray(view)


def _col2im(cols: np.ndarray, out_shape: tuple[int, int, int], spec: ConvSpec, extra=(0, 0)) -> np.ndarray:
    """Scatter-add ``(C, kh, kw, ho, wo)`` patches into a ``(C, H, W)`` image."""
    (kh, kw), (sh, sw), (ph, pw), (dh, dw) = spec.kernel, spec.stride, spec.padding, spec.dilation
    c, h, w = out_shape
    _, _, _, ho, wo = cols.shape
    hp = max(h + 2 * ph, (kh - 1) * dh + sh * (ho - 1) + 1) + extra[0]
    wp = max(w + 2 * pw, (kw - 1) * dw + sw * (wo - 1) + 1) + extra[1]
    out = np.zeros((c, hp, wp), dtype=cols.dtype)
    for i in range(kh):
        r0 = i * dh
        for j in range(kw):
            c0 = j * dw
            out[:, r0 : r0 + sh * (ho - 1) + 1 : sh, c0 : c0 + sw * (wo - 1) + 1 : sw] += cols[:, i, j]
    return out[:, ph : ph + h, pw : pw + w]


def _check_conv(x: np.ndarray, w: np.ndarray, groups: int, transposed: bool) -> None:
    if x.ndim != 3:
        raise ValueError(f"expected a [C, H, W] input, got shape {x.shape}")
    if w.ndim != 4:
        raise ValueError(f"expected a 4-D weight, got shape {w.shape}")
    c_in = x.shape[0]
    if transposed:
        if w.shape[0] != c_in:
            raise ValueError(f"input channels ({c_in}) do not match weight dim 0 ({w.shape[0]})")
        if c_in % groups:
            raise ValueError(f"input channels ({c_in}) not divisible by groups ({groups})")
        return
    if c_in % groups:
        raise ValueError(f"input channels ({c_in}) not divisible by groups ({groups})")
    if w.shape[0] % groups:
        raise ValueError(f"output channels ({w.shape[0]}) not divisible by groups ({groups})")
    if w.shape[1] != c_in // groups:
        raise ValueError(f"weight dim 1 is {w.shape[1]} but input channels per group is {c_in // groups}")


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride=1, padding=0, dilation=1, groups=1) -> Tensor:
    """2-D cross-correlation.

    Parameters
    ----------
    x : Tensor of shape (C_in, H, W)
    weight : Tensor of shape (C_out, C_in // groups, kh, kw)
    bias : optional Tensor of shape (C_out,)
    """
    xd, wd = x.data, weight.data
    _check_conv(xd, wd, groups, transposed=False)
    spec = ConvSpec.make(wd.shape[2:], stride, padding, dilation, groups)
    ho, wo = spec.output_size(*xd.shape[1:])
    if ho < 1 or wo < 1:
        raise ValueError(f"kernel {spec.kernel} does not fit input of spatial size {xd.shape[1:]}")
    g = spec.groups
    c_out, cg, kh, kw = wd.shape
    m = ho * wo
    cols = _im2col(xd, spec, (ho, wo)).reshape(g, cg * kh * kw, m)
    wg = wd.reshape(g, c_out // g, cg * kh * kw)
    out = np.matmul(wg, cols).reshape(c_out, ho, wo)
    parents = [x, weight]
    if bias is not None:
        out += bias.data[:, None, None]
        parents.append(bias)

    def backward(grad):
        gg = grad.reshape(g, c_out // g, m)
        gx = None
        if x.requires_grad:
            gcols = np.matmul(wg.transpose(0, 2, 1), gg).reshape(xd.shape[0], kh, kw, ho, wo)
            gx = _col2im(gcols, xd.shape, spec)
        gw = np.matmul(gg, cols.transpose(0, 2, 1)).reshape(wd.shape) if weight.requires_grad else None
        if bias is None:
            return gx, gw
        return gx, gw, grad.sum(axis=(1, 2))

    return Tensor._result(out, parents, backward)


def conv_transpose2d(
    x: Tensor, weight: Tensor, bias: Tensor | None = None, stride=1, padding=0, dilation=1, groups=1, output_padding=0
) -> Tensor:
    """Transposed convolution: the input-adjoint of :func:`conv2d` with the same weight.

    ``weight`` has shape (C_in, C_out // groups, kh, kw), i.e. the layout of the
    forward convolution that maps C_out channels to C_in.
    """
    xd, wd = x.data, weight.data
    _check_conv(xd, wd, groups, transposed=True)
    spec = ConvSpec.make(wd.shape[2:], stride, padding, dilation, groups)
    op = _pair(output_padding)
    if op[0] >= spec.stride[0] and op[0] >= spec.dilation[0] or op[1] >= spec.stride[1] and op[1] >= spec.dilation[1]:
        raise ValueError("output_padding must be smaller than stride or dilation")
    c_in, h, w = xd.shape
    g = spec.groups
    _, cg, kh, kw = wd.shape
    c_out = cg * g
    ho, wo = spec.transposed_output_size(h, w, op)
    m = h * w
    wg = wd.reshape(g, c_in // g, cg * kh * kw)
    xg = xd.reshape(g, c_in // g, m)
    cols = np.matmul(wg.transpose(0, 2, 1), xg).reshape(c_out, kh, kw, h, w)
    out = _col2im(cols, (c_out, ho, wo), spec)
    if not out.flags.c_contiguous:
        out = np.ascontiguousarray(out)
    parents = [x, weight]
    if bias is not None:
        out = out + bias.data[:, None, None]
        parents.append(bias)

    def backward(grad):
        gcols = _im2col(grad, spec, (h, w)).reshape(g, cg * kh * kw, m)
        gx = np.matmul(wg, gcols).reshape(xd.shape) if x.requires_grad else None
        gw = np.matmul(xg, gcols.transpose(0, 2, 1)).reshape(wd.shape) if weight.requires_grad else None
        if bias is None:
            return gx, gw
        return gx, gw, grad.sum(axis=(1, 2))

    return Tensor._result(out, parents, backward)


def pool2d(x: Tensor, kind: str = "max", kernel=2, stride=None) -> Tensor:
    """Windowed mean or max without padding.

    Max pooling routes the gradient of each window to its first maximal element
    in row-major window order.
    """
    xd = x.data
    kh, kw = _pair(kernel)
    sh, sw = _pair(stride if stride is not None else kernel)
    c, h, w = xd.shape
    if kh > h or kw > w:
        raise ValueError(f"pooling kernel {(kh, kw)} larger than input {(h, w)}")
    spec = ConvSpec.make((kh, kw), (sh, sw))
    ho, wo = spec.output_size(h, w)
    cols = _im2col(xd, spec, (ho, wo)).reshape(c, kh * kw, ho, wo)
    if kind == "avg":
        out = cols.mean(axis=1)

        def backward(grad):
            gcols = np.broadcast_to((grad / (kh * kw))[:, None, None], (c, kh, kw, ho, wo))
            return (_col2im(np.ascontiguousarray(gcols), xd.shape, spec),)

    elif kind == "max":
        arg = cols.argmax(axis=1)
        out = np.take_along_axis(cols, arg[:, None], axis=1)[:, 0]

        def backward(grad):
            gcols = np.zeros((c, kh * kw, ho, wo), dtype=grad.dtype)
            np.put_along_axis(gcols, arg[:, None], grad[:, None], axis=1)
            return (_col2im(gcols.reshape(c, kh, kw, ho, wo), xd.shape, spec),)

    else:
        raise ValueError(f"unknown pooling kind {kind!r}")
    return Tensor._result(np.ascontiguousarray(out), (x,), backward)


def upsample_nearest(x: Tensor, factor: int = 2) -> Tensor:
    xd = x.data
    c, h, w = xd.shape
    out = np.repeat(np.repeat(xd, factor, axis=1), factor, axis=2)

    def backward(grad):
        return (grad.reshape(c, h, factor, w, factor).sum(axis=(2, 4)),)

    return Tensor._result(out, (x,), backward)


def pad(x: Tensor, widths: list[tuple[int, int]]) -> Tensor:
    """Zero-pad; ``widths`` has one ``(before, after)`` pair per axis."""
    widths = [tuple(w) for w in widths]
    slices = tuple(slice(b, b + n) for (b, _), n in zip(widths, x.shape))
    return Tensor._result(np.pad(x.data, widths), (x,), lambda g: (g[slices],))


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Affine map over the trailing axis: ``x @ weight + bias``; weight is (d_in, d_out)."""
    xd, wd = x.data, weight.data
    if xd.shape[-1] != wd.shape[0]:
        raise ValueError(f"trailing dimension {xd.shape[-1]} does not match weight rows {wd.shape[0]}")
    lead = xd.shape[:-1]
    x2 = xd.reshape(-1, wd.shape[0])
    out = x2 @ wd
    parents = [x, weight]
    if bias is not None:
        out += bias.data
        parents.append(bias)

    def backward(grad):
        g2 = grad.reshape(-1, wd.shape[1])
        gx = (g2 @ wd.T).reshape(xd.shape) if x.requires_grad else None
        gw = x2.T @ g2 if weight.requires_grad else None
        if bias is None:
            return gx, gw
        return gx, gw, g2.sum(axis=0)

    return Tensor._result(out.reshape(*lead, wd.shape[1]), parents, backward)


def silu(x: Tensor) -> Tensor:
    xd = x.data
    s = expit(xd)
    return Tensor._result(xd * s, (x,), lambda g: (g * s * (1 + xd * (1 - s)),))


def relu(x: Tensor) -> Tensor:
    return x.relu()


def normalize(x: Tensor, scale: Tensor | None = None, shift: Tensor | None = None, eps: float = LAYER_NORM_EPS) -> Tensor:
    """Layer normalization over the trailing axis with optional affine scale/shift."""
    xd = x.data
    mu = xd.mean(axis=-1, keepdims=True)
    xc = xd - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat
    parents = [x]
    if scale is not None:
        out = out * scale.data
        parents.append(scale)
    if shift is not None:
        out = out + shift.data
        parents.append(shift)
    d = xd.shape[-1]

    def backward(grad):
        gxhat = grad * scale.data if scale is not None else grad
        gx = inv * (gxhat - gxhat.mean(axis=-1, keepdims=True) - xhat * (gxhat * xhat).mean(axis=-1, keepdims=True))
        grads = [gx]
        if scale is not None:
            grads.append((grad * xhat).reshape(-1, d).sum(axis=0))
        if shift is not None:
            grads.append(grad.reshape(-1, d).sum(axis=0))
        return tuple(grads)

    return Tensor._result(out, parents, backward)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    xd = x.data
    shifted = xd - xd.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse
    soft = np.exp(out)
    return Tensor._result(out, (x,), lambda g: (g - soft * g.sum(axis=axis, keepdims=True),))


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    return log_softmax(x, axis).exp()


def log_sigmoid(x: Tensor) -> Tensor:
    xd = x.data
    return Tensor._result(-np.logaddexp(0, -xd), (x,), lambda g: (g * expit(-xd),))
