"""Parameter containers and the handful of layers the network is built from."""

from __future__ import annotations

from typing import Iterator

import numpy as np

from . import functional as F
from .tensor import Tensor


class Parameter(Tensor):
    """A trainable leaf tensor."""

    __slots__ = ()

    def __init__(self, data, dtype=None):
        super().__init__(data, requires_grad=True, dtype=dtype)


class Module:
    """Base class: parameters are discovered by walking attributes in definition order."""

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def named_parameters(self, prefix: str = "", _seen: set | None = None) -> Iterator[tuple[str, Parameter]]:
        # shared submodules are reported once, under their first name
        seen = set() if _seen is None else _seen
        for key, value in vars(self).items():
            name = f"{prefix}{key}"
            items = list(enumerate(value)) if isinstance(value, (list, tuple)) else [(None, value)]
            for i, item in items:
                sub = name if i is None else f"{name}.{i}"
                if isinstance(item, Parameter):
                    if id(item) not in seen:
                        seen.add(id(item))
                        yield sub, item
                elif isinstance(item, Module):
                    if id(item) not in seen:
                        seen.add(id(item))
                        yield from item.named_parameters(sub + ".", seen)

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = dict(self.named_parameters())
        missing = sorted(set(params) - set(state))
        unexpected = sorted(set(state) - set(params))
        if missing or unexpected:
            raise KeyError(f"state mismatch: missing={missing[:5]} unexpected={unexpected[:5]}")
        for name, p in params.items():
            if state[name].shape != p.shape:
                raise ValueError(f"shape mismatch for {name}: {state[name].shape} vs {p.shape}")
            p.data = np.ascontiguousarray(state[name], dtype=p.dtype)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None


def _he_normal(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)


class Conv2d(Module):
    def __init__(self, c_in, c_out, kernel, stride=1, padding=None, groups=1, bias=True, rng=None):
        rng = rng if rng is not None else np.random.default_rng(0)
        kh, kw = F._pair(kernel)
        self.stride = stride
        self.padding = ((kh - 1) // 2, (kw - 1) // 2) if padding is None else padding
        self.groups = groups
        fan_in = (c_in // groups) * kh * kw
        self.weight = Parameter(_he_normal(rng, (c_out, c_in // groups, kh, kw), fan_in))
        self.bias = Parameter(np.zeros(c_out)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return F.conv2d(x, self.weight, self.bias, stride=self.stride, padding=self.padding, groups=self.groups)


class ConvTranspose2d(Module):
    def __init__(self, c_in, c_out, kernel=2, stride=2, bias=True, rng=None):
        rng = rng if rng is not None else np.random.default_rng(0)
        kh, kw = F._pair(kernel)
        self.stride = stride
        self.weight = Parameter(rng.normal(0.0, np.sqrt(1.0 / c_in), size=(c_in, c_out, kh, kw)))
        self.bias = Parameter(np.zeros(c_out)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return F.conv_transpose2d(x, self.weight, self.bias, stride=self.stride)


class Linear(Module):
    def __init__(self, d_in, d_out, bias=True, rng=None):
        rng = rng if rng is not None else np.random.default_rng(0)
        bound = 1.0 / np.sqrt(d_in)
        self.weight = Parameter(rng.uniform(-bound, bound, size=(d_in, d_out)))
        self.bias = Parameter(np.zeros(d_out)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return F.linear(x, self.weight, self.bias)


class LayerNorm(Module):
    def __init__(self, dim: int):
        self.scale = Parameter(np.ones(dim))
        self.shift = Parameter(np.zeros(dim))

    def forward(self, x: Tensor) -> Tensor:
        return F.normalize(x, self.scale, self.shift)
