"""Parameter containers and the handful of layers the model is built from."""

from __future__ import annotations

import math
from typing import Iterator

import numpy as np

from . import ops
from .tensor import DiffTensor


def parameter(values, name: str | None = None) -> DiffTensor:
    return DiffTensor(np.array(values, dtype=np.float64), requires_grad=True, name=name)


def kaiming(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    """He-normal init, std = sqrt(2 / fan_in)."""
    return rng.standard_normal(shape) * math.sqrt(2.0 / fan_in)


class Module:
    """Tree of parameters discovered from instance attributes in definition order."""

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, DiffTensor]]:
        for key, value in vars(self).items():
            path = f"{prefix}{key}"
            if isinstance(value, DiffTensor):
                if value.requires_grad:
                    value.name = path
                    yield path, value
            elif isinstance(value, Module):
                yield from value.named_parameters(path + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{path}.{i}.")

    def parameters(self) -> list[DiffTensor]:
        return [p for _, p in self.named_parameters()]

    def num_parameters(self) -> int:
        return int(sum(p.size for p in self.parameters()))

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.values.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        missing = sorted(set(own) - set(state))
        if missing:
            raise KeyError(f"state is missing parameters: {missing[:5]}")
        for name, p in own.items():
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != p.shape:
                raise ValueError(f"{name}: stored shape {arr.shape} != {p.shape}")
            p.values = arr.copy()

    def zero_parameters(self) -> None:
        for p in self.parameters():
            p.values = np.zeros_like(p.values)

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError


class Linear(Module):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator):
        self.n_in, self.n_out = n_in, n_out
        self.weight = parameter(kaiming(rng, (n_in, n_out), n_in))
        self.bias = parameter(np.zeros(n_out))

    def forward(self, x: DiffTensor) -> DiffTensor:
        return ops.add(ops.matmul(x, self.weight), self.bias)


class MLP(Module):
    """Linear -> GELU -> Linear."""

    def __init__(self, n_in: int, n_hidden: int, n_out: int, rng: np.random.Generator):
        self.fc1 = Linear(n_in, n_hidden, rng)
        self.fc2 = Linear(n_hidden, n_out, rng)

    def forward(self, x: DiffTensor) -> DiffTensor:
        return self.fc2(ops.gelu(self.fc1(x)))


class Conv2d(Module):
    def __init__(self, c_in: int, c_out: int, rng: np.random.Generator, kernel: int = 3, stride: int = 1):
        self.stride = stride
        self.padding = kernel // 2
        self.weight = parameter(kaiming(rng, (c_out, c_in, kernel, kernel), c_in * kernel * kernel))
        self.bias = parameter(np.zeros(c_out))

    def forward(self, x: DiffTensor) -> DiffTensor:
        return ops.conv2d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)


class ConvTranspose2d(Module):
    def __init__(self, c_in: int, c_out: int, rng: np.random.Generator, kernel: int = 2, stride: int = 2):
        self.stride = stride
        self.weight = parameter(kaiming(rng, (c_in, c_out, kernel, kernel), c_in))
        self.bias = parameter(np.zeros(c_out))

    def forward(self, x: DiffTensor) -> DiffTensor:
        return ops.conv_transpose2d(x, self.weight, self.bias, stride=self.stride)
