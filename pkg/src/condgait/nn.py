"""Minimal module system: parameter registration, mode flags, state dicts."""

from __future__ import annotations

from typing import Iterator, Optional

import numpy as np

from . import ops
from .tensor import Tensor

__all__ = ["Parameter", "Module", "ModuleList", "BatchNorm", "Identity",
           "Linear", "glorot", "uniform_init"]


class Parameter(Tensor):
    """A leaf tensor registered as trainable state of a Module."""

    def __init__(self, data):
        super().__init__(data, requires_grad=True)


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int, shape=None):
    """Glorot-uniform draw; shape defaults to (fan_in, fan_out)."""
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    if shape is None:
        shape = (fan_in, fan_out)
    return rng.uniform(-limit, limit, size=shape)


def uniform_init(rng: np.random.Generator, shape, scale: float):
    return rng.uniform(-scale, scale, size=shape)


class Module:
    """Composable network piece with named parameters and buffers.

    Attribute assignment registers Parameters, sub-Modules and (via
    register_buffer) persistent non-trainable arrays such as BN running
    statistics.
    """

    def __init__(self):
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_modules", {})
        object.__setattr__(self, "_buffers", {})
        object.__setattr__(self, "training", True)

    def __setattr__(self, name, value):
        if isinstance(value, Parameter):
            self._params[name] = value
        elif isinstance(value, Module):
            self._modules[name] = value
        object.__setattr__(self, name, value)

    def register_buffer(self, name: str, array: np.ndarray):
        self._buffers[name] = array
        object.__setattr__(self, name, array)

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for name, p in self._params.items():
            yield prefix + name, p
        for name, m in self._modules.items():
            yield from m.named_parameters(prefix + name + ".")

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix: str = "") -> Iterator[tuple[str, np.ndarray]]:
        for name, b in self._buffers.items():
            yield prefix + name, b
        for name, m in self._modules.items():
            yield from m.named_buffers(prefix + name + ".")

    def modules(self) -> Iterator["Module"]:
        yield self
        for m in self._modules.values():
            yield from m.modules()

    def train(self, flag: bool = True):
        for m in self.modules():
            object.__setattr__(m, "training", flag)
        return self

    def eval(self):
        return self.train(False)

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def param_count(self) -> int:
        return sum(p.size for p in self.parameters())

    def state_dict(self) -> dict:
        state = {name: p.data.copy() for name, p in self.named_parameters()}
        for name, b in self.named_buffers():
            state["buffer:" + name] = b.copy()
        return state

    def load_state_dict(self, state: dict):
        params = dict(self.named_parameters())
        buffers = dict(self.named_buffers())
        expected = set(params) | {"buffer:" + n for n in buffers}
        given = set(state)
        if expected != given:
            missing = sorted(expected - given)
            extra = sorted(given - expected)
            raise ValueError(
                f"state mismatch: missing {missing[:4]}, unexpected {extra[:4]}")
        for name, p in params.items():
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != p.data.shape:
                raise ValueError(
                    f"parameter {name}: shape {arr.shape} != {p.data.shape}")
            p.data = arr.copy()
        for name, b in buffers.items():
            arr = np.asarray(state["buffer:" + name], dtype=np.float64)
            if arr.shape != b.shape:
                raise ValueError(
                    f"buffer {name}: shape {arr.shape} != {b.shape}")
            b[...] = arr

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError


class ModuleList(Module):
    """Sequence of sub-modules registered under their indices."""

    def __init__(self, items=()):
        super().__init__()
        self._items = []
        for item in items:
            self.append(item)

    def append(self, module: Module):
        self._modules[str(len(self._items))] = module
        self._items.append(module)

    def __iter__(self):
        return iter(self._items)

    def __len__(self):
        return len(self._items)

    def __getitem__(self, idx):
        return self._items[idx]


class BatchNorm(Module):
    """Per-channel batch normalization over all non-channel axes.

    eps=1e-5, running-stat momentum=0.1. gamma/beta initial values are
    configurable so generated-filter branches can start near a chosen
    operating point.
    """

    def __init__(self, channels: int, eps: float = 1e-5, momentum: float = 0.1,
                 gamma_init: float = 1.0, beta_init: float = 0.0):
        super().__init__()
        self.channels = channels
        self.eps = eps
        self.momentum = momentum
        self.gamma = Parameter(np.full(channels, gamma_init, dtype=np.float64))
        self.beta = Parameter(np.full(channels, beta_init, dtype=np.float64))
        self.register_buffer("running_mean", np.zeros(channels))
        self.register_buffer("running_var", np.ones(channels))

    def forward(self, x: Tensor) -> Tensor:
        return ops.batch_norm(
            x, self.gamma, self.beta, self.running_mean, self.running_var,
            eps=self.eps, momentum=self.momentum, training=self.training)


class Identity(Module):
    def forward(self, x: Tensor) -> Tensor:
        return x


class Linear(Module):
    """Affine map over the last axis."""

    def __init__(self, rng: np.random.Generator, d_in: int, d_out: int,
                 bias: bool = True):
        super().__init__()
        self.weight = Parameter(glorot(rng, d_in, d_out))
        self.bias: Optional[Parameter] = Parameter(np.zeros(d_out)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return ops.fully_connected(x, self.weight, self.bias)
