"""Minimal module system: parameters with group tags, buffers, train/eval."""

from __future__ import annotations

from collections import OrderedDict
from typing import Iterator

import numpy as np

from . import ops
from .tensor import Tensor

GROUPS = ("conv", "kan", "man_fusion", "pagf", "head")


class ParameterStore:
    """Ordered name -> Tensor map where every entry carries a group tag."""

    def __init__(self):
        self._tensors: OrderedDict[str, Tensor] = OrderedDict()
        self._groups: dict[str, str] = {}

    def add(self, name: str, tensor: Tensor, group: str) -> None:
        if name in self._tensors:
            raise KeyError(f"parameter {name!r} registered twice")
        if group not in GROUPS:
            raise ValueError(f"unknown parameter group {group!r}")
        self._tensors[name] = tensor
        self._groups[name] = group

    def __len__(self) -> int:
        return len(self._tensors)

    def __iter__(self) -> Iterator[str]:
        return iter(self._tensors)

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def items(self):
        return self._tensors.items()

    def group_of(self, name: str) -> str:
        return self._groups[name]

    def zero_grad(self) -> None:
        for t in self._tensors.values():
            t.grad = None


def count_parameters(store: ParameterStore) -> int:
    return sum(t.size for _, t in store.items())


def list_groups(store: ParameterStore) -> dict[str, int]:
    counts: dict[str, int] = {}
    for name, t in store.items():
        g = store.group_of(name)
        counts[g] = counts.get(g, 0) + t.size
    return counts


class Module:
    def __init__(self):
        self._params: OrderedDict[str, tuple[Tensor, str]] = OrderedDict()
        self._buffers: OrderedDict[str, np.ndarray] = OrderedDict()
        self._children: OrderedDict[str, Module] = OrderedDict()
        self.training = True

    def __setattr__(self, name, value):
        if isinstance(value, Module) and "_children" in self.__dict__:
            self._children[name] = value
        object.__setattr__(self, name, value)

    def param(self, name: str, data: np.ndarray, group: str) -> Tensor:
        t = Tensor(np.array(data, dtype=np.float64), requires_grad=True)
        self._params[name] = (t, group)
        return t

    def buffer(self, name: str, data: np.ndarray) -> np.ndarray:
        arr = np.array(data, dtype=np.float64)
        self._buffers[name] = arr
        return arr

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor, str]]:
        for name, (t, group) in self._params.items():
            yield prefix + name, t, group
        for cname, child in self._children.items():
            yield from child.named_parameters(f"{prefix}{cname}.")

    def named_buffers(self, prefix: str = "") -> Iterator[tuple[str, np.ndarray]]:
        for name, arr in self._buffers.items():
            yield prefix + name, arr
        for cname, child in self._children.items():
            yield from child.named_buffers(f"{prefix}{cname}.")

    def parameter_store(self) -> ParameterStore:
        store = ParameterStore()
        for name, t, group in self.named_parameters():
            store.add(name, t, group)
        return store

    def state_dict(self) -> OrderedDict[str, np.ndarray]:
        """Parameters and buffers by name (references, not copies)."""
        state: OrderedDict[str, np.ndarray] = OrderedDict()
        for name, t, _ in self.named_parameters():
            state[name] = t.data
        for name, arr in self.named_buffers():
            state[name] = arr
        return state

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = self.state_dict()
        missing = [k for k in own if k not in state]
        unexpected = [k for k in state if k not in own]
        bad_shape = [k for k in own if k in state and np.shape(state[k]) != own[k].shape]
        if missing or unexpected or bad_shape:
            parts = []
            if missing:
                parts.append("missing: " + ", ".join(missing))
            if unexpected:
                parts.append("unexpected: " + ", ".join(unexpected))
            if bad_shape:
                parts.append("shape mismatch: " + ", ".join(bad_shape))
            raise IncompatibleStateError("; ".join(parts))
        for k, arr in own.items():
            arr[...] = state[k]

    def train(self, mode: bool = True) -> Module:
        self.training = mode
        for child in self._children.values():
            child.train(mode)
        return self

    def eval(self) -> Module:
        return self.train(False)

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


class IncompatibleStateError(ValueError):
    """Checkpoint tensors do not match the model built from the config."""


class Conv2d(Module):
    def __init__(self, cin, cout, k, rng, stride=1, pad=None, bias=True, group="conv"):
        super().__init__()
        self.stride = stride
        self.pad = (k - 1) // 2 if pad is None else pad
        std = np.sqrt(2.0 / (cin * k * k))
        self.weight = self.param("weight", rng.normal(0.0, std, (cout, cin, k, k)), group)
        self.bias = self.param("bias", np.zeros(cout), group) if bias else None

    def forward(self, x):
        return ops.conv2d(x, self.weight, self.bias, stride=self.stride, pad=self.pad)


class DepthwiseConv2d(Module):
    def __init__(self, channels, k, rng, group="conv"):
        super().__init__()
        self.pad = (k - 1) // 2
        self.weight = self.param("weight", rng.normal(0.0, np.sqrt(2.0 / (k * k)), (channels, 1, k, k)), group)

    def forward(self, x):
        return ops.depthwise_conv2d(x, self.weight, stride=1, pad=self.pad)


class BatchNorm2d(Module):
    def __init__(self, channels, group="conv", momentum=0.1, eps=1e-5):
        super().__init__()
        self.momentum = momentum
        self.eps = eps
        self.gamma = self.param("gamma", np.ones(channels), group)
        self.beta = self.param("beta", np.zeros(channels), group)
        self.running_mean = self.buffer("running_mean", np.zeros(channels))
        self.running_var = self.buffer("running_var", np.ones(channels))

    def forward(self, x):
        return ops.batch_norm2d(
            x, self.gamma, self.beta, self.running_mean, self.running_var,
            training=self.training, momentum=self.momentum, eps=self.eps,
        )


class LayerNorm(Module):
    def __init__(self, dim, group="conv", eps=1e-5):
        super().__init__()
        self.eps = eps
        self.gamma = self.param("gamma", np.ones(dim), group)
        self.beta = self.param("beta", np.zeros(dim), group)

    def forward(self, x):
        return ops.layer_norm(x, self.gamma, self.beta, self.eps)


class Linear(Module):
    def __init__(self, din, dout, rng, group="conv"):
        super().__init__()
        bound = 1.0 / np.sqrt(din)
        self.weight = self.param("weight", rng.uniform(-bound, bound, (din, dout)), group)
        self.bias = self.param("bias", np.zeros(dout), group)

    def forward(self, x):
        return x @ self.weight + self.bias
