"""Parameter containers built on the autograd engine."""

from __future__ import annotations

import math
from typing import Iterator

import numpy as np

from . import autograd as ag
from .autograd import BNState, Tensor


class Parameter(Tensor):
    """A leaf tensor the optimizer updates."""

    __slots__ = ()

    def __init__(self, data):
        super().__init__(np.array(data, dtype=ag.DTYPE), requires_grad=True)


class Module:
    """Minimal torch-style module: attribute-ordered parameter discovery."""

    training: bool = True

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):  # pragma: no cover - abstract
        raise NotImplementedError

    def children(self) -> Iterator[tuple[str, Module]]:
        for name, value in vars(self).items():
            if isinstance(value, Module):
                yield name, value
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield f"{name}.{i}", item

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for name, value in vars(self).items():
            if isinstance(value, Parameter):
                yield prefix + name, value
        for name, child in self.children():
            yield from child.named_parameters(f"{prefix}{name}.")

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def buffers(self) -> dict[str, np.ndarray]:
        """Non-learnable state (e.g. running statistics); override when present."""
        return {}

    def load_buffers(self, values: dict[str, np.ndarray]) -> None:
        if values:
            raise KeyError(f"unexpected buffers {sorted(values)}")

    def named_buffers(self, prefix: str = "") -> Iterator[tuple[str, np.ndarray]]:
        for name, value in self.buffers().items():
            yield prefix + name, value
        for name, child in self.children():
            yield from child.named_buffers(f"{prefix}{name}.")

    def train(self, mode: bool = True) -> Module:
        self.training = mode
        for _, child in self.children():
            child.train(mode)
        return self

    def eval(self) -> Module:
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        state = {name: p.data.copy() for name, p in self.named_parameters()}
        for name, value in self.named_buffers():
            state["buffer:" + name] = np.array(value, dtype=ag.DTYPE, copy=True)
        return state

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = dict(self.named_parameters())
        missing = [k for k in params if k not in state]
        if missing:
            raise KeyError(f"state is missing parameters {missing}")
        for name, p in params.items():
            value = np.asarray(state[name], dtype=ag.DTYPE)
            if value.shape != p.shape:
                raise ValueError(f"shape mismatch for {name}: {value.shape} vs {p.shape}")
            p.data[...] = value
        buffers = {k[len("buffer:"):]: v for k, v in state.items() if k.startswith("buffer:")}
        self._load_named_buffers(buffers, "")

    def _load_named_buffers(self, values: dict[str, np.ndarray], prefix: str) -> None:
        own = {k[len(prefix):]: v for k, v in values.items()
               if k.startswith(prefix) and "." not in k[len(prefix):]}
        if own or self.buffers():
            self.load_buffers(own)
        for name, child in self.children():
            child._load_named_buffers(values, f"{prefix}{name}.")

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())


class Sequential(Module):
    def __init__(self, *layers: Module):
        self.layers = list(layers)

    def forward(self, x):
        for layer in self.layers:
            x = layer(x)
        return x


class Linear(Module):
    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator, bias: bool = True):
        bound = 1.0 / math.sqrt(in_dim)
        self.weight = Parameter(rng.uniform(-bound, bound, size=(in_dim, out_dim)))
        self.bias = Parameter(rng.uniform(-bound, bound, size=out_dim)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        out = ag.matmul(x, self.weight)
        return out + self.bias if self.bias is not None else out


class SiLU(Module):
    def forward(self, x):
        return ag.silu(x)


class GELU(Module):
    def forward(self, x):
        return ag.gelu(x)


class Dropout(Module):
    def __init__(self, p: float, rng: np.random.Generator | None = None):
        self.p = p
        self.rng = rng

    def forward(self, x):
        return ag.dropout(x, self.p, self.training, self.rng)


class Embedding(Module):
    def __init__(self, vocab: int, dim: int, rng: np.random.Generator, column: str | None = None):
        self.weight = Parameter(rng.normal(0.0, 1.0, size=(vocab, dim)))
        self.column = column

    def forward(self, ids) -> Tensor:
        return ag.embedding_lookup(self.weight, ids, self.column)


class BatchNorm(Module):
    """Batch normalization over the feature axis of ``B x n`` inputs."""

    def __init__(self, n: int, eps: float = 1e-5, momentum: float = 0.1):
        self.state = BNState.create(n, eps, momentum)
        self.weight = Parameter(self.state.weight.data)
        self.bias = Parameter(self.state.bias.data)
        self.state.weight, self.state.bias = self.weight, self.bias

    def forward(self, x: Tensor) -> Tensor:
        return ag.batch_norm(x, self.state, "train" if self.training else "eval")

    def buffers(self):
        return {"running_mean": self.state.running_mean, "running_var": self.state.running_var}

    def load_buffers(self, values):
        self.state.running_mean = np.array(values["running_mean"], dtype=ag.DTYPE)
        self.state.running_var = np.array(values["running_var"], dtype=ag.DTYPE)


class LayerNorm(Module):
    def __init__(self, n: int, eps: float = 1e-5):
        self.weight = Parameter(np.ones(n))
        self.bias = Parameter(np.zeros(n))
        self.eps = eps

    def forward(self, x: Tensor) -> Tensor:
        return ag.layer_norm(x, self.weight, self.bias, self.eps)


def clip_grad_norm(params: list[Parameter], max_norm: float) -> float:
    """Scale gradients in place so their global L2 norm is at most ``max_norm``."""
    total = math.sqrt(sum(float((p.grad * p.grad).sum()) for p in params if p.grad is not None))
    if max_norm > 0 and total > max_norm:
        factor = max_norm / (total + 1e-12)
        for p in params:
            if p.grad is not None:
                p.grad *= factor
    return total
