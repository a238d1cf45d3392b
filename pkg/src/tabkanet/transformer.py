"""Post-norm multi-head self-attention encoder over column tokens (no positions)."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .errors import ShapeError
from .nn import Dropout, GELU, LayerNorm, Linear, Module


@dataclass(frozen=True)
class EncoderConfig:
    dim: int = 64
    heads: int = 8
    layers: int = 3
    ffn_hidden: int = 256
    dropout: float = 0.1

    def __post_init__(self):
        if self.dim % self.heads:
            raise ValueError(f"dim {self.dim} is not divisible by heads {self.heads}")

    @property
    def head_dim(self) -> int:
        return self.dim // self.heads


def attention(q: Tensor, k: Tensor, v: Tensor, return_weights: bool = False):
    """Scaled dot-product attention on ``B x h x T x dk`` tensors, unmasked."""
    dk = q.shape[-1]
    scores = ag.scale(ag.matmul(q, ag.swapaxes(k, -1, -2)), 1.0 / math.sqrt(dk))
    weights = ag.softmax(scores, axis=-1)
    out = ag.matmul(weights, v)
    return (out, weights) if return_weights else out


class MultiHeadAttention(Module):
    def __init__(self, cfg: EncoderConfig, rng: np.random.Generator):
        self.heads = cfg.heads
        self.head_dim = cfg.head_dim
        self.query = Linear(cfg.dim, cfg.dim, rng)
        self.key = Linear(cfg.dim, cfg.dim, rng)
        self.value = Linear(cfg.dim, cfg.dim, rng)
        self.out = Linear(cfg.dim, cfg.dim, rng)

    def _split(self, x: Tensor) -> Tensor:
        B, T, _ = x.shape
        return ag.transpose(ag.reshape(x, (B, T, self.heads, self.head_dim)), (0, 2, 1, 3))

    def forward(self, x: Tensor) -> Tensor:
        B, T, d = x.shape
        ctx = attention(self._split(self.query(x)), self._split(self.key(x)), self._split(self.value(x)))
        merged = ag.reshape(ag.transpose(ctx, (0, 2, 1, 3)), (B, T, d))
        return self.out(merged)


class EncoderLayer(Module):
    def __init__(self, cfg: EncoderConfig, rng: np.random.Generator):
        self.attn = MultiHeadAttention(cfg, rng)
        self.norm1 = LayerNorm(cfg.dim)
        self.ff1 = Linear(cfg.dim, cfg.ffn_hidden, rng)
        self.act = GELU()
        self.ff2 = Linear(cfg.ffn_hidden, cfg.dim, rng)
        self.norm2 = LayerNorm(cfg.dim)
        self.drop = Dropout(cfg.dropout, np.random.default_rng(rng.integers(2**63)))

    def forward(self, x: Tensor) -> Tensor:
        x = self.norm1(x + self.drop(self.attn(x)))
        return self.norm2(x + self.drop(self.ff2(self.act(self.ff1(x)))))


class Encoder(Module):
    def __init__(self, cfg: EncoderConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.layers = [EncoderLayer(cfg, rng) for _ in range(cfg.layers)]

    def forward(self, tokens) -> Tensor:
        x = getattr(tokens, "values", tokens)
        if x.shape[-1] != self.cfg.dim:
            raise ShapeError(f"token dim {x.shape[-1]} != encoder dim {self.cfg.dim}")
        for layer in self.layers:
            x = layer(x)
        return x


def encoder_forward(encoder: Encoder, tokens, mode: str = "eval") -> Tensor:
    encoder.train(mode == "train")
    return encoder(tokens)
