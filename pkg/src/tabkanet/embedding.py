"""Row -> token matrix: categorical lookups and the KAN numerical embedder."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .errors import SchemaError, ShapeError
from .kan import KanStack, SplineGrid
from .nn import BatchNorm, Embedding, LayerNorm, Module

MISSING = "<missing>"


def _as_category(value) -> str:
    if value is None:
        return MISSING
    if isinstance(value, float) and np.isnan(value):
        return MISSING
    text = str(value)
    return MISSING if text == "" else text


@dataclass
class CategoricalEncoder:
    """Per-column label encoding; id ``len(vocab)`` is reserved for unseen values."""

    columns: list[str] = field(default_factory=list)
    vocabs: list[dict[str, int]] = field(default_factory=list)
    fitted: bool = False

    def fit(self, values: np.ndarray, columns: list[str]) -> CategoricalEncoder:
        values = np.asarray(values, dtype=object).reshape(len(values), len(columns))
        self.columns = list(columns)
        self.vocabs = []
        for j in range(len(columns)):
            seen = sorted({_as_category(v) for v in values[:, j]})
            self.vocabs.append({v: i for i, v in enumerate(seen)})
        self.fitted = True
        return self

    @property
    def cardinalities(self) -> list[int]:
        """Embedding-table sizes (vocabulary plus the unknown slot)."""
        return [len(v) + 1 for v in self.vocabs]

    def unknown_id(self, j: int) -> int:
        return len(self.vocabs[j])

    def transform(self, values: np.ndarray) -> np.ndarray:
        if not self.fitted:
            raise RuntimeError("CategoricalEncoder used before fit")
        m = len(self.columns)
        values = np.asarray(values, dtype=object).reshape(-1, m) if m else np.empty((len(values), 0))
        out = np.empty(values.shape, dtype=np.int64)
        for j, vocab in enumerate(self.vocabs):
            unk = len(vocab)
            out[:, j] = [vocab.get(_as_category(v), unk) for v in values[:, j]]
        return out

    def decode(self, ids: np.ndarray) -> np.ndarray:
        ids = np.asarray(ids, dtype=np.int64).reshape(-1, len(self.columns))
        out = np.empty(ids.shape, dtype=object)
        for j, vocab in enumerate(self.vocabs):
            inverse = {i: v for v, i in vocab.items()}
            out[:, j] = [inverse.get(int(i)) for i in ids[:, j]]
        return out

    def to_dict(self) -> dict:
        return {"columns": self.columns, "vocabs": self.vocabs}

    @classmethod
    def from_dict(cls, d: dict) -> CategoricalEncoder:
        return cls(list(d["columns"]), [dict(v) for v in d["vocabs"]], True)


def fit_encoder(train_rows: np.ndarray, columns: list[str], schema=None) -> CategoricalEncoder:
    """Fit label encoders on training rows only.

    ``train_rows`` is either a 2-d array already restricted to ``columns`` or
    a mapping from column name to values.
    """
    if isinstance(train_rows, dict):
        absent = [c for c in columns if c not in train_rows]
        if absent:
            raise SchemaError(f"categorical column {absent[0]!r} absent from rows")
        train_rows = np.column_stack([np.asarray(train_rows[c], dtype=object) for c in columns]) \
            if columns else np.empty((0, 0), dtype=object)
    return CategoricalEncoder().fit(train_rows, columns)


class CategoricalEmbedder(Module):
    """One independent ``V_i x d`` table per categorical column."""

    def __init__(self, cardinalities: list[int], dim: int, rng: np.random.Generator,
                 columns: list[str] | None = None):
        columns = columns or [f"cat{i}" for i in range(len(cardinalities))]
        self.dim = dim
        self.tables = [Embedding(v, dim, rng, column=c) for v, c in zip(cardinalities, columns)]

    def forward(self, ids: np.ndarray) -> Tensor:
        return embed_categorical(self.tables, ids)


def embed_categorical(tables: list[Embedding], ids: np.ndarray) -> Tensor:
    """``B x m`` ids -> ``B x m x d`` embeddings (column i uses table i)."""
    ids = np.asarray(ids, dtype=np.int64)
    if ids.ndim != 2 or ids.shape[1] != len(tables):
        raise ShapeError(f"expected ids of shape (B, {len(tables)}), got {ids.shape}")
    rows = ids.shape[0]
    pieces = [ag.reshape(t(ids[:, i]), (rows, 1, t.weight.shape[1])) for i, t in enumerate(tables)]
    return ag.concat(pieces, axis=1)


class NumericalEmbedder(Module):
    """BN (or LN for the ablation) -> KAN ``n -> H -> n*d`` -> reshape to ``n x d``."""

    def __init__(self, n: int, dim: int, rng: np.random.Generator, hidden: str | int = "locked",
                 norm: str = "batch", grid: SplineGrid | None = None,
                 bn_eps: float = 1e-5, bn_momentum: float = 0.1):
        if n < 1:
            raise ValueError("numerical embedder needs at least one feature")
        self.n = n
        self.dim = dim
        self.hidden = hidden_width(n, hidden)
        self.norm_kind = norm
        if norm == "batch":
            self.norm = BatchNorm(n, bn_eps, bn_momentum)
        elif norm == "layer":
            self.norm = LayerNorm(n, bn_eps)
        else:
            raise ValueError(f"unknown normalizer {norm!r}")
        self.kan = KanStack([n, self.hidden, n * dim], grid or SplineGrid(), rng)

    def forward(self, x: Tensor) -> Tensor:
        rows = x.shape[0]
        if x.ndim != 2 or x.shape[1] != self.n:
            raise ShapeError(f"expected numerical input (B, {self.n}), got {x.shape}")
        return ag.reshape(self.kan(self.norm(x)), (rows, self.n, self.dim))


def hidden_width(n: int, mode: str | int) -> int:
    """Hidden KAN width: 64 when locked, ``2n + 1`` when dynamic, or an explicit int."""
    if mode == "locked":
        return 64
    if mode == "dynamic":
        return 2 * n + 1
    if isinstance(mode, int) and mode >= 1:
        return mode
    raise ValueError(f"unknown KAN hidden setting {mode!r}")


def embed_numerical(emb: NumericalEmbedder, x, mode: str = "train") -> Tensor:
    emb.train(mode == "train")
    return emb(ag.as_tensor(x))


@dataclass
class TokenMatrix:
    values: Tensor
    names: list[str]

    @property
    def shape(self):
        return self.values.shape


def assemble_tokens(cat: Tensor | None, num: Tensor | None,
                    cat_names: list[str] | None = None,
                    num_names: list[str] | None = None) -> TokenMatrix:
    """Concatenate along the token axis, categorical tokens first."""
    parts = [t for t in (cat, num) if t is not None and t.shape[1] > 0]
    if not parts:
        raise ShapeError("no tokens: both categorical and numerical parts are empty")
    if len(parts) == 2:
        if cat.shape[0] != num.shape[0] or cat.shape[2] != num.shape[2]:
            raise ShapeError(f"token blocks disagree: categorical {cat.shape} vs numerical {num.shape}")
        values = ag.concat(parts, axis=1)
    else:
        values = parts[0]
    names = []
    if cat is not None and cat.shape[1] > 0:
        names += cat_names or [f"cat{i}" for i in range(cat.shape[1])]
    if num is not None and num.shape[1] > 0:
        names += num_names or [f"num{i}" for i in range(num.shape[1])]
    return TokenMatrix(values, names)
