"""TabKANet and the comparison architectures behind one interface.

Architectures
-------------
``tabkanet``        categorical tables + BN/KAN numerical embedder -> encoder -> flatten -> head
``tabkanet-ln``     identical, LayerNorm replaces BatchNorm in the numerical embedder
``tabtransformer``  encoder over categorical tokens only; LayerNorm'd raw numerics join at the head
``mlp`` / ``kan``   label codes through per-column embeddings (dim 8) averaged into one vector,
                    concatenated with z-scored numerics, into an MLP or KAN

Checkpoint file layout (little-endian)::

    b"TKNCKPT1" | uint64 header_len | header (UTF-8 JSON) | float64 payload

The header lists every tensor as ``{"name", "shape", "offset", "count"}``
(offset/count in float64 elements) plus the model spec, schema hash and the
fitted preprocessor.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .embedding import CategoricalEmbedder, NumericalEmbedder, assemble_tokens
from .errors import ConfigError, LabelError, UnsupportedArchitectureError
from .kan import KanStack, SplineGrid
from .nn import LayerNorm, Linear, Module, SiLU, Sequential
from .transformer import Encoder, EncoderConfig

ARCHITECTURES = ("tabkanet", "tabkanet-ln", "mlp", "kan", "tabtransformer")
BASELINE_EMBED_DIM = 8


@dataclass
class ModelSpec:
    arch: str
    task: str
    cardinalities: list[int]
    n_numerical: int
    n_classes: int = 2
    cat_names: list[str] = field(default_factory=list)
    num_names: list[str] = field(default_factory=list)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    kan_hidden: str | int = "locked"
    grid: SplineGrid = field(default_factory=SplineGrid)
    head_hidden: list[int] | None = None
    mlp_hidden: list[int] = field(default_factory=lambda: [512, 256])
    kan_baseline_hidden: list[int] = field(default_factory=lambda: [64])
    schema_hash: str = ""

    def __post_init__(self):
        if self.arch not in ARCHITECTURES:
            raise ConfigError(f"unknown architecture {self.arch!r}; expected one of {ARCHITECTURES}")
        if self.task not in ("binary", "multiclass", "regression"):
            raise ConfigError(f"unknown task {self.task!r}")
        if self.task == "multiclass" and self.n_classes < 2:
            raise ConfigError("multiclass task needs n_classes >= 2")

    @property
    def m(self) -> int:
        return len(self.cardinalities)

    @property
    def out_dim(self) -> int:
        return self.n_classes if self.task == "multiclass" else 1

    @classmethod
    def for_data(cls, arch: str, schema, preprocessor, n_classes: int = 2, **kw) -> ModelSpec:
        return cls(arch=arch, task=schema.task,
                   cardinalities=preprocessor.encoder.cardinalities,
                   n_numerical=len(schema.numerical), n_classes=n_classes,
                   cat_names=list(schema.categorical), num_names=list(schema.numerical),
                   schema_hash=schema.fingerprint(), **kw)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["encoder"] = asdict(self.encoder)
        d["grid"] = asdict(self.grid)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> ModelSpec:
        d = dict(d)
        d["encoder"] = EncoderConfig(**d["encoder"])
        d["grid"] = SplineGrid(**d["grid"])
        return cls(**d)


def head_widths(in_dim: int) -> list[int]:
    """Default head: two SiLU layers of width max(in/2, 64) and max(in/8, 64)."""
    return [max(4 * in_dim // 8, 64), max(in_dim // 8, 64)]


class MLP(Module):
    def __init__(self, in_dim: int, hidden: list[int], out_dim: int, rng: np.random.Generator):
        layers: list[Module] = []
        widths = [in_dim, *hidden]
        for a, b in zip(widths, widths[1:]):
            layers += [Linear(a, b, rng), SiLU()]
        layers.append(Linear(widths[-1], out_dim, rng))
        self.net = Sequential(*layers)

    def forward(self, x):
        return self.net(x)


class TabularModel(Module):
    spec: ModelSpec

    def __init__(self, spec: ModelSpec):
        self.spec = spec
        self.input_mean = np.zeros(spec.n_numerical)
        self.input_std = np.ones(spec.n_numerical)

    def set_standardizer(self, mean, std) -> None:
        self.input_mean = np.asarray(mean, dtype=np.float64).copy()
        self.input_std = np.asarray(std, dtype=np.float64).copy()

    def buffers(self):
        return {"input_mean": self.input_mean, "input_std": self.input_std}

    def load_buffers(self, values):
        self.input_mean = np.array(values["input_mean"], dtype=np.float64)
        self.input_std = np.array(values["input_std"], dtype=np.float64)

    def forward(self, cat_ids: np.ndarray, num: np.ndarray) -> Tensor:  # pragma: no cover
        raise NotImplementedError


class TabKANet(TabularModel):
    def __init__(self, spec: ModelSpec, rng: np.random.Generator):
        super().__init__(spec)
        d = spec.encoder.dim
        self.cat_embed = CategoricalEmbedder(spec.cardinalities, d, rng, spec.cat_names) if spec.m else None
        norm = "layer" if spec.arch == "tabkanet-ln" else "batch"
        self.num_embed = (NumericalEmbedder(spec.n_numerical, d, rng, spec.kan_hidden, norm, spec.grid)
                          if spec.n_numerical else None)
        self.encoder = Encoder(spec.encoder, rng)
        tokens = spec.m + spec.n_numerical
        self.head_in = tokens * d
        self.head = MLP(self.head_in, spec.head_hidden or head_widths(self.head_in), spec.out_dim, rng)

    def forward(self, cat_ids, num):
        cat = self.cat_embed(cat_ids) if self.cat_embed is not None else None
        if self.num_embed is not None:
            nums = self.num_embed(num if isinstance(num, Tensor) else Tensor(num))
        else:
            nums = None
        tokens = assemble_tokens(cat, nums, self.spec.cat_names or None, self.spec.num_names or None)
        h = self.encoder(tokens)
        return self.head(ag.reshape(h, (h.shape[0], self.head_in)))


class TabTransformer(TabularModel):
    def __init__(self, spec: ModelSpec, rng: np.random.Generator):
        super().__init__(spec)
        if spec.m == 0:
            raise UnsupportedArchitectureError(
                "tabtransformer needs categorical columns; this schema is numerical-only")
        d = spec.encoder.dim
        self.cat_embed = CategoricalEmbedder(spec.cardinalities, d, rng, spec.cat_names)
        self.encoder = Encoder(spec.encoder, rng)
        self.num_norm = LayerNorm(spec.n_numerical) if spec.n_numerical else None
        self.head_in = spec.m * d + spec.n_numerical
        self.head = MLP(self.head_in, spec.head_hidden or head_widths(self.head_in), spec.out_dim, rng)

    def forward(self, cat_ids, num):
        h = self.encoder(self.cat_embed(cat_ids))
        flat = ag.reshape(h, (h.shape[0], self.spec.m * self.spec.encoder.dim))
        if self.num_norm is not None:
            flat = ag.concat([flat, self.num_norm(Tensor(num))], axis=1)
        return self.head(flat)


class FlatBaseline(TabularModel):
    """Shared input path of the MLP and KAN baselines."""

    def __init__(self, spec: ModelSpec, rng: np.random.Generator):
        super().__init__(spec)
        self.cat_embed = (CategoricalEmbedder(spec.cardinalities, BASELINE_EMBED_DIM, rng, spec.cat_names)
                          if spec.m else None)
        self.in_dim = (BASELINE_EMBED_DIM if spec.m else 0) + spec.n_numerical
        if spec.arch == "mlp":
            self.body = MLP(self.in_dim, spec.mlp_hidden, spec.out_dim, rng)
        else:
            self.body = KanStack([self.in_dim, *spec.kan_baseline_hidden, spec.out_dim], spec.grid, rng)

    def forward(self, cat_ids, num):
        parts = []
        if self.cat_embed is not None:
            parts.append(ag.mean(self.cat_embed(cat_ids), axis=1))
        if self.spec.n_numerical:
            parts.append(Tensor((num - self.input_mean) / self.input_std))
        x = parts[0] if len(parts) == 1 else ag.concat(parts, axis=1)
        return self.body(x)


def build(spec: ModelSpec, seed: int) -> TabularModel:
    """Deterministically initialize the architecture named by ``spec.arch``."""
    rng = np.random.default_rng(seed)
    if spec.arch in ("tabkanet", "tabkanet-ln"):
        return TabKANet(spec, rng)
    if spec.arch == "tabtransformer":
        return TabTransformer(spec, rng)
    return FlatBaseline(spec, rng)


def forward(model: TabularModel, batch, mode: str = "eval") -> Tensor:
    model.train(mode == "train")
    return model(batch.cat, batch.num)


def loss(task: str, output: Tensor, targets) -> Tensor:
    targets = np.asarray(targets)
    if task == "binary":
        if targets.size and not np.isin(targets, (0, 1)).all():
            raise LabelError("binary targets must be 0/1")
        return ag.binary_cross_entropy_with_logits(output, targets)
    if task == "multiclass":
        C = output.shape[1]
        if targets.size and (targets.min() < 0 or targets.max() >= C):
            raise LabelError(f"class label outside [0, {C})")
        return ag.cross_entropy_with_logits(output, targets)
    return ag.mse_loss(output, targets)


def predict(model: TabularModel, data, batch_size: int = 1024) -> np.ndarray:
    """Eval-mode raw outputs (logits or predictions) for an encoded dataset."""
    model.eval()
    outs = []
    with ag.no_grad():
        for start in range(0, len(data), batch_size):
            chunk = data.take(slice(start, start + batch_size))
            outs.append(model(chunk.cat, chunk.num).data)
    return np.concatenate(outs, axis=0) if outs else np.zeros((0, model.spec.out_dim))


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

MAGIC = b"TKNCKPT1"


def save_checkpoint(path, model: TabularModel, preprocessor=None, extra: dict | None = None) -> None:
    state = model.state_dict()
    manifest, offset = [], 0
    for name, arr in state.items():
        manifest.append({"name": name, "shape": list(arr.shape), "offset": offset, "count": int(arr.size)})
        offset += int(arr.size)
    header = {"format": 1, "byte_order": "little", "dtype": "float64",
              "schema_hash": model.spec.schema_hash, "model_spec": model.spec.to_dict(),
              "preprocessor": preprocessor.to_dict() if preprocessor is not None else None,
              "extra": extra or {}, "tensors": manifest}
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    payload = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in state.values())
    Path(path).write_bytes(MAGIC + struct.pack("<Q", len(blob)) + blob + payload)


def load_checkpoint(path, schema_hash: str | None = None):
    """Return ``(model, preprocessor_dict, header)``; rejects mismatched schema hashes."""
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise ConfigError(f"{path}: not a checkpoint file")
    (hlen,) = struct.unpack("<Q", raw[8:16])
    header = json.loads(raw[16:16 + hlen].decode("utf-8"))
    if schema_hash is not None and header["schema_hash"] != schema_hash:
        raise ConfigError(f"{path}: schema hash {header['schema_hash']} != expected {schema_hash}")
    data = np.frombuffer(raw[16 + hlen:], dtype="<f8")
    state = {t["name"]: data[t["offset"]:t["offset"] + t["count"]].reshape(t["shape"]).astype(np.float64)
             for t in header["tensors"]}
    model = build(ModelSpec.from_dict(header["model_spec"]), seed=0)
    model.load_state_dict(state)
    return model, header["preprocessor"], header
