"""Schemas, CSV ingestion, cross-validation folds, noise injection and preprocessing.

Schema files are JSON::

    {
      "name": "CR",
      "task": "binary",                 # binary | multiclass | regression
      "positive_label": "bad",          # binary only
      "classes": ["a", "b", ...],       # multiclass, optional (else sorted labels)
      "columns": [
        {"name": "duration", "kind": "numerical"},
        {"name": "purpose", "kind": "categorical"},
        {"name": "class", "kind": "target"}
      ]
    }

Every routine that learns something from rows (encoders, medians,
standardizers, noise reference pools) goes through :data:`AUDIT`, which
refuses any dataset not tagged as a training split.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .embedding import CategoricalEncoder, fit_encoder
from .errors import DataError, LabelError, LeakageError, SchemaError

log = logging.getLogger(__name__)

KINDS = ("categorical", "numerical", "target")
TASKS = ("binary", "multiclass", "regression")
MISSING_TOKENS = {"", "na", "n/a", "nan", "null", "none", "?"}


@dataclass(frozen=True)
class Column:
    name: str
    kind: str


@dataclass
class TableSchema:
    name: str
    task: str
    columns: list[Column]
    positive_label: str | None = None
    classes: list[str] | None = None

    def __post_init__(self):
        if self.task not in TASKS:
            raise SchemaError(f"unknown task {self.task!r}; expected one of {TASKS}")
        for c in self.columns:
            if c.kind not in KINDS:
                raise SchemaError(f"column {c.name!r} has unknown kind {c.kind!r}")
        targets = [c for c in self.columns if c.kind == "target"]
        if len(targets) != 1:
            raise SchemaError(f"schema needs exactly one target column, found {len(targets)}")
        if not self.categorical and not self.numerical:
            raise SchemaError("schema has no feature columns")
        if self.task == "binary" and self.positive_label is None:
            raise SchemaError("binary schema needs a positive_label")

    @property
    def categorical(self) -> list[str]:
        return [c.name for c in self.columns if c.kind == "categorical"]

    @property
    def numerical(self) -> list[str]:
        return [c.name for c in self.columns if c.kind == "numerical"]

    @property
    def target(self) -> str:
        return next(c.name for c in self.columns if c.kind == "target")

    def to_dict(self) -> dict:
        d = {"name": self.name, "task": self.task,
             "columns": [{"name": c.name, "kind": c.kind} for c in self.columns]}
        if self.positive_label is not None:
            d["positive_label"] = self.positive_label
        if self.classes is not None:
            d["classes"] = list(self.classes)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> TableSchema:
        try:
            cols = [Column(str(c["name"]), str(c["kind"])) for c in d["columns"]]
            return cls(str(d["name"]), str(d["task"]), cols,
                       None if d.get("positive_label") is None else str(d["positive_label"]),
                       None if d.get("classes") is None else [str(c) for c in d["classes"]])
        except KeyError as e:
            raise SchemaError(f"schema is missing field {e.args[0]!r}") from None

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def load_schema(path) -> TableSchema:
    path = Path(path)
    try:
        return TableSchema.from_dict(json.loads(path.read_text(encoding="utf-8")))
    except OSError as e:
        raise SchemaError(f"cannot read schema {path}: {e}") from None
    except json.JSONDecodeError as e:
        raise SchemaError(f"{path}: invalid JSON ({e})") from None


@dataclass
class Dataset:
    """Raw typed columns. ``cat`` holds strings, ``num`` floats with NaN for missing."""

    schema: TableSchema
    cat: np.ndarray
    num: np.ndarray
    y: np.ndarray
    row_ids: np.ndarray
    role: str = "all"
    classes: list[str] | None = None

    def __post_init__(self):
        n = len(self.y)
        if not (len(self.cat) == len(self.num) == len(self.row_ids) == n):
            raise DataError("row counts disagree across dataset arrays")

    def __len__(self) -> int:
        return len(self.y)

    @property
    def n_classes(self) -> int:
        if self.schema.task == "binary":
            return 2
        if self.schema.task == "multiclass":
            return len(self.classes or [])
        return 0

    def subset(self, idx, role: str) -> Dataset:
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.schema, self.cat[idx], self.num[idx], self.y[idx],
                       self.row_ids[idx], role, self.classes)

    def replace(self, cat=None, num=None) -> Dataset:
        return Dataset(self.schema, self.cat if cat is None else cat,
                       self.num if num is None else num, self.y, self.row_ids, self.role, self.classes)


def _parse_float(text: str) -> float:
    if text.strip().lower() in MISSING_TOKENS:
        return math.nan
    try:
        return float(text)
    except ValueError:
        return math.nan


def load_csv(path, schema: TableSchema) -> Dataset:
    """Read an RFC-4180 UTF-8 CSV with a header row into a :class:`Dataset`."""
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            rows = [r for r in reader if r]
    except OSError as e:
        raise DataError(f"cannot read {path}: {e}") from None
    if header is None:
        raise DataError(f"{path}: file is empty")
    header = [h.strip() for h in header]
    pos = {h: i for i, h in enumerate(header)}
    for c in schema.columns:
        if c.name not in pos:
            raise SchemaError(f"{path}: column {c.name!r} missing from header")
    if not rows:
        raise DataError(f"{path}: dataset is empty (no data rows)")
    width = len(header)
    for lineno, r in enumerate(rows, start=2):
        if len(r) != width:
            raise DataError(f"{path}:{lineno}: expected {width} fields, got {len(r)}")

    cat_idx = [pos[c] for c in schema.categorical]
    num_idx = [pos[c] for c in schema.numerical]
    cat = np.array([[r[i].strip() for i in cat_idx] for r in rows], dtype=object).reshape(len(rows), len(cat_idx))
    num = np.array([[_parse_float(r[i]) for i in num_idx] for r in rows],
                   dtype=np.float64).reshape(len(rows), len(num_idx))
    raw_y = [r[pos[schema.target]].strip() for r in rows]
    y, classes = encode_targets(raw_y, schema)
    return Dataset(schema, cat, num, y, np.arange(len(rows)), "all", classes)


def encode_targets(raw: list[str], schema: TableSchema) -> tuple[np.ndarray, list[str] | None]:
    if schema.task == "binary":
        labels = sorted(set(raw))
        if len(labels) > 2:
            raise LabelError(f"binary target has {len(labels)} distinct labels: {labels[:5]}")
        if schema.positive_label not in labels:
            warnings.warn(f"positive label {schema.positive_label!r} never occurs in the target")
        return np.array([1 if v == schema.positive_label else 0 for v in raw], dtype=np.int64), \
            [l for l in labels if l != schema.positive_label] + [schema.positive_label]
    if schema.task == "multiclass":
        classes = list(schema.classes) if schema.classes else sorted(set(raw))
        lookup = {c: i for i, c in enumerate(classes)}
        bad = [v for v in raw if v not in lookup]
        if bad:
            raise LabelError(f"target label {bad[0]!r} not among declared classes")
        return np.array([lookup[v] for v in raw], dtype=np.int64), classes
    y = np.array([_parse_float(v) for v in raw], dtype=np.float64)
    if np.isnan(y).any():
        raise DataError(f"regression target has {int(np.isnan(y).sum())} unparseable values")
    return y, None


# ---------------------------------------------------------------------------
# cross-validation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FoldSplit:
    fold: int
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    seed: int


def make_folds(n_rows: int, seed: int, stratify_targets=None, k: int = 5) -> list[FoldSplit]:
    """Rotate ``k`` equal chunks: fold i tests on chunk i, validates on chunk i+1.

    With ``k = 5`` this yields the 60/20/20 train/val/test proportions and
    the five test sets partition the rows. Stratification deals rows to
    chunks round-robin within each class.
    """
    if k < 3:
        raise ValueError("need at least 3 folds for separate train/val/test chunks")
    if n_rows < 2 * k:
        raise DataError(f"need at least {2 * k} rows for {k} folds, got {n_rows}")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n_rows)
    if stratify_targets is not None:
        y = np.asarray(stratify_targets)
        if len(y) != n_rows:
            raise DataError("stratify_targets length does not match n_rows")
        labels, counts = np.unique(y, return_counts=True)
        if counts.min() < k:
            warnings.warn(f"class {labels[counts.argmin()]!r} has only {counts.min()} rows; "
                          f"falling back to unstratified folds")
        else:
            # Stable sort of the shuffled order by class keeps classes contiguous.
            perm = perm[np.argsort(y[perm], kind="stable")]
    chunk = np.empty(n_rows, dtype=np.int64)
    chunk[perm] = np.arange(n_rows) % k
    chunks = [np.sort(np.flatnonzero(chunk == c)) for c in range(k)]
    folds = []
    for i in range(k):
        v = (i + 1) % k
        train = np.sort(np.concatenate([chunks[c] for c in range(k) if c not in (i, v)]))
        folds.append(FoldSplit(i, train, chunks[v], chunks[i], seed))
    return folds


# ---------------------------------------------------------------------------
# leakage audit
# ---------------------------------------------------------------------------

@dataclass
class FitAudit:
    """Trips when a fit routine sees rows that are not training rows."""

    tripped: bool = False
    fit_calls: int = 0
    violations: list[str] = field(default_factory=list)
    _forbidden: set[int] = field(default_factory=set)

    def register_fold(self, dataset: Dataset, fold: FoldSplit) -> None:
        self._forbidden = set(dataset.row_ids[fold.val].tolist()) | set(dataset.row_ids[fold.test].tolist())

    def clear_fold(self) -> None:
        self._forbidden = set()

    def check(self, ds: Dataset, routine: str) -> None:
        self.fit_calls += 1
        leaked = ds.role != "train" or bool(self._forbidden.intersection(ds.row_ids.tolist()))
        if leaked:
            self.tripped = True
            msg = f"{routine} fitted on {ds.role!r} rows"
            self.violations.append(msg)
            raise LeakageError(msg)


AUDIT = FitAudit()


# ---------------------------------------------------------------------------
# noise injection
# ---------------------------------------------------------------------------

def inject_noise(rows: Dataset, kind: str, p: float, train_reference: Dataset,
                 seed: int) -> Dataset:
    """Replace each cell of ``kind`` with probability ``p`` by a training-fold value.

    Replacement values are drawn uniformly from the column's observed
    training values (missing values excluded for numerical columns).
    """
    if kind not in ("categorical", "numerical"):
        raise ValueError(f"noise kind must be categorical or numerical, got {kind!r}")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"noise fraction must lie in [0, 1], got {p}")
    AUDIT.check(train_reference, "inject_noise reference")
    block = rows.cat if kind == "categorical" else rows.num
    ref = train_reference.cat if kind == "categorical" else train_reference.num
    if block.shape[1] == 0:
        warnings.warn(f"no {kind} columns; noise injection is a no-op")
        return rows
    if p == 0.0:
        return rows
    rng = np.random.default_rng(seed)
    out = block.copy()
    hit = rng.random(block.shape) < p
    for j in range(block.shape[1]):
        pool = ref[:, j]
        if kind == "numerical":
            pool = pool[~np.isnan(pool.astype(np.float64))]
        if len(pool) == 0:
            continue
        rows_hit = np.flatnonzero(hit[:, j])
        out[rows_hit, j] = pool[rng.integers(0, len(pool), size=len(rows_hit))]
    return rows.replace(cat=out) if kind == "categorical" else rows.replace(num=out)


# ---------------------------------------------------------------------------
# preprocessing (fit on train only)
# ---------------------------------------------------------------------------

@dataclass
class Encoded:
    cat: np.ndarray      # B x m int64 ids
    num: np.ndarray      # B x n float64, imputed
    y: np.ndarray

    def __len__(self) -> int:
        return len(self.y)

    def take(self, idx) -> Encoded:
        return Encoded(self.cat[idx], self.num[idx], self.y[idx])


@dataclass
class Preprocessor:
    encoder: CategoricalEncoder
    medians: np.ndarray
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, train: Dataset) -> Preprocessor:
        AUDIT.check(train, "Preprocessor.fit")
        schema = train.schema
        encoder = fit_encoder(train.cat, schema.categorical)
        num = train.num
        if num.shape[1]:
            empty = np.all(np.isnan(num), axis=0)
            if empty.any():
                col = schema.numerical[int(np.flatnonzero(empty)[0])]
                raise SchemaError(f"numerical column {col!r} is entirely missing in the training fold")
            medians = np.nanmedian(num, axis=0)
            filled = np.where(np.isnan(num), medians, num)
            mean = filled.mean(axis=0)
            std = filled.std(axis=0)
            std = np.where(std > 0, std, 1.0)
        else:
            medians = mean = np.zeros(0)
            std = np.ones(0)
        return cls(encoder, medians, mean, std)

    def transform(self, ds: Dataset) -> Encoded:
        num = np.where(np.isnan(ds.num), self.medians, ds.num) if ds.num.shape[1] else ds.num
        return Encoded(self.encoder.transform(ds.cat), num.astype(np.float64), ds.y)

    def to_dict(self) -> dict:
        return {"encoder": self.encoder.to_dict(), "medians": self.medians.tolist(),
                "mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> Preprocessor:
        return cls(CategoricalEncoder.from_dict(d["encoder"]), np.array(d["medians"], dtype=float),
                   np.array(d["mean"], dtype=float), np.array(d["std"], dtype=float))
