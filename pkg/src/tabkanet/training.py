"""Optimizers and the fold-level training loop with validation-based selection."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import data as data_mod
from .data import Dataset, FoldSplit, Preprocessor
from .errors import ConfigError, DivergenceError
from .metrics import TASK_METRIC, higher_is_better, task_metric
from .model import ModelSpec, TabularModel, build, loss, predict
from .nn import BatchNorm, Parameter, clip_grad_norm

log = logging.getLogger(__name__)


@dataclass
class OptimizerState:
    kind: str
    lr: float
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 1e-4
    momentum: float = 0.0
    step: int = 0
    m: dict[int, np.ndarray] = field(default_factory=dict)
    v: dict[int, np.ndarray] = field(default_factory=dict)


def _check_finite(name: str, g: np.ndarray) -> None:
    if not np.all(np.isfinite(g)):
        raise DivergenceError(f"non-finite gradient in parameter {name!r}")


def adamw_step(state: OptimizerState, params: list[Parameter], grads: list[np.ndarray],
               names: list[str] | None = None) -> None:
    """AdamW with decoupled weight decay and bias-corrected moments (in place)."""
    names = names or [f"param{i}" for i in range(len(params))]
    for name, g in zip(names, grads):
        if g is not None:
            _check_finite(name, g)
    state.step += 1
    b1, b2 = state.betas
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for i, (p, g) in enumerate(zip(params, grads)):
        if g is None:
            continue
        m = state.m.get(i)
        if m is None:
            m = state.m[i] = np.zeros_like(p.data)
            state.v[i] = np.zeros_like(p.data)
        v = state.v[i]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        if state.weight_decay:
            p.data *= 1.0 - state.lr * state.weight_decay
        p.data -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


def sgd_step(state: OptimizerState, params: list[Parameter], grads: list[np.ndarray],
             names: list[str] | None = None) -> None:
    """Plain SGD, optionally with heavy-ball momentum."""
    names = names or [f"param{i}" for i in range(len(params))]
    for name, g in zip(names, grads):
        if g is not None:
            _check_finite(name, g)
    state.step += 1
    for i, (p, g) in enumerate(zip(params, grads)):
        if g is None:
            continue
        if state.momentum:
            buf = state.m.get(i)
            buf = state.m[i] = g.copy() if buf is None else state.momentum * buf + g
            g = buf
        p.data -= state.lr * g


def make_optimizer(kind: str, lr: float, weight_decay: float = 1e-4, momentum: float = 0.0) -> OptimizerState:
    if kind not in ("adamw", "sgd"):
        raise ConfigError(f"unknown optimizer {kind!r}")
    return OptimizerState(kind, lr, weight_decay=weight_decay if kind == "adamw" else 0.0,
                          momentum=momentum)


def optimizer_step(state: OptimizerState, model: TabularModel) -> None:
    named = list(model.named_parameters())
    names = [n for n, _ in named]
    params = [p for _, p in named]
    step = adamw_step if state.kind == "adamw" else sgd_step
    step(state, params, [p.grad for p in params], names)


@dataclass
class TrainConfig:
    batch_size: int = 128
    max_epochs: int = 200
    patience: int = 20
    seed: int = 0
    optimizer: str | None = None     # default: adamw for classification, sgd for regression
    lr: float | None = None          # default: 1e-3 (adamw) / 1e-4 (sgd)
    weight_decay: float = 1e-4
    momentum: float = 0.0
    clip_norm: float = 1.0
    eval_batch_size: int = 1024

    def resolved_optimizer(self, task: str) -> tuple[str, float]:
        kind = self.optimizer or ("sgd" if task == "regression" else "adamw")
        lr = self.lr if self.lr is not None else (1e-4 if kind == "sgd" else 1e-3)
        return kind, lr


def model_has_batch_norm(model: TabularModel) -> bool:
    stack = [model]
    while stack:
        mod = stack.pop()
        if isinstance(mod, BatchNorm):
            return True
        stack.extend(c for _, c in mod.children())
    return False


@dataclass
class TrainResult:
    model: TabularModel
    preprocessor: Preprocessor
    history: list[dict]
    best_epoch: int
    best_metric: float
    metric: str


def train(model_spec: ModelSpec | dict, dataset: Dataset, fold: FoldSplit, cfg: TrainConfig,
          model_kwargs: dict | None = None) -> TrainResult:
    """Train on ``fold.train``, select the epoch with the best ``fold.val`` metric.

    ``model_spec`` may be a full :class:`ModelSpec` or ``{"arch": ...}`` plus
    keyword overrides; the categorical cardinalities come from the encoder
    fitted on the training rows.
    """
    audit = data_mod.AUDIT  # looked up per call so tests can swap in a private audit
    audit.register_fold(dataset, fold)
    try:
        train_ds = dataset.subset(fold.train, "train")
        val_ds = dataset.subset(fold.val, "val")
        pre = Preprocessor.fit(train_ds)
    finally:
        audit.clear_fold()
    task = dataset.schema.task
    if isinstance(model_spec, dict):
        kw = dict(model_spec)
        arch = kw.pop("arch")
        kw.update(model_kwargs or {})
        spec = ModelSpec.for_data(arch, dataset.schema, pre, n_classes=max(dataset.n_classes, 2), **kw)
    else:
        spec = model_spec
    model = build(spec, cfg.seed)
    model.set_standardizer(pre.mean, pre.std)
    has_bn = model_has_batch_norm(model)
    if has_bn and cfg.batch_size < 2:
        raise ConfigError("batch size must be >= 2 when the model contains batch normalization")

    tr = pre.transform(train_ds)
    va = pre.transform(val_ds)
    kind, lr = cfg.resolved_optimizer(task)
    opt = make_optimizer(kind, lr, cfg.weight_decay, cfg.momentum)
    metric_name = TASK_METRIC[task]
    better = higher_is_better(metric_name)
    rng = np.random.default_rng(cfg.seed)
    params = model.parameters()

    history: list[dict] = []
    best_state, best_epoch, best_metric = None, -1, -math.inf if better else math.inf
    stale = 0
    for epoch in range(cfg.max_epochs):
        t0 = time.perf_counter()
        model.train()
        order = rng.permutation(len(tr))
        losses = []
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            if has_bn and len(idx) < 2:
                continue  # train-mode BN needs two rows
            batch = tr.take(idx)
            model.zero_grad()
            out = model(batch.cat, batch.num)
            objective = loss(task, out, batch.y)
            objective.backward()
            clip_grad_norm(params, cfg.clip_norm)
            optimizer_step(opt, model)
            losses.append(float(objective.data))
        train_loss = float(np.mean(losses)) if losses else math.nan
        if not math.isfinite(train_loss):
            raise DivergenceError(f"training loss is not finite at epoch {epoch}")
        val_out = predict(model, va, cfg.eval_batch_size)
        val_metric = task_metric(task, val_out, va.y, spec.n_classes)
        history.append({"epoch": epoch, "train_loss": train_loss, "val_metric": val_metric,
                        "metric": metric_name, "train_mode": "train", "val_mode": "eval",
                        "wall_time": time.perf_counter() - t0})
        log.debug("epoch %d loss %.5f val %s %.5f", epoch, train_loss, metric_name, val_metric)
        improved = val_metric > best_metric if better else val_metric < best_metric
        if improved or best_state is None:
            best_state, best_epoch, best_metric = model.state_dict(), epoch, val_metric
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    model.load_state_dict(best_state)
    model.eval()
    return TrainResult(model, pre, history, best_epoch, best_metric, metric_name)
