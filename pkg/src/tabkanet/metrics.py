"""Evaluation metrics: rank AUC, macro F1, accuracy variants, RMSE."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import UndefinedMetricError


@dataclass(frozen=True)
class MetricReport:
    metric: str
    value: float
    fold: int
    n_samples: int


def average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks; tied values share the mean of the ranks they span."""
    values = np.asarray(values, dtype=np.float64)
    order = np.argsort(values, kind="mergesort")
    sorted_vals = values[order]
    # Boundaries of runs of equal values.
    starts = np.flatnonzero(np.r_[True, sorted_vals[1:] != sorted_vals[:-1]])
    ends = np.r_[starts[1:], len(values)]
    run_rank = (starts + 1 + ends) / 2.0
    ranks = np.empty(len(values))
    ranks[order] = np.repeat(run_rank, ends - starts)
    return ranks


def auc(scores, labels) -> float:
    """Mann-Whitney estimate of P(score+ > score-) + 0.5 P(tie)."""
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels).reshape(-1)
    if scores.shape != labels.shape:
        raise ValueError(f"{len(scores)} scores but {len(labels)} labels")
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUC is undefined when only one class is present")
    ranks = average_ranks(scores)
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def confusion_matrix(preds, labels, n_classes: int) -> np.ndarray:
    """Rows are true classes, columns predicted classes."""
    preds = np.asarray(preds, dtype=np.int64).reshape(-1)
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    return np.bincount(labels * n_classes + preds, minlength=n_classes * n_classes) \
        .reshape(n_classes, n_classes)


def per_class_f1(preds, labels, n_classes: int) -> np.ndarray:
    cm = confusion_matrix(preds, labels, n_classes).astype(np.float64)
    tp = np.diag(cm)
    denom = cm.sum(axis=0) + cm.sum(axis=1)  # predicted + actual = 2tp + fp + fn
    # A class absent from both predictions and labels scores 0.
    return np.divide(2.0 * tp, denom, out=np.zeros(n_classes), where=denom > 0)


def macro_f1(preds, labels, n_classes: int) -> float:
    return float(per_class_f1(preds, labels, n_classes).mean())


def accuracy(preds, labels) -> float:
    preds = np.asarray(preds).reshape(-1)
    labels = np.asarray(labels).reshape(-1)
    return float((preds == labels).mean())


def balanced_accuracy(preds, labels, n_classes: int) -> float:
    """Mean per-class recall over classes present in ``labels``."""
    cm = confusion_matrix(preds, labels, n_classes).astype(np.float64)
    support = cm.sum(axis=1)
    present = support > 0
    return float((np.diag(cm)[present] / support[present]).mean())


def rmse(preds, targets) -> float:
    preds = np.asarray(preds, dtype=np.float64).reshape(-1)
    targets = np.asarray(targets, dtype=np.float64).reshape(-1)
    if len(preds) != len(targets) or len(preds) == 0:
        raise ValueError(f"rmse needs equal non-empty lengths, got {len(preds)} and {len(targets)}")
    return float(np.sqrt(np.mean((preds - targets) ** 2)))


TASK_METRIC = {"binary": "auc", "multiclass": "macro_f1", "regression": "rmse"}


def higher_is_better(metric: str) -> bool:
    return metric != "rmse"


def task_metric(task: str, outputs: np.ndarray, targets: np.ndarray, n_classes: int = 0) -> float:
    """Headline metric for ``task`` from raw model outputs (logits or predictions)."""
    if task == "binary":
        return auc(outputs.reshape(-1), targets)
    if task == "multiclass":
        return macro_f1(outputs.argmax(axis=1), targets, n_classes)
    return rmse(outputs.reshape(-1), targets)


def classification_summary(outputs: np.ndarray, targets: np.ndarray, n_classes: int) -> dict:
    preds = outputs.argmax(axis=1)
    return {"macro_f1": macro_f1(preds, targets, n_classes),
            "accuracy": accuracy(preds, targets),
            "balanced_accuracy": balanced_accuracy(preds, targets, n_classes)}
