"""Matplotlib figures for study outputs (Agg backend, written to files)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path: Path, fingerprint: str) -> Path:
    fig.text(0.99, 0.01, fingerprint, ha="right", va="bottom", fontsize=6, color="0.5")
    fig.tight_layout()
    # Fixed metadata keeps repeated renders byte-stable.
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)
    return Path(path)


def plot_benchmark(reports: dict, path: Path, title: str, fingerprint: str = "") -> Path:
    archs = list(reports)
    means = [reports[a].mean for a in archs]
    stds = [reports[a].std for a in archs]
    fig, ax = plt.subplots(figsize=(1.2 * len(archs) + 2, 3.5))
    ax.bar(range(len(archs)), means, yerr=stds, capsize=4, color="tab:blue", alpha=0.8)
    for i, a in enumerate(archs):
        ax.plot([i] * len(reports[a].values), reports[a].values, "k.", ms=4)
    ax.set_xticks(range(len(archs)), archs, rotation=20)
    metric = next((r.metric for r in reports.values() if r.metric), "")
    ax.set_ylabel(metric)
    finite = [m for m in means if np.isfinite(m)]
    if finite and metric != "rmse":
        lo = min(min(r.values) for r in reports.values() if r.values)
        ax.set_ylim(max(0.0, lo - 0.05), min(1.0, max(finite) + 0.05))
    ax.set_title(title)
    return _save(fig, path, fingerprint)


def plot_noise_sweep(sweep, path: Path, title: str, metric: str, fingerprint: str = "") -> Path:
    kinds = sorted({k for _, k in sweep.table})
    fig, axes = plt.subplots(1, max(len(kinds), 1), figsize=(4.5 * max(len(kinds), 1), 3.5), squeeze=False)
    for ax, kind in zip(axes[0], kinds):
        for (arch, k), grid in sorted(sweep.table.items()):
            if k != kind:
                continue
            ps = sorted(grid)
            ax.plot(ps, [grid[p] for p in ps], marker="o", label=arch)
        ax.set_xlabel(f"{kind} noise fraction")
        ax.set_ylabel(metric)
        ax.set_title(f"{title}: {kind}")
        ax.legend(fontsize=8)
    return _save(fig, path, fingerprint)


def plot_batch_sweep(curve: dict, path: Path, title: str, fingerprint: str = "") -> Path:
    sizes = sorted(curve)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    archs = list(next(iter(curve.values()))) if curve else []
    metric = ""
    for arch in archs:
        means = np.array([curve[b][arch].mean for b in sizes])
        stds = np.array([curve[b][arch].std for b in sizes])
        metric = curve[sizes[0]][arch].metric
        ax.errorbar(sizes, means, yerr=stds, marker="o", capsize=3, label=arch)
    ax.set_xscale("log", base=2)
    ax.set_xlabel("batch size")
    ax.set_ylabel(metric)
    ax.set_title(title)
    ax.legend(fontsize=8)
    return _save(fig, path, fingerprint)


def plot_bn_scatter(pairs: list[tuple], batch_sizes: list[int], path: Path, title: str,
                    fingerprint: str = "") -> Path:
    n = len(batch_sizes)
    fig, axes = plt.subplots(1, n, figsize=(3.2 * n, 3.2), squeeze=False)
    arr = np.array([p[:4] for p in pairs], dtype=np.float64) if pairs else np.zeros((0, 4))
    for ax, bs in zip(axes[0], batch_sizes):
        sel = arr[arr[:, 0] == bs]
        ax.scatter(sel[:, 2], sel[:, 3], s=3, alpha=0.5)
        if len(sel):
            lo, hi = float(sel[:, 2:].min()), float(sel[:, 2:].max())
            ax.plot([lo, hi], [lo, hi], "r--", lw=0.8)
        ax.set_xlabel("global z-score (LN)")
        ax.set_ylabel("in-batch z-score (BN)")
        ax.set_title(f"batch {bs}")
    fig.suptitle(title)
    return _save(fig, path, fingerprint)
