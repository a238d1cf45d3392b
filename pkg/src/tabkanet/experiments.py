"""Study runners: benchmark, BN/LN ablation, noise sweep, batch-size sweep, BN export.

Config files are JSON; relative paths resolve against the config's directory::

    {
      "dataset": {"path": "../data/credit_risk/credit_risk.csv",
                  "schema": "../data/credit_risk/schema.json"},
      "architectures": ["tabkanet", "mlp"],
      "study": "benchmark",
      "seeds": [0],
      "folds": 5,
      "out": "../runs/cr",
      "train": {"batch_size": 128, "max_epochs": 200, "patience": 20},
      "model": {"kan_hidden": "locked", "encoder": {"dim": 64, "heads": 8, "layers": 3}},
      "noise": {"kinds": ["categorical", "numerical"], "fractions": [0.1, 0.2, 0.3, 0.4, 0.5],
                "repeats": 5},
      "batch_sizes": [32, 64, 128, 256, 512],
      "bn_export": {"column": "credit_amount", "batch_sizes": [32, 128, 512]}
    }

Each (architecture, seed, fold) cell trains with seed ``seed + fold``; cells
run in a process pool sized by ``TABKANET_WORKERS`` (default: the fold count).
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import logging
import math
import os
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import plotting
from .data import Dataset, FoldSplit, inject_noise, load_csv, load_schema, make_folds
from .errors import ConfigError, DivergenceError, TabKANetError
from .kan import SplineGrid
from .metrics import TASK_METRIC, classification_summary, task_metric
from .model import ARCHITECTURES, ModelSpec, build, predict, save_checkpoint
from .training import TrainConfig, train
from .transformer import EncoderConfig

log = logging.getLogger(__name__)

STUDIES = ("benchmark", "ablate-norm", "noise-sweep", "batch-sweep", "bn-export")
DEFAULT_FRACTIONS = [0.1, 0.2, 0.3, 0.4, 0.5]
WORKERS_ENV = "TABKANET_WORKERS"


@dataclass
class ExperimentConfig:
    dataset_path: Path
    schema_path: Path
    architectures: list[str] = field(default_factory=lambda: ["tabkanet"])
    study: str = "benchmark"
    seeds: list[int] = field(default_factory=lambda: [0])
    folds: int = 5
    out_dir: Path = Path("runs")
    train: TrainConfig = field(default_factory=TrainConfig)
    model: dict = field(default_factory=dict)
    noise_kinds: list[str] = field(default_factory=lambda: ["categorical", "numerical"])
    noise_fractions: list[float] = field(default_factory=lambda: list(DEFAULT_FRACTIONS))
    noise_repeats: int = 5
    batch_sizes: list[int] = field(default_factory=lambda: [32, 64, 128, 256, 512])
    bn_column: str | None = None
    bn_batch_sizes: list[int] = field(default_factory=lambda: [32, 64, 128, 256, 512])
    save_checkpoints: bool = False
    plots: bool = True
    workers: int | None = None

    def validate(self) -> None:
        if self.study not in STUDIES:
            raise ConfigError(f"unknown study {self.study!r}; expected one of {STUDIES}")
        for a in self.architectures:
            if a not in ARCHITECTURES:
                raise ConfigError(f"unknown architecture {a!r}")
        if self.folds < 3:
            raise ConfigError("folds must be >= 3")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        for bs in [self.train.batch_size, *self.batch_sizes, *self.bn_batch_sizes]:
            if bs < 2:
                raise ConfigError(f"batch size {bs} < 2")
        for p in self.noise_fractions:
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"noise fraction {p} outside [0, 1]")
        if self.noise_repeats < 1:
            raise ConfigError("noise repeats must be >= 1")

    def model_kwargs(self) -> dict:
        kw = dict(self.model)
        if "encoder" in kw and isinstance(kw["encoder"], dict):
            kw["encoder"] = EncoderConfig(**kw["encoder"])
        if "grid" in kw and isinstance(kw["grid"], dict):
            kw["grid"] = SplineGrid(**kw["grid"])
        return kw

    def to_dict(self) -> dict:
        return {"dataset": {"path": str(self.dataset_path), "schema": str(self.schema_path)},
                "architectures": list(self.architectures), "study": self.study,
                "seeds": list(self.seeds), "folds": self.folds, "out": str(self.out_dir),
                "train": dataclasses.asdict(self.train), "model": self.model,
                "noise": {"kinds": self.noise_kinds, "fractions": self.noise_fractions,
                          "repeats": self.noise_repeats},
                "batch_sizes": self.batch_sizes,
                "bn_export": {"column": self.bn_column, "batch_sizes": self.bn_batch_sizes},
                "save_checkpoints": self.save_checkpoints, "plots": self.plots}

    def fingerprint(self, schema_hash: str = "") -> str:
        """Hash of everything that determines the metric tables."""
        d = self.to_dict()
        d.pop("out")
        d.pop("plots")
        d["dataset"] = {"file": Path(self.dataset_path).name, "schema_hash": schema_hash}
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]


def load_config(path, study: str | None = None, **overrides) -> ExperimentConfig:
    """Read a JSON config; ``overrides`` with value ``None`` are ignored."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e})") from None
    return config_from_dict(raw, base=path.parent, study=study, **overrides)


def config_from_dict(raw: dict, base: Path = Path("."), study: str | None = None,
                     **overrides) -> ExperimentConfig:
    def resolve(p):
        p = Path(p)
        return p if p.is_absolute() else (base / p)

    try:
        ds = raw["dataset"]
        train_cfg = TrainConfig(**raw.get("train", {}))
        noise = raw.get("noise", {})
        bn = raw.get("bn_export", {})
        cfg = ExperimentConfig(
            dataset_path=resolve(ds["path"]), schema_path=resolve(ds["schema"]),
            architectures=list(raw.get("architectures", ["tabkanet"])),
            study=raw.get("study", "benchmark"), seeds=[int(s) for s in raw.get("seeds", [0])],
            folds=int(raw.get("folds", 5)), out_dir=resolve(raw.get("out", "runs")),
            train=train_cfg, model=dict(raw.get("model", {})),
            noise_kinds=list(noise.get("kinds", ["categorical", "numerical"])),
            noise_fractions=[float(p) for p in noise.get("fractions", DEFAULT_FRACTIONS)],
            noise_repeats=int(noise.get("repeats", 5)),
            batch_sizes=[int(b) for b in raw.get("batch_sizes", [32, 64, 128, 256, 512])],
            bn_column=bn.get("column"),
            bn_batch_sizes=[int(b) for b in bn.get("batch_sizes", [32, 64, 128, 256, 512])],
            save_checkpoints=bool(raw.get("save_checkpoints", False)),
            plots=bool(raw.get("plots", True)),
            workers=raw.get("workers"))
    except (KeyError, TypeError) as e:
        raise ConfigError(f"malformed config: {e}") from None
    if study is not None:
        cfg.study = study
    if overrides.get("seed") is not None:
        cfg.seeds = [int(overrides["seed"])]
    if overrides.get("out") is not None:
        cfg.out_dir = Path(overrides["out"])
    if overrides.get("folds") is not None:
        cfg.folds = int(overrides["folds"])
    if overrides.get("arch"):
        arch = overrides["arch"]
        cfg.architectures = [a.strip() for a in arch.split(",")] if isinstance(arch, str) else list(arch)
    cfg.validate()
    return cfg


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

@dataclass
class FoldResult:
    arch: str
    seed: int
    fold: int
    metric: str
    value: float
    n_test: int
    status: str = "ok"
    message: str = ""
    wall_time: float = 0.0
    extra: dict = field(default_factory=dict)


@dataclass
class RunReport:
    arch: str
    metric: str
    folds: list[FoldResult]
    fingerprint: str

    @property
    def values(self) -> list[float]:
        return [f.value for f in self.folds if f.status == "ok"]

    @property
    def mean(self) -> float:
        v = self.values
        return float(np.mean(v)) if v else math.nan

    @property
    def std(self) -> float:
        # Sample standard deviation across folds.
        v = self.values
        return float(np.std(v, ddof=1)) if len(v) > 1 else 0.0

    @property
    def failed(self) -> list[FoldResult]:
        return [f for f in self.folds if f.status != "ok"]


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x) if math.isfinite(x) else "nan"
    return str(x)


def write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(x) for x in r])
    path.write_text(buf.getvalue(), encoding="utf-8")


def format_table(header: list[str], rows: list[list]) -> str:
    cells = [header] + [[f"{x:.4f}" if isinstance(x, float) else str(x) for x in r] for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)) for r in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# cell execution
# ---------------------------------------------------------------------------

def _cell_seed(*parts) -> int:
    return zlib.crc32(json.dumps(parts).encode()) & 0x7FFFFFFF


def run_cell(job: dict) -> FoldResult:
    """Train one (arch, seed, fold) cell and evaluate it; never raises for training failures."""
    dataset: Dataset = job["dataset"]
    fold: FoldSplit = job["fold"]
    arch, seed = job["arch"], job["seed"]
    cfg = dataclasses.replace(job["train"], seed=seed + fold.fold)
    task = dataset.schema.task
    metric = TASK_METRIC[task]
    t0 = time.perf_counter()
    try:
        result = train({"arch": arch}, dataset, fold, cfg, job["model_kwargs"])
        test_ds = dataset.subset(fold.test, "test")
        train_ds = dataset.subset(fold.train, "train")
        te = result.preprocessor.transform(test_ds)
        out = predict(result.model, te, cfg.eval_batch_size)
        value = task_metric(task, out, te.y, result.model.spec.n_classes)
        extra: dict = {"best_epoch": result.best_epoch, "val_metric": result.best_metric,
                       "epochs": len(result.history)}
        if task == "multiclass":
            extra.update(classification_summary(out, te.y, result.model.spec.n_classes))
        if job.get("noise"):
            extra["noise"] = _noise_grid(result, test_ds, train_ds, job["noise"], seed, fold.fold)
        if job.get("history_path"):
            with open(job["history_path"], "w", encoding="utf-8") as fh:
                for rec in result.history:
                    fh.write(json.dumps(rec, sort_keys=True) + "\n")
        if job.get("checkpoint_path"):
            save_checkpoint(job["checkpoint_path"], result.model, result.preprocessor,
                            {"arch": arch, "seed": seed, "fold": fold.fold})
        return FoldResult(arch, seed, fold.fold, metric, value, len(fold.test),
                          wall_time=time.perf_counter() - t0, extra=extra)
    except (TabKANetError, ArithmeticError, FloatingPointError) as e:
        status = "diverged" if isinstance(e, DivergenceError) else "failed"
        log.warning("cell %s seed=%d fold=%d %s: %s", arch, seed, fold.fold, status, e)
        return FoldResult(arch, seed, fold.fold, metric, math.nan, len(fold.test), status, str(e),
                          time.perf_counter() - t0)


def _noise_grid(result, test_ds: Dataset, train_ds: Dataset, noise: dict, seed: int, fold: int) -> dict:
    task = test_ds.schema.task
    n_classes = result.model.spec.n_classes
    grid: dict = {}
    for kind in noise["kinds"]:
        block = test_ds.cat if kind == "categorical" else test_ds.num
        if block.shape[1] == 0:
            grid[kind] = None  # nothing to corrupt
            continue
        for p in [0.0, *noise["fractions"]]:
            scores = []
            for r in range(noise["repeats"]):
                noisy = inject_noise(test_ds, kind, p, train_ds, _cell_seed(seed, fold, kind, p, r))
                enc = result.preprocessor.transform(noisy)
                scores.append(task_metric(task, predict(result.model, enc), enc.y, n_classes))
            grid.setdefault(kind, {})[repr(float(p))] = float(np.mean(scores))
    return grid


def _worker_count(cfg: ExperimentConfig) -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"{WORKERS_ENV} must be an integer, got {env!r}") from None
    return int(cfg.workers) if cfg.workers else cfg.folds


def _run_jobs(jobs: list[dict], workers: int) -> list[FoldResult]:
    if workers <= 1 or len(jobs) <= 1:
        return [run_cell(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
        return list(pool.map(run_cell, jobs))


def _load(cfg: ExperimentConfig) -> Dataset:
    return load_csv(cfg.dataset_path, load_schema(cfg.schema_path))


def _check_buildable(cfg: ExperimentConfig, dataset: Dataset, archs: list[str]) -> None:
    """Fail fast (config error) if an architecture cannot be built for this schema."""
    from .data import Preprocessor  # local: only needs the vocab sizes
    from .embedding import CategoricalEncoder
    schema = dataset.schema
    enc = CategoricalEncoder(list(schema.categorical), [{} for _ in schema.categorical], True)
    fake = Preprocessor(enc, np.zeros(0), np.zeros(0), np.ones(0))
    for arch in archs:
        kw = cfg.model_kwargs()
        kw.setdefault("encoder", EncoderConfig(dim=8, heads=1, layers=1, ffn_hidden=8))
        build(ModelSpec.for_data(arch, schema, fake, n_classes=max(dataset.n_classes, 2), **kw), 0)


def _benchmark_jobs(cfg: ExperimentConfig, dataset: Dataset, archs: list[str], out: Path,
                    train_cfg: TrainConfig | None = None, noise: dict | None = None,
                    tag: str = "") -> list[dict]:
    stratify = dataset.y if dataset.schema.task != "regression" else None
    jobs = []
    hist_dir = out / "history"
    hist_dir.mkdir(parents=True, exist_ok=True)
    if cfg.save_checkpoints:
        (out / "checkpoints").mkdir(parents=True, exist_ok=True)
    for seed in cfg.seeds:
        folds = make_folds(len(dataset), seed, stratify, cfg.folds)
        for arch in archs:
            for fold in folds:
                name = f"{arch}{tag}_s{seed}_f{fold.fold}"
                jobs.append({"dataset": dataset, "fold": fold, "arch": arch, "seed": seed,
                             "train": train_cfg or cfg.train, "model_kwargs": cfg.model_kwargs(),
                             "noise": noise, "history_path": hist_dir / f"{name}.jsonl",
                             "checkpoint_path": (out / "checkpoints" / f"{name}.ckpt")
                             if cfg.save_checkpoints else None})
    return jobs


def _reports(results: list[FoldResult], archs: list[str], fingerprint: str) -> dict[str, RunReport]:
    reports = {}
    for arch in archs:
        rows = [r for r in results if r.arch == arch]
        reports[arch] = RunReport(arch, rows[0].metric if rows else "", rows, fingerprint)
    return reports


def _write_fold_table(path: Path, results: list[FoldResult], fingerprint: str, **cols) -> None:
    keys = list(cols)
    rows = [[*[cols[k] for k in keys], r.arch, r.seed, r.fold, r.metric, r.value, r.n_test, r.status,
             fingerprint] for r in results]
    write_csv(path, [*keys, "arch", "seed", "fold", "metric", "value", "n_test", "status", "fingerprint"],
              rows)


def _write_timings(path: Path, results: list[FoldResult]) -> None:
    write_csv(path, ["arch", "seed", "fold", "wall_time_s", "epochs", "best_epoch", "status", "message"],
              [[r.arch, r.seed, r.fold, round(r.wall_time, 3), r.extra.get("epochs", ""),
                r.extra.get("best_epoch", ""), r.status, r.message] for r in results])


# ---------------------------------------------------------------------------
# studies
# ---------------------------------------------------------------------------

def run_benchmark(cfg: ExperimentConfig, dataset: Dataset | None = None) -> dict[str, RunReport]:
    """Train every architecture on every fold; report mean and std of the task metric."""
    dataset = dataset if dataset is not None else _load(cfg)
    _check_buildable(cfg, dataset, cfg.architectures)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    fp = cfg.fingerprint(dataset.schema.fingerprint())
    results = _run_jobs(_benchmark_jobs(cfg, dataset, cfg.architectures, out), _worker_count(cfg))
    reports = _reports(results, cfg.architectures, fp)
    _write_fold_table(out / "benchmark_folds.csv", results, fp)
    rows = [[a, r.metric, r.mean, r.std, len(r.values), len(r.failed), fp] for a, r in reports.items()]
    write_csv(out / "benchmark.csv", ["arch", "metric", "mean", "std", "n_ok", "n_failed", "fingerprint"], rows)
    extra_rows = [[r.arch, r.seed, r.fold, k, v, fp] for r in results for k, v in sorted(r.extra.items())
                  if k in ("accuracy", "balanced_accuracy", "macro_f1")]
    if extra_rows:
        write_csv(out / "benchmark_extra.csv", ["arch", "seed", "fold", "metric", "value", "fingerprint"],
                  extra_rows)
    _write_timings(out / "timings.csv", results)
    (out / "summary.txt").write_text(
        f"dataset {dataset.schema.name}  fingerprint {fp}\n\n"
        + format_table(["arch", "metric", "mean", "std", "folds ok"],
                       [[a, r.metric, r.mean, r.std, len(r.values)] for a, r in reports.items()]),
        encoding="utf-8")
    if cfg.plots:
        plotting.plot_benchmark(reports, out / "benchmark.png", dataset.schema.name, fp)
    return reports


def run_ablate_norm(cfg: ExperimentConfig, dataset: Dataset | None = None) -> dict[str, RunReport]:
    """TabKANet with BatchNorm vs LayerNorm in the numerical embedder, same folds and seeds."""
    dataset = dataset if dataset is not None else _load(cfg)
    if not dataset.schema.numerical:
        raise ConfigError("normalizer ablation needs numerical columns")
    archs = ["tabkanet", "tabkanet-ln"]
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    fp = cfg.fingerprint(dataset.schema.fingerprint())
    results = _run_jobs(_benchmark_jobs(cfg, dataset, archs, out), _worker_count(cfg))
    reports = _reports(results, archs, fp)
    _write_fold_table(out / "ablation_folds.csv", results, fp)
    bn = {(r.seed, r.fold): r.value for r in reports["tabkanet"].folds}
    ln = {(r.seed, r.fold): r.value for r in reports["tabkanet-ln"].folds}
    diffs = [bn[k] - ln[k] for k in bn if k in ln and math.isfinite(bn[k]) and math.isfinite(ln[k])]
    rows = [["tabkanet", reports["tabkanet"].metric, reports["tabkanet"].mean, reports["tabkanet"].std, fp],
            ["tabkanet-ln", reports["tabkanet-ln"].metric, reports["tabkanet-ln"].mean,
             reports["tabkanet-ln"].std, fp],
            ["bn-minus-ln", reports["tabkanet"].metric, float(np.mean(diffs)) if diffs else math.nan,
             float(np.std(diffs, ddof=1)) if len(diffs) > 1 else 0.0, fp]]
    write_csv(out / "ablation.csv", ["variant", "metric", "mean", "std", "fingerprint"], rows)
    _write_timings(out / "timings.csv", results)
    (out / "summary.txt").write_text(
        f"dataset {dataset.schema.name}  fingerprint {fp}\n\n"
        + format_table(["variant", "metric", "mean", "std"], [r[:4] for r in rows]), encoding="utf-8")
    if cfg.plots:
        plotting.plot_benchmark(reports, out / "ablation.png", f"{dataset.schema.name}: BN vs LN", fp)
    return reports


@dataclass
class NoiseSweep:
    """``table[(arch, kind)][p]`` = metric averaged over folds and noise repeats."""

    table: dict[tuple[str, str], dict[float, float]]
    per_fold: list[FoldResult]
    skipped: list[str]
    fingerprint: str

    def clean(self, arch: str) -> float:
        vals = [r.value for r in self.per_fold if r.arch == arch and r.status == "ok"]
        return float(np.mean(vals)) if vals else math.nan


def run_noise_sweep(cfg: ExperimentConfig, dataset: Dataset | None = None) -> NoiseSweep:
    """Corrupt test folds cell-wise at each fraction and re-score trained models."""
    dataset = dataset if dataset is not None else _load(cfg)
    _check_buildable(cfg, dataset, cfg.architectures)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    fp = cfg.fingerprint(dataset.schema.fingerprint())
    skipped = []
    kinds = []
    for kind in cfg.noise_kinds:
        cols = dataset.schema.categorical if kind == "categorical" else dataset.schema.numerical
        if cols:
            kinds.append(kind)
        else:
            skipped.append(f"{kind} noise skipped: dataset has no {kind} columns")
            log.warning(skipped[-1])
    noise = {"kinds": kinds, "fractions": cfg.noise_fractions, "repeats": cfg.noise_repeats}
    results = _run_jobs(_benchmark_jobs(cfg, dataset, cfg.architectures, out, noise=noise),
                        _worker_count(cfg))
    table: dict = {}
    fold_rows = []
    for r in results:
        for kind, grid in (r.extra.get("noise") or {}).items():
            for p, v in (grid or {}).items():
                table.setdefault((r.arch, kind), {}).setdefault(float(p), []).append(v)
                fold_rows.append([r.arch, kind, float(p), r.seed, r.fold, v, fp])
    table = {k: {p: float(np.mean(v)) for p, v in sorted(g.items())} for k, g in table.items()}
    write_csv(out / "noise_sweep_folds.csv", ["arch", "kind", "p", "seed", "fold", "value", "fingerprint"],
              fold_rows)
    metric = TASK_METRIC[dataset.schema.task]
    rows = []
    for (arch, kind), grid in sorted(table.items()):
        base = grid.get(0.0, math.nan)
        for p, v in grid.items():
            rows.append([arch, kind, p, metric, v, base - v, (base - v) / base if base else math.nan, fp])
    write_csv(out / "noise_sweep.csv",
              ["arch", "kind", "p", "metric", "value", "abs_drop", "rel_drop", "fingerprint"], rows)
    _write_timings(out / "timings.csv", results)
    summary = format_table(["arch", "kind", "p", "value", "rel_drop"], [[r[0], r[1], r[2], r[4], r[6]] for r in rows])
    (out / "summary.txt").write_text(f"dataset {dataset.schema.name}  fingerprint {fp}\n"
                                     + "".join(f"note: {s}\n" for s in skipped) + "\n" + summary,
                                     encoding="utf-8")
    sweep = NoiseSweep(table, results, skipped, fp)
    if cfg.plots:
        plotting.plot_noise_sweep(sweep, out / "noise_sweep.png", dataset.schema.name, metric, fp)
    return sweep


def run_batch_sweep(cfg: ExperimentConfig, dataset: Dataset | None = None) -> dict[int, dict[str, RunReport]]:
    """Full benchmark per configured batch size (default architecture: tabkanet)."""
    dataset = dataset if dataset is not None else _load(cfg)
    _check_buildable(cfg, dataset, cfg.architectures)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    fp = cfg.fingerprint(dataset.schema.fingerprint())
    jobs, sizes = [], []
    for bs in cfg.batch_sizes:
        if bs < 2:
            raise ConfigError(f"batch size {bs} < 2")
        tc = dataclasses.replace(cfg.train, batch_size=bs)
        batch_jobs = _benchmark_jobs(cfg, dataset, cfg.architectures, out, train_cfg=tc, tag=f"_bs{bs}")
        sizes += [bs] * len(batch_jobs)
        jobs += batch_jobs
    results = _run_jobs(jobs, _worker_count(cfg))
    curve: dict[int, dict[str, RunReport]] = {}
    for bs in cfg.batch_sizes:
        subset = [r for r, s in zip(results, sizes) if s == bs]
        curve[bs] = _reports(subset, cfg.architectures, fp)
    rows = [[bs, a, r.metric, r.mean, r.std, len(r.values), fp]
            for bs, reps in curve.items() for a, r in reps.items()]
    write_csv(out / "batch_sweep.csv", ["batch_size", "arch", "metric", "mean", "std", "n_ok", "fingerprint"],
              rows)
    fold_rows = [[s, r.arch, r.seed, r.fold, r.metric, r.value, r.status, fp] for r, s in zip(results, sizes)]
    write_csv(out / "batch_sweep_folds.csv",
              ["batch_size", "arch", "seed", "fold", "metric", "value", "status", "fingerprint"], fold_rows)
    _write_timings(out / "timings.csv", results)
    (out / "summary.txt").write_text(
        f"dataset {dataset.schema.name}  fingerprint {fp}\n\n"
        + format_table(["batch_size", "arch", "metric", "mean", "std"], [r[:5] for r in rows]), encoding="utf-8")
    if cfg.plots:
        plotting.plot_batch_sweep(curve, out / "batch_sweep.png", dataset.schema.name, fp)
    return curve


def bn_ln_pairs(values: np.ndarray, batch_sizes: list[int], seed: int, eps: float = 1e-5) -> list[tuple]:
    """(batch_size, row, ln_value, bn_value) for random batches of each size.

    The LN value is the z-score against the whole column (the normalized
    ground truth); the BN value is the z-score inside the row's batch.
    """
    x = np.asarray(values, dtype=np.float64)
    ln = (x - x.mean()) / np.sqrt(x.var() + eps)
    out = []
    for bs in batch_sizes:
        if bs < 2:
            raise ConfigError(f"batch size {bs} < 2")
        order = np.random.default_rng(_cell_seed(seed, bs)).permutation(len(x))
        starts = list(range(0, len(x), bs))
        if len(starts) > 1 and len(x) - starts[-1] < 2:
            starts.pop()  # fold a singleton tail into the previous batch
        for i, s in enumerate(starts):
            e = starts[i + 1] if i + 1 < len(starts) else len(x)
            idx = order[s:e]
            xb = x[idx]
            bn = (xb - xb.mean()) / np.sqrt(xb.var() + eps)
            out.extend((bs, int(j), float(ln[j]), float(b)) for j, b in zip(idx, bn))
    return out


def export_bn_scatter(cfg: ExperimentConfig, column: str | None = None,
                      dataset: Dataset | None = None) -> list[tuple]:
    """Per-cell LN vs BN normalized values of one numerical column (training rows of fold 0)."""
    dataset = dataset if dataset is not None else _load(cfg)
    column = column or cfg.bn_column
    schema = dataset.schema
    if column is None:
        raise ConfigError("bn-export needs a column (config bn_export.column)")
    if column in schema.categorical or column == schema.target:
        raise ConfigError(f"column {column!r} is not numerical")
    if column not in schema.numerical:
        raise ConfigError(f"unknown column {column!r}")
    seed = cfg.seeds[0]
    stratify = dataset.y if schema.task != "regression" else None
    fold = make_folds(len(dataset), seed, stratify, cfg.folds)[0]
    j = schema.numerical.index(column)
    col = dataset.num[fold.train, j]
    col = np.where(np.isnan(col), np.nanmedian(col), col)
    pairs = bn_ln_pairs(col, cfg.bn_batch_sizes, seed)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    fp = cfg.fingerprint(schema.fingerprint())
    write_csv(out / "bn_scatter.csv", ["column", "batch_size", "row", "ln_value", "bn_value", "fingerprint"],
              [[column, *p, fp] for p in pairs])
    gaps = [[bs, float(np.mean([abs(p[3] - p[2]) for p in pairs if p[0] == bs])), fp]
            for bs in cfg.bn_batch_sizes]
    write_csv(out / "bn_gap.csv", ["batch_size", "mean_abs_bn_minus_ln", "fingerprint"], gaps)
    if cfg.plots:
        plotting.plot_bn_scatter(pairs, cfg.bn_batch_sizes, out / "bn_scatter.png", f"{schema.name}: {column}", fp)
    return pairs


def run_study(cfg: ExperimentConfig):
    return {"benchmark": run_benchmark, "ablate-norm": run_ablate_norm, "noise-sweep": run_noise_sweep,
            "batch-sweep": run_batch_sweep, "bn-export": export_bn_scatter}[cfg.study](cfg)
