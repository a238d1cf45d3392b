"""Command-line entry point: ``tabkanet <verb> --config FILE [options]``."""

from __future__ import annotations

import argparse
import logging
import sys

from . import experiments as ex
from .errors import TabKANetError

VERBS = {"bench": "benchmark", "ablate-norm": "ablate-norm", "noise-sweep": "noise-sweep",
         "batch-sweep": "batch-sweep", "bn-export": "bn-export"}
HELP = {"bench": "train every architecture on k folds and report mean/std of the task metric",
        "ablate-norm": "BatchNorm vs LayerNorm numerical embedder on identical folds",
        "noise-sweep": "score trained models on test folds with injected cell noise",
        "batch-sweep": "benchmark TabKANet at several batch sizes",
        "bn-export": "dump in-batch vs global z-scores of one numerical column"}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tabkanet", description="TabKANet study runner")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="verb", required=True)
    for verb in VERBS:
        p = sub.add_parser(verb, help=HELP[verb])
        p.add_argument("--config", required=True, help="experiment config (JSON)")
        p.add_argument("--seed", type=int, help="single seed overriding the config's seed list")
        p.add_argument("--out", help="output directory")
        p.add_argument("--folds", type=int, help="number of CV folds (default: config value, else 5)")
        p.add_argument("--arch", help="comma-separated architecture tags")
        if verb == "bn-export":
            p.add_argument("--column", help="numerical column to export")
    return parser


def _summarize(cfg: ex.ExperimentConfig, result) -> tuple[str, bool]:
    """Console summary and whether any cell diverged."""
    diverged = False
    if cfg.study == "bn-export":
        return f"wrote {len(result)} rows to {cfg.out_dir / 'bn_scatter.csv'}", False
    if cfg.study == "noise-sweep":
        folds = result.per_fold
    elif cfg.study == "batch-sweep":
        folds = [f for reps in result.values() for r in reps.values() for f in r.folds]
    else:
        folds = [f for r in result.values() for f in r.folds]
    text = (cfg.out_dir / "summary.txt").read_text(encoding="utf-8")
    for f in folds:
        if f.status != "ok":
            text += f"fold {f.fold} ({f.arch}, seed {f.seed}) {f.status}: {f.message}\n"
            diverged |= f.status == "diverged"
    return text.rstrip("\n"), diverged


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = ex.load_config(args.config, study=VERBS[args.verb], seed=args.seed, out=args.out,
                             folds=args.folds, arch=args.arch)
        if args.verb == "bn-export" and args.column:
            cfg.bn_column = args.column
        result = ex.run_study(cfg)
    except TabKANetError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    text, diverged = _summarize(cfg, result)
    print(text)
    return 3 if diverged else 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
