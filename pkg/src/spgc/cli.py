"""``spgc`` command-line entry point.

Every command writes CSV/JSON as its primary output; ``--plot`` adds PNG
figures beside them. Commands that write to a directory first drop a
``manifest.json`` recording the resolved configuration and planned outputs.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .bounds import (BoundInputs, egc_rademacher_bound, egc_truncation_bound,
                     extract_coefficients, lgc_rademacher_bound, write_coefficients)
from .checks import oracle_check
from .data import load_dataset, validate_bundle
from .graph import OPERATORS
from .models import DEFAULT_OPERATOR, VARIANTS, load_checkpoint, normalize_variant, save_checkpoint
from .propagation import (PropagationOperator, build_diffusion_cache, cache_dir,
                          cached_diffusion, load_cache, save_cache)
from .selection import (PROTOCOLS, aggregate_runs, grid_search, load_grid, run_seed,
                        write_report)
from .training import TrainConfig, train, write_history


class RunManifest:
    """Provenance record written before a command's heavy work starts."""

    def __init__(self, path, command: str, config: dict, seed, outputs):
        self.path = Path(path)
        self.data = {
            "command": command,
            "config": config,
            "seed": seed,
            "version": __version__,
            "started": _now(),
            "finished": None,
            "status": "running",
            "outputs": sorted(str(p) for p in outputs),
        }
        self._write()

    def add_outputs(self, paths):
        self.data["outputs"] = sorted(set(self.data["outputs"]) | {str(p) for p in paths})
        self._write()

    def finish(self, status: str = "ok", **extra):
        self.data.update(extra, finished=_now(), status=status)
        self._write()

    def _write(self):
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_text(json.dumps(self.data, indent=2, sort_keys=True) + "\n",
                             encoding="utf-8")


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="milliseconds")


def _config(args) -> dict:
    return {k: (str(v) if isinstance(v, Path) else v) for k, v in sorted(vars(args).items())
            if k != "func"}


def _dump(obj, path=None):
    text = json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _operator(args, variant=None) -> str:
    if args.op:
        return args.op
    return DEFAULT_OPERATOR[variant] if variant else "laplacian"


def _dataset_cache(bundle, op, k):
    return cached_diffusion(bundle.graph, op, k, bundle.name, cache_dir())


# ---------------------------------------------------------------- commands


def cmd_prep(args) -> int:
    bundle = load_dataset(args.data)
    out = Path(args.out) if args.out else None
    if out is None:
        root = cache_dir()
        if root is None:
            raise ValueError("no --out given and SPGC_CACHE_DIR is unset")
        out = root / f"{bundle.name}__{args.op}__k{args.k}.spgc"
    out.parent.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(out.with_name(out.name + ".manifest.json"), "prep", _config(args),
                           None, [out])
    cache = build_diffusion_cache(PropagationOperator.for_graph(bundle.graph, args.op),
                                  bundle.graph.x, args.k)
    save_cache(cache, out)
    manifest.finish(build_seconds=cache.build_seconds)
    print(f"built {args.op} cache k={args.k} ({cache.k + 1} terms, n={cache.n}, "
          f"c={cache.feature_dim}) in {cache.build_seconds:.3f} s -> {out}")
    return 0


def cmd_train(args) -> int:
    variant = normalize_variant(args.variant)
    bundle = load_dataset(args.data)
    op = _operator(args, variant)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seeds = [run_seed(args.seed, 0, r) for r in range(args.runs)]
    suffix = (lambda r: "") if args.runs == 1 else (lambda r: f"_run{r}")
    planned = [out / "summary.json"]
    for r in range(args.runs):
        planned += [out / f"history{suffix(r)}.csv", out / f"checkpoint{suffix(r)}.spgck"]
        if args.plot:
            planned.append(out / f"history{suffix(r)}.png")
    manifest = RunManifest(out / "manifest.json", "train", _config(args), args.seed, planned)

    if args.cache:
        cache = load_cache(args.cache)
        if cache.operator_kind != op:
            raise ValueError(f"cache holds {cache.operator_kind!r} terms, model needs {op!r}")
        if cache.k < args.k:
            raise ValueError(f"cache has k={cache.k}, need at least {args.k}")
    else:
        cache = _dataset_cache(bundle, op, args.k)

    runs, ms = [], []
    for r, seed in enumerate(seeds):
        cfg = TrainConfig(args.lr, args.wd, args.dropout, args.epochs, args.patience, seed)
        rep = train(variant, cache, bundle.graph, cfg, k=args.k)
        write_history(rep, out / f"history{suffix(r)}.csv", timing=args.timing)
        save_checkpoint(rep.final_params, out / f"checkpoint{suffix(r)}.spgck", seed)
        if args.plot:
            from .plotting import plot_history
            plot_history(rep.history, out / f"history{suffix(r)}.png",
                         f"{variant} k={args.k} seed={seed}")
        last = rep.history[-1]
        runs.append({"run": r, "seed": seed, "best_epoch": rep.best_epoch,
                     "epochs": rep.epochs_run, "stopped_early": rep.stopped_early,
                     "best_val_acc": rep.best_val_acc, "test_acc_at_best": rep.test_acc_at_best,
                     "final_val_acc": last.val_acc, "final_test_acc": last.test_acc})
        ms.append(rep.mean_epoch_ms)
    val_mean, val_std = aggregate_runs([r["best_val_acc"] for r in runs])
    test_mean, test_std = aggregate_runs([r["test_acc_at_best"] for r in runs])
    summary = {"dataset": bundle.name, "variant": variant, "operator": op, "k": args.k,
               "learning_rate": args.lr, "weight_decay": args.wd, "dropout": args.dropout,
               "runs": runs, "val_mean": val_mean, "val_std": val_std,
               "test_mean": test_mean, "test_std": test_std}
    if args.timing:
        summary["mean_epoch_ms"] = float(np.mean(ms))
    _dump(summary, out / "summary.json")
    manifest.finish(mean_epoch_ms=float(np.mean(ms)))
    print(f"{variant} k={args.k}: test {100 * test_mean:.1f} +/- {100 * test_std:.1f} "
          f"(val {100 * val_mean:.1f}) over {args.runs} run(s)")
    return 0


def cmd_gridsearch(args) -> int:
    variant = normalize_variant(args.variant)
    bundle = load_dataset(args.data)
    grid = load_grid(args.grid or bundle.name)
    if args.protocol:
        grid = replace(grid, protocol=args.protocol)
    if args.runs:
        grid = replace(grid, n_runs=args.runs)
    op = args.op or grid.operator or DEFAULT_OPERATOR[variant]
    out = Path(args.out)
    planned = [out / "cells.csv", out / "selection.json"]
    if args.plot:
        planned.append(out / "selection.png")
    manifest = RunManifest(out / "manifest.json", "gridsearch", _config(args), args.seed, planned)
    report = grid_search(variant, bundle.graph, grid, args.seed, op, args.epochs, args.patience,
                         args.workers, bundle.name, cache_dir())
    write_report(report, out)
    if args.plot:
        from .plotting import plot_selection
        plot_selection(report, out / "selection.png")
    summary = report.summary()
    manifest.finish()
    if report.chosen_cell is None:
        print("every grid cell failed", file=sys.stderr)
        return 1
    tag = " [biased: chosen on test]" if report.biased else ""
    print(f"{variant} {grid.protocol}: cell {summary['chosen_cell']} "
          f"{summary['hyperparameters']} test {100 * summary['test_mean']:.1f} "
          f"+/- {100 * summary['test_std']:.1f}{tag}")
    return 1 if summary["failed_cells"] else 0


def cmd_coeffs(args) -> int:
    params, _ = load_checkpoint(args.checkpoint)
    if params.variant == "SGC":
        raise ValueError("SGC checkpoints have no coefficient series")
    cache = load_cache(args.cache) if args.cache else None
    series = extract_coefficients(params, cache)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_coefficients(series, out)
    if args.plot:
        from .plotting import plot_coefficients
        plot_coefficients(series, out.with_suffix(".png"))
    return 0


def cmd_bounds(args) -> int:
    model = args.model.lower()
    if model == "truncation":
        if None in (args.beta, args.spec_norm, args.xtheta, args.k):
            raise ValueError("truncation needs --beta, --spec-norm, --xtheta and --k")
        value = egc_truncation_bound(args.beta, args.spec_norm, args.k, args.xtheta)
        _dump({"model": model, "beta": args.beta, "spec_norm": args.spec_norm, "k": args.k,
               "xtheta_norm": args.xtheta, "bound": value})
        return 0
    inp = BoundInputs(args.a, args.b, args.M, args.lip, args.k or 0, args.l1, args.L)
    fn = lgc_rademacher_bound if model == "lgc" else egc_rademacher_bound
    _dump({"model": model, "a": inp.a, "b": inp.b, "M": inp.M, "lipschitz": inp.lipschitz,
           "k": inp.k, "l1_norm": inp.l1_norm, "L_samples": inp.L_samples, "bound": fn(inp)})
    return 0


def cmd_oracle_check(args) -> int:
    report = oracle_check(args.seed, args.graphs, args.mc_samples)
    _dump(report, args.out)
    for s in report["suites"]:
        print(f"{s['suite']}: {len(s['cases'])} cases, {s['violations']} violations",
              file=sys.stderr)
    return 1 if report["violations"] else 0


def cmd_validate(args) -> int:
    report = validate_bundle(load_dataset(args.data))
    _dump(report)
    return 1 if report["errors"] else 0


# ------------------------------------------------------------------ parser


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return v


def _nonneg_int(text):
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError("must be nonnegative")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spgc", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    ops = sorted(OPERATORS)
    variants = [v.lower() for v in VARIANTS]

    p = sub.add_parser("prep", help="precompute and store the diffusion terms P^i X")
    p.add_argument("--data", required=True, help="dataset bundle directory")
    p.add_argument("--op", choices=ops, default="laplacian")
    p.add_argument("--k", type=_nonneg_int, required=True)
    p.add_argument("--out", help="cache file (default: $SPGC_CACHE_DIR/<name>__<op>__k<k>.spgc)")
    p.set_defaults(func=cmd_prep)

    p = sub.add_parser("train", help="train one hyperparameter setting over one or more seeds")
    p.add_argument("--data", required=True)
    p.add_argument("--variant", required=True, type=str.lower, choices=variants)
    p.add_argument("--op", choices=ops, help="default: per-variant operator")
    p.add_argument("--cache", help="precomputed cache file (built in memory otherwise)")
    p.add_argument("--k", type=_nonneg_int, default=2)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--wd", "--weight-decay", dest="wd", type=float, default=5e-4)
    p.add_argument("--dropout", type=float, default=0.0)
    p.add_argument("--epochs", type=_positive_int, default=500)
    p.add_argument("--patience", type=_positive_int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--runs", type=_positive_int, default=1)
    p.add_argument("--out", required=True)
    p.add_argument("--timing", action="store_true",
                   help="record per-epoch milliseconds (outputs are then not reproducible)")
    p.add_argument("--plot", action="store_true", help="also render PNG learning curves")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("gridsearch", help="grid search with repeated runs per cell")
    p.add_argument("--data", required=True)
    p.add_argument("--variant", required=True, type=str.lower, choices=variants)
    p.add_argument("--grid", help="grid file or bundled name (default: the dataset name)")
    p.add_argument("--protocol", choices=PROTOCOLS)
    p.add_argument("--op", choices=ops)
    p.add_argument("--runs", type=_positive_int, help="override n_runs from the grid")
    p.add_argument("--epochs", type=_positive_int, default=500)
    p.add_argument("--patience", type=_positive_int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=_positive_int, default=1)
    p.add_argument("--out", required=True)
    p.add_argument("--plot", action="store_true")
    p.set_defaults(func=cmd_gridsearch)

    p = sub.add_parser("coeffs", help="export the per-hop coefficient series of a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--cache", help="diffusion cache (required for hlgc)")
    p.add_argument("--out", required=True)
    p.add_argument("--plot", action="store_true")
    p.set_defaults(func=cmd_coeffs)

    p = sub.add_parser("bounds", help="evaluate a Rademacher or truncation bound")
    p.add_argument("--model", required=True, type=str.lower, choices=("lgc", "egc", "truncation"))
    for name in ("a", "b", "M", "lip", "l1"):
        p.add_argument(f"--{name}", type=float, default=1.0)
    p.add_argument("--L", type=_positive_int, default=1, help="sampling-set size")
    p.add_argument("--k", type=_nonneg_int)
    p.add_argument("--beta", type=float)
    p.add_argument("--spec-norm", dest="spec_norm", type=float)
    p.add_argument("--xtheta", type=float, help="||X Theta|| for the truncation bound")
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("oracle-check", help="run the randomized oracle suites")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--graphs", type=_positive_int, default=50)
    p.add_argument("--mc-samples", dest="mc_samples", type=_positive_int, default=200)
    p.add_argument("--out", help="write the JSON report here instead of stdout")
    p.set_defaults(func=cmd_oracle_check)

    p = sub.add_parser("validate", help="print diagnostics for a dataset bundle")
    p.add_argument("--data", required=True)
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, RuntimeError, IndexError) as exc:
        print(f"spgc {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
