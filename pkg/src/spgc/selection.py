"""Hyperparameter grid search with repeated runs and two selection protocols.

``validated`` picks the cell with the best mean validation accuracy.
``test_selected`` picks the cell with the best mean test accuracy; its
number is an optimistic upper bound and the report is flagged biased.
"""

from __future__ import annotations

import csv
import hashlib
import itertools
import json
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .graph import Graph
from .models import DEFAULT_OPERATOR, normalize_variant
from .propagation import cached_diffusion
from .training import TrainConfig, train

PROTOCOLS = ("validated", "test_selected")
_LIST_KEYS = ("learning_rate", "weight_decay", "dropout", "k", "hidden")
_ALIASES = {"lr": "learning_rate", "wd": "weight_decay", "drop_out": "dropout",
            "runs": "n_runs", "#hidden": "hidden"}


def hash64(*parts: int) -> int:
    """Stable unsigned 64-bit hash of a tuple of integers."""
    data = b"".join(struct.pack("<Q", int(p) & 0xFFFFFFFFFFFFFFFF) for p in parts)
    return int.from_bytes(hashlib.blake2b(data, digest_size=8).digest(), "little")


def run_seed(base_seed: int, cell: int, run: int) -> int:
    return hash64(base_seed, cell, run)


@dataclass(frozen=True)
class GridSpec:
    learning_rate: tuple
    weight_decay: tuple
    dropout: tuple
    k: tuple
    hidden: tuple = (0,)
    n_runs: int = 5
    protocol: str = "validated"
    operator: str | None = None

    def __post_init__(self):
        for key in _LIST_KEYS:
            if not getattr(self, key):
                raise ValueError(f"grid list {key!r} is empty")
        if self.n_runs < 1:
            raise ValueError("n_runs must be at least 1")
        if self.protocol not in PROTOCOLS:
            raise ValueError(f"protocol must be one of {PROTOCOLS}")

    def cells(self):
        """(k, learning_rate, weight_decay, dropout) tuples in cell-index order.

        ``hidden`` does not enter the product: none of the single-layer
        models has a hidden layer.
        """
        return list(itertools.product(self.k, self.learning_rate,
                                      self.weight_decay, self.dropout))


def _dedupe(values):
    out = []
    for v in values:
        if v not in out:
            out.append(v)
    return tuple(out)


def parse_grid(text: str) -> GridSpec:
    """Parse ``key = v1, v2, ...`` lines; '#' starts a comment.

    Trailing commas and repeated values are tolerated (duplicates dropped).
    """
    fields = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line and ":" not in line:
            raise ValueError(f"grid line {lineno}: expected 'key = values', got {raw!r}")
        key, _, rest = line.partition("=") if "=" in line else line.partition(":")
        key = key.strip().lower()
        key = _ALIASES.get(key, key)
        items = [v.strip() for v in rest.split(",") if v.strip()]
        if key in _LIST_KEYS:
            conv = int if key in ("k", "hidden") else float
            try:
                fields[key] = _dedupe(conv(v) for v in items)
            except ValueError:
                raise ValueError(f"grid line {lineno}: bad value in {raw!r}") from None
        elif key == "n_runs":
            fields[key] = int(items[0])
        elif key in ("protocol", "operator"):
            fields[key] = items[0]
        else:
            raise ValueError(f"grid line {lineno}: unknown key {key!r}")
    missing = [k for k in ("learning_rate", "weight_decay", "dropout", "k") if k not in fields]
    if missing:
        raise ValueError(f"grid lacks {', '.join(missing)}")
    return GridSpec(**fields)


def load_grid(path_or_name) -> GridSpec:
    """Read a grid file, or one of the bundled grids by dataset name."""
    p = Path(path_or_name)
    if not p.exists():
        bundled = Path(__file__).parent / "grids" / f"{str(path_or_name).lower()}.grid"
        if not bundled.exists():
            raise FileNotFoundError(f"no grid file {path_or_name!r}")
        p = bundled
    return parse_grid(p.read_text(encoding="utf-8"))


def aggregate_runs(accuracies):
    """Arithmetic mean and population standard deviation."""
    a = np.asarray(accuracies, dtype=np.float64)
    if a.size == 0:
        raise ValueError("no accuracies to aggregate")
    # shift by a sample so equal runs give exactly (value, 0)
    d = a - a[0]
    dm = d.mean()
    return float(a[0] + dm), float(np.sqrt(np.mean((d - dm) ** 2)))


@dataclass
class RunResult:
    cell: int
    run: int
    seed: int
    val_acc: float
    test_acc: float
    best_epoch: int
    epochs: int
    error: str | None = None


@dataclass
class CellResult:
    index: int
    k: int
    learning_rate: float
    weight_decay: float
    dropout: float
    runs: list = field(default_factory=list)

    @property
    def failed(self) -> bool:
        return any(r.error for r in self.runs) or not self.runs

    @property
    def val(self):
        return aggregate_runs([r.val_acc for r in self.runs])

    @property
    def test(self):
        return aggregate_runs([r.test_acc for r in self.runs])

    def hyperparams(self) -> dict:
        return {"k": self.k, "learning_rate": self.learning_rate,
                "weight_decay": self.weight_decay, "dropout": self.dropout}


@dataclass
class SelectionReport:
    variant: str
    protocol: str
    operator: str
    cells: list
    validated_cell: int | None
    test_selected_cell: int | None

    @property
    def chosen_cell(self) -> int | None:
        return self.validated_cell if self.protocol == "validated" else self.test_selected_cell

    @property
    def biased(self) -> bool:
        return self.protocol == "test_selected"

    def accuracy(self, protocol: str | None = None):
        """(mean, std) test accuracy of the cell chosen under ``protocol``."""
        idx = self.validated_cell if (protocol or self.protocol) == "validated" \
            else self.test_selected_cell
        if idx is None:
            raise RuntimeError("every grid cell failed")
        return self.cells[idx].test

    def summary(self) -> dict:
        out = {"variant": self.variant, "protocol": self.protocol, "biased": self.biased,
               "operator": self.operator, "n_cells": len(self.cells),
               "failed_cells": [c.index for c in self.cells if c.failed]}
        if self.chosen_cell is not None:
            cell = self.cells[self.chosen_cell]
            out["chosen_cell"] = cell.index
            out["hyperparameters"] = cell.hyperparams()
            out["val_mean"], out["val_std"] = cell.val
            out["test_mean"], out["test_std"] = cell.test
            out["seeds"] = [r.seed for r in cell.runs]
        if self.biased:
            out["note"] = ("hyperparameters chosen on the test set; the accuracy is an "
                           "optimistic upper bound, not an unbiased estimate")
        return out


def _pick(cells, key):
    best, best_val = None, -np.inf
    for c in cells:
        if c.failed:
            continue
        v = key(c)
        if v > best_val:
            best, best_val = c.index, v
    return best


def grid_search(variant, graph: Graph, grid: GridSpec, base_seed: int = 0,
                operator: str | None = None, max_epochs: int = 500, patience: int = 100,
                workers: int = 1, dataset_id: str | None = None,
                cache_dir=None) -> SelectionReport:
    """Train ``grid.n_runs`` seeds per cell and select a cell.

    One diffusion cache is built per distinct k and shared by every cell and
    run using it. A run that raises marks its cell failed; selection uses
    the remaining cells.
    """
    variant = normalize_variant(variant)
    operator = operator or grid.operator or DEFAULT_OPERATOR[variant]
    cells = [CellResult(i, k, lr, wd, dr) for i, (k, lr, wd, dr) in enumerate(grid.cells())]
    for k in grid.k:
        group = [c for c in cells if c.k == k]
        try:
            cache = cached_diffusion(graph, operator, k, dataset_id, cache_dir)
        except Exception as exc:  # noqa: BLE001 - recorded on every affected cell
            for c in group:
                c.runs = [RunResult(c.index, r, run_seed(base_seed, c.index, r), np.nan,
                                    np.nan, 0, 0, f"cache build failed: {exc}")
                          for r in range(grid.n_runs)]
            continue

        def one(job, cache=cache):
            cell, r = job
            seed = run_seed(base_seed, cell.index, r)
            cfg = TrainConfig(cell.learning_rate, cell.weight_decay, cell.dropout,
                              max_epochs, patience, seed)
            try:
                rep = train(variant, cache, graph, cfg)
            except Exception as exc:  # noqa: BLE001
                return RunResult(cell.index, r, seed, np.nan, np.nan, 0, 0, repr(exc))
            return RunResult(cell.index, r, seed, rep.best_val_acc, rep.test_acc_at_best,
                             rep.best_epoch, rep.epochs_run)

        jobs = [(c, r) for c in group for r in range(grid.n_runs)]
        if workers > 1:
            with ThreadPoolExecutor(workers) as pool:
                results = list(pool.map(one, jobs))
        else:
            results = [one(j) for j in jobs]
        for res in results:
            cells[res.cell].runs.append(res)
        del cache
    for c in cells:
        c.runs.sort(key=lambda r: r.run)
    return SelectionReport(variant, grid.protocol, operator, cells,
                           _pick(cells, lambda c: c.val[0]),
                           _pick(cells, lambda c: c.test[0]))


REPORT_FIELDS = ("row", "cell", "k", "learning_rate", "weight_decay", "dropout", "run",
                 "seed", "val_acc", "test_acc", "val_std", "test_std", "best_epoch",
                 "epochs", "status")


def write_report(report: SelectionReport, out_dir) -> tuple:
    """Write ``cells.csv`` (per run + per cell aggregate) and ``selection.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path, json_path = out / "cells.csv", out / "selection.json"
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_FIELDS)
        for c in report.cells:
            hp = [c.k, repr(c.learning_rate), repr(c.weight_decay), repr(c.dropout)]
            for r in c.runs:
                w.writerow(["run", c.index, *hp, r.run, r.seed, repr(r.val_acc),
                            repr(r.test_acc), "", "", r.best_epoch, r.epochs,
                            "failed: " + r.error if r.error else "ok"])
            if c.failed:
                w.writerow(["aggregate", c.index, *hp, "", "", "", "", "", "", "", "", "failed"])
            else:
                (vm, vs), (tm, ts) = c.val, c.test
                w.writerow(["aggregate", c.index, *hp, "", "", repr(vm), repr(tm), repr(vs),
                            repr(ts), "", "", "ok"])
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(report.summary(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return csv_path, json_path
