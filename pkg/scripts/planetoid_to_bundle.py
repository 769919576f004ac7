#!/usr/bin/env python3
"""Convert the Planetoid citation files (ind.<name>.*) into a text bundle.

Usage:
    python scripts/planetoid_to_bundle.py RAW_DIR NAME OUT_DIR [--no-row-normalize]

RAW_DIR holds ind.<name>.{x,y,tx,ty,allx,ally,graph,test.index}. The split
is the standard one: the first |y| nodes train, the next 500 validate, and
the nodes listed in test.index test. Test indices missing from the file
(Citeseer has a few isolated ones) become all-zero feature rows that
belong to no split.

Needs scipy, because the feature matrices are pickled scipy.sparse objects.
"""

from __future__ import annotations

import argparse
import pickle
import sys
from pathlib import Path

import numpy as np
import scipy.sparse as sp  # noqa: F401 - required to unpickle the feature matrices

from spgc.data import DatasetBundle, save_dataset, validate_bundle
from spgc.graph import Graph

PARTS = ("x", "y", "tx", "ty", "allx", "ally", "graph")
N_VAL = 500


def _load(raw: Path, name: str, part: str):
    with open(raw / f"ind.{name}.{part}", "rb") as fh:
        return pickle.load(fh, encoding="latin1")


def _dense(m):
    return np.asarray(m.todense() if hasattr(m, "todense") else m, dtype=np.float64)


def convert(raw_dir, name: str, row_normalize: bool = True) -> DatasetBundle:
    raw = Path(raw_dir)
    x, y, tx, ty, allx, ally, graph = (_load(raw, name, p) for p in PARTS)
    test_index = np.loadtxt(raw / f"ind.{name}.test.index", dtype=np.int64).reshape(-1)
    test_sorted = np.sort(test_index)

    tx, ty = _dense(tx), np.asarray(ty, dtype=np.float64)
    lo, hi = int(test_sorted.min()), int(test_sorted.max())
    if hi - lo + 1 != tx.shape[0]:
        full_x = np.zeros((hi - lo + 1, tx.shape[1]))
        full_y = np.zeros((hi - lo + 1, ty.shape[1]))
        full_x[test_sorted - lo] = tx
        full_y[test_sorted - lo] = ty
        tx, ty = full_x, full_y

    feats = np.vstack([_dense(allx), tx])
    labels = np.vstack([np.asarray(ally, dtype=np.float64), ty])
    # the test rows are stored in sorted order; put them at their node ids
    feats[test_index] = feats[test_sorted]
    labels[test_index] = labels[test_sorted]
    n = feats.shape[0]
    if row_normalize:
        s = feats.sum(axis=1, keepdims=True)
        feats = np.divide(feats, s, out=np.zeros_like(feats), where=s != 0)
    y_int = np.where(labels.any(axis=1), labels.argmax(axis=1), 0).astype(np.int64)

    edges = [(u, v) for u, nbrs in graph.items() for v in nbrs if u < n and v < n]
    train = np.arange(len(y))
    val = np.arange(len(y), min(len(y) + N_VAL, n))
    val = np.setdiff1d(val, test_sorted)
    g = Graph(n, np.array(edges, dtype=np.int64).reshape(-1, 2), feats, y_int,
              train, val, test_sorted)
    note = f"Planetoid ind.{name}.* converted" + (", rows L1-normalized" if row_normalize else "")
    return DatasetBundle(name, g, int(labels.shape[1]), note)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("raw_dir")
    ap.add_argument("name")
    ap.add_argument("out_dir")
    ap.add_argument("--no-row-normalize", dest="row_normalize", action="store_false")
    args = ap.parse_args(argv)
    bundle = convert(args.raw_dir, args.name, args.row_normalize)
    save_dataset(bundle, args.out_dir)
    rep = validate_bundle(bundle)
    print(f"{bundle.name}: n={rep['n']} c={rep['c']} C={rep['C']} "
          f"directed edges={rep['directed_edges']} splits={rep['split_sizes']}")
    for w in rep["warnings"]:
        print(f"warning: {w}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
