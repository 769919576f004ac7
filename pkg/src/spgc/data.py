"""Plain-text dataset bundles.

A bundle is a directory with five UTF-8 files:

    edges.tsv      one ``u<TAB>v`` pair per line, 0-indexed
    features.csv   n rows of c comma-separated reals
    labels.txt     n integers, one per line
    splits.json    {"train": [...], "val": [...], "test": [...]}
    meta.json      {"name": ..., "n": ..., "c": ..., "C": ...}

Edges are symmetrized and deduplicated on load and self-loops dropped.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .graph import Graph

MAX_NODES = 250_000
FILES = ("edges.tsv", "features.csv", "labels.txt", "splits.json", "meta.json")


class BundleError(ValueError):
    """A dataset bundle failed validation."""


class MissingFileError(BundleError):
    pass


class IndexRangeError(BundleError):
    pass


class CountMismatchError(BundleError):
    pass


class SplitOverlapError(BundleError):
    def __init__(self, message, overlap):
        super().__init__(message)
        self.overlap = overlap


class OutOfScopeError(BundleError):
    pass


@dataclass(frozen=True, eq=False)
class DatasetBundle:
    name: str
    graph: Graph
    class_count: int
    provenance: str = ""

    def equals(self, other: "DatasetBundle") -> bool:
        a, b = self.graph, other.graph
        return (self.name == other.name and self.class_count == other.class_count
                and self.provenance == other.provenance and a.n == b.n
                and all(np.array_equal(getattr(a, f), getattr(b, f))
                        for f in ("edges", "x", "y", "train", "val", "test")))


def _read_lines(path: Path):
    with open(path, encoding="utf-8") as fh:
        return [ln for ln in fh.read().split("\n") if ln.strip()]


def _parse_edges(path: Path) -> np.ndarray:
    pairs = []
    for lineno, line in enumerate(_read_lines(path), 1):
        parts = line.split("\t")
        if len(parts) != 2:
            raise BundleError(f"{path.name}:{lineno}: expected 'u<TAB>v', got {line!r}")
        try:
            pairs.append((int(parts[0]), int(parts[1])))
        except ValueError:
            raise BundleError(f"{path.name}:{lineno}: non-integer node id in {line!r}") from None
    return np.array(pairs, dtype=np.int64).reshape(-1, 2)


def load_dataset(dir_path) -> DatasetBundle:
    """Read and validate a bundle directory.

    Raises:
        MissingFileError: a required file is absent.
        IndexRangeError: an edge endpoint, split index or label is out of range.
        CountMismatchError: row/label/feature counts disagree with meta.json.
        SplitOverlapError: a node appears in more than one split.
        OutOfScopeError: the graph exceeds the supported size.
    """
    root = Path(dir_path)
    missing = [f for f in FILES if not (root / f).is_file()]
    if missing:
        raise MissingFileError(f"{root}: missing {', '.join(missing)}")
    meta = json.loads((root / "meta.json").read_text(encoding="utf-8"))
    for key in ("name", "n", "c", "C"):
        if key not in meta:
            raise BundleError(f"meta.json lacks key {key!r}")
    n, c, n_classes = int(meta["n"]), int(meta["c"]), int(meta["C"])
    if n > MAX_NODES:
        raise OutOfScopeError(f"{meta['name']}: {n} nodes exceeds the {MAX_NODES}-node "
                              f"limit; graphs of this size (e.g. Reddit) are not supported")

    edges = _parse_edges(root / "edges.tsv")
    if edges.size and (edges.min() < 0 or edges.max() >= n):
        bad = edges[(edges < 0).any(axis=1) | (edges >= n).any(axis=1)][0]
        raise IndexRangeError(f"edges.tsv: edge {tuple(bad.tolist())} outside [0, {n})")

    feat_lines = _read_lines(root / "features.csv")
    if len(feat_lines) != n:
        raise CountMismatchError(f"features.csv has {len(feat_lines)} rows, meta says n={n}")
    cells = [ln.split(",") for ln in feat_lines]
    widths = sorted({len(row) for row in cells})
    if widths and widths != [c]:
        raise CountMismatchError(f"features.csv row widths {widths}, meta says c={c}")
    x = np.array([[float(v) for v in row] for row in cells], dtype=np.float64).reshape(n, c)

    labels = _read_lines(root / "labels.txt")
    if len(labels) != n:
        raise CountMismatchError(f"labels.txt has {len(labels)} entries, meta says n={n}")
    y = np.array([int(v) for v in labels], dtype=np.int64)

    splits = json.loads((root / "splits.json").read_text(encoding="utf-8"))
    masks = {}
    for key in ("train", "val", "test"):
        if key not in splits:
            raise BundleError(f"splits.json lacks key {key!r}")
        m = np.array(splits[key], dtype=np.int64).reshape(-1)
        if m.size and (m.min() < 0 or m.max() >= n):
            raise IndexRangeError(f"splits.json: {key} index outside [0, {n})")
        if np.unique(m).size != m.size:
            raise BundleError(f"splits.json: {key} repeats indices")
        masks[key] = m
    overlap = np.unique(np.concatenate([
        np.intersect1d(masks["train"], masks["val"]),
        np.intersect1d(masks["train"], masks["test"]),
        np.intersect1d(masks["val"], masks["test"]),
    ]))
    if overlap.size:
        raise SplitOverlapError(f"splits overlap at nodes {overlap.tolist()}", overlap.tolist())
    labeled = np.concatenate(list(masks.values()))
    if labeled.size and (y[labeled].min() < 0 or y[labeled].max() >= n_classes):
        raise IndexRangeError(f"labels.txt: labeled node with class outside [0, {n_classes})")
    if y.size and y.max() + 1 != n_classes:
        raise CountMismatchError(f"labels span {y.max() + 1} classes, meta says C={n_classes}")

    graph = Graph(n, edges, x, y, masks["train"], masks["val"], masks["test"])
    if "edges" in meta and int(meta["edges"]) != 2 * len(graph.edges):
        raise CountMismatchError(f"{2 * len(graph.edges)} directed edges after "
                                 f"symmetrization, meta says {meta['edges']}")
    return DatasetBundle(str(meta["name"]), graph, n_classes, str(meta.get("provenance", "")))


def save_dataset(bundle: DatasetBundle, dir_path) -> None:
    """Write a bundle; reals use the shortest repr that round-trips."""
    root = Path(dir_path)
    root.mkdir(parents=True, exist_ok=True)
    g = bundle.graph

    def write(name, text):
        with open(root / name, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)

    write("edges.tsv", "".join(f"{u}\t{v}\n" for u, v in g.edges.tolist()))
    write("features.csv", "".join(",".join(repr(v) for v in row) + "\n" for row in g.x.tolist()))
    write("labels.txt", "".join(f"{v}\n" for v in g.y.tolist()))
    write("splits.json", json.dumps({k: getattr(g, k).tolist() for k in ("train", "val", "test")})
          + "\n")
    meta = {"name": bundle.name, "n": g.n, "c": g.n_features, "C": bundle.class_count,
            "edges": 2 * len(g.edges)}
    if bundle.provenance:
        meta["provenance"] = bundle.provenance
    write("meta.json", json.dumps(meta, indent=2, sort_keys=True) + "\n")


def validate_bundle(bundle: DatasetBundle) -> dict:
    """Summary statistics and warnings; never modifies the bundle."""
    g = bundle.graph
    deg = g.degrees()
    warnings = []
    balance = {}
    for split in ("train", "val", "test"):
        m = g.mask(split)
        counts = np.bincount(g.y[m], minlength=bundle.class_count) if m.size else \
            np.zeros(bundle.class_count, dtype=int)
        balance[split] = counts.tolist()
        if m.size and (counts == 0).any():
            warnings.append(f"{split} split has no nodes of classes "
                            f"{np.flatnonzero(counts == 0).tolist()}")
    isolated = int((deg == 0).sum())
    if isolated:
        warnings.append(f"{isolated} isolated nodes")
    unlabeled = int(g.n - sum(g.mask(s).size for s in ("train", "val", "test")))
    return {
        "name": bundle.name,
        "n": g.n,
        "c": g.n_features,
        "C": bundle.class_count,
        "directed_edges": 2 * len(g.edges),
        "isolated_nodes": isolated,
        "feature_sparsity": float((g.x == 0).mean()) if g.x.size else 1.0,
        "split_sizes": {s: int(g.mask(s).size) for s in ("train", "val", "test")},
        "unsplit_nodes": unlabeled,
        "class_balance": balance,
        "errors": [],
        "warnings": warnings,
    }


def synthetic_bundle(n: int = 300, c: int = 16, n_classes: int = 3, seed: int = 0,
                     p_in: float = 0.05, p_out: float = 0.005, noise: float = 2.0,
                     split=(20, 50, 100)) -> DatasetBundle:
    """Planted-partition graph with weakly class-informative features.

    ``split`` gives train nodes per class, then validation and test totals.
    Useful for end-to-end runs when no real bundle is available.
    """
    rng = np.random.default_rng(seed)
    y = rng.integers(0, n_classes, size=n)
    y[:n_classes] = np.arange(n_classes)
    iu, ju = np.triu_indices(n, 1)
    prob = np.where(y[iu] == y[ju], p_in, p_out)
    keep = rng.random(iu.size) < prob
    centers = rng.standard_normal((n_classes, c))
    x = centers[y] + noise * rng.standard_normal((n, c))
    order = rng.permutation(n)
    per_class, n_val, n_test = split
    train = np.concatenate([order[y[order] == k][:per_class] for k in range(n_classes)])
    rest = order[~np.isin(order, train)]
    if rest.size < n_val + n_test:
        raise ValueError("graph too small for the requested split")
    graph = Graph(n, np.stack([iu[keep], ju[keep]], axis=1), x, y,
                  np.sort(train), np.sort(rest[:n_val]), np.sort(rest[n_val:n_val + n_test]))
    return DatasetBundle(f"synthetic{seed}", graph, n_classes, "planted partition, generated")
