"""Undirected attributed graphs and the propagation matrices built from them."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .sparse import SparseMatrix


def canonical_edges(edges, n: int) -> np.ndarray:
    """Sort, deduplicate and orient edge pairs as (u, v) with u < v.

    Self-loops are dropped; (u, v) and (v, u) collapse to one edge.
    """
    e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if e.size and (e.min() < 0 or e.max() >= n):
        raise ValueError(f"edge endpoint outside [0, {n})")
    e = e[e[:, 0] != e[:, 1]]
    e = np.sort(e, axis=1)
    if e.size == 0:
        return np.zeros((0, 2), dtype=np.int64)
    return np.unique(e, axis=0)


@dataclass(frozen=True, eq=False)
class Graph:
    """Node-classification instance: topology, features, labels and splits.

    ``edges`` holds each undirected edge once as a sorted (u, v) pair with
    u < v. The three masks are index arrays into [0, n).
    """

    n: int
    edges: np.ndarray
    x: np.ndarray
    y: np.ndarray
    train: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    val: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    test: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __post_init__(self):
        n = int(self.n)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "edges", canonical_edges(self.edges, n))
        x = np.array(self.x, dtype=np.float64)
        if x.ndim != 2 or x.shape[0] != n:
            raise ValueError(f"features must be an {n} x c matrix, got shape {x.shape}")
        y = np.array(self.y, dtype=np.int64).reshape(-1)
        if y.shape[0] != n:
            raise ValueError(f"expected {n} labels, got {y.shape[0]}")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        masks = {}
        for name in ("train", "val", "test"):
            m = np.array(getattr(self, name), dtype=np.int64).reshape(-1)
            if m.size and (m.min() < 0 or m.max() >= n):
                raise ValueError(f"{name} mask has indices outside [0, {n})")
            if np.unique(m).size != m.size:
                raise ValueError(f"{name} mask contains repeated indices")
            masks[name] = m
        for a, b in (("train", "val"), ("train", "test"), ("val", "test")):
            both = np.intersect1d(masks[a], masks[b])
            if both.size:
                raise ValueError(f"{a} and {b} masks overlap at {both.tolist()}")
        labeled = np.concatenate(list(masks.values()))
        if labeled.size and y[labeled].min() < 0:
            raise ValueError("labeled node with negative class")
        for name, m in masks.items():
            m.setflags(write=False)
            object.__setattr__(self, name, m)
        for a in (self.edges, x, y):
            a.setflags(write=False)

    @property
    def n_features(self) -> int:
        return self.x.shape[1]

    @property
    def n_classes(self) -> int:
        return int(self.y.max()) + 1 if self.n else 0

    def mask(self, name: str) -> np.ndarray:
        return getattr(self, name)

    def degrees(self) -> np.ndarray:
        return np.bincount(self.edges.reshape(-1), minlength=self.n).astype(np.float64)


def adjacency(g: Graph) -> SparseMatrix:
    """Symmetric 0/1 adjacency matrix with zero diagonal."""
    u, v = g.edges[:, 0], g.edges[:, 1]
    rows = np.concatenate([u, v])
    cols = np.concatenate([v, u])
    return SparseMatrix.from_coo(g.n, g.n, rows, cols, np.ones(rows.size))


def _sym_normalize(a: SparseMatrix, d: np.ndarray) -> SparseMatrix:
    """a_ij / sqrt(d_i d_j); entries touching a zero-degree node become 0.

    One rounding on the product keeps the result exactly symmetric and
    gives exact values such as 1/2 or 1/3 on regular graphs.
    """
    rows, cols = a.row_ids(), a.col_indices
    prod = d[rows] * d[cols]
    vals = np.zeros_like(a.values)
    pos = prod > 0
    vals[pos] = a.values[pos] / np.sqrt(prod[pos])
    return SparseMatrix.from_coo(a.n_rows, a.n_cols, rows, cols, vals)


def normalized_adjacency(g: Graph) -> SparseMatrix:
    """D^-1/2 A D^-1/2."""
    return _sym_normalize(adjacency(g), g.degrees())


def normalized_laplacian(g: Graph) -> SparseMatrix:
    """I - D^-1/2 A D^-1/2; isolated nodes keep an identity row."""
    return SparseMatrix.identity(g.n) - normalized_adjacency(g)


def renormalized_adjacency(g: Graph) -> SparseMatrix:
    """D~^-1/2 (A + I) D~^-1/2 with D~ the degree matrix of A + I."""
    a_tilde = adjacency(g) + SparseMatrix.identity(g.n)
    return _sym_normalize(a_tilde, g.degrees() + 1.0)


OPERATORS = {
    "laplacian": normalized_laplacian,
    "renormalized_adjacency": renormalized_adjacency,
    "normalized_adjacency": normalized_adjacency,
}


def random_graph(n: int, p: float, c: int, rng, n_classes: int = 2) -> Graph:
    """Erdos-Renyi graph with Gaussian features; handy for checks and demos."""
    iu, ju = np.triu_indices(n, 1)
    keep = rng.random(iu.size) < p
    x = rng.standard_normal((n, c))
    y = rng.integers(0, n_classes, size=n)
    return Graph(n, np.stack([iu[keep], ju[keep]], axis=1), x, y)
