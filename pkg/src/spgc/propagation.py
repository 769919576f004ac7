"""Precomputed diffusion sequences P^i X.

Every model in the package reads its inputs from a `DiffusionCache`; the
sparse products happen once here, never inside a training epoch.
"""

from __future__ import annotations

import os
import struct
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .graph import OPERATORS, Graph
from .sparse import SparseMatrix, spmm

MAGIC = b"SPGC1"
_KIND_CODES = {"laplacian": 0, "renormalized_adjacency": 1, "normalized_adjacency": 2,
               "custom": 255}
_HEADER = struct.Struct("<5sBQQQ")


@dataclass(frozen=True)
class PropagationOperator:
    kind: str
    matrix: SparseMatrix

    def __post_init__(self):
        if self.kind not in _KIND_CODES:
            raise ValueError(f"unknown operator kind {self.kind!r}")
        if self.matrix.n_rows != self.matrix.n_cols:
            raise ValueError("propagation operator must be square")
        if self.matrix.max_asymmetry() != 0.0:
            raise ValueError("propagation operator must be symmetric")

    @classmethod
    def for_graph(cls, g: Graph, kind: str) -> "PropagationOperator":
        try:
            build = OPERATORS[kind]
        except KeyError:
            raise ValueError(f"unknown operator kind {kind!r}; "
                             f"choose from {sorted(OPERATORS)}") from None
        return cls(kind, build(g))


@dataclass(frozen=True, eq=False)
class DiffusionCache:
    """terms[i] = P^i X for i = 0..k."""

    operator_kind: str
    terms: tuple
    build_seconds: float = 0.0

    @property
    def k(self) -> int:
        return len(self.terms) - 1

    @property
    def n(self) -> int:
        return self.terms[0].shape[0]

    @property
    def feature_dim(self) -> int:
        return self.terms[0].shape[1]

    def equals(self, other: "DiffusionCache") -> bool:
        return (self.operator_kind == other.operator_kind and self.k == other.k
                and all(np.array_equal(a, b) for a, b in zip(self.terms, other.terms)))


BUILD_COUNT = [0]


def build_diffusion_cache(p: PropagationOperator, x, k: int) -> DiffusionCache:
    """Compute X, PX, ..., P^k X by repeated sparse products."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    x = np.array(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != p.matrix.n_cols:
        raise ValueError(f"features of shape {x.shape} do not match operator {p.matrix.shape}")
    t0 = time.perf_counter()
    terms = [x]
    for _ in range(k):
        terms.append(spmm(p.matrix, terms[-1]))
    for t in terms:
        t.setflags(write=False)
    BUILD_COUNT[0] += 1
    return DiffusionCache(p.kind, tuple(terms), time.perf_counter() - t0)


def propagated(cache: DiffusionCache, i: int) -> np.ndarray:
    if not 0 <= i <= cache.k:
        raise IndexError(f"hop {i} outside cache range 0..{cache.k}")
    return cache.terms[i]


def save_cache(cache: DiffusionCache, path) -> None:
    """Write the cache as header + row-major little-endian float64 terms."""
    n, c = cache.terms[0].shape
    header = _HEADER.pack(MAGIC, _KIND_CODES[cache.operator_kind], n, c, cache.k)
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(header)
        for t in cache.terms:
            fh.write(np.ascontiguousarray(t, dtype="<f8").tobytes())
    os.replace(tmp, path)


def load_cache(path) -> DiffusionCache:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated cache header")
    magic, code, n, c, k = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ValueError(f"{path}: not a diffusion cache (magic {magic!r})")
    kinds = {v: key for key, v in _KIND_CODES.items()}
    if code not in kinds:
        raise ValueError(f"{path}: unknown operator code {code}")
    expected = _HEADER.size + 8 * n * c * (k + 1)
    if len(raw) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, found {len(raw)}")
    data = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).astype(np.float64)
    terms = tuple(t.reshape(n, c) for t in np.split(data, k + 1))
    for t in terms:
        t.setflags(write=False)
    return DiffusionCache(kinds[code], terms)


def cache_dir(default=None) -> Path | None:
    env = os.environ.get("SPGC_CACHE_DIR")
    if env:
        return Path(env)
    return Path(default) if default is not None else None


def cached_diffusion(graph: Graph, kind: str, k: int, dataset_id: str | None = None,
                     directory=None) -> DiffusionCache:
    """Load the (dataset, operator, k) cache from ``directory`` or build and store it.

    Without a directory (or dataset id) the cache is built in memory only.
    """
    if directory is None or dataset_id is None:
        return build_diffusion_cache(PropagationOperator.for_graph(graph, kind), graph.x, k)
    directory = Path(directory)
    path = directory / f"{dataset_id}__{kind}__k{k}.spgc"
    if path.exists():
        cache = load_cache(path)
        if cache.n == graph.n and cache.feature_dim == graph.n_features:
            return cache
    cache = build_diffusion_cache(PropagationOperator.for_graph(graph, kind), graph.x, k)
    directory.mkdir(parents=True, exist_ok=True)
    save_cache(cache, path)
    return cache
