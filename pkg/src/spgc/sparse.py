"""Compressed sparse row matrices and the sparse-dense product.

Only what the propagation operators need: construction from coordinates,
a deterministic sparse-dense product, the induced 1-norm and a power
iteration estimate of the spectral norm.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np


class _Counter:
    """Process-wide count of sparse-dense products."""

    def __init__(self):
        self._lock = threading.Lock()
        self.value = 0

    def bump(self):
        with self._lock:
            self.value += 1


SPMM_CALLS = _Counter()


def spmm_count() -> int:
    """Number of `spmm` calls made so far in this process."""
    return SPMM_CALLS.value


@dataclass(frozen=True, eq=False)
class SparseMatrix:
    """Real matrix in canonical CSR form (sorted columns, no stored zeros)."""

    n_rows: int
    n_cols: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        for name in ("row_offsets", "col_indices", "values"):
            getattr(self, name).setflags(write=False)

    @classmethod
    def from_coo(cls, n_rows, n_cols, rows, cols, vals) -> "SparseMatrix":
        """Build a canonical matrix from coordinate triplets.

        Duplicate coordinates are summed and resulting zeros dropped.
        """
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.float64)
        if not (rows.shape == cols.shape == vals.shape):
            raise ValueError("rows, cols and vals must have equal length")
        if rows.size and (rows.min() < 0 or rows.max() >= n_rows
                          or cols.min() < 0 or cols.max() >= n_cols):
            raise ValueError("coordinate out of range")
        order = np.lexsort((cols, rows))
        rows, cols, vals = rows[order], cols[order], vals[order]
        if rows.size:
            new = np.ones(rows.size, dtype=bool)
            new[1:] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
            starts = np.flatnonzero(new)
            vals = np.add.reduceat(vals, starts)
            rows, cols = rows[starts], cols[starts]
            keep = vals != 0.0
            rows, cols, vals = rows[keep], cols[keep], vals[keep]
        offsets = np.zeros(n_rows + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=n_rows), out=offsets[1:])
        return cls(int(n_rows), int(n_cols), offsets, cols, vals)

    @classmethod
    def from_dense(cls, m) -> "SparseMatrix":
        m = np.asarray(m, dtype=np.float64)
        rows, cols = np.nonzero(m)
        return cls.from_coo(m.shape[0], m.shape[1], rows, cols, m[rows, cols])

    @classmethod
    def identity(cls, n: int) -> "SparseMatrix":
        idx = np.arange(n)
        return cls.from_coo(n, n, idx, idx, np.ones(n))

    @property
    def shape(self):
        return (self.n_rows, self.n_cols)

    @property
    def nnz(self) -> int:
        return int(self.row_offsets[-1])

    def row_ids(self) -> np.ndarray:
        """Row index of every stored entry."""
        return np.repeat(np.arange(self.n_rows), np.diff(self.row_offsets))

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.shape)
        out[self.row_ids(), self.col_indices] = self.values
        return out

    def transpose(self) -> "SparseMatrix":
        return SparseMatrix.from_coo(self.n_cols, self.n_rows, self.col_indices,
                                     self.row_ids(), self.values)

    def diagonal(self) -> np.ndarray:
        d = np.zeros(min(self.shape))
        r = self.row_ids()
        on = r == self.col_indices
        d[r[on]] = self.values[on]
        return d

    def max_asymmetry(self) -> float:
        """Largest |m_ij - m_ji| over all entries."""
        if self.n_rows != self.n_cols:
            raise ValueError("matrix is not square")
        diff = _combine(self, self.transpose(), -1.0)
        return float(np.abs(diff.values).max()) if diff.nnz else 0.0

    def scaled(self, left=None, right=None) -> "SparseMatrix":
        """Return diag(left) @ self @ diag(right); either side may be None."""
        vals = self.values.copy()
        if left is not None:
            vals *= np.asarray(left)[self.row_ids()]
        if right is not None:
            vals *= np.asarray(right)[self.col_indices]
        return SparseMatrix.from_coo(self.n_rows, self.n_cols, self.row_ids(),
                                     self.col_indices, vals)

    def __add__(self, other: "SparseMatrix") -> "SparseMatrix":
        return _combine(self, other, 1.0)

    def __sub__(self, other: "SparseMatrix") -> "SparseMatrix":
        return _combine(self, other, -1.0)

    def equals(self, other: "SparseMatrix") -> bool:
        """Exact structural and numerical equality."""
        return (self.shape == other.shape
                and np.array_equal(self.row_offsets, other.row_offsets)
                and np.array_equal(self.col_indices, other.col_indices)
                and np.array_equal(self.values, other.values))


def _combine(a: SparseMatrix, b: SparseMatrix, sign: float) -> SparseMatrix:
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    rows = np.concatenate([a.row_ids(), b.row_ids()])
    cols = np.concatenate([a.col_indices, b.col_indices])
    vals = np.concatenate([a.values, sign * b.values])
    return SparseMatrix.from_coo(a.n_rows, a.n_cols, rows, cols, vals)


def spmm(m: SparseMatrix, x) -> np.ndarray:
    """Sparse-dense product ``m @ x``.

    Each output row is accumulated over the row's stored entries in
    increasing column order, one entry position at a time across all rows,
    so the result does not depend on threading or BLAS.

    Args:
        m: sparse left operand, shape (r, n).
        x: dense right operand, shape (n,) or (n, c).

    Returns:
        Dense array of shape (r,) or (r, c).
    """
    x = np.asarray(x, dtype=np.float64)
    vector = x.ndim == 1
    if vector:
        x = x[:, None]
    if x.ndim != 2 or x.shape[0] != m.n_cols:
        raise ValueError(f"cannot multiply {m.shape} sparse matrix by array of shape {x.shape}")
    SPMM_CALLS.bump()
    out = np.zeros((m.n_rows, x.shape[1]))
    counts = np.diff(m.row_offsets)
    starts = m.row_offsets[:-1]
    width = int(counts.max()) if m.n_rows else 0
    for pos in range(width):
        rows = np.flatnonzero(counts > pos)
        idx = starts[rows] + pos
        out[rows] += m.values[idx, None] * x[m.col_indices[idx]]
    return out[:, 0] if vector else out


def matrix_one_norm(m: SparseMatrix) -> float:
    """Maximum absolute column sum."""
    if m.nnz == 0:
        return 0.0
    sums = np.bincount(m.col_indices, weights=np.abs(m.values), minlength=m.n_cols)
    return float(sums.max())


@dataclass(frozen=True)
class NormEstimate:
    value: float
    iterations: int
    converged: bool

    def __float__(self):
        return self.value


def spectral_norm_estimate(m: SparseMatrix, iters: int = 1000, seed: int = 0,
                           rtol: float = 1e-9) -> NormEstimate:
    """Power-iteration estimate of the largest |eigenvalue| of a symmetric matrix.

    Converges to the spectral radius even when +lambda and -lambda are both
    extremal. Returns the estimate together with whether the relative change
    dropped below ``rtol`` before ``iters`` ran out.
    """
    if m.n_rows != m.n_cols:
        raise ValueError("matrix must be square")
    if m.nnz == 0:
        return NormEstimate(0.0, 0, True)
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(m.n_rows)
    v /= np.linalg.norm(v)
    est = 0.0
    for it in range(1, iters + 1):
        # iterate on m^2, whose top eigenvalue lambda_max^2 is never split by sign
        w = spmm(m, spmm(m, v))
        nw = float(np.linalg.norm(w))
        if nw == 0.0:
            return NormEstimate(0.0, it, True)
        new = float(np.sqrt(nw))
        v = w / nw
        if abs(new - est) <= rtol * new:
            return NormEstimate(new, it, True)
        est = new
    return NormEstimate(est, iters, False)
