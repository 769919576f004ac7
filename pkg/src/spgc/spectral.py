"""Dense spectral machinery for small graphs.

Used as ground truth for the sparse, spatial-domain code paths, so it relies
on nothing but elementwise numpy: the eigensolver is a cyclic Jacobi method
that applies n/2 disjoint rotations per round (round-robin pairing).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MAX_ORACLE_NODES = 2000


@dataclass(frozen=True, eq=False)
class SpectralDecomposition:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    sweeps: int = 0

    @property
    def n(self) -> int:
        return self.eigenvalues.size

    def reconstruct(self) -> np.ndarray:
        u = self.eigenvectors
        return (u * self.eigenvalues) @ u.T


def _round_robin(n: int):
    """Yield arrays (p, q) of disjoint pairs covering every pair once per sweep."""
    m = n + (n % 2)
    players = list(range(m))
    for _ in range(m - 1):
        p, q = [], []
        for i in range(m // 2):
            a, b = players[i], players[m - 1 - i]
            if a < n and b < n:
                p.append(min(a, b))
                q.append(max(a, b))
        yield np.array(p, dtype=np.int64), np.array(q, dtype=np.int64)
        players = [players[0], players[-1]] + players[1:-1]


def dense_eigendecomposition(m, tol: float = 1e-12, max_sweeps: int = 100,
                             symmetry_tol: float = 1e-12) -> SpectralDecomposition:
    """Eigenvalues (ascending) and orthonormal eigenvectors of a symmetric matrix.

    Args:
        m: dense symmetric matrix, at most `MAX_ORACLE_NODES` rows.
        tol: stop once the off-diagonal Frobenius mass is at most
            ``tol * max(1, ||m||_F)``.
        max_sweeps: safety cap on full Jacobi sweeps.
        symmetry_tol: largest tolerated |m_ij - m_ji|.
    """
    a = np.array(m, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("matrix must be square")
    n = a.shape[0]
    if n > MAX_ORACLE_NODES:
        raise ValueError(f"dense oracle limited to n <= {MAX_ORACLE_NODES}, got {n}")
    if n and np.abs(a - a.T).max() > symmetry_tol:
        raise ValueError("matrix is not symmetric")
    a = 0.5 * (a + a.T)
    v = np.eye(n)
    scale = max(1.0, float(np.linalg.norm(a)))
    sweeps = 0
    while sweeps < max_sweeps:
        offdiag = a - np.diag(np.diag(a))
        off = np.sqrt(np.sum(offdiag * offdiag))
        if off <= tol * scale:
            break
        sweeps += 1
        for p, q in _round_robin(n):
            apq = a[p, q]
            active = np.abs(apq) > 1e-150
            if not active.any():
                continue
            p, q, apq = p[active], q[active], apq[active]
            tau = (a[q, q] - a[p, p]) / (2.0 * apq)
            t = np.where(tau >= 0, 1.0, -1.0) / (np.abs(tau) + np.sqrt(1.0 + tau * tau))
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = t * c
            # a <- J^T a J with J = [[c, s], [-s, c]] on each (p, q) block
            ap, aq = a[:, p].copy(), a[:, q].copy()
            a[:, p] = c * ap - s * aq
            a[:, q] = s * ap + c * aq
            ap, aq = a[p, :].copy(), a[q, :].copy()
            a[p, :] = c[:, None] * ap - s[:, None] * aq
            a[q, :] = s[:, None] * ap + c[:, None] * aq
            a[p, q] = 0.0
            a[q, p] = 0.0
            vp, vq = v[:, p].copy(), v[:, q].copy()
            v[:, p] = c * vp - s * vq
            v[:, q] = s * vp + c * vq
    evals = np.diag(a).copy()
    order = np.argsort(evals, kind="stable")
    return SpectralDecomposition(evals[order], v[:, order], sweeps)


def _check_rows(dec: SpectralDecomposition, x):
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] != dec.n:
        raise ValueError(f"signal has {x.shape[0]} rows, decomposition has {dec.n}")
    return x


def graph_fourier(dec: SpectralDecomposition, x) -> np.ndarray:
    return dec.eigenvectors.T @ _check_rows(dec, x)


def inverse_graph_fourier(dec: SpectralDecomposition, coeffs) -> np.ndarray:
    return dec.eigenvectors @ _check_rows(dec, coeffs)


def spectral_response(dec: SpectralDecomposition, theta) -> np.ndarray:
    """sum_i theta_i lambda^i evaluated at every eigenvalue."""
    lam = dec.eigenvalues
    out = np.zeros_like(lam)
    power = np.ones_like(lam)
    for th in np.asarray(theta, dtype=np.float64):
        out += th * power
        power = power * lam
    return out


def spectral_polynomial_filter(dec: SpectralDecomposition, theta, x) -> np.ndarray:
    """U diag(sum_i theta_i lambda^i) U^T x."""
    xh = graph_fourier(dec, x)
    resp = spectral_response(dec, theta)
    scaled = resp[:, None] * xh if xh.ndim == 2 else resp * xh
    return inverse_graph_fourier(dec, scaled)


def dense_matrix_exponential(dec: SpectralDecomposition, beta: float) -> np.ndarray:
    """U diag(exp(beta lambda)) U^T."""
    u = dec.eigenvectors
    return (u * np.exp(beta * dec.eigenvalues)) @ u.T
