import math

import numpy as np
import pytest

from oracles import dense_laplacian
from spgc.checks import spectral_equivalence_suite
from spgc.graph import Graph, random_graph
from spgc.spectral import (MAX_ORACLE_NODES, dense_eigendecomposition, dense_matrix_exponential,
                           graph_fourier, inverse_graph_fourier, spectral_polynomial_filter)


def _lap(g):
    return dense_laplacian(g.n, g.edges)


def test_identity_eigenvalues():
    dec = dense_eigendecomposition(np.eye(3))
    assert np.array_equal(dec.eigenvalues, [1.0, 1.0, 1.0])


def test_triangle_laplacian_spectrum(triangle):
    dec = dense_eigendecomposition(_lap(triangle))
    assert np.allclose(dec.eigenvalues, [0.0, 1.5, 1.5], rtol=0, atol=1e-14)


def test_path_reconstruction():
    g = Graph(4, [(0, 1), (1, 2), (2, 3)], np.ones((4, 1)), np.zeros(4, dtype=int))
    lap = _lap(g)
    dec = dense_eigendecomposition(lap)
    assert np.abs(dec.reconstruct() - lap).max() <= 1e-9
    assert np.abs(dec.eigenvectors.T @ dec.eigenvectors - np.eye(4)).max() <= 1e-10


def test_rejects_asymmetric_and_oversized():
    with pytest.raises(ValueError):
        dense_eigendecomposition(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(ValueError):
        dense_eigendecomposition(np.zeros((MAX_ORACLE_NODES + 1, MAX_ORACLE_NODES + 1)))


def test_random_symmetric_residuals():
    rng = np.random.default_rng(0)
    for n in (1, 2, 5, 17, 40):
        m = rng.standard_normal((n, n))
        m = m + m.T
        dec = dense_eigendecomposition(m)
        assert np.all(np.diff(dec.eigenvalues) >= 0)
        assert np.abs(dec.eigenvectors.T @ dec.eigenvectors - np.eye(n)).max() <= 1e-10
        assert np.abs(dec.reconstruct() - m).max() <= 1e-9


def test_fourier_round_trip_and_parseval():
    rng = np.random.default_rng(1)
    g = random_graph(20, 0.3, 1, rng)
    dec = dense_eigendecomposition(_lap(g))
    x = rng.standard_normal((20, 3))
    xh = graph_fourier(dec, x)
    assert np.abs(inverse_graph_fourier(dec, xh) - x).max() <= 1e-10
    assert np.linalg.norm(xh) == pytest.approx(np.linalg.norm(x), rel=0, abs=1e-10)
    e = graph_fourier(dec, dec.eigenvectors[:, 4])
    assert np.abs(e - np.eye(20)[4]).max() <= 1e-10
    with pytest.raises(ValueError):
        graph_fourier(dec, np.ones(3))


def test_polynomial_filter_trivial_cases():
    rng = np.random.default_rng(2)
    g = random_graph(12, 0.4, 1, rng)
    lap = _lap(g)
    dec = dense_eigendecomposition(lap)
    x = rng.standard_normal(12)
    assert np.abs(spectral_polynomial_filter(dec, [1.0], x) - x).max() <= 1e-12
    assert np.abs(spectral_polynomial_filter(dec, [0.0, 1.0], x) - lap @ x).max() <= 1e-12


def test_spectral_spatial_equivalence_suite():
    report = spectral_equivalence_suite(seed=11, n_graphs=15)
    assert report["violations"] == 0
    assert max(c["max_abs_error"] for c in report["cases"]) <= 1e-10


def test_matrix_exponential_properties():
    rng = np.random.default_rng(3)
    g = random_graph(15, 0.3, 1, rng)
    lap = _lap(g)
    dec = dense_eigendecomposition(lap)
    assert np.abs(dense_matrix_exponential(dec, 0.0) - np.eye(15)).max() <= 1e-12
    prod = dense_matrix_exponential(dec, 0.3) @ dense_matrix_exponential(dec, 0.9)
    assert np.abs(prod - dense_matrix_exponential(dec, 1.2)).max() <= 1e-9
    series = np.zeros_like(lap)
    power = np.eye(15)
    for i in range(61):
        series += power / math.factorial(i)
        power = power @ lap
    assert np.abs(series - dense_matrix_exponential(dec, 1.0)).max() <= 1e-10
