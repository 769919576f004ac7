import struct

import numpy as np
import pytest

from oracles import dense_laplacian
from spgc.graph import random_graph, renormalized_adjacency
from spgc.propagation import (BUILD_COUNT, PropagationOperator, build_diffusion_cache,
                              cached_diffusion, load_cache, propagated, save_cache)
from spgc.sparse import SparseMatrix, spmm


def _graph(seed=0, n=10):
    return random_graph(n, 0.3, 3, np.random.default_rng(seed))


def test_k0_holds_only_x():
    g = _graph()
    cache = build_diffusion_cache(PropagationOperator.for_graph(g, "laplacian"), g.x, 0)
    assert cache.k == 0 and len(cache.terms) == 1
    assert np.array_equal(cache.terms[0], g.x)


def test_identity_operator_repeats_x():
    x = np.random.default_rng(1).standard_normal((6, 2))
    cache = build_diffusion_cache(PropagationOperator("custom", SparseMatrix.identity(6)), x, 4)
    assert all(np.array_equal(t, x) for t in cache.terms)


def test_terms_match_dense_power_oracle():
    g = _graph(2)
    cache = build_diffusion_cache(PropagationOperator.for_graph(g, "laplacian"), g.x, 3)
    lap = dense_laplacian(g.n, g.edges)
    ref = np.linalg.matrix_power(lap, 3) @ g.x
    assert np.max(np.abs(cache.terms[3] - ref)) <= 1e-12 * max(1.0, np.abs(ref).max())


def test_recurrence_is_bitwise():
    g = _graph(3, 25)
    op = PropagationOperator.for_graph(g, "renormalized_adjacency")
    cache = build_diffusion_cache(op, g.x, 5)
    for i in range(1, 6):
        assert np.array_equal(cache.terms[i], spmm(op.matrix, cache.terms[i - 1]))


def test_cache_extension_prefix_is_bitwise():
    g = _graph(4, 30)
    op = PropagationOperator.for_graph(g, "laplacian")
    long, short = build_diffusion_cache(op, g.x, 10), build_diffusion_cache(op, g.x, 5)
    assert all(np.array_equal(a, b) for a, b in zip(long.terms[:6], short.terms))


def test_propagated_range(triangle):
    cache = build_diffusion_cache(PropagationOperator.for_graph(triangle, "renormalized_adjacency"),
                                  triangle.x, 5)
    assert np.array_equal(propagated(cache, 0), triangle.x)
    with pytest.raises(IndexError):
        propagated(cache, 6)
    # every closed neighbourhood on the triangle is the whole graph
    mean = triangle.x.mean(axis=0)
    assert np.allclose(propagated(cache, 1), np.tile(mean, (3, 1)), rtol=1e-15, atol=0)


def test_dimension_mismatch_rejected():
    g = _graph()
    with pytest.raises(ValueError):
        build_diffusion_cache(PropagationOperator.for_graph(g, "laplacian"), np.ones((3, 2)), 1)
    with pytest.raises(ValueError):
        PropagationOperator("laplacian", SparseMatrix.from_dense(np.ones((2, 3))))


def test_save_load_bit_exact(tmp_path):
    g = _graph(5)
    cache = build_diffusion_cache(PropagationOperator.for_graph(g, "normalized_adjacency"), g.x, 3)
    path = tmp_path / "c.spgc"
    save_cache(cache, path)
    raw = path.read_bytes()
    magic, kind, n, c, k = struct.unpack_from("<5sBQQQ", raw)
    assert (magic, kind, n, c, k) == (b"SPGC1", 2, g.n, 3, 3)
    assert len(raw) == struct.calcsize("<5sBQQQ") + 8 * n * c * (k + 1)
    back = load_cache(path)
    assert back.equals(cache)
    save_cache(back, tmp_path / "d.spgc")
    assert (tmp_path / "d.spgc").read_bytes() == raw


def test_load_rejects_corruption(tmp_path):
    g = _graph(6)
    cache = build_diffusion_cache(PropagationOperator.for_graph(g, "laplacian"), g.x, 1)
    path = tmp_path / "c.spgc"
    save_cache(cache, path)
    raw = path.read_bytes()
    (tmp_path / "bad_magic").write_bytes(b"XXXXX" + raw[5:])
    (tmp_path / "short").write_bytes(raw[:-8])
    for name in ("bad_magic", "short"):
        with pytest.raises(ValueError):
            load_cache(tmp_path / name)


def test_disk_cache_reused(tmp_path):
    g = _graph(7)
    start = BUILD_COUNT[0]
    a = cached_diffusion(g, "laplacian", 2, "toy", tmp_path)
    b = cached_diffusion(g, "laplacian", 2, "toy", tmp_path)
    assert BUILD_COUNT[0] == start + 1
    assert a.equals(b)
    assert (tmp_path / "toy__laplacian__k2.spgc").exists()


def test_s_operator_is_symmetric_input():
    g = _graph(8)
    op = PropagationOperator("renormalized_adjacency", renormalized_adjacency(g))
    assert op.matrix.max_asymmetry() == 0.0


def test_asymmetric_operator_rejected():
    with pytest.raises(ValueError):
        PropagationOperator("custom", SparseMatrix.from_dense(np.array([[0.0, 1.0], [0.0, 0.0]])))
