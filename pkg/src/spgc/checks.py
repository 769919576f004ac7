"""Randomized verification suites comparing the sparse code paths with dense oracles.

Each suite returns a plain dict (JSON-ready) with per-case measurements and
a ``violations`` count. Reports contain no timings, so equal seeds give
equal reports.
"""

from __future__ import annotations

import numpy as np

from .bounds import (BoundInputs, egc_rademacher_bound, egc_truncation_bound,
                     empirical_rademacher, lgc_rademacher_bound)
from .graph import normalized_laplacian, random_graph, renormalized_adjacency
from .models import ModelParams, forward_egc
from .propagation import PropagationOperator, build_diffusion_cache
from .sparse import matrix_one_norm
from .spectral import (dense_eigendecomposition, dense_matrix_exponential,
                       spectral_polynomial_filter)

SPECTRAL_TOL = 1e-10
EIG_SLACK = 1e-9


def _graph(rng, n_lo, n_hi, c):
    n = int(rng.integers(n_lo, n_hi + 1))
    return random_graph(n, float(rng.uniform(0.05, 0.6)), c, rng)


def spectral_equivalence_suite(seed: int = 0, n_graphs: int = 50, max_n: int = 50,
                               max_k: int = 5) -> dict:
    """Spectral filter U p(Lambda) U^T x against sum_i theta_i L^i x in the graph domain."""
    rng = np.random.default_rng([seed, 101])
    cases = []
    for _ in range(n_graphs):
        g = _graph(rng, 2, max_n, int(rng.integers(1, 4)))
        k = int(rng.integers(0, max_k + 1))
        theta = rng.uniform(-1.0, 1.0, size=k + 1)
        lap = normalized_laplacian(g)
        cache = build_diffusion_cache(PropagationOperator("laplacian", lap), g.x, k)
        spatial = sum(t * term for t, term in zip(theta, cache.terms))
        dec = dense_eigendecomposition(lap.to_dense())
        spectral = spectral_polynomial_filter(dec, theta, g.x)
        s_dec = dense_eigendecomposition(renormalized_adjacency(g).to_dense())
        u = dec.eigenvectors
        err = float(np.abs(spectral - spatial).max())
        lam, mu = dec.eigenvalues, s_dec.eigenvalues
        ok_range = (lam.min() >= -EIG_SLACK and lam.max() <= 2 + EIG_SLACK
                    and mu.min() >= -1 - EIG_SLACK and mu.max() <= 1 + EIG_SLACK)
        orth = float(np.abs(u.T @ u - np.eye(g.n)).max())
        recon = float(np.abs(dec.reconstruct() - lap.to_dense()).max())
        cases.append({
            "n": g.n, "k": k, "max_abs_error": err,
            "laplacian_eig_range": [float(lam.min()), float(lam.max())],
            "renormalized_eig_range": [float(mu.min()), float(mu.max())],
            "orthonormality_residual": orth, "reconstruction_residual": recon,
            "ok": bool(err <= SPECTRAL_TOL and ok_range and orth <= 1e-10 and recon <= 1e-9),
        })
    return {"suite": "spectral_equivalence", "tolerance": SPECTRAL_TOL, "cases": cases,
            "violations": sum(not c["ok"] for c in cases)}


def truncation_gap(g, theta, beta: float, k: int, dec=None):
    """Return (measured spectral-norm gap, bound) for the order-k EGC sum on ``g``."""
    lap = normalized_laplacian(g)
    if dec is None:
        dec = dense_eigendecomposition(lap.to_dense())
    cache = build_diffusion_cache(PropagationOperator("laplacian", lap), g.x, k)
    h_k = forward_egc(cache, ModelParams("EGC", k, theta, beta=beta)).logits
    exact = dense_matrix_exponential(dec, beta) @ g.x @ theta
    gap = float(np.linalg.norm(exact - h_k, 2))
    spec = float(np.abs(dec.eigenvalues).max())
    bound = egc_truncation_bound(beta, spec, k, float(np.linalg.norm(g.x @ theta, 2)))
    return gap, bound


def truncation_suite(seed: int = 0, n_graphs: int = 10, betas=(0.5, 1.0),
                     ks=range(2, 11), max_n: int = 20) -> dict:
    rng = np.random.default_rng([seed, 202])
    cases = []
    for _ in range(n_graphs):
        g = _graph(rng, 2, max_n, int(rng.integers(1, 5)))
        theta = rng.standard_normal((g.n_features, int(rng.integers(2, 5))))
        dec = dense_eigendecomposition(normalized_laplacian(g).to_dense())
        for beta in betas:
            for k in ks:
                gap, bound = truncation_gap(g, theta, beta, k, dec)
                cases.append({"n": g.n, "beta": beta, "k": k, "gap": gap, "bound": bound,
                              "ok": bool(gap <= bound)})
    return {"suite": "egc_truncation", "cases": cases,
            "violations": sum(not c["ok"] for c in cases)}


def rademacher_instance(rng):
    """Random small instance: graph, Laplacian cache, sampling set and caps."""
    c = int(rng.integers(1, 5))
    g = _graph(rng, 4, 20, c)
    g = type(g)(g.n, g.edges, rng.uniform(-1.0, 1.0, size=(g.n, c)), g.y)
    k = int(rng.integers(0, 4))
    lap = normalized_laplacian(g)
    cache = build_diffusion_cache(PropagationOperator("laplacian", lap), g.x, k)
    size = int(rng.integers(2, g.n + 1))
    sample = np.sort(rng.choice(g.n, size=size, replace=False))
    a = float(rng.uniform(0.1, 2.0))
    b = float(rng.uniform(0.1, 2.0))
    inputs = BoundInputs(a, b, float(np.abs(g.x).max()), 1.0, k, matrix_one_norm(lap), size)
    return cache, sample, inputs


def rademacher_suite(seed: int = 0, n_instances: int = 20, mc_samples: int = 200) -> dict:
    """Monte-Carlo empirical Rademacher complexity against the closed-form bounds."""
    rng = np.random.default_rng([seed, 303])
    cases = []
    for idx in range(n_instances):
        cache, sample, inp = rademacher_instance(rng)
        for variant, bound_fn in (("LGC", lgc_rademacher_bound), ("EGC", egc_rademacher_bound)):
            est = empirical_rademacher(cache, variant, inp.a, inp.b, sample, mc_samples,
                                       seed=int(rng.integers(2**31)))
            bound = bound_fn(inp)
            cases.append({"instance": idx, "variant": variant, "n": cache.n, "k": inp.k,
                          "L": inp.L_samples, "estimate": est.value, "stderr": est.stderr,
                          "bound": bound, "ok": bool(est.value <= bound + 3 * est.stderr)})
    return {"suite": "rademacher", "mc_samples": mc_samples, "cases": cases,
            "violations": sum(not c["ok"] for c in cases)}


def oracle_check(seed: int = 0, n_graphs: int = 50, mc_samples: int = 200) -> dict:
    suites = [
        spectral_equivalence_suite(seed, n_graphs),
        truncation_suite(seed),
        rademacher_suite(seed, mc_samples=mc_samples),
    ]
    return {"seed": seed, "suites": suites,
            "violations": sum(s["violations"] for s in suites)}
