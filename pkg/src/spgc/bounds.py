"""Generalization and truncation bounds, plus a Monte-Carlo check of them.

`lgc_rademacher_bound` and `egc_rademacher_bound` bound the empirical
Rademacher complexity of single-output LGC / EGC function classes with
coefficient cap ``a`` and ``||Theta||_1 <= b``. `empirical_rademacher`
estimates the same quantity by sampling sign vectors and approximately
maximising over the parameter ball.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .models import ModelParams, egc_coefficients, forward_hlgc, normalize_variant
from .propagation import DiffusionCache


@dataclass(frozen=True)
class BoundInputs:
    """a caps the hop coefficients (|alpha_i| or |beta|), b caps ||Theta||_1,
    M bounds |X_jj'|, lipschitz is the activation's constant, l1_norm is
    ||L||_1 and L_samples the size of the sampling set."""

    a: float
    b: float
    M: float
    lipschitz: float
    k: int
    l1_norm: float
    L_samples: int

    def __post_init__(self):
        for name in ("a", "b", "M", "lipschitz", "l1_norm"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.k < 0:
            raise ValueError("k must be nonnegative")
        if self.L_samples < 1:
            raise ValueError("L_samples must be at least 1")

    @property
    def prefactor(self) -> float:
        return self.b * self.M * self.lipschitz / math.sqrt(self.L_samples)


def geometric_sum(x: float, k: int) -> float:
    """sum_{i=0}^k x^i."""
    if x == 1.0:
        return float(k + 1)
    if abs(x - 1.0) < 1e-3:
        return math.expm1((k + 1) * math.log1p(x - 1.0)) / (x - 1.0)
    return (x ** (k + 1) - 1.0) / (x - 1.0)


def lgc_rademacher_bound(inp: BoundInputs) -> float:
    """(b M Lambda / sqrt(L)) * sum_{i<=k} a ||L||_1^i."""
    return inp.prefactor * inp.a * geometric_sum(inp.l1_norm, inp.k)


def egc_rademacher_bound(inp: BoundInputs) -> float:
    """(b M Lambda / sqrt(L)) * exp(a ||L||_1); independent of k."""
    return inp.prefactor * math.exp(inp.a * inp.l1_norm)


def egc_truncation_bound(beta: float, spec_norm: float, k: int, xtheta_norm: float) -> float:
    """Upper bound on ||e^{beta L} X Theta - H^(k)|| for the order-k EGC sum.

    Equals |beta|^{k+1} ||L||^{k+1} / (k+1)! * ||X Theta|| / (1 - |beta| ||L|| / (k+2)),
    evaluated in log space. Requires |beta| ||L|| / (k+2) < 1.
    """
    if k < 0:
        raise ValueError("k must be nonnegative")
    ratio = abs(beta) * spec_norm / (k + 2)
    if ratio >= 1.0:
        raise ValueError(f"|beta| * ||L|| / (k + 2) = {ratio:.6g} >= 1: the tail "
                         f"majorant diverges; increase k or shrink beta")
    if beta == 0.0 or spec_norm == 0.0 or xtheta_norm == 0.0:
        return 0.0
    log_head = (k + 1) * (math.log(abs(beta)) + math.log(spec_norm)) - math.lgamma(k + 2)
    return math.exp(log_head + math.log(xtheta_norm)) / (1.0 - ratio)


@dataclass(frozen=True)
class RademacherEstimate:
    value: float
    stderr: float
    samples: int

    def __float__(self):
        return self.value


MAX_ORACLE_N = 20
MAX_ORACLE_C = 4
MAX_ORACLE_K = 3


def project_l1(v: np.ndarray, radius: float) -> np.ndarray:
    """Euclidean projection of each row of ``v`` onto the l1 ball of ``radius``."""
    v = np.atleast_2d(v)
    if radius <= 0.0:
        return np.zeros_like(v)
    mag = np.abs(v)
    u = -np.sort(-mag, axis=1)
    css = np.cumsum(u, axis=1)
    idx = np.arange(1, v.shape[1] + 1)
    rho = np.sum(u * idx > css - radius, axis=1) - 1
    shift = (css[np.arange(v.shape[0]), rho] - radius) / (rho + 1.0)
    out = np.sign(v) * np.maximum(mag - shift[:, None], 0.0)
    inside = mag.sum(axis=1) <= radius
    out[inside] = v[inside]
    return out


def _egc_coeff_batch(beta: np.ndarray, k: int) -> np.ndarray:
    """beta^i / i! for a batch of betas, shape (B, k+1)."""
    out = np.ones(beta.shape + (k + 1,))
    for i in range(1, k + 1):
        out[..., i] = out[..., i - 1] * beta / i
    return out


def _ascend(v, a, b, variant, alpha0, theta0, steps):
    """Projected gradient ascent on a batch of bilinear objectives.

    ``v`` has shape (B, k+1, c); ``alpha0``/``theta0`` hold one starting
    point per batch entry (for EGC ``alpha0`` holds beta, shape (B,)).
    Returns the best objective value seen for each entry.
    """
    k = v.shape[1] - 1
    coef, theta = alpha0, project_l1(theta0, b)
    best = np.full(v.shape[0], -np.inf)
    for t in range(steps + 1):
        mix = _egc_coeff_batch(coef, k) if variant == "EGC" else coef
        w = np.einsum("bk,bkc->bc", mix, v)
        best = np.maximum(best, np.einsum("bc,bc->b", w, theta))
        if t == steps:
            break
        step = 0.5 / np.sqrt(t + 1.0)
        vt = np.einsum("bkc,bc->bk", v, theta)
        if variant == "EGC":
            g = np.einsum("bk,bk->b", mix[:, :-1], vt[:, 1:]) if k else np.zeros_like(coef)
            coef = np.clip(coef + step * a * np.sign(g), -a, a)
        else:
            ng = np.linalg.norm(vt, axis=1, keepdims=True)
            coef = np.clip(coef + step * a * vt / np.where(ng > 0, ng, 1.0), -a, a)
        nw = np.linalg.norm(w, axis=1, keepdims=True)
        theta = project_l1(theta + step * b * w / np.where(nw > 0, nw, 1.0), b)
    return best


def empirical_rademacher(cache: DiffusionCache, variant: str, a: float, b: float,
                         sample, mc_samples: int, seed: int, steps: int = 200,
                         restarts: int = 10) -> RademacherEstimate:
    """Monte-Carlo estimate of E_eps sup_f (1/L) sum_l eps_l f(u_l).

    The class is the single-output LGC or EGC layer with identity activation
    over the cached terms. The inner supremum is approximated from below by
    projected gradient ascent with random restarts, so the estimate never
    overshoots the true value beyond Monte-Carlo noise.

    Args:
        cache: terms L^i X for the instance (small: n <= 20, c <= 4, k <= 3).
        variant: "LGC" or "EGC".
        a, b: coefficient cap and l1 cap on Theta.
        sample: node indices forming the sampling set U.
        mc_samples: number of sign vectors drawn.
        seed: base seed; draw j (signs and restart points) uses stream (seed, j).
    """
    variant = normalize_variant(variant)
    if variant not in ("LGC", "EGC"):
        raise ValueError("Rademacher estimation is defined for LGC and EGC only")
    if cache.n > MAX_ORACLE_N or cache.feature_dim > MAX_ORACLE_C or cache.k > MAX_ORACLE_K:
        raise ValueError(f"instance too large for the Monte-Carlo oracle "
                         f"(need n <= {MAX_ORACLE_N}, c <= {MAX_ORACLE_C}, k <= {MAX_ORACLE_K})")
    if mc_samples < 1:
        raise ValueError("mc_samples must be at least 1")
    sample = np.asarray(sample, dtype=np.int64)
    rows = np.stack([t[sample] for t in cache.terms])  # (k+1, L, c)
    k1, c = rows.shape[0], rows.shape[2]
    eps, coef0, theta0 = [], [], []
    for j in range(mc_samples):
        rng = np.random.default_rng([seed, j])
        eps.append(rng.choice([-1.0, 1.0], size=sample.size))
        shape = (restarts,) if variant == "EGC" else (restarts, k1)
        coef0.append(rng.uniform(-a, a, size=shape))
        theta0.append(rng.standard_normal((restarts, c)))
    v = np.einsum("dl,klc->dkc", np.array(eps), rows) / sample.size
    if a == 0.0 or b == 0.0:
        vals = np.zeros(mc_samples)
    else:
        vb = np.repeat(v, restarts, axis=0)
        coef = np.concatenate(coef0)
        theta = np.concatenate(theta0)
        best = _ascend(vb, a, b, variant, coef, theta, steps)
        vals = np.maximum(best.reshape(mc_samples, restarts).max(axis=1), 0.0)
    stderr = float(vals.std(ddof=1) / math.sqrt(mc_samples)) if mc_samples > 1 else float("inf")
    return RademacherEstimate(float(vals.mean()), stderr, mc_samples)


@dataclass(frozen=True)
class CoefficientSeries:
    variant: str
    coefficients: np.ndarray
    variances: np.ndarray


def extract_coefficients(params: ModelParams, cache: DiffusionCache | None = None) -> CoefficientSeries:
    """Per-hop multiplicative coefficients of a trained model.

    EGC gives beta^i/i!, LGC its alpha vector, HLGC the node mean and
    variance of the gate outputs f_i(P^i X) (which needs the cache).
    """
    v = params.variant
    if v == "SGC":
        raise ValueError("SGC has no coefficient series")
    if v == "EGC":
        coef = egc_coefficients(float(params.beta), params.k)
        return CoefficientSeries(v, coef, np.zeros_like(coef))
    if v == "LGC":
        return CoefficientSeries(v, params.alpha.copy(), np.zeros_like(params.alpha))
    if cache is None:
        raise ValueError("HLGC coefficients need the diffusion cache")
    trace = forward_hlgc(cache, params)
    gates = np.stack([s * a for s, a in zip(trace.gate_sigmoid, params.alpha)])
    return CoefficientSeries(v, gates.mean(axis=1), gates.var(axis=1))


def write_coefficients(series: CoefficientSeries, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("hop", "coefficient", "variance"))
        for i, (c, var) in enumerate(zip(series.coefficients, series.variances)):
            w.writerow((i, repr(float(c)), repr(float(var))))
