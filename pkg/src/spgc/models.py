"""Single-layer linear graph convolution models and their exact gradients.

All four variants read precomputed terms T_i = P^i X from a diffusion cache:

    SGC    logits = T_k Theta
    EGC    logits = (sum_i beta^i / i! T_i) Theta
    LGC    logits = (sum_i alpha_i T_i) Theta
    HLGC   logits = sum_i (T_i Theta) * g_i,
           g_i = sigmoid(relu(T_i W1_i) W2_i) * alpha_i   (one gate per node)

Gradients are derived by hand for mean masked cross-entropy on softmax
outputs; no sparse products happen here.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field, replace

import numpy as np

from .propagation import DiffusionCache

VARIANTS = ("SGC", "EGC", "LGC", "HLGC")

DEFAULT_OPERATOR = {
    "SGC": "renormalized_adjacency",
    "EGC": "laplacian",
    "LGC": "laplacian",
    "HLGC": "laplacian",
}

_FIELDS = {
    "SGC": ("theta",),
    "EGC": ("theta", "beta"),
    "LGC": ("theta", "alpha"),
    "HLGC": ("theta", "alpha", "w1", "w2"),
}


def normalize_variant(name: str) -> str:
    v = name.upper().replace("-", "")
    if v not in VARIANTS:
        raise ValueError(f"unknown model variant {name!r}; choose from {', '.join(VARIANTS)}")
    return v


def gate_width(c: int) -> int:
    return -(-c // 2)


@dataclass(eq=False)
class ModelParams:
    """Trainable tensors of one model; fields not used by the variant are None.

    ``beta`` is a 0-d array so every field can be updated the same way.
    ``w1`` has shape (k+1, c, h) and ``w2`` shape (k+1, h), one gate per hop.
    """

    variant: str
    k: int
    theta: np.ndarray
    beta: np.ndarray | None = None
    alpha: np.ndarray | None = None
    w1: np.ndarray | None = None
    w2: np.ndarray | None = None

    def __post_init__(self):
        self.variant = normalize_variant(self.variant)
        wanted = _FIELDS[self.variant]
        for name in ("theta", "beta", "alpha", "w1", "w2"):
            val = getattr(self, name)
            if (val is None) == (name in wanted):
                state = "missing" if val is None else "not used by"
                raise ValueError(f"{name} {state} {self.variant}")
            if val is not None:
                val = np.array(val, dtype=np.float64)
                if not np.all(np.isfinite(val)):
                    raise ValueError(f"{name} has non-finite entries")
                setattr(self, name, val)
        c = self.theta.shape[0]
        if self.alpha is not None and self.alpha.shape != (self.k + 1,):
            raise ValueError(f"alpha must have length k+1 = {self.k + 1}")
        if self.w1 is not None:
            h = gate_width(c)
            if self.w1.shape != (self.k + 1, c, h) or self.w2.shape != (self.k + 1, h):
                raise ValueError(f"gate weights must have shapes {(self.k + 1, c, h)} "
                                 f"and {(self.k + 1, h)}")

    @property
    def names(self):
        return _FIELDS[self.variant]

    def tensors(self) -> dict:
        return {name: getattr(self, name) for name in self.names}

    def with_tensors(self, tensors: dict) -> "ModelParams":
        return replace(self, **{name: tensors[name] for name in self.names})

    def copy(self) -> "ModelParams":
        return self.with_tensors({k: v.copy() for k, v in self.tensors().items()})


@dataclass(eq=False)
class ForwardTrace:
    """Outputs of a forward pass plus what the backward pass needs.

    ``rows`` is None when every node was evaluated, else the node indices the
    logits rows correspond to. ``inputs`` are the (possibly dropped-out)
    terms actually used.
    """

    logits: np.ndarray
    probs: np.ndarray
    inputs: list
    rows: np.ndarray | None = None
    mixed: np.ndarray | None = None
    coeffs: np.ndarray | None = None
    gate_pre: list = field(default_factory=list)
    gate_hidden: list = field(default_factory=list)
    gate_sigmoid: list = field(default_factory=list)
    projected: list = field(default_factory=list)


def softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def egc_coefficients(beta: float, k: int) -> np.ndarray:
    """beta^i / i! for i = 0..k via c_i = c_{i-1} beta / i."""
    out = np.empty(k + 1)
    out[0] = 1.0
    for i in range(1, k + 1):
        out[i] = out[i - 1] * beta / i
    return out


def _select_inputs(cache: DiffusionCache, p: ModelParams, inputs, rows):
    if p.k > cache.k:
        raise IndexError(f"model uses k={p.k} but cache only holds k={cache.k}")
    if inputs is None:
        if rows is None:
            inputs = list(cache.terms[:p.k + 1])
        else:
            inputs = [t[rows] for t in cache.terms[:p.k + 1]]
    if len(inputs) != p.k + 1:
        raise ValueError(f"expected {p.k + 1} input terms, got {len(inputs)}")
    if inputs[0].shape[1] != p.theta.shape[0]:
        raise ValueError(f"feature dimension {inputs[0].shape[1]} does not match "
                         f"theta with {p.theta.shape[0]} rows")
    return inputs


def _mix(inputs, coeffs) -> np.ndarray:
    out = coeffs[0] * inputs[0]
    for a, t in zip(coeffs[1:], inputs[1:]):
        out += a * t
    return out


def _check_variant(p: ModelParams, variant: str):
    if p.variant != variant:
        raise ValueError(f"expected {variant} parameters, got {p.variant}")


def forward_sgc(cache, p, inputs=None, rows=None) -> ForwardTrace:
    _check_variant(p, "SGC")
    inputs = _select_inputs(cache, p, inputs, rows)
    logits = inputs[p.k] @ p.theta
    return ForwardTrace(logits, softmax(logits), inputs, rows, mixed=inputs[p.k])


def forward_lgc(cache, p, inputs=None, rows=None) -> ForwardTrace:
    _check_variant(p, "LGC")
    inputs = _select_inputs(cache, p, inputs, rows)
    mixed = _mix(inputs, p.alpha)
    logits = mixed @ p.theta
    return ForwardTrace(logits, softmax(logits), inputs, rows, mixed=mixed, coeffs=p.alpha)


def forward_egc(cache, p, inputs=None, rows=None) -> ForwardTrace:
    _check_variant(p, "EGC")
    inputs = _select_inputs(cache, p, inputs, rows)
    coeffs = egc_coefficients(float(p.beta), p.k)
    mixed = _mix(inputs, coeffs)
    logits = mixed @ p.theta
    return ForwardTrace(logits, softmax(logits), inputs, rows, mixed=mixed, coeffs=coeffs)


def forward_hlgc(cache, p, inputs=None, rows=None) -> ForwardTrace:
    _check_variant(p, "HLGC")
    inputs = _select_inputs(cache, p, inputs, rows)
    trace = ForwardTrace(None, None, inputs, rows, coeffs=p.alpha)
    logits = None
    for i, t in enumerate(inputs):
        pre = t @ p.w1[i]
        hidden = np.maximum(pre, 0.0)
        sig = sigmoid(hidden @ p.w2[i])
        proj = t @ p.theta
        term = proj * (sig * p.alpha[i])[:, None]
        logits = term if logits is None else logits + term
        trace.gate_pre.append(pre)
        trace.gate_hidden.append(hidden)
        trace.gate_sigmoid.append(sig)
        trace.projected.append(proj)
    trace.logits = logits
    trace.probs = softmax(logits)
    return trace


_FORWARD = {"SGC": forward_sgc, "EGC": forward_egc, "LGC": forward_lgc, "HLGC": forward_hlgc}


def forward(cache, p: ModelParams, inputs=None, rows=None) -> ForwardTrace:
    """Dispatch to the forward pass matching ``p.variant``."""
    return _FORWARD[p.variant](cache, p, inputs=inputs, rows=rows)


def _local_rows(trace: ForwardTrace, mask) -> np.ndarray:
    mask = np.asarray(mask, dtype=np.int64)
    if trace.rows is None:
        return mask
    pos = np.full(int(max(trace.rows.max(initial=-1), mask.max(initial=-1))) + 1, -1)
    pos[trace.rows] = np.arange(trace.rows.size)
    local = pos[mask]
    if np.any(local < 0):
        raise ValueError("mask contains nodes the forward pass did not evaluate")
    return local


def logit_gradient(trace: ForwardTrace, labels, mask) -> np.ndarray:
    """d(mean masked cross-entropy)/d(logits), zero outside the mask."""
    mask = np.asarray(mask, dtype=np.int64)
    if mask.size == 0:
        raise ValueError("empty mask")
    local = _local_rows(trace, mask)
    g = np.zeros_like(trace.probs)
    g[local] = trace.probs[local]
    g[local, np.asarray(labels)[mask]] -= 1.0
    g[local] /= mask.size
    return g


def gradients(trace: ForwardTrace, cache, p: ModelParams, labels, mask) -> ModelParams:
    """Exact gradients of mean masked cross-entropy for every trainable tensor.

    Args:
        trace: output of the forward pass for ``p``.
        cache: the diffusion cache the forward pass read (unused beyond checks;
            the trace already holds the inputs).
        p: parameters the trace was computed with.
        labels: class per node, indexed by global node id.
        mask: node ids the loss averages over.

    Returns:
        A `ModelParams` of the same variant holding the gradients.
    """
    g = logit_gradient(trace, labels, mask)
    inputs = trace.inputs
    if p.variant == "SGC":
        return p.with_tensors({"theta": inputs[p.k].T @ g})
    if p.variant in ("LGC", "EGC"):
        d_theta = trace.mixed.T @ g
        r = g @ p.theta.T
        s = np.array([np.vdot(t, r) for t in inputs])
        if p.variant == "LGC":
            return p.with_tensors({"theta": d_theta, "alpha": s})
        # d/dbeta beta^i/i! = beta^(i-1)/(i-1)!, i.e. the previous coefficient
        d_beta = np.dot(trace.coeffs[:-1], s[1:]) if p.k else 0.0
        return p.with_tensors({"theta": d_theta, "beta": np.array(d_beta)})

    d_theta = np.zeros_like(p.theta)
    d_alpha = np.zeros_like(p.alpha)
    d_w1 = np.zeros_like(p.w1)
    d_w2 = np.zeros_like(p.w2)
    for i, t in enumerate(inputs):
        sig = trace.gate_sigmoid[i]
        gate = sig * p.alpha[i]
        d_theta += t.T @ (g * gate[:, None])
        d_gate = np.einsum("nc,nc->n", g, trace.projected[i])
        d_alpha[i] = np.dot(d_gate, sig)
        d_out = d_gate * p.alpha[i] * sig * (1.0 - sig)
        d_w2[i] = trace.gate_hidden[i].T @ d_out
        d_pre = np.outer(d_out, p.w2[i]) * (trace.gate_pre[i] > 0.0)
        d_w1[i] = t.T @ d_pre
    return p.with_tensors({"theta": d_theta, "alpha": d_alpha, "w1": d_w1, "w2": d_w2})


def _glorot(rng, fan_in, fan_out, shape):
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def init_params(variant: str, k: int, c: int, n_classes: int, seed: int) -> ModelParams:
    """Glorot-uniform weights; beta = 1, LGC alpha = 1/(k+1), HLGC alpha = 1."""
    variant = normalize_variant(variant)
    rng = np.random.default_rng(seed)
    theta = _glorot(rng, c, n_classes, (c, n_classes))
    if variant == "SGC":
        return ModelParams(variant, k, theta)
    if variant == "EGC":
        return ModelParams(variant, k, theta, beta=np.array(1.0))
    if variant == "LGC":
        return ModelParams(variant, k, theta, alpha=np.full(k + 1, 1.0 / (k + 1)))
    h = gate_width(c)
    w1 = np.stack([_glorot(rng, c, h, (c, h)) for _ in range(k + 1)])
    w2 = np.stack([_glorot(rng, h, 1, (h,)) for _ in range(k + 1)])
    return ModelParams(variant, k, theta, alpha=np.ones(k + 1), w1=w1, w2=w2)


CHECKPOINT_MAGIC = b"SPGCK1"


def save_checkpoint(p: ModelParams, path, seed: int | None = None) -> None:
    """Versioned binary checkpoint: magic, JSON header, little-endian float64 tensors."""
    tensors = p.tensors()
    header = {
        "variant": p.variant,
        "k": p.k,
        "seed": seed,
        "tensors": [[name, list(arr.shape)] for name, arr in tensors.items()],
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for arr in tensors.values():
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path):
    """Return ``(params, seed)`` from a checkpoint written by `save_checkpoint`."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if not raw.startswith(CHECKPOINT_MAGIC):
        raise ValueError(f"{path}: not a model checkpoint")
    off = len(CHECKPOINT_MAGIC)
    (size,) = struct.unpack_from("<I", raw, off)
    off += 4
    header = json.loads(raw[off:off + size])
    off += size
    tensors = {}
    for name, shape in header["tensors"]:
        count = int(np.prod(shape, dtype=np.int64))
        arr = np.frombuffer(raw, dtype="<f8", count=count, offset=off).astype(np.float64)
        tensors[name] = arr.reshape(shape)
        off += 8 * count
    if off != len(raw):
        raise ValueError(f"{path}: trailing bytes in checkpoint")
    params = ModelParams(header["variant"], header["k"], **tensors)
    return params, header["seed"]
