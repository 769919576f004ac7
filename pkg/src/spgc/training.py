"""Full-batch training with Adam, input dropout and validation early stopping."""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .graph import Graph
from .models import ModelParams, forward, gradients, init_params, normalize_variant
from .propagation import DiffusionCache

HISTORY_FIELDS = ("epoch", "train_loss", "val_loss", "test_loss",
                  "train_acc", "val_acc", "test_acc", "ms")

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    weight_decay: float = 0.0
    dropout: float = 0.0
    max_epochs: int = 500
    patience: int = 100
    seed: int = 0
    monitor: str = "val_accuracy"

    def __post_init__(self):
        if not self.learning_rate >= 0 or not math.isfinite(self.learning_rate):
            raise ValueError("learning_rate must be a finite nonnegative number")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be nonnegative")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        if self.max_epochs < 1 or self.patience < 1:
            raise ValueError("max_epochs and patience must be at least 1")
        if self.monitor != "val_accuracy":
            raise ValueError("only val_accuracy monitoring is supported")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    test_loss: float
    train_acc: float
    val_acc: float
    test_acc: float
    ms: float


@dataclass
class TrainReport:
    history: list
    best_epoch: int
    best_val_acc: float
    test_acc_at_best: float
    final_params: ModelParams
    stopped_early: bool
    seed: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def epochs_run(self) -> int:
        return len(self.history)

    @property
    def mean_epoch_ms(self) -> float:
        return float(np.mean([r.ms for r in self.history])) if self.history else 0.0


def cross_entropy(probs, labels, mask) -> float:
    """Mean of -log p[v, y_v] over the mask, with p clamped at 1e-300."""
    mask = np.asarray(mask, dtype=np.int64)
    if mask.size == 0:
        raise ValueError("empty mask")
    picked = probs[mask, np.asarray(labels)[mask]]
    return float(-np.mean(np.log(np.maximum(picked, 1e-300))))


def accuracy(probs, labels, mask) -> float:
    mask = np.asarray(mask, dtype=np.int64)
    if mask.size == 0:
        return float("nan")
    return float(np.mean(np.argmax(probs[mask], axis=1) == np.asarray(labels)[mask]))


@dataclass
class AdamState:
    m: dict
    v: dict

    @classmethod
    def zeros_like(cls, params: ModelParams) -> "AdamState":
        t = params.tensors()
        return cls({k: np.zeros_like(a) for k, a in t.items()},
                   {k: np.zeros_like(a) for k, a in t.items()})


def adam_step(params: ModelParams, grads: ModelParams, state: AdamState,
              lr: float, weight_decay: float, t: int):
    """One bias-corrected Adam update with L2 decay folded into the gradient.

    Returns the new ``(params, state)``; inputs are not modified.
    """
    if t < 1:
        raise ValueError("Adam step counter starts at 1")
    new_p, new_m, new_v = {}, {}, {}
    g_all = grads.tensors()
    c1 = 1.0 - ADAM_BETA1 ** t
    c2 = 1.0 - ADAM_BETA2 ** t
    for name, p in params.tensors().items():
        g = g_all[name] + weight_decay * p
        m = ADAM_BETA1 * state.m[name] + (1.0 - ADAM_BETA1) * g
        v = ADAM_BETA2 * state.v[name] + (1.0 - ADAM_BETA2) * g * g
        new_p[name] = p - lr * (m / c1) / (np.sqrt(v / c2) + ADAM_EPS)
        new_m[name], new_v[name] = m, v
    return params.with_tensors(new_p), AdamState(new_m, new_v)


def apply_dropout(x, rate: float, rng, training: bool = True) -> np.ndarray:
    """Inverted dropout: zero each entry with probability ``rate``, rescale survivors."""
    if not training or rate == 0.0:
        return x
    keep = rng.random(x.shape) >= rate
    return np.where(keep, x / (1.0 - rate), 0.0)


def train(variant, cache: DiffusionCache, graph: Graph, config: TrainConfig,
          k: int | None = None, params: ModelParams | None = None) -> TrainReport:
    """Train one model and return its history and best checkpoint.

    The model uses hops 0..k of the cache (all of them by default). Every
    epoch does one Adam step on the training-mask loss, then evaluates all
    three splits without dropout. The checkpoint with the highest validation
    accuracy wins (earlier epoch on ties) and training stops after
    ``patience`` epochs without strict improvement.
    """
    variant = normalize_variant(variant)
    k = cache.k if k is None else k
    if not 0 <= k <= cache.k:
        raise IndexError(f"model uses k={k} but cache only holds k={cache.k}")
    if params is None:
        params = init_params(variant, k, cache.feature_dim, graph.n_classes, config.seed)
    # dropout stream is separate from the init stream
    rng = np.random.default_rng([config.seed, 1])
    y = graph.y
    train_idx = graph.train
    if train_idx.size == 0:
        raise ValueError("graph has an empty training mask")
    # only labeled rows are ever scored; slice them out of the cache once
    eval_rows = np.unique(np.concatenate([graph.train, graph.val, graph.test]))
    train_terms = [cache.terms[i][train_idx] for i in range(k + 1)]
    eval_terms = [cache.terms[i][eval_rows] for i in range(k + 1)]
    probs = np.zeros((graph.n, graph.n_classes))
    state = AdamState.zeros_like(params)
    history = []
    best = (-1.0, 0, float("nan"), params)
    since_best = 0
    stopped_early = False
    for epoch in range(1, config.max_epochs + 1):
        t0 = time.perf_counter()
        inputs = [apply_dropout(t, config.dropout, rng) for t in train_terms]
        trace = forward(cache, params, inputs=inputs, rows=train_idx)
        grads = gradients(trace, cache, params, y, train_idx)
        params, state = adam_step(params, grads, state, config.learning_rate,
                                  config.weight_decay, epoch)
        probs[eval_rows] = forward(cache, params, inputs=eval_terms, rows=eval_rows).probs
        rec = EpochRecord(
            epoch,
            cross_entropy(probs, y, graph.train),
            _loss_or_nan(probs, y, graph.val),
            _loss_or_nan(probs, y, graph.test),
            accuracy(probs, y, graph.train),
            accuracy(probs, y, graph.val),
            accuracy(probs, y, graph.test),
            (time.perf_counter() - t0) * 1e3,
        )
        history.append(rec)
        score = rec.val_acc if graph.val.size else rec.train_acc
        if score > best[0]:
            best = (score, epoch, rec.test_acc, params)
            since_best = 0
        else:
            since_best += 1
            if since_best >= config.patience:
                stopped_early = epoch < config.max_epochs
                break
    return TrainReport(history, best[1], best[0], best[2], best[3], stopped_early,
                       seed=config.seed)


def _loss_or_nan(probs, y, mask):
    return cross_entropy(probs, y, mask) if mask.size else float("nan")


def _fmt(x: float) -> str:
    return repr(float(x))


def write_history(report: TrainReport, path, timing: bool = False) -> None:
    """CSV of per-epoch losses and accuracies.

    The ``ms`` column is left empty unless ``timing`` is set, so repeated
    runs produce byte-identical files.
    """
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HISTORY_FIELDS)
        for r in report.history:
            w.writerow([r.epoch, _fmt(r.train_loss), _fmt(r.val_loss), _fmt(r.test_loss),
                        _fmt(r.train_acc), _fmt(r.val_acc), _fmt(r.test_acc),
                        f"{r.ms:.3f}" if timing else ""])


def read_history(path) -> list:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for row in rows:
        vals = {k: (float(v) if v != "" else float("nan")) for k, v in row.items()}
        vals["epoch"] = int(vals["epoch"])
        out.append(EpochRecord(**vals))
    return out
