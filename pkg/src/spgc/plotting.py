"""PNG figures rendered next to the CSV/JSON outputs.

The delimited files stay the primary record; these are convenience views.
matplotlib is imported on first use with the non-interactive Agg backend.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np


def _pyplot():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def _save(fig, path):
    path = Path(path)
    # fixed metadata keeps repeated renders byte-stable
    fig.savefig(path, dpi=120, bbox_inches="tight", metadata={"Software": None})
    _pyplot().close(fig)
    return path


def plot_history(history, path, title: str = ""):
    """Loss (left) and accuracy (right) per epoch for the three splits."""
    plt = _pyplot()
    epochs = [r.epoch for r in history]
    fig, (ax_l, ax_a) = plt.subplots(1, 2, figsize=(9, 3.4))
    for split in ("train", "val", "test"):
        ax_l.plot(epochs, [getattr(r, f"{split}_loss") for r in history], label=split, lw=1.2)
        ax_a.plot(epochs, [getattr(r, f"{split}_acc") for r in history], label=split, lw=1.2)
    ax_l.set_xlabel("epoch")
    ax_l.set_ylabel("cross-entropy")
    ax_a.set_xlabel("epoch")
    ax_a.set_ylabel("accuracy")
    ax_a.legend(frameon=False)
    if title:
        fig.suptitle(title)
    return _save(fig, path)


def plot_coefficients(series, path):
    """Per-hop coefficients, with one-standard-deviation bars when variances are nonzero."""
    plt = _pyplot()
    hops = np.arange(len(series.coefficients))
    err = np.sqrt(series.variances) if np.any(series.variances > 0) else None
    fig, ax = plt.subplots(figsize=(5, 3.4))
    ax.bar(hops, series.coefficients, yerr=err, color="0.45", capsize=2)
    ax.axhline(0.0, color="k", lw=0.6)
    ax.set_xlabel("hop i")
    ax.set_ylabel("coefficient")
    ax.set_title(series.variant)
    return _save(fig, path)


def plot_selection(report, path):
    """Mean validation and test accuracy per cell; the chosen cells are marked."""
    plt = _pyplot()
    ok = [c for c in report.cells if not c.failed]
    fig, ax = plt.subplots(figsize=(max(5, 0.12 * len(report.cells)), 3.4))
    if ok:
        idx = [c.index for c in ok]
        ax.plot(idx, [c.val[0] for c in ok], "o", ms=3, label="val")
        ax.plot(idx, [c.test[0] for c in ok], "s", ms=3, label="test")
    for cell, style in ((report.validated_cell, "-"), (report.test_selected_cell, ":")):
        if cell is not None:
            ax.axvline(cell, color="k", ls=style, lw=0.8)
    ax.set_xlabel("grid cell")
    ax.set_ylabel("mean accuracy")
    ax.legend(frameon=False)
    ax.set_title(f"{report.variant} ({report.operator})")
    return _save(fig, path)
