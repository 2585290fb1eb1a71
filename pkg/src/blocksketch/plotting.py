"""Figure rendering for the experiment CSVs.

Uses the object-oriented matplotlib API (no pyplot state), so rendering is
safe off the main thread and needs no display backend.
"""
import math

import numpy as np
from matplotlib.figure import Figure

RC = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 7,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "lines.linewidth": 1.2,
}

LABELS = {
    "blocksrht": "block-SRHT",
    "garbled": "garbled block-SRHT",
    "haar": "Haar orthonormal",
    "gaussian": "Gaussian",
    "rademacher": "Rademacher",
    "identity": "raw",
    "sd": "SD",
    "ssd": "mini-batch SSD",
}


def _figure(width=4.5, ratio=0.68):
    import matplotlib

    matplotlib.rcParams.update(RC)
    return Figure(figsize=(width, width * ratio), dpi=150)


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})


def plot_fig1(rows, path):
    """Log residual against log step factor, one line per method."""
    fig = _figure()
    ax = fig.add_subplot()
    for method in sorted({r[0] for r in rows}):
        pts = sorted((f, v) for m, f, v in rows if m == method)
        xs = [f for f, v in pts if math.isfinite(v)]
        ys = [v for f, v in pts if math.isfinite(v)]
        ax.plot(xs, ys, marker="o", ms=3, label=LABELS.get(method, method))
    ax.set_xlabel(r"$\log_{10}(\xi/\xi_{opt})$")
    ax.set_ylabel(r"$\log_{10}\|x^\star - \hat{x}\|_2$")
    ax.legend(frameon=False)
    _save(fig, path)


def plot_fig2(curves, path):
    fig = _figure()
    ax = fig.add_subplot()
    for method, curve in curves.items():
        curve = np.asarray(curve, dtype=float)
        ok = np.isfinite(curve)
        ax.semilogy(np.arange(curve.size)[ok], curve[ok], label=LABELS.get(method, method))
    ax.set_xlabel("iteration")
    ax.set_ylabel(r"$\|x^\star - \hat{x}^{[t]}\|_2$")
    ax.legend(frameon=False)
    _save(fig, path)


def plot_fig3(rows, path):
    """Block scores per block index, raw against each projection."""
    fig = _figure(ratio=0.6)
    ax = fig.add_subplot()
    for kind in sorted({r[0] for r in rows}):
        pts = sorted((j, s) for k, j, s in rows if k == kind)
        ax.plot([j for j, _ in pts], [s for _, s in pts], lw=0.8, label=LABELS.get(kind, kind))
    ax.set_yscale("log")
    ax.set_xlabel("block")
    ax.set_ylabel("block-leverage score")
    ax.legend(frameon=False, ncol=2)
    _save(fig, path)
