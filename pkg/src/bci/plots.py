"""Matplotlib figures written next to the CSV/JSON reports."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "figure.figsize": (6.0, 3.8),
    "font.size": 10,
    "axes.labelsize": 10,
    "legend.fontsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
}

# strip the version stamp so reruns produce identical bytes
_METADATA = {"Software": None}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_METADATA)
    plt.close(fig)
    return path


def plot_convergence(result, path):
    """Index of every peer against iteration number."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        steps = range(len(result.history))
        for i in range(len(result.x)):
            ax.plot(steps, [h[i] for h in result.history], marker="o", ms=3, label=f"peer {i}")
        ax.axhline(1 - result.alpha, color="0.6", lw=0.8, ls="--")
        ax.axhline(1.0, color="0.6", lw=0.8, ls="--")
        ax.set_xlabel("iteration k")
        ax.set_ylabel("BCI")
        ax.set_title(f"alpha = {result.alpha:g}, {result.iterations} iterations")
        if len(result.x) <= 12:
            ax.legend(ncol=2)
        return _save(fig, path)


def plot_sweep(rows: Sequence[tuple[float, int, Sequence[float]]], path):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        alphas = [a for a, _, _ in rows]
        ax.plot(alphas, [k for _, k, _ in rows], marker="s")
        ax.set_xlabel("alpha")
        ax.set_ylabel("iterations to converge")
        return _save(fig, path)


def plot_trajectories(metrics, threshold: float, path):
    """Per-peer index at every recompute, free riders drawn dashed."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        steps = [s.step for s in metrics.snapshots]
        riders = set(metrics.free_riders())
        for i in range(len(metrics.profiles)):
            ax.plot(steps, [s.bci[i] for s in metrics.snapshots],
                    ls="--" if i in riders else "-", lw=1.5 if i in riders else 0.8,
                    label="free rider" if i == min(riders, default=-1) else None)
        ax.axhline(threshold, color="r", lw=0.8, label="threshold")
        ax.set_xlabel("attempted transactions")
        ax.set_ylabel("BCI")
        ax.legend()
        return _save(fig, path)
