"""Figure rendering for the report path: every CSV gets a companion PNG."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "plot_spectrum",
    "plot_check_slacks",
    "plot_path_norms",
    "plot_audit_margins",
]

_DPI = 130


def _save(fig, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path


def plot_spectrum(path: Path, k: np.ndarray, s: np.ndarray, defect: np.ndarray) -> Path:
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    ax.semilogy(k, s, "o-", ms=3, lw=1, label="singular value $s_k$")
    ax.semilogy(k, np.maximum(defect, 1e-18), "s--", ms=3, lw=1, label="defect of rank-$k$ truncation")
    ax.set_xlabel("mode index k")
    ax.set_ylabel("value")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    return _save(fig, path)


def plot_check_slacks(path: Path, labels: list[str], measured: np.ndarray, bounds: np.ndarray) -> Path:
    y = np.arange(len(labels))
    fig, ax = plt.subplots(figsize=(7.2, 0.5 * len(labels) + 1.6))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(bounds > 0, measured / bounds, 0.0)
    ax.barh(y, ratio, color=np.where(ratio <= 1.0, "tab:green", "tab:red"))
    ax.axvline(1.0, color="k", lw=1)
    ax.set_yticks(y, labels, fontsize=8)
    ax.set_xlabel("measured / bound")
    ax.grid(True, axis="x", alpha=0.3)
    return _save(fig, path)


def plot_path_norms(path: Path, times: np.ndarray, norms: np.ndarray) -> Path:
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    show = min(norms.shape[0], 40)
    for p in range(show):
        ax.plot(times, norms[p], lw=0.7, alpha=0.5)
    ax.plot(times, norms.mean(axis=0), "k-", lw=2, label="ensemble mean")
    ax.set_xlabel("t")
    ax.set_ylabel("curve norm")
    ax.grid(True, alpha=0.3)
    ax.legend()
    return _save(fig, path)


def plot_audit_margins(path: Path, series: dict[str, tuple[np.ndarray, np.ndarray]]) -> Path:
    """series: label -> (t, margin) scatter per audit."""
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for label, (t, margin) in series.items():
        ax.plot(t, margin, ".", ms=2, alpha=0.4, label=label)
    ax.axhline(1.0, color="k", lw=1)
    ax.set_xlabel("t")
    ax.set_ylabel("error / bound")
    ax.set_ylim(bottom=0)
    ax.grid(True, alpha=0.3)
    ax.legend(markerscale=4, fontsize=8)
    return _save(fig, path)
