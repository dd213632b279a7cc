"""Figures for run directories, written as SVG with reproducible bytes."""

from __future__ import annotations

from pathlib import Path
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# fixed element ids and no timestamp so identical data gives identical files
matplotlib.rcParams["svg.hashsalt"] = "shearlab"
_META = {"Date": None, "Creator": "shearlab"}


def _save(fig, path) -> Path:
    path = Path(path)
    fig.savefig(path, metadata=_META if path.suffix == ".svg" else None)
    plt.close(fig)
    return path


def plot_trajectory(record, path, title: str = "", t_sat: Optional[float] = None) -> Path:
    """Squared norm, functional and certificate margin against time."""
    t = record["t"]
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
    ax1.semilogy(t, np.maximum(record["l2sq"], 1e-300), label=r"$\|f\|_2^2$")
    F = record["functional"]
    if np.all(np.isfinite(F)):
        ax1.semilogy(t, np.maximum(F, 1e-300), "--", label="functional")
    ax1.set_ylabel("energy")
    ax1.legend()
    margin = record["certificate_margin"]
    if np.all(np.isfinite(margin)):
        ax2.plot(t, margin)
        ax2.axhline(1.0, color="k", lw=0.8, ls=":")
        ax2.set_ylabel("certificate margin")
    else:
        ax2.semilogy(t, np.maximum(record["h1sq"], 1e-300))
        ax2.set_ylabel(r"$\|\partial_y f\|_2^2$")
    if t_sat is not None:
        for ax in (ax1, ax2):
            ax.axvline(t_sat, color="grey", lw=0.8, ls="--")
    ax2.set_xlabel("t")
    if title:
        ax1.set_title(title)
    fig.tight_layout()
    return _save(fig, path)


def plot_sweep(axis_values: Sequence[float], rates: Sequence[float], p_hat: float,
               prefactor: float, path, axis_label: str = r"$\nu$") -> Path:
    x = np.asarray(axis_values, dtype=float)
    r = np.asarray(rates, dtype=float)
    fig, ax = plt.subplots(figsize=(6, 4.5))
    ax.loglog(x, r, "o", label="fitted rate")
    if np.isfinite(p_hat):
        xs = np.geomspace(x.min(), x.max(), 50)
        ax.loglog(xs, prefactor * xs**p_hat, "-", label=f"slope {p_hat:.4f}")
    ax.set_xlabel(axis_label)
    ax.set_ylabel("decay rate")
    ax.legend()
    fig.tight_layout()
    return _save(fig, path)


def plot_spectral(eps: Sequence[float], constants: Sequence[float], path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4.5))
    ax.semilogx(eps, constants, "o-")
    ax.set_xlabel(r"$\varepsilon$")
    ax.set_ylabel("spectral constant")
    fig.tight_layout()
    return _save(fig, path)
