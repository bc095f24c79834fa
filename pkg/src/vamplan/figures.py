"""Matplotlib renders written by the report path, next to the CSV outputs."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .grids import Field
from .metrics import Histogram
from .optimizer import RunRecord


def convergence_figure(record: RunRecord, path: str | Path) -> Path:
    path = Path(path)
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.semilogy(np.maximum(record.loss_history, 1e-300), lw=1.2)
    ax.set_xlabel("iteration")
    ax.set_ylabel("loss")
    ax.set_title(f"termination: {record.termination}")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def field_figure(field: Field, path: str | Path, title: str = "", z: int = 0,
                 vmin: float | None = None, vmax: float | None = None) -> Path:
    path = Path(path)
    fig, ax = plt.subplots(figsize=(4.2, 4.2))
    im = ax.imshow(field.slice(z), origin="lower", cmap="gray", vmin=vmin, vmax=vmax)
    ax.set_xticks([])
    ax.set_yticks([])
    if title:
        ax.set_title(title)
    fig.colorbar(im, ax=ax, fraction=0.046)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def histogram_figure(hist: Histogram, path: str | Path, band_edge: float = 0.0) -> Path:
    """Band-excess histogram; the region inside the band (E < 0) is shaded."""
    path = Path(path)
    centers = 0.5 * (hist.bin_edges[:-1] + hist.bin_edges[1:])
    width = np.diff(hist.bin_edges)
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.bar(centers, hist.masses, width=width, color="tab:blue")
    ax.axvspan(hist.bin_edges[0], band_edge, color="0.85", zorder=0)
    ax.set_xlabel("band excess E (response units)")
    ax.set_ylabel("weighted volume")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
