"""PNG figures written next to the CSV outputs (Agg backend, no display)."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__all__ = ["plot_series", "plot_field", "plot_star_table"]

# fixed metadata keeps repeated runs byte-identical
_META = {"Software": None}


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, dpi=110, metadata=_META)
    plt.close(fig)
    return path


def plot_series(path, x, series: dict, xlabel: str, ylabel: str, logx=False, logy=False,
                title: str | None = None) -> Path:
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    for label, y in series.items():
        ax.plot(x, y, marker="o", ms=3, lw=1.2, label=label)
    if logx:
        ax.set_xscale("log")
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title, fontsize=10)
    if len(series) > 1:
        ax.legend(fontsize=8, frameon=False)
    ax.grid(alpha=0.3)
    return _save(fig, path)


def plot_field(path, f, title: str | None = None) -> Path:
    """Pointwise magnitude of a grid field: a curve in 1-D, an image in 2-D."""
    g = f.grid
    mag = f.magnitude()
    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    if g.d == 1:
        ax.plot(g.axis(), mag, lw=1.0)
        ax.set_xlabel("x")
        ax.set_ylabel("|f|")
    else:
        img = mag if g.d == 2 else mag[..., g.N // 2]
        im = ax.imshow(img.T, origin="lower", extent=(-g.L, g.L, -g.L, g.L), cmap="viridis")
        fig.colorbar(im, ax=ax, shrink=0.85, label="|f|")
        ax.set_xlabel("x1")
        ax.set_ylabel("x2")
    if title:
        ax.set_title(title, fontsize=10)
    return _save(fig, path)


def plot_star_table(path, tables, A: int = 3) -> Path:
    """Star values per level against the cube center, convex atoms marked."""
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    for t in tables:
        # 1-D index position, or distance from the origin in higher dimension
        x = np.linalg.norm(t.indices, axis=1) * np.sign(t.indices[:, 0] + 0.5) / float(A) ** t.k
        order = np.argsort(x)
        ax.plot(x[order], t.star[order], lw=1.0, label=f"k={t.k}")
        cx = t.convex
        if cx.any():
            ax.plot(x[cx], t.star[cx], "kx", ms=4)
    ax.set_yscale("symlog", linthresh=1e-12)
    ax.set_xlabel("cube center")
    ax.set_ylabel("star")
    ax.legend(fontsize=8, frameon=False)
    ax.grid(alpha=0.3)
    return _save(fig, path)
