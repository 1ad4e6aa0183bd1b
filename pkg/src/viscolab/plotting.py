"""Deterministic matplotlib figures for run reports."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import matplotlib.tri as mtri  # noqa: E402
import numpy as np  # noqa: E402

from .core import GridFunction  # noqa: E402

STYLE = {
    "figure.figsize": (5.0, 3.6),
    "figure.dpi": 100,
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.4,
    "savefig.bbox": "standard",
    "svg.hashsalt": "viscolab",
}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    # no Software tag or timestamps, so reruns are byte-identical
    fig.savefig(path, format="png", metadata={"Software": None})
    plt.close(fig)
    return path


def field_figure(u: GridFunction, path, title: str = "", label: str = "u") -> Path:
    """Line plot in 1D, filled contours on the node triangulation in 2D."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        pts = u.grid.points
        if u.grid.n == 1:
            order = np.argsort(pts[:, 0])
            ax.plot(pts[order, 0], u.values[order], color="C0")
            ax.set_xlabel("x")
            ax.set_ylabel(label)
        else:
            tri = mtri.Triangulation(pts[:, 0], pts[:, 1])
            # drop triangles whose centroid leaves the domain (non-convex hulls)
            cent = pts[tri.triangles].mean(axis=1)
            tri.set_mask(~u.grid.domain.contains(cent))
            cs = ax.tricontourf(tri, u.values, levels=20, cmap="viridis")
            fig.colorbar(cs, ax=ax, label=label)
            ax.set_aspect("equal")
            ax.set_xlabel("x0")
            ax.set_ylabel("x1")
            ax.grid(False)
        ax.set_title(title)
        return _save(fig, path)


def trace_figure(trace, path, title: str = "residual history", ylabel: str = "residual") -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        t = np.asarray(trace, dtype=float)
        ax.semilogy(np.arange(len(t)), np.maximum(t, 1e-300), color="C1")
        ax.set_xlabel("iteration")
        ax.set_ylabel(ylabel)
        ax.set_title(title)
        return _save(fig, path)


def loglog_figure(r, E, path, slope: float | None = None, title: str = "", xlabel: str = "r_k",
                  ylabel: str = "E_k") -> Path:
    """Log-log ladder with an optional reference line of the fitted slope."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        r, E = np.asarray(r, dtype=float), np.asarray(E, dtype=float)
        pos = E > 0
        ax.loglog(r[pos], E[pos], "o-", color="C0", label="data")
        if slope is not None and np.isfinite(slope) and pos.any():
            k = np.nonzero(pos)[0][0]
            ax.loglog(r, E[k] * (r / r[k]) ** slope, "--", color="C3", label=f"slope {slope:.3f}")
            ax.legend()
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        ax.set_title(title)
        return _save(fig, path)


def series_figure(x, series: dict, path, title: str = "", xlabel: str = "", ylabel: str = "",
                  logx: bool = False, logy: bool = False, markers: bool = True) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for i, (name, y) in enumerate(series.items()):
            ax.plot(x, y, "o-" if markers else "-", color=f"C{i}", label=name)
        if logx:
            ax.set_xscale("log")
        if logy:
            ax.set_yscale("log")
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        ax.set_title(title)
        if len(series) > 1:
            ax.legend()
        return _save(fig, path)


def histogram_figure(values, path, cap: float | None = None, title: str = "", xlabel: str = "") -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        v = np.asarray(values, dtype=float)
        ax.hist(v[np.isfinite(v)], bins=20, color="C0", alpha=0.8)
        if cap is not None:
            ax.axvline(cap, color="C3", ls="--", label=f"cap {cap:.4g}")
            ax.legend()
        ax.set_xlabel(xlabel)
        ax.set_ylabel("count")
        ax.set_title(title)
        return _save(fig, path)
