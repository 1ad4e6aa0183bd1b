"""Discrete Hölder seminorms."""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

from ..core import GridFunction

EXACT_LIMIT = 3000


def _pair_max(xa, ua, xb, ub, beta):
    d = np.linalg.norm(xa[:, None, :] - xb[None, :, :], axis=-1)
    du = np.abs(ua[:, None] - ub[None, :])
    with np.errstate(divide="ignore", invalid="ignore"):
        q = np.where(d > 0, du / d**beta, 0.0)
    return float(q.max()) if q.size else 0.0


def holder_exact(x: np.ndarray, u: np.ndarray, beta: float, chunk: int = 512) -> float:
    """Max over all node pairs of |u(x)−u(y)|/|x−y|^β."""
    best = 0.0
    for i in range(0, len(u), chunk):
        best = max(best, _pair_max(x[i : i + chunk], u[i : i + chunk], x, u, beta))
    return best


def holder_multiscale(x: np.ndarray, u: np.ndarray, beta: float, h: float) -> float:
    """Pairs restricted to a dyadic ladder: at level j, nodes subsampled to a
    stride-2^j lattice paired within radius 2·2^j·h·√n. Once the subsample
    is small enough all of its pairs are enumerated. The global extreme pair
    is always included, so the result never exceeds the exact value."""
    n = x.shape[1]
    best = 0.0
    imax, imin = int(np.argmax(u)), int(np.argmin(u))
    if imax != imin:
        best = abs(u[imax] - u[imin]) / np.linalg.norm(x[imax] - x[imin]) ** beta
    extent = np.ptp(x, axis=0).max()
    j = 0
    rel = (x - x.min(axis=0)) / h
    while 2**j * h <= 2 * extent:
        s = 2**j
        if j == 0:
            sel = np.arange(len(u))
        else:
            k = np.round(rel)
            sel = np.nonzero(np.all(np.isclose(rel, k, atol=1e-6) & (np.mod(k, s) == 0), axis=1))[0]
        if 2 <= len(sel) <= EXACT_LIMIT // 2:
            best = max(best, holder_exact(x[sel], u[sel], beta))
            break
        if len(sel) >= 2:
            xs, us = x[sel], u[sel]
            tree = cKDTree(xs)
            pairs = tree.query_pairs(2.0 * s * h * np.sqrt(n) + 1e-12 * h, output_type="ndarray")
            if len(pairs):
                d = np.linalg.norm(xs[pairs[:, 0]] - xs[pairs[:, 1]], axis=1)
                q = np.abs(us[pairs[:, 0]] - us[pairs[:, 1]]) / d**beta
                best = max(best, float(q.max()))
        j += 1
    return best


def holder_seminorm(u: GridFunction, beta: float, region=None, method: str = "auto") -> float:
    """Discrete C^β seminorm of ``u`` over the nodes of ``region``.

    Exact pair enumeration for up to ``EXACT_LIMIT`` nodes, otherwise the
    multiscale restriction (``method`` may force either).
    """
    if not 0 < beta <= 1:
        raise ValueError("beta must lie in (0, 1]")
    mask = u.grid.region_mask(region)
    if mask.sum() == 0:
        raise ValueError("holder_seminorm over an empty region")
    if mask.sum() < 2:
        raise ValueError("holder_seminorm needs at least two nodes")
    x, vals = u.grid.points[mask], u.values[mask]
    if method == "exact" or (method == "auto" and len(vals) <= EXACT_LIMIT):
        return holder_exact(x, vals, beta)
    return holder_multiscale(x, vals, beta, u.grid.h)
