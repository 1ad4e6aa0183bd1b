"""Minimax affine fits over shrinking balls and C^{1,α} exponent extraction."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from ..core import GridFunction

DEFAULT_ALPHA_GRID = tuple(round(0.05 * k, 2) for k in range(1, 20))


def minimax_affine_fit(x: np.ndarray, u: np.ndarray, x0) -> tuple[float, np.ndarray, float]:
    """Chebyshev (sup-norm) best affine fit u ≈ a + b·(x − x0).

    Solved as a linear program: minimize t subject to
    |u_i − a − b·(x_i − x0)| ≤ t. Coordinates are rescaled to the unit
    ball for conditioning. Returns (a, b, E) with E the sup error.
    """
    x = np.atleast_2d(x)
    n = x.shape[1]
    y = x - np.asarray(x0, dtype=float)
    r = float(np.max(np.linalg.norm(y, axis=1))) or 1.0
    ys = y / r
    scale = float(np.max(np.abs(u))) or 1.0
    us = u / scale
    m = len(us)
    # variables: a, b (n), t
    ones = np.ones((m, 1))
    A_ub = np.block([[-ones, -ys, -ones], [ones, ys, -ones]])
    b_ub = np.concatenate([-us, us])
    c = np.zeros(n + 2)
    c[-1] = 1.0
    bounds = [(None, None)] * (n + 1) + [(0, None)]
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=bounds, method="highs",
                  options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10})
    if not res.success:
        raise RuntimeError(f"minimax fit failed: {res.message}")
    a = res.x[0] * scale
    b = res.x[1 : n + 1] * scale / r
    E = float(np.max(np.abs(u - a - y @ b)))
    # the LP stops at its feasibility tolerance; a least-squares competitor
    # recovers exact zeros on affine data
    coef = np.linalg.lstsq(np.hstack([np.ones((m, 1)), y]), u, rcond=None)[0]
    E_ls = float(np.max(np.abs(u - coef[0] - y @ coef[1:])))
    if E_ls < E:
        return float(coef[0]), coef[1:], E_ls
    return float(a), b, E


@dataclass
class RegularityFit:
    """Affine approximations l_k(x) = a_k + b_k·(x − x₀) on balls r_k = r₀γ^k.

    ``E`` holds the sup errors, ``increments`` the |b_k − b_{k−1}|
    ladder, ``alpha_est`` the exponent from the log–log slope of E_k
    against r_k (minus one, clipped to [0, top of α grid]) and
    ``alpha_certified`` the largest grid α whose normalized errors
    E_k / r_k^{1+α} do not grow across scales (5% slack).
    """

    center: np.ndarray
    gamma: float
    radii: np.ndarray
    a: np.ndarray
    b: np.ndarray
    E: np.ndarray
    counts: np.ndarray
    usable: np.ndarray
    slope: float
    alpha_est: float
    C_est: float
    alpha_certified: float
    increments: np.ndarray
    increment_model: dict
    boundary: bool = False
    alpha_grid: tuple = DEFAULT_ALPHA_GRID
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "center": self.center.tolist(), "gamma": self.gamma, "radii": self.radii.tolist(),
            "a": self.a.tolist(), "b": self.b.tolist(), "E": self.E.tolist(),
            "counts": self.counts.tolist(), "usable": self.usable.tolist(), "slope": self.slope,
            "alpha_est": self.alpha_est, "C_est": self.C_est, "alpha_certified": self.alpha_certified,
            "increments": self.increments.tolist(), "increment_model": self.increment_model,
            "boundary": self.boundary, "notes": self.notes,
        }

    def ladder_csv(self) -> str:
        n = self.b.shape[1]
        head = "k,r_k,E_k,a_k," + ",".join(f"b_k{i}" for i in range(n))
        rows = [head]
        for k in range(len(self.radii)):
            vals = [self.radii[k], self.E[k], self.a[k], *self.b[k]]
            rows.append(f"{k}," + ",".join(f"{v:.17g}" for v in vals))
        return "\n".join(rows) + "\n"


def _increment_model(incs: np.ndarray, radii: np.ndarray) -> dict:
    """Fit inc_k ≈ K r_{k−1}^s (k ≥ 1) in log space; report the worst
    factor between data and model and the partial sums."""
    if len(incs) == 0:
        return {"K": 0.0, "s": math.nan, "shape_factor": 1.0, "sum": 0.0, "tail_bound": 0.0}
    r_prev = radii[:-1][: len(incs)]
    total = float(np.sum(incs))
    pos = incs > 1e-14 * max(1.0, float(np.max(np.abs(incs))))
    if pos.sum() < 2:
        return {"K": float(incs.max()), "s": math.nan, "shape_factor": 1.0, "sum": total, "tail_bound": 0.0}
    lr, li = np.log(r_prev[pos]), np.log(incs[pos])
    s, logK = np.polyfit(lr, li, 1)
    model = np.exp(logK) * r_prev[pos] ** s
    factor = float(np.max(np.maximum(incs[pos] / model, model / incs[pos])))
    g = radii[1] / radii[0] if len(radii) > 1 else 0.0
    tail = float(np.exp(logK) * r_prev[-1] ** s * g**s / (1 - g**s)) if s > 0 else math.inf
    return {"K": float(np.exp(logK)), "s": float(s), "shape_factor": factor, "sum": total, "tail_bound": tail}


def caffarelli_fit(u: GridFunction, x0, gamma: float = 0.25, K: int = 6, alpha_grid=DEFAULT_ALPHA_GRID,
                   boundary: bool = False, r0: float = 1.0, min_nodes: int = 10) -> RegularityFit:
    """Minimax affine fits on B_{r_k}(x₀) ∩ Ω̄, r_k = r₀ γ^k, k < K.

    With ``boundary`` set the balls are intersected with the grid domain
    (half-ball variant); this only labels the fit since every ball is
    already clipped to the grid's nodes.
    """
    if not 0 < gamma <= 0.25:
        raise ValueError("gamma must lie in (0, 1/4]")
    grid = u.grid
    n = grid.n
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    dist = np.linalg.norm(grid.points - x0, axis=1)
    need = max(n + 2, min_nodes)
    radii, As, Bs, Es, counts = [], [], [], [], []
    for k in range(K):
        r = r0 * gamma**k
        sel = dist <= r * (1 + 1e-12)
        cnt = int(sel.sum())
        if cnt < need:
            break
        a, b, E = minimax_affine_fit(grid.points[sel], u.values[sel], x0)
        radii.append(r); As.append(a); Bs.append(b); Es.append(E); counts.append(cnt)
    if len(radii) < 3:
        raise ValueError(f"only {len(radii)} usable scales (need 3); refine the grid or enlarge r0")
    radii, As, Bs, Es = np.array(radii), np.array(As), np.array(Bs), np.array(Es)
    counts = np.array(counts)
    top = float(max(alpha_grid))
    noise = 10 * np.finfo(float).eps * max(1.0, float(np.max(np.abs(u.values))))
    usable = Es > noise
    notes = []
    if usable.sum() < 2:
        slope, alpha, C = math.inf, top, 0.0
        notes.append("errors at noise level on all scales: affine data")
    else:
        slope = float(np.polyfit(np.log(radii[usable]), np.log(Es[usable]), 1)[0])
        alpha = float(min(max(slope - 1.0, 0.0), top))
        C = float(np.max(Es[usable] / radii[usable] ** (1 + alpha)))
    cert = 0.0
    for a_g in sorted(alpha_grid):
        if usable.sum() < 2:
            cert = top
            break
        norm = Es[usable] / radii[usable] ** (1 + a_g)
        if np.all(norm[1:] <= 1.05 * np.maximum.accumulate(norm)[:-1]):
            cert = a_g
    incs = np.linalg.norm(np.diff(Bs, axis=0), axis=1)
    model = _increment_model(incs, radii)
    return RegularityFit(x0, gamma, radii, As, Bs, Es, counts, usable, slope, alpha, C, cert, incs, model,
                         boundary, tuple(alpha_grid), notes)
