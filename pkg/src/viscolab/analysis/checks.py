"""Strong maximum principle, Hopf quotient and discrete W^{2,p} checks."""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

from ..core import GridFunction, lp_norm
from ..discretize import Scheme
from ..reports import Report
from ..solve import ProblemSpec, Solution

HOPF_MIN_COS = 0.7


def hopf_quotients(u: GridFunction, portion: str | None = None, tol: float = 1e-12,
                   corner_margin: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """One-sided interior-normal difference quotients at boundary zeros.

    For each boundary node b with |u(b)| ≤ tol, among the stencil arms
    joining b to an interior node i with cos∠(x_i − x_b, ν(b)) ≥ 0.7, the
    best aligned arm gives (u_i − u_b)/(|x_i − x_b| cos). Since u vanishes
    along the boundary, the division by cos recovers the normal derivative.
    Nodes within ``corner_margin`` (default 3h) of a second active
    constraint are skipped: the interior-ball condition fails at corners.
    Returns (boundary node indices, quotients).
    """
    g = u.grid
    Ni = g.n_interior
    vals = u.values
    normals = g.inward_normals()
    margin = 3 * g.h if corner_margin is None else corner_margin
    bpts = g.points[Ni:]
    levels = np.stack([c.level(bpts) for c in g.domain.constraints], axis=1)
    near = np.sum(levels >= -margin, axis=1)
    eligible = (np.abs(vals[Ni:]) <= tol) & (near <= 1)
    if portion is not None:
        eligible &= g.boundary_labels() == portion
    best_cos = np.full(g.n_nodes - Ni, -np.inf)
    best_q = np.full(g.n_nodes - Ni, np.nan)
    rows = np.arange(Ni)
    for arm in g.arms:
        for end in (arm.fwd, arm.bwd):
            hit = end >= Ni
            if not hit.any():
                continue
            bi = end[hit] - Ni
            ii = rows[hit]
            e = g.points[ii] - g.points[end[hit]]
            dist = np.linalg.norm(e, axis=1)
            cos = np.einsum("ij,ij->i", e, normals[bi]) / dist
            q = (vals[ii] - vals[end[hit]]) / (dist * np.maximum(cos, 1e-300))
            better = (cos >= HOPF_MIN_COS) & eligible[bi] & (cos > best_cos[bi] + 1e-12)
            # resolve duplicate boundary targets within this batch in order
            for k in np.nonzero(better)[0]:
                j = bi[k]
                if cos[k] > best_cos[j] + 1e-12:
                    best_cos[j], best_q[j] = cos[k], q[k]
    have = np.isfinite(best_q)
    return np.nonzero(have)[0] + Ni, best_q[have]


def smp_hopf_check(u: GridFunction, domain=None, portion: str | None = None, tol: float = 1e-12,
                   floor_factor: float = 10.0, corner_margin: float | None = None) -> Report:
    """SMP dichotomy and Hopf quotient for a nonnegative grid function.

    SMP: either all values are ≤ ``tol`` (identically zero) or the interior
    minimum is positive. Hopf: the smallest quotient κ at boundary zeros
    must reach ``floor_factor``·h.
    """
    g = u.grid
    if domain is not None and domain != g.domain:
        raise ValueError("grid function lives on a different domain")
    Ni = g.n_interior
    vals = u.values
    data: dict = {"h": g.h, "floor": floor_factor * g.h, "tol": tol}
    if np.min(vals) < -tol:
        data.update(branch="negative_values", min_value=float(np.min(vals)), smp_ok=False, hopf_ok=False)
        return Report("smp_hopf", False, data)
    if np.max(np.abs(vals)) <= tol:
        data.update(branch="identically_zero", smp_ok=True, hopf_ok=True, kappa=None)
        return Report("smp_hopf", True, data)
    imin = float(np.min(vals[:Ni])) if Ni else np.inf
    smp_ok = imin > tol
    nodes, q = hopf_quotients(u, portion, tol, corner_margin)
    kappa = float(np.min(q)) if len(q) else None
    hopf_ok = kappa is not None and kappa >= floor_factor * g.h
    data.update(
        branch="positive" if smp_ok else "interior_zero",
        interior_min=imin, smp_ok=smp_ok, hopf_ok=hopf_ok, kappa=kappa,
        checked_boundary_nodes=int(len(q)),
        witness=None if smp_ok else g.points[int(np.argmin(vals[:Ni]))].tolist(),
    )
    return Report("smp_hopf", bool(smp_ok and hopf_ok), data)


def w2p_norm(u: GridFunction, p: float, m: int = 8) -> dict:
    """Discrete ‖u‖_{W^{2,p}} = ‖u‖_p + ‖Du‖_p + ‖D²u‖_p.

    Centered first differences and the Hessian proxy (Frobenius norm) are
    formed at interior nodes and carried to each boundary node from its
    nearest interior node, so all three terms use the same quadrature over
    every lattice node. Dropping the boundary nodes instead would lose a
    layer of measure O(h) and bias the derivative terms low.
    """
    g = u.grid
    Ni = g.n_interior
    if Ni == 0:
        un = lp_norm(u, p)
        return {"u": un, "Du": 0.0, "D2u": 0.0, "total": un}
    sch = Scheme(g, m=m if g.n == 2 else 8, gradient="centered")
    d = sch.derivs(u.values)
    _, near = cKDTree(g.points[:Ni]).query(g.points[Ni:])
    src = np.concatenate([np.arange(Ni), near])
    grad = np.linalg.norm(d.Dc, axis=1)[src]
    hess = np.linalg.norm(d.hessian().reshape(Ni, -1), axis=1)[src]
    parts = {
        "u": lp_norm(u, p),
        "Du": lp_norm(GridFunction(g, grad), p),
        "D2u": lp_norm(GridFunction(g, hess), p),
    }
    parts["total"] = parts["u"] + parts["Du"] + parts["D2u"]
    return parts


def _psi_function(problem: ProblemSpec) -> GridFunction:
    """Boundary data extended to all nodes by its rule (constants stay constant)."""
    g = problem.grid
    b = problem.boundary
    if isinstance(b, GridFunction):
        return b
    if callable(b):
        return GridFunction(g, np.broadcast_to(np.asarray(b(g.points), dtype=float), (g.n_nodes,)).copy())
    return GridFunction(g, np.full(g.n_nodes, float(b)))


def nagumo_check(u, problem: ProblemSpec, p: float = 4.0) -> Report:
    """Ratio of the discrete W^{2,p} norm of u to the bracket
    ‖u‖_∞ + ‖f‖_p + ‖ψ‖_{W^{2,p}} + ‖d‖_p ω(‖u‖_∞)."""
    u = u.u if isinstance(u, Solution) else u
    g = problem.grid
    P = problem.operator.params
    w = w2p_norm(u, p, problem.stencil_m)
    usup = u.sup()
    fn = lp_norm(GridFunction(g, problem.f), p)
    psi = w2p_norm(_psi_function(problem), p, problem.stencil_m)["total"]
    dn = 0.0 if P.d.is_zero else lp_norm(GridFunction(g, P.d.evaluate(g.points, g)), p)
    bracket = usup + fn + psi + dn * float(P.omega(usup))
    ratio = w["total"] / bracket if bracket > 0 else (0.0 if w["total"] == 0 else np.inf)
    return Report("nagumo", bool(np.isfinite(ratio)), {
        "p": p, "h": g.h, "w2p": w, "bracket": bracket, "ratio": float(ratio),
        "terms": {"u_sup": usup, "f": fn, "psi_w2p": psi, "d_omega": dn * float(P.omega(usup))},
    })


def nagumo_ladder(make_problem, hs=(1 / 32, 1 / 64, 1 / 128), p: float = 4.0, cfg=None,
                  max_spread: float = 0.1) -> Report:
    """Nagumo ratios across a refinement ladder.

    ``make_problem(h)`` builds the problem at spacing h. The ladder is
    stable when the relative spread (max − min)/min stays within
    ``max_spread``; ``monotone_growth`` is reported alongside.
    """
    from ..solve import solve_dirichlet

    ratios, rows = [], []
    for h in hs:
        prob = make_problem(h)
        sol = solve_dirichlet(prob, cfg)
        rep = nagumo_check(sol, prob, p)
        ratios.append(rep.data["ratio"])
        rows.append({"h": h, "ratio": rep.data["ratio"], "converged": sol.converged, "w2p": rep.data["w2p"],
                     "bracket": rep.data["bracket"]})
    r = np.array(ratios)
    spread = float((r.max() - r.min()) / r.min()) if np.all(np.isfinite(r)) and r.min() > 0 else np.inf
    growth = bool(np.all(np.diff(r) > 0))
    return Report("nagumo_ladder", bool(spread <= max_spread), {
        "p": p, "hs": list(hs), "ratios": ratios, "spread": spread, "monotone_growth": growth,
        "max_spread": max_spread, "rows": rows,
    })
