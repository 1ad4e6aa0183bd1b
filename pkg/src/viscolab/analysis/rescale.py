"""Blow-up and affine-iteration rescalings of a solved Dirichlet problem.

Both transforms pull a grid function back along T y = s·y + x₀. The new
grid has spacing h/s and origin 0, so every new lattice node maps onto an
old lattice node (x₀ is snapped to the old lattice). Values at cut
boundary nodes of the new domain are interpolated from the old grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import griddata

from ..core import CoefficientField, Domain, Grid, GridFunction, lp_norm
from ..operators import RescaledOperator, StructureParams
from ..solve import ProblemSpec, Solution, residual


@dataclass
class RescaledProblem:
    """A transformed field with its transformed operator, params and data.

    ``node_map[i]`` is the old node index that new node i maps onto, or -1
    for new nodes off the old lattice (cut points). ``rhs1``/``rhs2`` are
    the two right-hand side pieces on the new grid; the transformed problem
    is F̃[ũ] = rhs1 + rhs2.
    """

    kind: str
    field: GridFunction
    operator: RescaledOperator
    params: StructureParams
    rhs1: np.ndarray
    rhs2: np.ndarray
    problem: ProblemSpec
    node_map: np.ndarray
    bookkeeping: dict
    source_problem: ProblemSpec = field(repr=False, default=None)
    source_u: GridFunction = field(repr=False, default=None)

    def inverse(self) -> tuple[np.ndarray, np.ndarray]:
        """Map the transformed field back: returns (old node indices, values)."""
        bk = self.bookkeeping
        sel = self.node_map >= 0
        xs = self.operator.T(self.field.grid.points[sel])
        vals = bk["value_scale"] * self.field.values[sel] + self.operator.ell(xs)
        return self.node_map[sel], vals

    def round_trip_error(self) -> float:
        """Relative sup error of the inverse map against the source field."""
        idx, vals = self.inverse()
        ref = self.source_u.values[idx]
        return float(np.max(np.abs(vals - ref)) / max(np.max(np.abs(ref)), 1e-300))

    def residual_check(self) -> dict:
        """Compare the transformed residual with κ times the source residual.

        ``gap_commuting`` is measured on new interior nodes whose stencil
        arms (and those of the matching old node) are all uncut, where the
        identity is exact up to rounding. ``scaled_bound`` is the sup of
        the source residual times κ.
        """
        kappa = self.operator.kappa
        R_old = residual(self.source_problem, self.source_u).values
        R_new = residual(self.problem, self.field).values
        g_new, g_old = self.problem.grid, self.source_problem.grid
        Ni = g_new.n_interior
        full_new = _uncut_rows(g_new)
        full_old = _uncut_rows(g_old)
        m = self.node_map[:Ni]
        ok = (m >= 0) & full_new
        ok[ok] &= (m[ok] < g_old.n_interior)
        ok[ok] &= full_old[m[ok]]
        gap = float(np.max(np.abs(R_new[:Ni][ok] - kappa * R_old[m[ok]]))) if ok.any() else 0.0
        return {
            "kappa": kappa,
            "residual_new": float(np.max(np.abs(R_new[:Ni]))) if Ni else 0.0,
            "scaled_bound": kappa * float(np.max(np.abs(R_old[: g_old.n_interior]))),
            "gap_commuting": gap,
            "commuting_nodes": int(ok.sum()),
            "interior_nodes": int(Ni),
        }

    def to_dict(self) -> dict:
        return {
            "kind": self.kind, "bookkeeping": self.bookkeeping, "params": self.params.describe(),
            "grid": self.problem.grid.describe(),
        }


def _uncut_rows(g: Grid) -> np.ndarray:
    ok = np.ones(g.n_interior, dtype=bool)
    for arm in g.arms:
        ok &= (arm.tf == 1.0) & (arm.tb == 1.0)
    return ok


def _snap_to_lattice(grid: Grid, x0) -> tuple[np.ndarray, bool]:
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    k = np.round((x0 - grid.origin) / grid.h)
    xs = grid.origin + k * grid.h
    return xs, bool(np.max(np.abs(xs - x0)) > 1e-9 * grid.h)


def _mapped_domain(domain: Domain, x0: np.ndarray, scale: float, radius: float) -> Domain:
    """Preimage of B_{radius·scale}(x₀) ∩ Ω under T, as a ball or half-disc."""
    R = radius * scale
    if float(domain.level(x0)[0]) <= -R + 1e-12 * max(1.0, R):
        return Domain.ball(np.zeros_like(x0), radius)
    if domain.shape == "half_disc":
        nu, Rd, c = domain.params
        c = np.asarray(c)
        if np.linalg.norm(x0 - c) + R <= Rd + 1e-12:
            nu_new = (x0[1] - (c[1] - nu)) / scale
            if 0.0 <= nu_new <= radius:
                return Domain.half_disc(nu_new, radius, (0.0, 0.0))
    raise ValueError(f"ball of radius {R:g} around x0 escapes the domain")


def _pull(u: GridFunction, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Values of ``u`` at physical points: exact at old lattice nodes,
    linear interpolation elsewhere. Returns (values, old node index or -1)."""
    g = u.grid
    k = (pts - g.origin) / g.h
    kr = np.round(k)
    on = np.all(np.abs(k - kr) < 1e-7, axis=1)
    idx = -np.ones(len(pts), dtype=np.int64)
    idx[on] = g.lattice_lookup(kr[on].astype(np.int64))
    vals = np.empty(len(pts))
    hit = idx >= 0
    vals[hit] = u.values[idx[hit]]
    miss = ~hit
    if miss.any():
        if g.n == 1:
            order = np.argsort(g.points[:, 0])
            vals[miss] = np.interp(pts[miss, 0], g.points[order, 0], u.values[order])
        else:
            vals[miss] = griddata(g.points, u.values, pts[miss], method="linear")
            bad = ~np.isfinite(vals[miss])
            if bad.any():
                sub = np.nonzero(miss)[0][bad]
                vals[sub] = griddata(g.points, u.values, pts[sub], method="nearest")
    return vals, idx


def _values_at(spec, pts: np.ndarray, grid: Grid) -> np.ndarray:
    """Evaluate a problem's rhs spec at arbitrary physical points."""
    if isinstance(spec, GridFunction):
        return _pull(spec, pts)[0]
    if isinstance(spec, CoefficientField):
        return spec.evaluate(pts, grid)
    if callable(spec):
        return np.broadcast_to(np.asarray(spec(pts), dtype=float), (len(pts),)).astype(float)
    return np.full(len(pts), float(spec))


def _build(kind, u, problem, x0, scale, radius, A, B, C, kappa, ell, q, params, value_scale, book):
    g_old = problem.grid
    domain = _mapped_domain(problem.domain, x0, scale, radius)
    g_new = Grid(domain, g_old.h / scale, m=g_old.m if g_old.n == 2 else 8, origin=np.zeros(g_old.n))
    pts = scale * g_new.points + x0
    uv, node_map = _pull(u, pts)
    vals = (uv - ell(pts)) / value_scale
    op = RescaledOperator(problem.operator, scale, x0, A, B, C, kappa, ell=ell, q=q, subtract=True)
    op.params = params
    rhs1 = kappa * _values_at(problem.rhs, pts, g_old)

    def sample(fld, x, g=g_old):
        return fld.evaluate(x, g)

    rhs2 = -kappa * op.offset_term(g_new.points, sample)
    ut = GridFunction(g_new, vals)
    new_problem = ProblemSpec(op, domain, rhs=GridFunction(g_new, rhs1 + rhs2), boundary=ut,
                              stencil_m=problem.stencil_m, grid=g_new)
    book = dict(book, x0=x0.tolist(), scale=scale, value_scale=value_scale, h_new=g_new.h,
                mapped_nodes=int((node_map >= 0).sum()), interpolated_nodes=int((node_map < 0).sum()))
    return RescaledProblem(kind, ut, op, params, rhs1, rhs2, new_problem, node_map, book, problem, u)


def _as_u(u) -> GridFunction:
    return u.u if isinstance(u, Solution) else u


def blowup_W(u: GridFunction, problem: ProblemSpec, p: float, unit_floor: bool = False) -> float:
    """W = ‖u‖_∞ + ‖f‖_p + ‖d‖_p ω(‖u‖_∞), optionally max{W, 1}."""
    g = problem.grid
    params = problem.operator.params
    usup = u.sup()
    fn = lp_norm(GridFunction(g, problem.f), p)
    dn = lp_norm(GridFunction(g, params.d.evaluate(g.points, g)), p) if not params.d.is_zero else 0.0
    W = usup + fn + dn * float(params.omega(usup))
    return max(W, 1.0) if unit_floor else W


def rescale_blowup(u, problem: ProblemSpec, x0, sigma: float, p: float | None = None,
                   unit_floor: bool = False) -> RescaledProblem:
    """ũ(y) = (u(σy + x₀) − u(x₀))/N on B₂ with N = σW + sup_{B₂}|u(σ·+x₀) − u(x₀)|.

    Parameters
    ----------
    u : Solution or GridFunction on ``problem.grid``
    x0 : point, snapped to the nearest lattice node
    sigma : float in (0, 1]
    p : integrability exponent for W (default 2n)
    unit_floor : use max{W, 1}, the variant for general moduli
    """
    if not 0 < sigma <= 1:
        raise ValueError("sigma must lie in (0, 1]")
    u = _as_u(u)
    g = problem.grid
    p = p or 2.0 * g.n
    x0, snapped = _snap_to_lattice(g, x0)
    _mapped_domain(problem.domain, x0, sigma, 2.0)
    u0 = float(_pull(u, x0[None, :])[0][0])
    W = blowup_W(u, problem, p, unit_floor)
    # sup over the image of B₂ on the new nodes
    probe_dom = _mapped_domain(problem.domain, x0, sigma, 2.0)
    probe = Grid(probe_dom, g.h / sigma, origin=np.zeros(g.n))
    uv, _ = _pull(u, sigma * probe.points + x0)
    N = sigma * W + float(np.max(np.abs(uv - u0)))
    if N <= 0:
        raise ValueError("degenerate blow-up: N = 0")
    P = problem.operator.params
    params = StructureParams(
        P.lam, P.Lam, mu=N * P.mu,
        b=P.b.transformed(sigma, x0, sigma), d=P.d.transformed(sigma, x0, sigma**2),
        omega=P.omega.rescaled(inner=N, outer=1.0 / N), c=P.c,
    )

    def ell(x, u0=u0):
        return np.full(np.atleast_2d(x).shape[0], u0)

    book = {"sigma": sigma, "N": N, "W": W, "u0": u0, "p": p, "unit_floor": unit_floor, "x0_snapped": snapped}
    return _build("blowup", u, problem, x0, sigma, 2.0, N, N / sigma, N / sigma**2, sigma**2 / N,
                  ell, None, params, N, book)


def rescale_iteration(u, l_k, r_k: float, alpha: float, problem: ProblemSpec, x0=None,
                      K: float | None = None) -> RescaledProblem:
    """v(y) = (u − l_k)(r_k y + x₀)/r_k^{1+α} on B₁ (or the mapped half-disc).

    Parameters
    ----------
    l_k : (a, b) with l_k(x) = a + b·(x − x₀)
    r_k : float in (0, 1]
    alpha : float in (0, 1)
    K : bound on |b_k| entering b_{F_k} = r_k b(r_k·) + 2 r_k μ K (default |b_k|)
    """
    if not 0 < r_k <= 1:
        raise ValueError("r_k must lie in (0, 1]")
    if not 0 <= alpha < 1:
        raise ValueError("alpha must lie in [0, 1)")
    u = _as_u(u)
    g = problem.grid
    x0 = np.zeros(g.n) if x0 is None else x0
    x0, snapped = _snap_to_lattice(g, x0)
    a_k, b_k = float(l_k[0]), np.atleast_1d(np.asarray(l_k[1], dtype=float)).reshape(g.n)
    K = float(np.linalg.norm(b_k)) if K is None else float(K)
    P = problem.operator.params
    s = r_k ** (1 + alpha)
    params = StructureParams(
        P.lam, P.Lam, mu=s * P.mu,
        b=P.b.transformed(r_k, x0, r_k, offset=2 * r_k * P.mu * K),
        d=P.d.transformed(r_k, x0, r_k**2),
        omega=P.omega.rescaled(inner=s, outer=1.0 / s), c=P.c,
    )

    def ell(x, a=a_k, b=b_k, x0=x0):
        return a + (np.atleast_2d(x) - x0) @ b

    book = {"r_k": r_k, "alpha": alpha, "a_k": a_k, "b_k": b_k.tolist(), "K": K, "x0_snapped": snapped}
    return _build("iteration", u, problem, x0, r_k, 1.0, s, r_k**alpha, r_k ** (alpha - 1), r_k ** (1 - alpha),
                  ell, b_k, params, s, book)


def mu_ladder(mu: float, gamma: float, alpha: float, K: int = 6) -> list[float]:
    """μ_{F_k} = r_k^{1+α} μ for r_k = γ^k."""
    return [mu * (gamma**k) ** (1 + alpha) for k in range(K)]


__all__ = ["RescaledProblem", "rescale_blowup", "rescale_iteration", "blowup_W", "mu_ladder"]
