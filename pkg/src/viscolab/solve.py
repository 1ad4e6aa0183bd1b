"""Dirichlet solvers for monotone discretizations of F[u] = f."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .core import CoefficientField, Domain, Grid, GridFunction, lp_norm
from .discretize import Scheme, monotonicity_audit
from .operators import ExtremalOperator, Operator

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    """Structured solver failure carrying the residual trace."""

    def __init__(self, message: str, trace=None, reason: str = "failure"):
        super().__init__(message)
        self.trace = list(trace or [])
        self.reason = reason


class NonMonotoneSchemeError(SolverError):
    pass


@dataclass
class SolverConfig:
    """Solver settings.

    ``tol`` is the absolute ∞-norm residual target; ``max_sweeps`` bounds
    pseudo-transient sweeps; ``rho_safety`` scales the explicit step;
    ``policy_iteration`` enables Newton/Howard steps for operators that
    provide a linearization.
    """

    tol: float = 1e-8
    max_sweeps: int = 200_000
    stencil_m: int = 8
    rho_safety: float = 0.5
    policy_iteration: bool = True
    max_newton: int = 60
    patience: int = 5_000
    delta_gate: float = 1.0
    gate_p: float | None = None
    audit_samples: int = 512
    audit: bool = True
    gradient: str = "upwind"
    warm_start: str = "harmonic"

    def to_dict(self) -> dict:
        return asdict(self)


def _rule_values(spec, grid: Grid, default: float = 0.0) -> np.ndarray:
    if spec is None:
        return np.full(grid.n_nodes, default)
    if isinstance(spec, GridFunction):
        if not spec.grid.same_as(grid):
            raise ValueError("grid function lives on a different grid")
        return spec.values.copy()
    if isinstance(spec, CoefficientField):
        return spec.evaluate(grid.points, grid)
    if callable(spec):
        v = np.asarray(spec(grid.points), dtype=float)
        return np.broadcast_to(v, (grid.n_nodes,)).astype(float)
    return np.full(grid.n_nodes, float(spec))


class ProblemSpec:
    """Dirichlet problem F[u] = f in Ω, u = ψ on ∂Ω on a grid.

    Parameters
    ----------
    operator : Operator
    domain : Domain
    h : float
    rhs : float, callable on points, CoefficientField or GridFunction
    boundary : float, callable on points or GridFunction
    tau : float, optional
        Hölder exponent of the boundary data on flat portions.
    grid : Grid, optional
        Reuse an existing grid instead of building one from (domain, h).
    """

    def __init__(self, operator: Operator, domain: Domain, h: float | None = None, rhs=0.0, boundary=0.0,
                 tau: float | None = None, stencil_m: int = 8, grid: Grid | None = None):
        if tau is not None and not 0 < tau <= 1:
            raise ValueError("tau must lie in (0, 1]")
        self.operator = operator
        self.domain = domain
        self.stencil_m = stencil_m
        if grid is None:
            if h is None:
                raise ValueError("need h or grid")
            grid = Grid(domain, h, m=max(stencil_m, 8))
        self.grid = grid
        self.h = grid.h
        self.rhs = rhs
        self.boundary = boundary
        self.tau = tau
        self.f = _rule_values(rhs, grid)
        psi = _rule_values(boundary, grid)
        if not np.all(np.isfinite(psi[grid.n_interior :])):
            raise ValueError("boundary data must be finite on boundary nodes")
        self.psi = psi

    def with_(self, **kw) -> ProblemSpec:
        args = dict(operator=self.operator, domain=self.domain, rhs=self.rhs, boundary=self.boundary,
                    tau=self.tau, stencil_m=self.stencil_m, grid=self.grid)
        args.update(kw)
        if "h" in kw:
            args.pop("grid")
        return ProblemSpec(**args)

    def describe(self) -> dict:
        return {"operator": self.operator.describe(), "grid": self.grid.describe(), "tau": self.tau}


@dataclass
class Solution:
    u: GridFunction
    residual_norm: float
    trace: list
    converged: bool
    config: dict
    method: str = "policy"
    iterations: int = 0
    trusted: bool = True
    gate: dict = field(default_factory=dict)
    audit: dict | None = None

    def trace_csv(self) -> str:
        lines = ["sweep,residual"]
        lines += [f"{i},{r:.17g}" for i, r in enumerate(self.trace)]
        return "\n".join(lines) + "\n"

    def summary(self) -> dict:
        return {
            "residual_norm": self.residual_norm, "converged": self.converged, "method": self.method,
            "iterations": self.iterations, "trusted": self.trusted, "gate": self.gate,
            "config": self.config,
        }


_SCHEMES: dict = {}


def scheme_for(problem: ProblemSpec, cfg: SolverConfig) -> Scheme:
    """Scheme for a problem grid, cached per (grid, m, gradient)."""
    key = (id(problem.grid), cfg.stencil_m, cfg.gradient)
    sch = _SCHEMES.get(key)
    if sch is None or sch.grid is not problem.grid:
        sch = Scheme(problem.grid, cfg.stencil_m, cfg.gradient)
        if len(_SCHEMES) > 16:
            _SCHEMES.pop(next(iter(_SCHEMES)))
        _SCHEMES[key] = sch
    return sch


def residual(problem: ProblemSpec, u: GridFunction, cfg: SolverConfig | None = None) -> GridFunction:
    """F_h[u] − f on interior nodes, zero on boundary nodes."""
    cfg = cfg or SolverConfig(stencil_m=problem.stencil_m)
    if not u.grid.same_as(problem.grid):
        raise ValueError("grid function does not live on the problem grid")
    sch = scheme_for(problem, cfg)
    out = np.zeros(problem.grid.n_nodes)
    Ni = problem.grid.n_interior
    out[:Ni] = sch.apply(problem.operator, u.values) - problem.f[:Ni]
    return GridFunction(problem.grid, out)


def abp_gate(problem: ProblemSpec, cfg: SolverConfig) -> dict:
    """μ-smallness display μ ‖f∓‖_p diam^{n/p} against δ_gate (advisory)."""
    mu = problem.operator.params.mu
    n = problem.grid.n
    p = cfg.gate_p or 2.0 * n
    diam = problem.domain.diam
    fm = lp_norm(GridFunction(problem.grid, np.maximum(-problem.f, 0)), p)
    fp = lp_norm(GridFunction(problem.grid, np.maximum(problem.f, 0)), p)
    v_minus = mu * fm * diam ** (n / p)
    v_plus = mu * fp * diam ** (n / p)
    ok = mu == 0 or (v_minus <= cfg.delta_gate and v_plus <= cfg.delta_gate)
    return {"mu": mu, "p": p, "value_f_minus": v_minus, "value_f_plus": v_plus,
            "delta_gate": cfg.delta_gate, "ok": bool(ok)}


def _initial_guess(problem: ProblemSpec, cfg: SolverConfig, u0) -> np.ndarray:
    g = problem.grid
    Ni = g.n_interior
    u = problem.psi.copy()
    if u0 is not None:
        vals = u0.values if isinstance(u0, GridFunction) else np.asarray(u0, dtype=float)
        u[:Ni] = vals[:Ni]
        return u
    bvals = u[Ni:]
    if bvals.size == 0 or np.all(bvals == bvals[0]):
        u[:Ni] = bvals[0] if bvals.size else 0.0
        return u
    if cfg.warm_start == "harmonic":
        try:
            lap = ExtremalOperator(1, 1.0, 1.0, dim=g.n)
            sch = scheme_for(problem, cfg)
            u[:Ni] = 0.0
            lin = lap.linearize(sch.derivs(u))
            J = sch.jacobian(lin)
            u[:Ni] = sch.factorize(J).solve(-lin.value)
            return u
        except Exception as exc:  # pragma: no cover - fallback path
            log.warning("harmonic warm start failed (%s); using boundary mean", exc)
    u[:Ni] = float(np.mean(bvals))
    return u


def _newton(problem, op, sch, u, f, cfg, trace):
    """Semismooth Newton (Howard policy iteration for extremal operators)."""
    Ni = problem.grid.n_interior
    for it in range(cfg.max_newton):
        lin = op.linearize(sch.derivs(u))
        R = lin.value - f
        res = float(np.max(np.abs(R))) if Ni else 0.0
        trace.append(res)
        if res <= cfg.tol:
            return u, True, it
        J = sch.jacobian(lin)
        try:
            step = sch.factorize(J).solve(-R)
        except RuntimeError:
            return u, False, it
        if not np.all(np.isfinite(step)):
            return u, False, it
        t = 1.0
        while True:
            trial = u.copy()
            trial[:Ni] += t * step
            rt = float(np.max(np.abs(op.discrete(sch.derivs(trial)) - f)))
            if np.isfinite(rt) and (rt <= max(10.0 * res, cfg.tol) or t < 1.0 and rt < res):
                break
            t *= 0.5
            if t < 1.0 / 1024:
                return u, False, it
        u = trial
    lin_val = op.discrete(sch.derivs(u)) - f
    res = float(np.max(np.abs(lin_val)))
    trace.append(res)
    return u, res <= cfg.tol, cfg.max_newton


def _pseudo_transient(problem, op, sch, u, f, cfg, trace, start_iter=0):
    Ni = problem.grid.n_interior
    rho = cfg.rho_safety / np.maximum(sch.diagonal_bound(op, u), 1e-300)
    best = math.inf
    best_at = 0
    prev = math.inf
    for k in range(cfg.max_sweeps):
        R = op.discrete(sch.derivs(u)) - f
        res = float(np.max(np.abs(R)))
        trace.append(res)
        if not np.isfinite(res):
            raise SolverError("residual became non-finite", trace, "divergence")
        if res <= cfg.tol:
            return u, True, start_iter + k
        if res < best:
            best, best_at = res, k
        elif k - best_at > cfg.patience and res > 1e3 * best:
            raise SolverError("residual grew over the patience window", trace, "divergence")
        if res > 1.1 * prev:
            rho = 0.5 * rho
        prev = res
        u = u.copy()
        u[:Ni] += rho * R
    return u, False, start_iter + cfg.max_sweeps


def solve_dirichlet(problem: ProblemSpec, cfg: SolverConfig | None = None, u0=None) -> Solution:
    """Solve the discrete Dirichlet problem F_h[u] = f, u = ψ on ∂Ω.

    Operators with a linearization (the shipped extremal forms and their
    wrappers) use policy iteration; general operators use pseudo-transient
    iteration u ← u + ρ(F_h[u] − f) with a locally stable step. The scheme
    is audited for monotonicity first and the μ-smallness gate is logged.
    """
    cfg = cfg or SolverConfig(stencil_m=problem.stencil_m)
    op = problem.operator
    sch = scheme_for(problem, cfg)
    audit = None
    if cfg.audit:
        key = ("audit", id(op), cfg.stencil_m, cfg.gradient)
        cached = getattr(sch, "_audits", {})
        hit = cached.get(key)
        if hit is not None and hit[0] is op:
            rep = hit[1]
        else:
            rep = monotonicity_audit(sch, op, samples=cfg.audit_samples, seed=0)
            # keep op alive so its id is not recycled
            cached[key] = (op, rep)
            sch._audits = cached
        audit = rep.to_dict()
        if not rep.passed:
            raise NonMonotoneSchemeError("scheme failed the monotonicity audit", reason="non_monotone")
    gate = abp_gate(problem, cfg)
    if not gate["ok"]:
        log.warning("mu smallness gate violated: %s", gate)
    Ni = problem.grid.n_interior
    f = problem.f[:Ni]
    u = _initial_guess(problem, cfg, u0)
    trace: list = []
    converged, iters, method = False, 0, "pseudo_transient"
    if Ni == 0:
        converged = True
    elif cfg.policy_iteration and op.linearize(sch.derivs(u, rows=np.arange(min(Ni, 1)))) is not None:
        method = "policy"
        u, converged, iters = _newton(problem, op, sch, u, f, cfg, trace)
        if not converged:
            log.info("policy iteration stalled at %.3e; continuing pseudo-transient", trace[-1])
            method = "policy+pseudo_transient"
    if not converged and Ni:
        u, converged, iters = _pseudo_transient(problem, op, sch, u, f, cfg, trace, iters)
    u[Ni:] = problem.psi[Ni:]
    res = float(np.max(np.abs(op.discrete(sch.derivs(u)) - f))) if Ni else 0.0
    return Solution(
        GridFunction(problem.grid, u), res, trace, bool(converged and res <= cfg.tol),
        cfg.to_dict(), method, iters, bool(gate["ok"]), gate, audit,
    )


def solve_pure(F2: Operator, boundary, domain: Domain | None = None, cfg: SolverConfig | None = None,
               h: float | None = None, grid: Grid | None = None) -> Solution:
    """Solve F2(D²u) = 0 with u = ψ on the boundary."""
    if not F2.pure_second_order:
        raise ValueError("solve_pure needs an operator depending on X only")
    cfg = cfg or SolverConfig()
    if grid is None and domain is None:
        raise ValueError("need a domain or a grid")
    problem = ProblemSpec(F2, domain if domain is not None else grid.domain, h=h, rhs=0.0,
                          boundary=boundary, stencil_m=cfg.stencil_m, grid=grid)
    return solve_dirichlet(problem, cfg)
