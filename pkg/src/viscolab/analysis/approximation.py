"""Gap between a perturbed problem and its frozen pure second-order limit."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..core import CoefficientField, Domain, GridFunction, lp_norm, make_modulus
from ..operators import ExtremalOperator, RescaledOperator, h_theta_report
from ..solve import ProblemSpec, Solution, SolverConfig, solve_dirichlet, solve_pure


@dataclass
class ApproximationReport:
    """‖v − h‖_∞ with the measured smallness inputs.

    ``inputs`` holds beta_bar (‖β̄_F(·,0)‖_p), f (‖f‖_p),
    mu (μ(|B|²+|B|+1)), b (‖b‖_p(|B|+1)) and d (ω(1)‖d‖_p(|A|+|B|+1)).
    """

    gap: float
    inputs: dict
    p: float
    v: Solution = field(repr=False)
    h: Solution = field(repr=False)

    @property
    def smallness(self) -> float:
        return max(self.inputs.values())

    def to_dict(self) -> dict:
        return {"gap": self.gap, "inputs": self.inputs, "p": self.p,
                "v_converged": self.v.converged, "h_converged": self.h.converged}


def _coef_norm(fld: CoefficientField, grid, p: float) -> float:
    if fld.is_zero:
        return 0.0
    return lp_norm(GridFunction(grid, fld.evaluate(grid.points, grid)), p)


def approximation_gap(problem: ProblemSpec, A: float = 0.0, B=None, p: float | None = None,
                      cfg: SolverConfig | None = None, x0=None, beta_resolution: int = 8) -> ApproximationReport:
    """Solve F(x, v + ℓ, Dv + B, D²v) = f and F(x₀,0,0,D²h) = 0 with shared data.

    Parameters
    ----------
    problem : ProblemSpec
        Posed on the unit ball or a half-disc B₁^ν; ``problem.operator`` is F.
    A, B : affine shift ℓ(x) = A + B·(x − x₀) (default 0)
    p : integrability exponent of the smallness inputs (default 2n, must exceed n)
    x0 : freezing point (default the origin)
    """
    cfg = cfg or SolverConfig()
    g = problem.grid
    n = g.n
    p = p or 2.0 * n
    x0 = np.zeros(n) if x0 is None else np.atleast_1d(np.asarray(x0, dtype=float))
    B = np.zeros(n) if B is None else np.atleast_1d(np.asarray(B, dtype=float)).reshape(n)
    F = problem.operator
    full = F
    if A != 0 or np.any(B != 0):
        def ell(x, A=A, B=B, x0=x0):
            return A + (np.atleast_2d(x) - x0) @ B

        full = RescaledOperator(F, 1.0, np.zeros(n), 1.0, 1.0, 1.0, 1.0, ell=ell, q=B, subtract=False)
    v = solve_dirichlet(problem.with_(operator=full), cfg)
    h = solve_pure(F.frozen(x0), problem.boundary, cfg=cfg, grid=g)
    gap = float(np.max(np.abs(v.u.values - h.u.values)))

    P = F.params
    nB = float(np.linalg.norm(B))
    beta_bar = 0.0 if F.x_independent else h_theta_report(
        F, x0, 1.0, p, domain=problem.domain, resolution=beta_resolution, variant="beta_bar")
    omega1 = float(P.omega(1.0))
    inputs = {
        "beta_bar": float(beta_bar),
        "f": lp_norm(GridFunction(g, problem.f), p),
        "mu": P.mu * (nB**2 + nB + 1),
        "b": _coef_norm(P.b, g, p) * (nB + 1),
        "d": omega1 * _coef_norm(P.d, g, p) * (abs(A) + nB + 1),
    }
    return ApproximationReport(gap, inputs, p, v, h)


def ladder_problem(delta: float, domain: Domain, h: float, boundary=None) -> ProblemSpec:
    """Perturbation family whose smallness inputs all scale linearly in δ."""
    n = domain.n

    def a_rule(x, delta=delta):
        return 1.0 + delta * (0.5 + 0.5 * np.sin(2 * x[:, 0] + 1.0))

    a = CoefficientField.smooth(a_rule, sup_bound=1.0 + delta)
    b = CoefficientField.constant(delta)
    d = CoefficientField.constant(delta)
    op = ExtremalOperator(1, 1.0, 2.0, b=b, mu=delta, d=d, omega=make_modulus("lipschitz", 1.0),
                          a=a, a_bounds=(1.0, 1.0 + delta), dim=n)

    def f(x, delta=delta):
        return delta * (1.0 + np.cos(3 * x[:, 0]))

    if boundary is None:
        if n == 1:
            def boundary(x):
                return 0.5 * x[:, 0] + 0.25
        else:
            def boundary(x):
                return x[:, 0] ** 2 - 0.5 * x[:, 1] ** 2 + 0.3 * x[:, 0] + np.abs(x[:, 0]) ** 1.5
    return ProblemSpec(op, domain, h, rhs=f, boundary=boundary)


def approximation_ladder(deltas=(1e-1, 1e-2, 1e-3), domain: Domain | None = None, h: float = 1 / 32,
                         cfg: SolverConfig | None = None, p: float | None = None) -> dict:
    """Gaps along a δ-ladder of scaled smallness inputs."""
    domain = domain or Domain.disc((0.0, 0.0), 1.0)
    rows = []
    for delta in deltas:
        rep = approximation_gap(ladder_problem(delta, domain, h), cfg=cfg, p=p)
        rows.append({"delta": delta, "gap": rep.gap, "inputs": rep.inputs,
                     "converged": rep.v.converged and rep.h.converged})
    gaps = [r["gap"] for r in rows]
    nonincreasing = all(gaps[i + 1] <= gaps[i] for i in range(len(gaps) - 1))
    return {"domain": domain.describe(), "h": h, "rows": rows, "gaps": gaps, "nonincreasing": nonincreasing}


__all__ = ["ApproximationReport", "approximation_gap", "approximation_ladder", "ladder_problem"]
