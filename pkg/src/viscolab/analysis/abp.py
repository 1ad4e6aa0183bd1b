"""Discrete ABP inequality checks and the randomized calibration batch."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from ..core import CoefficientField, Domain, GridFunction, lp_norm
from ..operators import ExtremalOperator
from ..solve import ProblemSpec, Solution, SolverConfig, abp_gate, solve_dirichlet


@dataclass
class ABPReport:
    """Both one-sided ABP inequalities for a converged solution.

    ``ratio_max`` is (max_Ω u − max_∂Ω u)⁺ / ‖f⁻‖_p and ``ratio_min`` the
    symmetric quantity with minima and f⁺. A zero excess gives ratio 0.
    """

    max_interior: float
    max_boundary: float
    min_interior: float
    min_boundary: float
    f_minus_norm: float
    f_plus_norm: float
    ratio_max: float
    ratio_min: float
    p: float
    cap: float | None
    violation: bool
    gate: dict

    @property
    def passed(self) -> bool:
        return not self.violation

    def to_dict(self) -> dict:
        return asdict(self)


def _ratio(excess: float, norm: float) -> float:
    if excess <= 0:
        return 0.0
    return math.inf if norm == 0 else excess / norm


def abp_check(sol: Solution | GridFunction, problem: ProblemSpec, p: float | None = None,
              cap: float | None = None, cfg: SolverConfig | None = None) -> ABPReport:
    """Evaluate max/min ABP inequalities and the μ-smallness display."""
    u = sol.u if isinstance(sol, Solution) else sol
    g = problem.grid
    n = g.n
    p = p or 2.0 * n
    Ni = g.n_interior
    vals = u.values
    f = problem.f
    fm = lp_norm(GridFunction(g, np.maximum(-f, 0.0)), p)
    fp = lp_norm(GridFunction(g, np.maximum(f, 0.0)), p)
    mx_i, mx_b = float(np.max(vals[:Ni])), float(np.max(vals[Ni:]))
    mn_i, mn_b = float(np.min(vals[:Ni])), float(np.min(vals[Ni:]))
    r_max = _ratio(mx_i - mx_b, fm)
    r_min = _ratio(mn_b - mn_i, fp)
    violation = cap is not None and (r_max > cap or r_min > cap)
    gate = abp_gate(problem, cfg or SolverConfig(gate_p=p))
    return ABPReport(mx_i, mx_b, mn_i, mn_b, fm, fp, r_max, r_min, p, cap, bool(violation), gate)


def random_abp_instance(rng: np.random.Generator, n: int = 2, h: float | None = None):
    """A seeded Dirichlet problem with μ = 0, random b, f and boundary data."""
    if n == 1:
        domain = Domain.interval(0.0, 1.0)
        h = h or 1 / 64
    else:
        domain = Domain.rectangle((0.0, 0.0), (1.0, 1.0))
        h = h or 1 / 16
    sign = 1 if rng.random() < 0.5 else -1
    lam = 1.0
    Lam = float(rng.uniform(1.0, 3.0))
    b0 = float(rng.uniform(0.0, 3.0))
    kb = rng.normal(size=n) * 3
    b = CoefficientField.smooth(lambda x, b0=b0, kb=kb: b0 * (1 + np.sin(x @ kb)), sup_bound=2 * b0)
    amps = rng.uniform(-5, 5, 3)
    ks = rng.normal(size=(3, n)) * 2 * np.pi
    phs = rng.uniform(0, 2 * np.pi, 3)
    shift = float(rng.uniform(-2, 2))

    def f(x, amps=amps, ks=ks, phs=phs, shift=shift):
        return shift + sum(a * np.sin(x @ k + ph) for a, k, ph in zip(amps, ks, phs))

    # small boundary data so the interior excess is driven by f
    a0, a1 = float(rng.uniform(-0.1, 0.1)), rng.uniform(-0.05, 0.05, n)
    kp = rng.normal(size=n) * 3

    def psi(x, a0=a0, a1=a1, kp=kp):
        return a0 + x @ a1 + 0.02 * np.sin(x @ kp)

    op = ExtremalOperator(sign, lam, Lam, b=b, dim=n)
    desc = {"sign": sign, "Lam": Lam, "b0": b0, "n": n, "h": h}
    return ProblemSpec(op, domain, h, rhs=f, boundary=psi), desc


def abp_batch(n_instances: int = 100, seed: int = 0, n: int = 2, h: float | None = None,
              p: float | None = None, cap: float | None = None, factor: float = 1.5) -> dict:
    """Solve a seeded batch and return per-instance ratios and the cap.

    If ``cap`` is None it is calibrated as ``factor`` times the batch max
    ratio; violations are counted against the cap either way.
    """
    rng = np.random.default_rng(seed)
    cfg = SolverConfig(tol=1e-10, audit_samples=128)
    reports = []
    for _ in range(n_instances):
        prob, desc = random_abp_instance(rng, n, h)
        sol = solve_dirichlet(prob, cfg)
        rep = abp_check(sol, prob, p)
        reports.append((desc, rep, sol.converged))
    ratios = np.array([[r.ratio_max, r.ratio_min] for _, r, _ in reports])
    batch_max = float(np.max(ratios))
    if cap is None:
        cap = factor * batch_max
    viol = int(np.sum(ratios > cap))
    return {
        "n_instances": n_instances, "seed": seed, "n": n, "p": reports[0][1].p,
        "batch_max_ratio": batch_max, "cap": float(cap), "factor": factor, "violations": viol,
        "all_converged": all(c for _, _, c in reports),
        "ratios_max": ratios[:, 0].tolist(), "ratios_min": ratios[:, 1].tolist(),
    }
