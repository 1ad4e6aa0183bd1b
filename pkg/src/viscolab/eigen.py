"""Principal weighted eigenvalues by the inverse power map T = −F⁻¹∘c."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from .core import CoefficientField, Domain, Grid, GridFunction, as_field, lp_norm
from .operators import (
    ExtremalOperator,
    Operator,
    ShiftedOperator,
    StructureParams,
    check_homogeneity,
)
from .reports import Report
from .solve import ProblemSpec, SolverConfig, SolverError, residual, solve_dirichlet

log = logging.getLogger(__name__)


@dataclass
class EigenConfig:
    """Power-iteration settings.

    ``tol`` bounds the eigenvalue step change and ``field_tol`` the
    ∞-norm step change of the normalized iterate. The continuation runs
    through ``eps_schedule`` and finishes at ε = 0; it is skipped when the
    weight is already positive on all interior nodes unless
    ``force_continuation`` is set.
    """

    h: float = 1 / 64
    tol: float = 1e-6
    field_tol: float = 1e-5
    rep_tol: float = 1e-5
    eps_schedule: tuple = tuple(2.0**-k for k in range(11))
    force_continuation: bool = False
    early_stop: bool = True
    max_steps: int = 500
    quotient: str = "sup"
    stencil_m: int = 8
    solver: SolverConfig = field(default_factory=lambda: SolverConfig(tol=1e-11, audit_samples=256))

    def to_dict(self) -> dict:
        out = dict(self.__dict__)
        out["solver"] = self.solver.to_dict()
        out["eps_schedule"] = list(self.eps_schedule)
        return out


@dataclass
class EigenPair:
    """Principal eigenpair estimate for one sign branch.

    ``phi`` is normalized so that max(±phi) = 1 with the branch sign and
    vanishes on the boundary; ``trace`` holds α per power step and
    ``ladder`` the converged α for each continuation level ε.
    """

    sign: int
    alpha: float
    phi: GridFunction
    trace: list
    steps: int
    ladder: list
    converged: bool
    residual_norm: float = math.nan

    def to_dict(self) -> dict:
        return {
            "sign": "+" if self.sign > 0 else "-", "alpha": self.alpha, "steps": self.steps,
            "converged": self.converged, "residual_norm": self.residual_norm,
            "ladder": [{"eps": e, "alpha": a} for e, a in self.ladder],
            "trace": self.trace,
        }


def _homogeneity_ok(F: Operator, n: int) -> bool:
    if F.homogeneous is not None:
        return bool(F.homogeneous)
    return bool(check_homogeneity(F, n))


def distance_guess(grid: Grid) -> GridFunction:
    """Distance to the boundary normalized to max 1 (zero on the boundary)."""
    d = np.maximum(-grid.domain.level(grid.points), 0.0)
    d[grid.n_interior :] = 0.0
    m = d.max()
    return GridFunction(grid, d / m if m > 0 else d)


def power_step(F: Operator, c, u_k: GridFunction, cfg: SolverConfig | None = None, u0=None,
               stencil_m: int = 8) -> tuple[GridFunction, float]:
    """One application of T: solve F[U] = −c·u_k with zero boundary values.

    Returns ``(U, alpha)`` with ``alpha = max|u_k| / max|U|``. U keeps the
    sign of u_k on interior nodes; a sign loss raises :class:`SolverError`.
    """
    grid = u_k.grid
    c = as_field(c)
    cv = c.evaluate(grid.points, grid)
    rhs = -cv * u_k.values
    if np.all(rhs[: grid.n_interior] == 0):
        return GridFunction(grid, np.zeros(grid.n_nodes)), math.inf
    cfg = cfg or SolverConfig(tol=1e-11)
    problem = ProblemSpec(F, grid.domain, rhs=GridFunction(grid, rhs), boundary=0.0, grid=grid,
                          stencil_m=stencil_m)
    sol = solve_dirichlet(problem, cfg, u0=u0)
    if not sol.converged:
        raise SolverError("inner Dirichlet solve did not converge", sol.trace, "inner_solve")
    U = sol.u
    Ni = grid.n_interior
    s = 1.0 if np.max(u_k.values) >= -np.min(u_k.values) else -1.0
    signed = s * U.values[:Ni]
    if signed.size and np.min(signed) <= -1e-12 * np.max(np.abs(signed)):
        node = int(np.argmin(signed))
        raise SolverError(f"power step lost its sign at node {node} (x={grid.points[node].tolist()})",
                          sol.trace, "sign_loss")
    alpha = float(np.max(np.abs(u_k.values)) / np.max(np.abs(U.values)))
    return U, alpha


def _iterate(F, c, u, cfg: EigenConfig, trace, max_steps):
    """Normalized power iteration u ← U / max|U| until both step tests pass."""
    grid = u.grid
    alpha_prev = math.nan
    warm = None
    for step in range(1, max_steps + 1):
        U, alpha = power_step(F, c, u, cfg.solver, u0=warm, stencil_m=cfg.stencil_m)
        if not math.isfinite(alpha):
            raise SolverError("weight vanishes on the support of the iterate", trace, "zero_weight")
        if cfg.quotient == "l2":
            alpha = lp_norm(u, 2) / lp_norm(U, 2)
        new = U * (1.0 / np.max(np.abs(U.values)))
        trace.append(alpha)
        du = float(np.max(np.abs(new.values - u.values)))
        da = abs(alpha - alpha_prev) if math.isfinite(alpha_prev) else math.inf
        u = new
        warm = new * (1.0 / alpha)
        if da <= cfg.tol and du <= cfg.field_tol:
            return u, alpha, step, True
        alpha_prev = alpha
    return u, alpha, max_steps, False


def eigen_solve(F: Operator, c, domain: Domain | None = None, sign=1, cfg: EigenConfig | None = None,
                u0: GridFunction | None = None, grid: Grid | None = None) -> EigenPair:
    """Principal eigenpair of F[φ] + α c φ = 0, φ = 0 on ∂Ω, for one branch.

    Branch + iterates T with F on positive functions. Branch − iterates
    with the reflected operator G(x,r,p,X) = −F(x,−r,−p,−X) and flips the
    sign of the eigenfunction.
    """
    cfg = cfg or EigenConfig()
    s = 1 if sign in (1, "+") else -1
    if grid is None:
        grid = Grid(domain, cfg.h, m=max(cfg.stencil_m, 8))
    n = grid.n
    if not _homogeneity_ok(F, n):
        raise ValueError("eigen_solve needs a positively 1-homogeneous operator")
    c = as_field(c)
    cv = c.evaluate(grid.points, grid)[: grid.n_interior]
    if np.all(cv <= 0):
        raise ValueError("weight vanishes on every interior node")
    op = F if s > 0 else F.reflected()
    u = u0 if u0 is not None else distance_guess(grid)
    u = GridFunction(grid, np.where(np.arange(grid.n_nodes) < grid.n_interior, np.abs(u.values), 0.0))
    u = u * (1.0 / np.max(u.values))

    if np.min(cv) > 0 and not cfg.force_continuation:
        levels = [0.0]
    else:
        levels = [e for e in cfg.eps_schedule if e > 0] + [0.0]
    trace: list = []
    ladder = []
    total = 0
    converged = True
    prev = None
    for k, eps in enumerate(levels):
        ce = c if eps == 0 else c.transformed(offset=eps)
        u, alpha, steps, ok = _iterate(op, ce, u, cfg, trace, cfg.max_steps)
        total += steps
        converged = converged and ok
        ladder.append((eps, alpha))
        if not ok:
            raise SolverError(f"power iteration did not converge at eps={eps:g}", trace, "power_iteration")
        if (cfg.early_stop and prev is not None and eps > 0 and abs(alpha - prev) < cfg.tol):
            # consecutive levels agree; jump to the unperturbed weight
            u, alpha, steps, ok = _iterate(op, c, u, cfg, trace, cfg.max_steps)
            total += steps
            ladder.append((0.0, alpha))
            converged = converged and ok
            break
        prev = alpha
    phi = u if s > 0 else -u
    pair = EigenPair(s, float(alpha), phi, trace, total, ladder, bool(converged))
    pair.residual_norm = eigen_residual(F, c, pair)
    return pair


def eigen_residual(F: Operator, c, pair: EigenPair, stencil_m: int = 8) -> float:
    """∞-norm of F_h[φ] + α c φ on interior nodes."""
    grid = pair.phi.grid
    prob = ProblemSpec(ShiftedOperator(F, as_field(c), pair.alpha), grid.domain, grid=grid,
                       stencil_m=stencil_m)
    return residual(prob, pair.phi).sup()


# ---------------------------------------------------------------------------
# Certificates and checks


@dataclass
class EigenBoundCertificate:
    center: np.ndarray
    R: float
    delta: float
    C0: float
    bound: float
    alpha_split: float
    field_max: float
    field_min: float
    granted: bool
    informative: bool
    witness: dict | None = None

    def to_dict(self) -> dict:
        return {
            "center": np.asarray(self.center).tolist(), "R": self.R, "delta": self.delta, "C0": self.C0,
            "bound": self.bound, "alpha_split": self.alpha_split, "field_max": self.field_max,
            "field_min": self.field_min, "granted": self.granted, "informative": self.informative,
            "witness": self.witness,
        }


def sigma_test_function(x: np.ndarray, center, R: float):
    """σ = −(R² − |x−c|²)² with exact gradient and Hessian."""
    x = np.atleast_2d(x)
    w = x - np.asarray(center, dtype=float)
    q = R * R - np.sum(w * w, axis=1)
    sigma = -(q**2)
    grad = 4 * q[:, None] * w
    n = x.shape[1]
    hess = 4 * q[:, None, None] * np.eye(n)[None] - 8 * w[:, :, None] * w[:, None, :]
    return sigma, grad, hess


def eigen_upper_bound_sigma(params: StructureParams, c, ball: tuple, sign=1, h: float = 1 / 64,
                            delta: float | None = None) -> EigenBoundCertificate:
    """Upper bound λ₁^± ≤ C₀/(δR²) from the radial test function σ.

    With γ = sup b and η = sup d on the ball,
    α = (nΛ+γR)/(2λ+nΛ+γR) and C₀ = 4(nΛ+γR)/(1−α) + ηω(1)R². The field
    L⁺[σ] + (C₀/(δR²)) c σ is evaluated at interior nodes of B_R with
    exact derivatives of σ and must be ≤ 0; the same field serves both
    branches since L⁻[−σ] = −L⁺[σ].
    """
    center, R = ball
    center = np.atleast_1d(np.asarray(center, dtype=float))
    n = center.shape[0]
    if R <= 0:
        raise ValueError("ball radius must be positive")
    c = as_field(c)
    has_zero_order = not params.d.is_zero and params.omega.L > 0
    if has_zero_order and R > 1:
        raise ValueError("R <= 1 is required when the zero-order term is active")
    grid = Grid(Domain.ball(center, R), h)
    pts = grid.points[: grid.n_interior]
    gamma = float(np.max(params.b.evaluate(pts, grid))) if not params.b.is_zero else 0.0
    eta = float(np.max(params.d.evaluate(pts, grid))) if has_zero_order else 0.0
    cv = c.evaluate(pts, grid)
    if delta is None:
        delta = float(np.min(cv))
    lam, Lam = params.lam, params.Lam
    a_split = (n * Lam + gamma * R) / (2 * lam + n * Lam + gamma * R)
    C0 = 4 * (n * Lam + gamma * R) / (1 - a_split) + eta * params.omega(1.0) * R * R
    if delta <= 0:
        return EigenBoundCertificate(center, R, delta, C0, math.inf, a_split, -math.inf, -math.inf,
                                     True, False)
    bound = C0 / (delta * R * R)
    sig, grad, hess = sigma_test_function(pts, center, R)
    Lp = ExtremalOperator(1, lam, Lam, b=params.b, d=params.d, omega=params.omega, dim=n)
    field_vals = Lp._rule(pts, sig, grad, hess, lambda f, x: f.evaluate(x, grid)) + bound * cv * sig
    scale = 1e-12 * (1 + np.abs(bound * cv * sig))
    bad = field_vals > scale
    witness = None
    if np.any(bad):
        k = int(np.argmax(field_vals - scale))
        witness = {"node": k, "x": pts[k].tolist(), "value": float(field_vals[k])}
    return EigenBoundCertificate(
        center, float(R), float(delta), float(C0), float(bound), float(a_split),
        float(np.max(field_vals)), float(np.min(field_vals)), not np.any(bad), True, witness,
    )


@lru_cache(maxsize=4)
def _default_abp_constant(n: int) -> float:
    from .analysis.abp import abp_batch

    batch = abp_batch(n_instances=20, seed=0, n=n)
    return batch["cap"]


def mp_small_domain(params: StructureParams, c, domain: Domain, p: float = 4.0, h: float | None = None,
                    C1: float | None = None, batch: int = 50, seed: int = 0, tol: float = 1e-9) -> Report:
    """Maximum principle on small domains for F + c.

    Computes ε₀ = (1/(2 C₁ diam ‖c⁺‖_p))^{1/(1−n/p)} with an empirical C₁
    (the calibrated ABP constant). If |Ω| ≤ ε₀, solves a seeded batch of
    F[u] + c u = g with g ≥ 0 and boundary data ≤ 0 and asserts u ≤ tol.
    """
    n = domain.n
    if p <= n:
        raise ValueError("mp_small_domain requires p > n")
    c = as_field(c)
    if C1 is None:
        C1 = _default_abp_constant(n)
    h = h or domain.diam / 32
    grid = Grid(domain, h)
    cplus = GridFunction(grid, np.maximum(c.evaluate(grid.points, grid), 0.0))
    cnorm = lp_norm(cplus, p)
    if cnorm == 0:
        eps0 = math.inf
    else:
        eps0 = (1.0 / (2 * C1 * domain.diam * cnorm)) ** (1.0 / (1 - n / p))
    data = {"C1": C1, "C1_source": "empirical ABP calibration", "eps0": eps0, "measure": domain.measure,
            "c_norm": cnorm, "p": p}
    if domain.measure > eps0:
        data["applicable"] = False
        data["note"] = "domain too large for the small-domain statement; no assertion made"
        return Report("mp_small_domain", True, data)
    data["applicable"] = True
    if cnorm == 0:
        data["note"] = "zero weight: plain maximum principle"
    rng = np.random.default_rng(seed)
    worst = -math.inf
    failures = []
    for i in range(batch):
        s = 1 if rng.random() < 0.5 else -1
        base = ExtremalOperator(s, params.lam, params.Lam, params.b, 0.0, params.d, params.omega, dim=n)
        op = ShiftedOperator(base, c, 1.0) if cnorm > 0 else base
        amp, k, ph = rng.uniform(0, 5), rng.normal(size=n) * 4, rng.uniform(0, 2 * np.pi)
        g = lambda x, amp=amp, k=k, ph=ph: amp * (1 + np.sin(x @ k + ph))
        m0, m1 = rng.uniform(0, 1), rng.uniform(0, 1)
        psi = lambda x, m0=m0, m1=m1: -m0 * (1 + np.cos(m1 * 7 * x[:, 0]))
        # residuals of size Λ/h² times the data sit at roundoff on tiny domains
        rtol = max(1e-10, 1e-13 * params.Lam / h**2 * (1 + 2 * amp + 2 * m0))
        sol = solve_dirichlet(ProblemSpec(op, domain, rhs=g, boundary=psi, grid=grid),
                              SolverConfig(tol=rtol, audit_samples=128))
        umax = float(np.max(sol.u.values))
        worst = max(worst, umax)
        if umax > tol or not sol.converged:
            failures.append({"instance": i, "max_u": umax, "converged": sol.converged})
    data.update({"batch": batch, "worst_max_u": worst, "failures": failures})
    return Report("mp_small_domain", not failures, data)


def simplicity_check(F: Operator, c, domain: Domain, sign=1, trials: int = 3, cfg: EigenConfig | None = None,
                     seed: int = 0) -> Report:
    """Run the eigen solver from distinct positive starts and compare.

    Starts are: constant on interior nodes, normalized distance, and
    random positive values. All normalized eigenfunctions must agree to
    ``rep_tol`` in ∞-norm and eigenvalues to ``tol``.
    """
    cfg = cfg or EigenConfig()
    # each run must land well inside rep_tol of its own fixed point
    cfg = replace(cfg, field_tol=min(cfg.field_tol, cfg.rep_tol / 20), tol=min(cfg.tol, 1e-8))
    grid = Grid(domain, cfg.h, m=max(cfg.stencil_m, 8))
    Ni = grid.n_interior
    rng = np.random.default_rng(seed)
    starts = []
    const = np.zeros(grid.n_nodes)
    const[:Ni] = 1.0
    starts.append(("constant", const))
    starts.append(("distance", distance_guess(grid).values))
    while len(starts) < trials:
        r = np.zeros(grid.n_nodes)
        r[:Ni] = rng.uniform(0.1, 1.0, Ni)
        starts.append((f"random{len(starts) - 1}", r))
    starts = starts[:trials]
    runs = []
    for name, v in starts:
        pair = eigen_solve(F, c, sign=sign, cfg=cfg, u0=GridFunction(grid, v), grid=grid)
        runs.append((name, pair))
    data = {"trials": trials, "alphas": {n: p.alpha for n, p in runs}, "rep_tol": cfg.rep_tol}
    if trials <= 1:
        data["vacuous"] = True
        return Report("simplicity", True, data)
    best = (0.0, None, None)
    alpha_spread = 0.0
    for i in range(len(runs)):
        for j in range(i + 1, len(runs)):
            d = float(np.max(np.abs(runs[i][1].phi.values - runs[j][1].phi.values)))
            alpha_spread = max(alpha_spread, abs(runs[i][1].alpha - runs[j][1].alpha))
            if d >= best[0]:
                best = (d, runs[i][0], runs[j][0])
    data.update({"max_field_distance": best[0], "alpha_spread": alpha_spread, "vacuous": False})
    ok = best[0] <= cfg.rep_tol and alpha_spread <= max(cfg.tol, cfg.rep_tol)
    if not ok:
        data["most_distant"] = [best[1], best[2]]
    return Report("simplicity", ok, data)


def nested_weight_check(F: Operator, c, domain: Domain, ball: tuple, delta: float, sign=1,
                        cfg: EigenConfig | None = None, tol: float = 1e-4) -> Report:
    """Compare α₁(F(c), Ω) with α₁(F(1), B_R)/δ when c ≥ δ on B_R ⊆ Ω.

    A larger weight on a smaller ball can only lower the eigenvalue, so the
    computed pair must satisfy α₁(F(c), Ω) ≤ α₁(F(1), B_R)/δ + ``tol``.
    """
    cfg = cfg or EigenConfig()
    center, R = ball
    center = np.atleast_1d(np.asarray(center, dtype=float))
    if float(domain.level(center)[0]) > -R + 1e-12:
        raise ValueError("ball must lie inside the domain")
    c = as_field(c)
    gb = Grid(Domain.ball(center, R), cfg.h, m=max(cfg.stencil_m, 8))
    cmin = float(np.min(c.evaluate(gb.points, gb)))
    if cmin < delta - 1e-12:
        raise ValueError(f"weight falls below delta on the ball (min {cmin:g})")
    big = eigen_solve(F, c, domain, sign=sign, cfg=cfg)
    small = eigen_solve(F, 1.0, sign=sign, cfg=cfg, grid=gb)
    bound = small.alpha / delta
    return Report("nested_weight", bool(big.alpha <= bound + tol), {
        "alpha_domain": big.alpha, "alpha_ball": small.alpha, "delta": delta, "bound": bound,
        "tol": tol, "ball": {"center": center.tolist(), "R": R}, "weight_min_on_ball": cmin,
    })
