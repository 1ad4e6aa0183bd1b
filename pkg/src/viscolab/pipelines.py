"""Experiment pipelines: build objects from a validated config, run, and
write reports, CSV data and figures into an output directory."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import plotting
from .analysis.abp import abp_batch
from .analysis.approximation import approximation_gap, ladder_problem
from .analysis.caffarelli import DEFAULT_ALPHA_GRID, caffarelli_fit
from .analysis.checks import nagumo_ladder, smp_hopf_check
from .analysis.holder import holder_seminorm
from .config import Expr, ExperimentConfig
from .core import CoefficientField, Domain, Grid, GridFunction, make_modulus
from .eigen import EigenConfig, eigen_residual, eigen_solve, eigen_upper_bound_sigma, simplicity_check
from .operators import ExtremalOperator, h_theta_report
from .reports import Report, dumps
from .solve import ProblemSpec, SolverConfig, SolverError, solve_dirichlet

METRICS = {
    "solve": ("residual_norm", "converged", "iterations", "max_error", "audit_violations"),
    "eigen": ("alpha", "alpha_rel_error", "converged", "residual", "steps", "smp_ok", "hopf_kappa", "hopf_ok",
              "simplicity_distance"),
    "abp_batch": ("cap", "violations", "batch_max_ratio", "all_converged"),
    "regularity": ("alpha_est", "slope", "C_est", "alpha_certified", "holder", "h_theta_max", "increment_sum",
                   "shape_factor"),
    "oscillation": ("h_theta_max", "h_theta_min"),
    "approximation": ("gap_first", "gap_last", "gap_max", "nonincreasing", "zero_input_gap"),
    "bound_certificate": ("bound", "C0", "field_max", "granted", "alpha", "alpha_le_bound"),
    "nagumo": ("ratio_min", "ratio_max", "spread", "stable", "monotone_growth"),
}


@dataclass
class RunResult:
    """Metrics and written files of one pipeline run."""

    kind: str
    metrics: dict
    files: list = field(default_factory=list)
    reports: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# builders


def build_domain(cfg: ExperimentConfig) -> Domain:
    d = cfg.section("domain")
    shape = d["shape"]
    if shape == "interval":
        return Domain.interval(d["a"], d["b"])
    if shape == "rectangle":
        return Domain.rectangle(d["lo"], d["hi"])
    if shape == "disc":
        return Domain.disc(d["center"], d["radius"])
    return Domain.half_disc(d["nu"], d["radius"], d["center"])


def build_field(sec: dict, n: int) -> CoefficientField:
    kind = sec["kind"]
    if kind == "constant":
        return CoefficientField.constant(sec["value"])
    if kind == "smooth":
        expr = Expr(sec["expr"])
        return CoefficientField("smooth", value=sec["value"], rule=expr, sup_bound=sec["sup_bound"])
    center = sec["center"] if sec["center"] is not None else [0.0] * n
    p = sec["p"] if sec["p"] is not None else 2.0 * n
    return CoefficientField.singular(sec["kappa"], sec["s"], center, p, n=n, offset=sec["value"])


def build_operator(cfg: ExperimentConfig, n: int) -> ExtremalOperator:
    o = cfg.section("operator")
    b = build_field(cfg.section("operator.b"), n) if cfg.has("operator.b") else None
    d = build_field(cfg.section("operator.d"), n) if cfg.has("operator.d") else None
    a, a_bounds = None, None
    if cfg.has("operator.a"):
        sec = cfg.section("operator.a")
        a = build_field(sec, n)
        if a.kind != "constant":
            lo = sec["lo"] if sec["lo"] is not None else sec["value"]
            hi = sec["hi"] if sec["hi"] is not None else sec["sup_bound"]
            if hi is None or lo is None or lo <= 0:
                raise ValueError("a non-constant multiplier needs positive operator.a.lo and operator.a.hi")
            a_bounds = (lo, hi)
    om = cfg.section("operator.omega")
    omega = make_modulus(om["kind"], om["L"], om["gamma"]) if cfg.has("operator.omega") else None
    return ExtremalOperator(o["sign"], o["lam"], o["Lam"], b=b, mu=o["mu"], d=d, omega=omega, a=a,
                            a_bounds=a_bounds, dim=n)


def build_solver_config(cfg: ExperimentConfig) -> SolverConfig:
    s = dict(cfg.section("solver"))
    st = cfg.section("stencil")
    return SolverConfig(stencil_m=st["m"], gradient=st["gradient"], **s)


def build_problem(cfg: ExperimentConfig, h: float | None = None) -> ProblemSpec:
    dom = build_domain(cfg)
    op = build_operator(cfg, dom.n)
    p = cfg.section("problem")
    return ProblemSpec(op, dom, h or cfg.section("grid")["h"], rhs=p["rhs"], boundary=p["boundary"], tau=p["tau"],
                       stencil_m=cfg.section("stencil")["m"])


def build_eigen_config(cfg: ExperimentConfig) -> EigenConfig:
    e = cfg.section("eigen")
    kw = dict(h=e["h"] or cfg.section("grid")["h"], tol=e["tol"], field_tol=e["field_tol"], rep_tol=e["rep_tol"],
              force_continuation=e["force_continuation"], early_stop=e["early_stop"], max_steps=e["max_steps"],
              stencil_m=cfg.section("stencil")["m"])
    if e["eps_schedule"] is not None:
        kw["eps_schedule"] = tuple(e["eps_schedule"])
    ec = EigenConfig(**kw)
    if cfg.has("solver"):
        ec = replace(ec, solver=replace(build_solver_config(cfg), tol=min(cfg.section("solver")["tol"], 1e-11)))
    return ec


def build_weight(cfg: ExperimentConfig, n: int):
    return build_field(cfg.section("eigen.weight"), n) if cfg.has("eigen.weight") else CoefficientField.constant(1.0)


# ---------------------------------------------------------------------------
# output helpers


class _Writer:
    def __init__(self, out: Path):
        self.out = out
        self.files: list[Path] = []
        out.mkdir(parents=True, exist_ok=True)

    def text(self, name: str, content: str) -> Path:
        path = self.out / name
        path.write_text(content, encoding="utf-8")
        self.files.append(path)
        return path

    def report(self, name: str, report) -> Path:
        data = report.to_dict() if hasattr(report, "to_dict") else report
        if "schema" not in data:
            data = Report(name, data.get("pass", True), data).to_dict()
        return self.text(f"{name}.json", dumps(data) + "\n")


def _csv(header: list[str], rows) -> str:
    out = [",".join(header)]
    for row in rows:
        out.append(",".join(f"{v:.17g}" if isinstance(v, float) else str(v) for v in row))
    return "\n".join(out) + "\n"


def _num(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if v is None:
        return None
    return float(v)


# ---------------------------------------------------------------------------
# pipelines


def run_solve(cfg: ExperimentConfig, w: _Writer) -> RunResult:
    problem = build_problem(cfg)
    scfg = build_solver_config(cfg)
    sol = solve_dirichlet(problem, scfg)
    if not sol.converged:
        raise SolverError(f"solver stopped at residual {sol.residual_norm:.3e}", sol.trace, "not_converged")
    metrics = {"residual_norm": sol.residual_norm, "converged": sol.converged, "iterations": sol.iterations,
               "audit_violations": (sol.audit or {}).get("violations", 0)}
    exact = cfg.section("problem")["exact"]
    data = {"solution": sol.summary(), "problem": problem.describe(), "gate": sol.gate, "audit": sol.audit}
    if exact is not None:
        err = np.abs(sol.u.values - exact(problem.grid.points))
        metrics["max_error"] = float(np.max(err))
        data["max_error"] = metrics["max_error"]
    w.text("solution.csv", sol.u.to_csv())
    w.text("trace.csv", sol.trace_csv())
    w.report("solve", Report("solve", True, data))
    w.files.append(plotting.field_figure(sol.u, w.out / "solution.png", title="solution"))
    w.files.append(plotting.trace_figure(sol.trace, w.out / "trace.png"))
    return RunResult("solve", metrics)


def run_eigen(cfg: ExperimentConfig, w: _Writer) -> RunResult:
    dom = build_domain(cfg)
    F = build_operator(cfg, dom.n)
    c = build_weight(cfg, dom.n)
    ecfg = build_eigen_config(cfg)
    e = cfg.section("eigen")
    pair = eigen_solve(F, c, dom, sign=e["branch"], cfg=ecfg)
    if not pair.converged:
        raise SolverError("power iteration did not converge", pair.trace, "eigen_not_converged")
    res = eigen_residual(F, c, pair, ecfg.stencil_m)
    pos = GridFunction(pair.phi.grid, pair.sign * pair.phi.values)
    sh = smp_hopf_check(pos)
    metrics = {"alpha": pair.alpha, "converged": pair.converged, "residual": res, "steps": pair.steps,
               "smp_ok": sh.data["smp_ok"], "hopf_kappa": sh.data.get("kappa"), "hopf_ok": sh.data["hopf_ok"]}
    if e["reference"] is not None:
        metrics["alpha_rel_error"] = abs(pair.alpha - e["reference"]) / abs(e["reference"])
    data = {"pair": pair.to_dict(), "residual": res, "config": ecfg.to_dict(), "smp_hopf": sh.to_dict()}
    if e["simplicity_trials"] > 1:
        simp = simplicity_check(F, c, dom, sign=e["branch"], trials=e["simplicity_trials"], cfg=ecfg, seed=cfg.seed)
        metrics["simplicity_distance"] = simp.data["max_field_distance"]
        data["simplicity"] = simp.to_dict()
    w.text("eigenfunction.csv", pair.phi.to_csv())
    w.text("trace.csv", _csv(["step", "alpha"], [(i, float(a)) for i, a in enumerate(pair.trace)]))
    w.text("ladder.csv", _csv(["eps", "alpha"], [(float(a), float(b)) for a, b in pair.ladder]))
    w.report("eigen", Report("eigen", True, data))
    w.files.append(plotting.field_figure(pair.phi, w.out / "eigenfunction.png", title=f"α₁ = {pair.alpha:.6g}",
                                         label="φ"))
    if len(pair.ladder) > 1:
        eps = [max(a, 1e-6) for a, _ in pair.ladder]
        w.files.append(plotting.series_figure(eps, {"α₁(c+ε)": [b for _, b in pair.ladder]}, w.out / "ladder.png",
                                              title="continuation ladder", xlabel="ε (0 shown at 1e-6)",
                                              ylabel="α₁", logx=True))
    return RunResult("eigen", metrics)


def run_abp(cfg: ExperimentConfig, w: _Writer) -> RunResult:
    a = cfg.section("abp")
    res = abp_batch(a["instances"], cfg.seed, a["n"], a["h"], a["p"], a["cap"], a["factor"])
    metrics = {k: res[k] for k in ("cap", "violations", "batch_max_ratio", "all_converged")}
    w.report("abp_batch", Report("abp_batch", res["violations"] == 0, res))
    rows = [(i, float(x), float(y)) for i, (x, y) in enumerate(zip(res["ratios_max"], res["ratios_min"]))]
    w.text("ratios.csv", _csv(["instance", "ratio_max", "ratio_min"], rows))
    w.files.append(plotting.histogram_figure(res["ratios_max"] + res["ratios_min"], w.out / "ratios.png",
                                             cap=res["cap"], title="ABP ratios", xlabel="excess / ‖f∓‖_p"))
    return RunResult("abp_batch", metrics)


def _center(cfg: ExperimentConfig, dom: Domain, key: str):
    v = cfg.section(key)["x0"]
    if v is not None:
        return np.asarray(v)
    lo, hi = dom.bbox()
    return 0.5 * (np.asarray(lo) + np.asarray(hi))


def run_regularity(cfg: ExperimentConfig, w: _Writer) -> RunResult:
    f = cfg.section("fit")
    dom = build_domain(cfg)
    F = build_operator(cfg, dom.n)
    h = cfg.section("grid")["h"]
    if f["source"] == "field":
        grid = Grid(dom, h, m=max(cfg.section("stencil")["m"], 8))
        u = GridFunction.from_rule(grid, f["field"])
    else:
        problem = build_problem(cfg)
        sol = solve_dirichlet(problem, build_solver_config(cfg))
        if not sol.converged:
            raise SolverError("regularity solve did not converge", sol.trace, "not_converged")
        u = sol.u
    x0 = _center(cfg, dom, "fit")
    grid_alpha = tuple(f["alpha_grid"]) if f["alpha_grid"] is not None else DEFAULT_ALPHA_GRID
    fit = caffarelli_fit(u, x0, f["gamma"], f["K"], grid_alpha, f["boundary"], f["r0"])
    hold = holder_seminorm(u, f["beta"])
    hth = []
    if f["h_theta"]:
        p = f["p"] or 2.0 * dom.n + 1
        hth = [h_theta_report(F, x0, float(r), p, domain=dom, resolution=8) for r in fit.radii]
    metrics = {"alpha_est": fit.alpha_est, "slope": fit.slope, "C_est": fit.C_est,
               "alpha_certified": fit.alpha_certified, "holder": hold,
               "h_theta_max": max(hth) if hth else 0.0, "increment_sum": fit.increment_model["sum"],
               "shape_factor": fit.increment_model["shape_factor"]}
    data = {"fit": fit.to_dict(), "holder": {"beta": f["beta"], "seminorm": hold}, "h_theta": hth}
    w.report("regularity", Report("regularity", True, data))
    w.text("fit_ladder.csv", fit.ladder_csv())
    w.text("field.csv", u.to_csv())
    slope = fit.slope if math.isfinite(fit.slope) else None
    w.files.append(plotting.loglog_figure(fit.radii, fit.E, w.out / "fit_ladder.png", slope=slope,
                                          title=f"minimax fit errors, α_est = {fit.alpha_est:.3f}"))
    w.files.append(plotting.field_figure(u, w.out / "field.png", title="field"))
    return RunResult("regularity", metrics)


def run_oscillation(cfg: ExperimentConfig, w: _Writer) -> RunResult:
    o = cfg.section("oscillation")
    dom = build_domain(cfg)
    F = build_operator(cfg, dom.n)
    x0 = _center(cfg, dom, "oscillation")
    p = o["p"] or 2.0 * dom.n + 1
    vals = [h_theta_report(F, x0, r, p, domain=dom, resolution=o["resolution"], variant=o["variant"], norm=o["norm"])
            for r in o["radii"]]
    metrics = {"h_theta_max": max(vals), "h_theta_min": min(vals)}
    data = {"x0": np.asarray(x0).tolist(), "p": p, "radii": o["radii"], "values": vals, "variant": o["variant"],
            "norm": o["norm"], "x_independent": F.x_independent}
    w.report("oscillation", Report("oscillation", True, data))
    w.text("h_theta.csv", _csv(["r", "value"], [(float(r), float(v)) for r, v in zip(o["radii"], vals)]))
    w.files.append(plotting.series_figure(o["radii"], {o["variant"]: vals}, w.out / "h_theta.png",
                                          title="oscillation average", xlabel="r", ylabel="average", logx=True))
    return RunResult("oscillation", metrics)


def run_approximation(cfg: ExperimentConfig, w: _Writer) -> RunResult:
    a = cfg.section("approximation")
    dom = build_domain(cfg)
    h = cfg.section("grid")["h"]
    scfg = build_solver_config(cfg)
    rows = []
    for delta in a["deltas"]:
        rep = approximation_gap(ladder_problem(delta, dom, h), cfg=scfg, p=a["p"])
        rows.append({"delta": delta, "gap": rep.gap, "inputs": rep.inputs})
    base = ladder_problem(0.0, dom, h)
    zero = approximation_gap(base, cfg=scfg, p=a["p"])
    gaps = [r["gap"] for r in rows]
    metrics = {"gap_first": gaps[0], "gap_last": gaps[-1], "gap_max": max(gaps),
               "nonincreasing": all(gaps[i + 1] <= gaps[i] for i in range(len(gaps) - 1)),
               "zero_input_gap": zero.gap}
    data = {"rows": rows, "zero_inputs": zero.to_dict(), "domain": dom.describe(), "h": h}
    w.report("approximation", Report("approximation", metrics["nonincreasing"], data))
    w.text("gaps.csv", _csv(["delta", "gap"], [(float(r["delta"]), float(r["gap"])) for r in rows]))
    w.files.append(plotting.series_figure(a["deltas"], {"‖v − h‖∞": gaps}, w.out / "gaps.png",
                                          title="approximation gap", xlabel="δ", ylabel="gap", logx=True, logy=True))
    return RunResult("approximation", metrics)


def run_certificate(cfg: ExperimentConfig, w: _Writer) -> RunResult:
    dom = build_domain(cfg)
    F = build_operator(cfg, dom.n)
    c = build_weight(cfg, dom.n)
    ce = cfg.section("certificate")
    center = np.asarray(ce["center"]) if ce["center"] is not None else _center(cfg, dom, "fit")
    h = cfg.section("grid")["h"]
    cert = eigen_upper_bound_sigma(F.params, c, (center, ce["R"]), sign=cfg.section("eigen")["branch"], h=h,
                                   delta=ce["delta"])
    metrics = {"bound": cert.bound, "C0": cert.C0, "field_max": cert.field_max, "granted": cert.granted}
    data = {"certificate": cert.to_dict()}
    if ce["compare"]:
        ecfg = build_eigen_config(cfg)
        pair = eigen_solve(F, c, dom, sign=cfg.section("eigen")["branch"], cfg=ecfg)
        metrics["alpha"] = pair.alpha
        metrics["alpha_le_bound"] = bool(pair.alpha <= cert.bound)
        data["pair"] = {"alpha": pair.alpha, "steps": pair.steps, "converged": pair.converged}
    w.report("bound_certificate", Report("bound_certificate", cert.granted, data))
    return RunResult("bound_certificate", metrics)


def run_nagumo(cfg: ExperimentConfig, w: _Writer) -> RunResult:
    n = cfg.section("nagumo")
    scfg = build_solver_config(cfg)
    rep = nagumo_ladder(lambda h: build_problem(cfg, h), tuple(n["hs"]), n["p"], scfg, n["max_spread"])
    r = rep.data["ratios"]
    metrics = {"ratio_min": min(r), "ratio_max": max(r), "spread": rep.data["spread"], "stable": rep.passed,
               "monotone_growth": rep.data["monotone_growth"]}
    w.report("nagumo", rep)
    w.text("ratios.csv", _csv(["h", "ratio"], [(float(h), float(v)) for h, v in zip(n["hs"], r)]))
    w.files.append(plotting.series_figure(n["hs"], {"ratio": r}, w.out / "ratios.png", title="W^{2,p} ratio",
                                          xlabel="h", ylabel="ratio", logx=True))
    return RunResult("nagumo", metrics)


PIPELINES = {
    "solve": run_solve, "eigen": run_eigen, "abp_batch": run_abp, "regularity": run_regularity,
    "oscillation": run_oscillation, "approximation": run_approximation, "bound_certificate": run_certificate,
    "nagumo": run_nagumo,
}


def run_pipeline(cfg: ExperimentConfig, out: Path) -> RunResult:
    w = _Writer(Path(out))
    res = PIPELINES[cfg.kind](cfg, w)
    res.metrics = {k: _num(v) for k, v in res.metrics.items()}
    res.files = list(w.files)
    return res


# ---------------------------------------------------------------------------
# describe


def plan(cfg: ExperimentConfig) -> list[str]:
    """Resolved pipeline steps and the checks they evaluate, without computing."""
    lines = [f"experiment: {cfg.kind}" + (f" ({cfg.name})" if cfg.name else ""), f"seed: {cfg.seed}"]
    h = cfg.section("grid")["h"]
    m = cfg.section("stencil")["m"]
    if cfg.has("domain") or cfg.kind != "abp_batch":
        dom = build_domain(cfg)
        grid = Grid(dom, h, m=max(m, 8))
        lines.append(f"domain: {dom.describe()}")
        lines.append(f"grid: h={h:g}, nodes={grid.n_nodes}, interior={grid.n_interior}, stencil m={m}")
        op = build_operator(cfg, dom.n)
        lines.append(f"operator: {op.describe()}")
    k = cfg.kind
    if k == "solve":
        s = cfg.section("solver")
        lines += ["checks: monotonicity audit" + (f" ({s['audit_samples']} samples)" if s["audit"] else " (off)"),
                  "        ABP μ-smallness gate (advisory)",
                  f"        Dirichlet solve to residual ≤ {s['tol']:g}"
                  + (", ∞-error against the exact solution" if cfg.section("problem")["exact"] is not None else "")]
    elif k == "eigen":
        e = cfg.section("eigen")
        ecfg = build_eigen_config(cfg)
        lines += [f"branch: {'+' if e['branch'] > 0 else '-'}",
                  "ε schedule: " + ", ".join(f"{v:g}" for v in ecfg.eps_schedule) + ", 0",
                  "checks: power iteration T = −F⁻¹∘c, eigen residual, SMP/Hopf"
                  + (f", simplicity ({e['simplicity_trials']} starts)" if e["simplicity_trials"] > 1 else "")]
    elif k == "abp_batch":
        a = cfg.section("abp")
        lines.append(f"checks: ABP batch of {a['instances']} instances (n={a['n']}), cap = "
                     + (f"{a['cap']:g}" if a["cap"] is not None else f"{a['factor']:g} × batch max"))
    elif k == "regularity":
        f = cfg.section("fit")
        g = f["gamma"]
        gs = "1/4" if g == 0.25 else f"{g:g}"
        lines.append(f"checks: Caffarelli fit, γ={gs}, K={f['K']}" + (", (H_θ) report" if f["h_theta"] else "")
                     + f", Hölder seminorm β={f['beta']:g}")
    elif k == "oscillation":
        o = cfg.section("oscillation")
        lines.append(f"checks: (H_θ) averages of {o['variant']} at radii {o['radii']}")
    elif k == "approximation":
        lines.append(f"checks: approximation gap on δ-ladder {cfg.section('approximation')['deltas']}, "
                     "zero-input gap")
    elif k == "bound_certificate":
        ce = cfg.section("certificate")
        lines.append(f"checks: σ-certificate on B_{ce['R']:g}" + (", α₁ ≤ bound" if ce["compare"] else ""))
    elif k == "nagumo":
        lines.append(f"checks: Nagumo W^{{2,p}} ratio ladder h ∈ {cfg.section('nagumo')['hs']}")
    if cfg.expect:
        lines.append("expectations: " + ", ".join(f"{k} {op} {v:g}" for k, (op, v) in cfg.expect.items()))
    return lines
