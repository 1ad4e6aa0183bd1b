import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from viscolab import (
    CoefficientField,
    Domain,
    ExtremalOperator,
    GridFunction,
    PointwiseOperator,
    ProblemSpec,
    SolverConfig,
    StructureParams,
    residual,
    solve_dirichlet,
    solve_pure,
)
from viscolab.solve import NonMonotoneSchemeError, SolverError

LAP1 = ExtremalOperator(1, 1.0, 1.0, dim=1)
MPLUS = ExtremalOperator(1, 1.0, 2.0, dim=2)


def test_zero_problem():
    for F, dom in ((LAP1, Domain.interval()), (ExtremalOperator(-1, 1, 3, b=1.0, dim=2), Domain.disc())):
        sol = solve_dirichlet(ProblemSpec(F, dom, 1 / 16))
        assert sol.converged and np.max(np.abs(sol.u.values)) == 0.0


def test_quadratic_exact_1d():
    sol = solve_dirichlet(ProblemSpec(LAP1, Domain.interval(), 1 / 64, rhs=-2.0))
    x = sol.u.grid.points[:, 0]
    assert np.max(np.abs(sol.u.values - x * (1 - x))) <= 1e-10


def test_radial_pucci_against_shooting():
    sol = solve_dirichlet(ProblemSpec(MPLUS, Domain.disc(), 1 / 32, rhs=-1.0))
    g = sol.u.grid
    r = np.linalg.norm(g.points, axis=1)
    ref = oracles.radial_pucci_profile(1.0, 2.0, -1.0, r)
    # the boundary nodes sit within 0.05 h of the circle, so the error is first order
    assert np.max(np.abs(sol.u.values - ref)) <= 2e-3


def test_constant_and_linear_data():
    dom = Domain.half_disc(0.5, 1.0, (0.0, 0.0))
    for psi in (3.0, lambda x: 1 + 2 * x[:, 0] - x[:, 1]):
        sol = solve_pure(MPLUS, psi, dom, h=1 / 16)
        g = sol.u.grid
        exact = GridFunction.from_rule(g, psi).values
        assert np.max(np.abs(sol.u.values - exact)) <= 1e-9


def test_half_disc_bounded_by_data():
    dom = Domain.half_disc(0.5, 1.0, (0.0, 0.0))
    psi = lambda x: np.abs(x[:, 0]) ** 1.5 * np.sign(x[:, 0]) + 0.5 * x[:, 1]  # noqa: E731
    sol = solve_pure(MPLUS, psi, dom, h=1 / 32)
    Ni = sol.u.grid.n_interior
    b = sol.u.values[Ni:]
    assert sol.u.values[:Ni].max() <= b.max() + 1e-12
    assert sol.u.values[:Ni].min() >= b.min() - 1e-12


def test_solve_pure_rejects_first_order():
    with pytest.raises(ValueError):
        solve_pure(ExtremalOperator(1, 1, 1, b=1.0, dim=2), 0.0, Domain.disc(), h=1 / 8)


def test_residual_examples():
    prob = ProblemSpec(MPLUS, Domain.disc(), 1 / 16, rhs=-1.0)
    sol = solve_dirichlet(prob)
    R = residual(prob, sol.u)
    assert np.max(np.abs(R.values)) <= SolverConfig().tol
    assert np.all(R.values[prob.grid.n_interior:] == 0.0)
    bumped = sol.u.values.copy()
    k = prob.grid.n_interior // 2
    bumped[k] += 1e-3
    Rb = residual(prob, GridFunction(prob.grid, bumped)).values
    # raising one value lowers the operator at that node and raises it at its neighbors
    assert Rb[k] < R.values[k]
    nb = [a.fwd[k] for a in prob.grid.arms if a.fwd[k] < prob.grid.n_interior]
    assert np.all(Rb[nb] >= R.values[nb] - 1e-12)
    junk = residual(prob, GridFunction(prob.grid, np.sin(40 * prob.grid.points[:, 0])))
    assert np.max(np.abs(junk.values)) > 1.0


def test_residual_grid_mismatch():
    prob = ProblemSpec(MPLUS, Domain.disc(), 1 / 16)
    other = ProblemSpec(MPLUS, Domain.disc(), 1 / 8)
    with pytest.raises(ValueError):
        residual(prob, GridFunction(other.grid, np.zeros(other.grid.n_nodes)))


def test_non_monotone_scheme_refused():
    # a second-order operator with the wrong sign is not degenerate elliptic
    bad = PointwiseOperator(lambda x, r, p, X: -np.trace(X, axis1=1, axis2=2), StructureParams(1, 1), dim=2)
    with pytest.raises(NonMonotoneSchemeError):
        solve_dirichlet(ProblemSpec(bad, Domain.disc(), 1 / 8, rhs=1.0))


def test_pseudo_transient_path():
    lap = PointwiseOperator(lambda x, r, p, X: np.trace(X, axis1=1, axis2=2), StructureParams(1, 1), dim=2,
                            pure_second_order=True)
    prob = ProblemSpec(lap, Domain.rectangle(), 1 / 8, rhs=-2.0, boundary=lambda x: x[:, 0] * (1 - x[:, 0]))
    sol = solve_dirichlet(prob, SolverConfig(tol=1e-9))
    assert sol.converged and sol.method == "pseudo_transient"
    x = prob.grid.points[:, 0]
    assert np.max(np.abs(sol.u.values - x * (1 - x))) <= 1e-8


def test_divergence_is_structured():
    prob = ProblemSpec(MPLUS, Domain.disc(), 1 / 8, rhs=-1.0)
    with pytest.raises(SolverError) as info:
        solve_dirichlet(prob, SolverConfig(policy_iteration=False, rho_safety=1e6, patience=20))
    assert info.value.reason == "divergence" and len(info.value.trace) > 0


def test_mu_gate_marks_untrusted():
    F = ExtremalOperator(1, 1, 1, mu=5.0, dim=1)
    sol = solve_dirichlet(ProblemSpec(F, Domain.interval(), 1 / 32, rhs=-1.0), SolverConfig(delta_gate=0.1))
    assert sol.converged and not sol.trusted and not sol.gate["ok"]


def test_trace_csv():
    sol = solve_dirichlet(ProblemSpec(MPLUS, Domain.disc(), 1 / 8, rhs=-1.0))
    lines = sol.trace_csv().strip().splitlines()
    assert lines[0] == "sweep,residual" and len(lines) == len(sol.trace) + 1


_COMPARISON_OPS = [ExtremalOperator(1, 1, 2, b=1.0, dim=1), ExtremalOperator(-1, 1, 3, mu=0.5, dim=1),
                   ExtremalOperator(1, 1, 2, d=1.0, omega=__import__("viscolab").make_modulus("lipschitz", 1.0),
                                    dim=1)]


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10_000), k=st.integers(0, 2))
def test_comparison_principle(seed, k):
    rng = np.random.default_rng(seed)
    a, w, ph = rng.uniform(-3, 3), rng.uniform(1, 8), rng.uniform(0, 6)
    f1 = lambda x: a * np.sin(w * x[:, 0] + ph)  # noqa: E731
    bump = rng.uniform(0, 2)
    f2 = lambda x: f1(x) + bump * (1 + np.cos(3 * x[:, 0])) ** 2  # noqa: E731
    psi = lambda x: 0.2 * x[:, 0]  # noqa: E731
    F = _COMPARISON_OPS[k]
    u1 = solve_dirichlet(ProblemSpec(F, Domain.interval(), 1 / 32, rhs=f1, boundary=psi)).u.values
    u2 = solve_dirichlet(ProblemSpec(F, Domain.interval(), 1 / 32, rhs=f2, boundary=psi)).u.values
    assert np.all(u1 >= u2 - 1e-9)


@settings(max_examples=10, deadline=None)
@given(t=st.floats(0.01, 100.0), seed=st.integers(0, 1000))
def test_homogeneous_scaling(t, seed):
    rng = np.random.default_rng(seed)
    k = rng.normal(size=2) * 2
    psi = lambda x: np.sin(x @ k)  # noqa: E731
    F = ExtremalOperator(1, 1, 2, b=1.0, dim=2)
    cfg = SolverConfig(tol=1e-11)
    u = solve_dirichlet(ProblemSpec(F, Domain.disc(), 1 / 8, boundary=psi), cfg).u.values
    ut = solve_dirichlet(ProblemSpec(F, Domain.disc(), 1 / 8, boundary=lambda x: t * psi(x)), cfg).u.values
    assert np.max(np.abs(ut - t * u)) <= 1e-8 * max(1.0, t)


def test_pinned_boundary():
    psi = lambda x: np.cos(3 * x[:, 0]) + x[:, 1] ** 2  # noqa: E731
    prob = ProblemSpec(ExtremalOperator(-1, 1, 2, b=2.0, dim=2), Domain.half_disc(0.3, 1.0, (0.0, 0.0)), 1 / 16,
                       rhs=1.0, boundary=psi)
    sol = solve_dirichlet(prob)
    Ni = prob.grid.n_interior
    assert np.max(np.abs(sol.u.values[Ni:] - prob.psi[Ni:])) == 0.0


def test_refinement_cauchy():
    b = CoefficientField.smooth(lambda x: 1 + x[:, 0] ** 2, sup_bound=2.0)
    F = ExtremalOperator(1, 1, 2, b=b, dim=1)
    sols = [solve_dirichlet(ProblemSpec(F, Domain.interval(), h, rhs=lambda x: -np.exp(x[:, 0]))).u
            for h in (1 / 16, 1 / 32, 1 / 64)]
    # compare on the coarse lattice
    def at(u, xs):
        return np.interp(xs, u.grid.points[:, 0][np.argsort(u.grid.points[:, 0])],
                         u.values[np.argsort(u.grid.points[:, 0])])
    xs = np.linspace(0, 1, 17)
    d1 = np.max(np.abs(at(sols[0], xs) - at(sols[1], xs)))
    d2 = np.max(np.abs(at(sols[1], xs) - at(sols[2], xs)))
    assert d2 < d1 and np.log2(d1 / d2) > 0.5
