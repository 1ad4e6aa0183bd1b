import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from viscolab import Domain, ExtremalOperator, Grid, GridFunction, PointwiseOperator, StructureParams, pucci
from viscolab.discretize import (
    Scheme,
    StencilConfig,
    monotonicity_audit,
    pucci_stencil,
    second_directional_diff,
    upwind_gradient_norm,
)

SQ = Grid(Domain.rectangle((-1, -1), (1, 1)), 1 / 16, m=16)


def _center_node(g):
    return int(np.argmin(np.linalg.norm(g.points[: g.n_interior], axis=1)))


def _quadratic(g, Q, b=(0.0, 0.0), c=0.0):
    Q = np.asarray(Q, dtype=float)
    return GridFunction.from_rule(g, lambda x: 0.5 * np.einsum("ij,jk,ik->i", x, Q, x) + x @ np.asarray(b) + c)


@settings(max_examples=40)
@given(q=st.tuples(st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5)), k=st.integers(0, 7))
def test_second_difference_exact_on_quadratics(q, k):
    Q = np.array([[q[0], q[1]], [q[1], q[2]]])
    u = _quadratic(SQ, Q, (0.3, -0.7), 1.0)
    node = _center_node(SQ)
    th = SQ.directions[k].astype(float)
    e = th / np.linalg.norm(th)
    got = second_directional_diff(u, node, SQ.directions[k])
    assert got == pytest.approx(e @ Q @ e, rel=1e-12, abs=1e-10)


def test_second_difference_linear_zero():
    u = GridFunction.from_rule(SQ, lambda x: 2 * x[:, 0] - x[:, 1] + 4)
    for k in range(4):
        assert abs(second_directional_diff(u, _center_node(SQ), SQ.directions[k])) < 1e-10


def test_second_difference_quartic():
    g = Grid(Domain.interval(), 1 / 64)
    u = GridFunction.from_rule(g, lambda x: x[:, 0] ** 4)
    node = int(np.argmin(np.abs(g.points[: g.n_interior, 0] - 0.5)))
    got = second_directional_diff(u, node, 1)
    # the fourth derivative is 24, so the truncation error is 2 h^2 exactly
    assert got == pytest.approx(3.0 + 2 * g.h**2, abs=1e-10)


def test_second_difference_cut_arm_error():
    g = Grid(Domain.disc(), 1 / 8)
    u = GridFunction.from_rule(g, lambda x: x[:, 0] ** 2)
    cut = int(np.nonzero(g.arms[0].tf < 1)[0][0])
    with pytest.raises(ValueError, match="leaves the domain"):
        second_directional_diff(u, cut, (1, 0))
    assert second_directional_diff(u, cut, (1, 0), allow_cut=True) == pytest.approx(2.0)


def test_pucci_stencil_axis_aligned_exact():
    u = _quadratic(SQ, np.diag([1.0, -1.0]))
    node = _center_node(SQ)
    assert pucci_stencil(u, node, 1, 2, 1, StencilConfig(8)) == pytest.approx(1.0, abs=1e-10)
    assert pucci_stencil(u, node, 1, 2, -1, StencilConfig(8)) == pytest.approx(-1.0, abs=1e-10)


def test_pucci_stencil_linear_zero():
    u = GridFunction.from_rule(SQ, lambda x: x[:, 0] + 3 * x[:, 1])
    assert abs(pucci_stencil(u, _center_node(SQ), 1, 2, 1, StencilConfig(8))) < 1e-10


def test_pucci_stencil_dictionary_refinement():
    th = np.pi / 8
    R = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
    Q = R @ np.diag([1.0, -1.0]) @ R.T
    u = _quadratic(SQ, Q)
    node = _center_node(SQ)
    exact = pucci(Q, 1, 2, 1)
    e8 = abs(pucci_stencil(u, node, 1, 2, 1, StencilConfig(8)) - exact)
    e16 = abs(pucci_stencil(u, node, 1, 2, 1, StencilConfig(16)) - exact)
    assert e16 < e8


def test_pucci_stencil_consistency_in_h():
    # smooth field with its Hessian eigenframe in the dictionary
    errs = []
    for h in (1 / 16, 1 / 32, 1 / 64):
        g = Grid(Domain.rectangle((0, 0), (1, 1)), h)
        u = GridFunction.from_rule(g, lambda x: np.sin(np.pi * x[:, 0]))
        node = int(np.argmin(np.linalg.norm(g.points[: g.n_interior] - (0.3, 0.5), axis=1)))
        x = g.points[node]
        exact = pucci(np.diag([-np.pi**2 * np.sin(np.pi * x[0]), 0.0]), 1, 2, 1)
        errs.append(abs(pucci_stencil(u, node, 1, 2, 1, StencilConfig(8)) - exact))
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(rates >= 1.0)


def test_stencil_config_validation():
    with pytest.raises(ValueError):
        StencilConfig(6)
    with pytest.raises(ValueError):
        StencilConfig(2)


def test_upwind_constant_and_linear():
    g = Grid(Domain.interval(), 1 / 64)
    c = GridFunction(g, np.full(g.n_nodes, 2.0))
    lin = GridFunction.from_rule(g, lambda x: x[:, 0])
    node = 10
    assert upwind_gradient_norm(c, node) == 0.0 and upwind_gradient_norm(c, node, sign=-1) == 0.0
    assert upwind_gradient_norm(lin, node) == pytest.approx(1.0)
    assert upwind_gradient_norm(lin, node, sign=-1) == pytest.approx(1.0)


def test_upwind_kink():
    g = Grid(Domain.interval(), 1 / 64)
    u = GridFunction.from_rule(g, lambda x: np.abs(x[:, 0] - 0.5))
    node = int(np.argmin(np.abs(g.points[: g.n_interior, 0] - 0.5)))
    assert upwind_gradient_norm(u, node) == pytest.approx(1.0)


def test_audit_pure_pucci_passes():
    g = Grid(Domain.disc(), 1 / 16)
    for s in (1, -1):
        rep = monotonicity_audit(Scheme(g, 8), ExtremalOperator(s, 1, 2, dim=2), samples=10_000)
        assert rep.passed and rep.data["samples"] >= 10_000


def test_audit_centered_gradient_fails():
    g = Grid(Domain.interval(), 1 / 32)
    op = ExtremalOperator(1, 1, 1, b=200.0, dim=1)
    rep = monotonicity_audit(Scheme(g, 8, gradient="centered"), op, samples=2000)
    assert not rep.passed and "witness" in rep.data
    assert monotonicity_audit(Scheme(g, 8), op, samples=2000).passed


def test_audit_zero_operator_passes():
    g = Grid(Domain.disc(), 1 / 8)
    zero = PointwiseOperator(lambda x, r, p, X: np.zeros(len(r)), StructureParams(1, 1), dim=2)
    assert monotonicity_audit(Scheme(g, 8), zero, samples=1000).passed


@settings(max_examples=30)
@given(seed=st.integers(0, 10_000), a=st.tuples(st.floats(1.0, 2.0), st.floats(1.0, 2.0)))
def test_discrete_linear_between_extremals(seed, a):
    rng = np.random.default_rng(seed)
    g = Grid(Domain.rectangle(), 1 / 8)
    u = rng.normal(size=g.n_nodes)
    sch = Scheme(g, 8)
    d = sch.derivs(u)
    lin = a[0] * d.second[:, 0] + a[1] * d.second[:, 1]
    hi = ExtremalOperator(1, 1, 2, dim=2).discrete(d)
    lo = ExtremalOperator(-1, 1, 2, dim=2).discrete(d)
    tol = 1e-9 * (1 + np.abs(lin))
    assert np.all(lo <= lin + tol) and np.all(lin <= hi + tol)
