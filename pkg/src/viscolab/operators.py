"""Pucci operators, augmented extremal operators, the structure-condition
checker and oscillation measures.

Pointwise rules are vectorized over a leading batch axis: ``x`` has shape
(N, n), ``r`` (N,), ``p`` (N, n) and ``X`` (N, n, n).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable

import numpy as np

from .core import (
    ZERO_FIELD,
    ZERO_MODULUS,
    CoefficientField,
    Domain,
    Modulus,
    as_field,
)
from .reports import Report

# ---------------------------------------------------------------------------
# Symmetric matrices


@dataclass(frozen=True)
class SymMatrix:
    """Symmetric n×n matrix stored by its upper triangle (row major)."""

    n: int
    upper: tuple[float, ...]

    def __post_init__(self):
        if len(self.upper) != self.n * (self.n + 1) // 2:
            raise ValueError("upper triangle has the wrong length")

    @classmethod
    def from_array(cls, a, atol: float = 1e-12) -> SymMatrix:
        a = np.atleast_2d(np.asarray(a, dtype=float))
        if a.shape[0] != a.shape[1]:
            raise ValueError("matrix must be square")
        if not np.allclose(a, a.T, rtol=0, atol=atol * max(1.0, np.abs(a).max())):
            raise ValueError("matrix is not symmetric")
        iu = np.triu_indices(a.shape[0])
        return cls(a.shape[0], tuple(float(v) for v in a[iu]))

    @classmethod
    def diag(cls, *entries: float) -> SymMatrix:
        return cls.from_array(np.diag(entries))

    def array(self) -> np.ndarray:
        a = np.zeros((self.n, self.n))
        a[np.triu_indices(self.n)] = self.upper
        return a + np.triu(a, 1).T

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.array())

    def norm(self, kind: str = "spectral") -> float:
        if kind == "spectral":
            return float(np.max(np.abs(self.eigenvalues())))
        return float(np.linalg.norm(self.array()))


def _as_matrix_batch(X) -> np.ndarray:
    if isinstance(X, SymMatrix):
        return X.array()[None]
    X = np.asarray(X, dtype=float)
    if X.ndim == 0:
        return X.reshape(1, 1, 1)
    if X.ndim == 1:
        # batch of 1D Hessians
        return X.reshape(-1, 1, 1)
    if X.ndim == 2:
        return X[None]
    return X


def _is_single(X) -> bool:
    return isinstance(X, SymMatrix) or np.ndim(X) in (0, 2)


def sym_eigvals(X: np.ndarray) -> np.ndarray:
    """Eigenvalues of a batch of symmetric matrices (closed form for n ≤ 2)."""
    n = X.shape[-1]
    if n == 1:
        return X[..., 0, :]
    if n == 2:
        a, b, c = X[..., 0, 0], X[..., 0, 1], X[..., 1, 1]
        m = 0.5 * (a + c)
        rad = np.hypot(0.5 * (a - c), b)
        return np.stack([m - rad, m + rad], axis=-1)
    return np.linalg.eigvalsh(X)


def matrix_norm(X: np.ndarray, kind: str = "spectral") -> np.ndarray:
    if kind == "spectral":
        return np.max(np.abs(sym_eigvals(X)), axis=-1)
    if kind == "frobenius":
        return np.sqrt(np.sum(X * X, axis=(-2, -1)))
    raise ValueError(f"unknown matrix norm {kind!r}")


def _check_ellipticity(lam: float, Lam: float) -> None:
    if not (lam > 0 and Lam >= lam):
        raise ValueError(f"ellipticity requires 0 < lambda <= Lambda, got ({lam}, {Lam})")


def pucci(X, lam: float, Lam: float, sign: int | str = 1):
    """Pucci extremal operator.

    Returns ``Lam*sum(e+) - lam*sum(e-)`` for sign + and
    ``lam*sum(e+) - Lam*sum(e-)`` for sign −, where ``e`` are the
    eigenvalues of ``X``. Accepts a SymMatrix, an (n, n) array, a batch
    (N, n, n) or a scalar (n = 1).
    """
    _check_ellipticity(lam, Lam)
    s = _sign(sign)
    batch = _as_matrix_batch(X)
    e = sym_eigvals(batch)
    pos = np.sum(np.maximum(e, 0.0), axis=-1)
    neg = np.sum(np.maximum(-e, 0.0), axis=-1)
    out = Lam * pos - lam * neg if s > 0 else lam * pos - Lam * neg
    if _is_single(X):
        return float(out[0])
    return out


def _sign(sign) -> int:
    if sign in (1, "+", "plus"):
        return 1
    if sign in (-1, "-", "minus"):
        return -1
    raise ValueError(f"sign must be + or -, got {sign!r}")


# ---------------------------------------------------------------------------
# Structure parameters and operators


@dataclass(frozen=True)
class StructureParams:
    """Constants of the two-sided structure envelope.

    The envelope reads M⁻(X−Y) − b|p−q| − μ|p−q|(|p|+|q|) − dω(|r−s|)
    ≤ F(x,r,p,X) − F(x,s,q,Y) ≤ the same with M⁺ and plus signs.
    """

    lam: float
    Lam: float
    mu: float = 0.0
    b: CoefficientField = ZERO_FIELD
    d: CoefficientField = ZERO_FIELD
    omega: Modulus = ZERO_MODULUS
    c: CoefficientField | None = None

    def __post_init__(self):
        _check_ellipticity(self.lam, self.Lam)
        if self.mu < 0:
            raise ValueError("mu must be nonnegative")
        object.__setattr__(self, "b", as_field(self.b))
        object.__setattr__(self, "d", as_field(self.d))

    def describe(self) -> dict:
        out = {
            "lam": self.lam, "Lam": self.Lam, "mu": self.mu,
            "b": self.b.describe(), "d": self.d.describe(), "omega": self.omega.describe(),
        }
        if self.c is not None:
            out["c"] = self.c.describe()
        return out


@dataclass
class Linearization:
    """Value of a discrete operator and its partial derivatives with respect
    to the discrete slots (second differences, one-sided and centered
    first differences, and the center value)."""

    value: np.ndarray
    d_second: np.ndarray
    d_r: np.ndarray
    d_Dp: np.ndarray | None = None
    d_Dm: np.ndarray | None = None
    d_Dc: np.ndarray | None = None


def _default_sample(field: CoefficientField, x: np.ndarray) -> np.ndarray:
    return field.evaluate(x)


def _batch(x, r, p, X, n: int | None):
    X = _as_matrix_batch(X)
    n = X.shape[-1] if n is None else n
    N = X.shape[0]
    x = np.asarray(x, dtype=float).reshape(-1, n)
    p = np.asarray(p, dtype=float).reshape(-1, n)
    r = np.asarray(r, dtype=float).reshape(-1)
    N = max(N, x.shape[0], p.shape[0], r.shape[0])
    x = np.broadcast_to(x, (N, n))
    p = np.broadcast_to(p, (N, n))
    r = np.broadcast_to(r, (N,))
    X = np.broadcast_to(X, (N, n, n))
    return x, r, p, X


class Operator:
    """Base class for F(x, r, p, X) with declared structure parameters.

    Subclasses implement ``_rule``; discrete evaluation defaults to plugging
    the centered gradient and the Hessian proxy into the rule.
    """

    params: StructureParams
    dim: int | None = None
    name: str = "operator"

    def _rule(self, x, r, p, X, sample) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, x, r, p, X):
        scalar = _is_single(X)
        xb, rb, pb, Xb = _batch(x, r, p, X, self.dim)
        out = self._rule(xb, rb, pb, Xb, _default_sample)
        if scalar and out.shape[0] == 1:
            return float(out[0])
        return out

    def discrete(self, d) -> np.ndarray:
        return self._rule(d.x, d.r, d.Dc, d.hessian(), d.sample)

    def linearize(self, d) -> Linearization | None:
        return None

    @property
    def has_policy(self) -> bool:
        return False

    def reflected(self) -> Operator:
        return ReflectedOperator(self)

    def frozen(self, x0) -> Operator:
        """The pure second-order operator X ↦ F(x0, 0, 0, X)."""
        base = self
        x0 = np.asarray(x0, dtype=float).reshape(1, -1)
        params = StructureParams(self.params.lam, self.params.Lam)

        def rule(x, r, p, X):
            xb = np.broadcast_to(x0, (X.shape[0], x0.shape[1]))
            zeros = np.zeros(X.shape[0])
            return base(xb, zeros, np.zeros_like(xb), X)

        return PointwiseOperator(rule, params, dim=x0.shape[1], name=f"frozen({self.name})",
                                 pure_second_order=True, x_independent=True)

    @property
    def pure_second_order(self) -> bool:
        return False

    @property
    def x_independent(self) -> bool:
        return False

    @property
    def homogeneous(self) -> bool | None:
        return None

    def describe(self) -> dict:
        return {"name": self.name, "params": self.params.describe()}


class ExtremalOperator(Operator):
    """Augmented extremal operator

    L^±[u] = a(x) M^±(D²u) ± b(x)|Du| ± μ|Du|² ± d(x) ω(u^∓).

    Parameters
    ----------
    sign : {+1, -1}
    lam, Lam : float
        Ellipticity constants of the Pucci part.
    b, d : CoefficientField or float, optional
    mu : float
        Coefficient of the quadratic gradient term (enters with the sign).
    omega : Modulus, optional
    a : CoefficientField, optional
        Positive multiplier of the Pucci part with bounds ``a_bounds``.
    dim : int, optional
    """

    def __init__(self, sign=1, lam=1.0, Lam=1.0, b=None, mu=0.0, d=None, omega=None,
                 a=None, a_bounds=None, dim=None):
        self.sign = _sign(sign)
        _check_ellipticity(lam, Lam)
        self.lam, self.Lam = float(lam), float(Lam)
        self.b, self.d = as_field(b), as_field(d)
        self.mu = float(mu)
        self.omega = omega if omega is not None else make_lipschitz(0.0)
        self.a = None if a is None else as_field(a)
        if self.a is not None:
            if a_bounds is None:
                if self.a.kind != "constant":
                    raise ValueError("a non-constant multiplier needs a_bounds")
                a_bounds = (self.a.value, self.a.value)
            if not 0 < a_bounds[0] <= a_bounds[1]:
                raise ValueError("a_bounds must be positive and ordered")
        self.a_bounds = (1.0, 1.0) if a_bounds is None else tuple(float(v) for v in a_bounds)
        self.dim = dim
        self.params = StructureParams(
            self.lam * self.a_bounds[0], self.Lam * self.a_bounds[1],
            self.mu, self.b, self.d, self.omega,
        )
        self.name = f"L{'+' if self.sign > 0 else '-'}"

    @property
    def has_policy(self) -> bool:
        return True

    @property
    def pure_second_order(self) -> bool:
        return self.b.is_zero and self.d.is_zero and self.mu == 0

    @property
    def x_independent(self) -> bool:
        return (self.a is None or self.a.kind == "constant") and self.b.kind == "constant" and self.d.kind == "constant"

    @property
    def homogeneous(self) -> bool:
        zero_order_ok = self.d.is_zero or self.omega.L == 0 or self.omega.gamma == 1.0
        return self.mu == 0 and zero_order_ok

    def _amult(self, x, sample):
        if self.a is None:
            return 1.0
        return sample(self.a, x)

    def _rule(self, x, r, p, X, sample):
        s = self.sign
        val = self._amult(x, sample) * pucci(X, self.lam, self.Lam, s)
        pn = np.linalg.norm(p, axis=1)
        if not self.b.is_zero:
            val = val + s * sample(self.b, x) * pn
        if self.mu:
            val = val + s * self.mu * pn**2
        if not self.d.is_zero and self.omega.L:
            val = val + s * sample(self.d, x) * self.omega(np.maximum(-s * r, 0.0))
        return val

    # -- discrete ----------------------------------------------------------

    def _frames(self, d):
        if self.lam == self.Lam:
            return [d.frames[0]]
        return d.frames

    def _second_part(self, d):
        s = self.sign
        frames = self._frames(d)
        if s > 0:
            hi, lo = self.Lam, self.lam
        else:
            hi, lo = self.lam, self.Lam
        sec = d.second
        g = np.where(sec > 0, hi * sec, lo * sec)
        sums = np.stack([g[:, list(f)].sum(axis=1) for f in frames], axis=1)
        choose = np.argmax(sums, axis=1) if s > 0 else np.argmin(sums, axis=1)
        val = sums[np.arange(sums.shape[0]), choose]
        return val, frames, choose, hi, lo

    def _grad_part(self, d):
        """Upwind gradient components that keep the scheme monotone."""
        s = self.sign
        if d.gradient == "centered":
            return d.Dc, None
        if s > 0:
            comp = np.maximum(np.maximum(d.Dp, -d.Dm), 0.0)
        else:
            comp = np.maximum(np.maximum(d.Dm, -d.Dp), 0.0)
        return comp, s

    def discrete(self, d):
        return self.linearize(d, values_only=True)

    def linearize(self, d, values_only: bool = False):
        s = self.sign
        N = d.r.shape[0]
        amult = self._amult(d.x, d.sample)
        sec_val, frames, choose, hi, lo = self._second_part(d)
        val = amult * sec_val
        need_grad = (not self.b.is_zero) or self.mu
        if need_grad:
            comp, _ = self._grad_part(d)
            pn = np.sqrt(np.sum(comp**2, axis=1))
            bvals = d.sample(self.b, d.x) if not self.b.is_zero else 0.0
            val = val + s * (bvals * pn + self.mu * pn**2)
        need_r = (not self.d.is_zero) and self.omega.L
        if need_r:
            dvals = d.sample(self.d, d.x)
            arg = np.maximum(-s * d.r, 0.0)
            val = val + s * dvals * self.omega(arg)
        if values_only:
            return val

        K = d.second.shape[1]
        dsec = np.zeros((N, K))
        for j, f in enumerate(frames):
            rows = np.nonzero(choose == j)[0]
            for k in f:
                sk = d.second[rows, k]
                dsec[rows, k] = np.where(sk > 0, hi, lo)
        dsec *= np.reshape(amult, (-1, 1)) if np.ndim(amult) else amult
        lin = Linearization(val, dsec, np.zeros(N))
        if need_grad:
            coef = s * (bvals + 2 * self.mu * pn)
            with np.errstate(invalid="ignore", divide="ignore"):
                unit = np.where(pn[:, None] > 0, comp / pn[:, None], 0.0)
            g = np.reshape(coef, (-1, 1)) * unit if np.ndim(coef) else coef * unit
            if d.gradient == "centered":
                lin.d_Dc = g
            else:
                if s > 0:
                    take_p = (d.Dp >= -d.Dm) & (d.Dp > 0)
                    take_m = (~take_p) & (-d.Dm > 0)
                else:
                    take_p = (-d.Dp > d.Dm) & (-d.Dp > 0)
                    take_m = (~take_p) & (d.Dm > 0)
                # d comp / d Dp is +1 (s=+) or -1 (s=-) where selected
                lin.d_Dp = np.where(take_p, g * s, 0.0)
                lin.d_Dm = np.where(take_m, -g * s, 0.0)
        if need_r:
            active = -s * d.r > 0
            lin.d_r = np.where(active, -dvals * self.omega.derivative(arg), 0.0)
        return lin

    def reflected(self) -> ExtremalOperator:
        return ExtremalOperator(-self.sign, self.lam, self.Lam, self.b, self.mu, self.d,
                                self.omega, self.a, self.a_bounds if self.a is not None else None, self.dim)

    def frozen(self, x0) -> ExtremalOperator:
        a0 = None
        if self.a is not None:
            a0 = float(self.a.evaluate(np.atleast_2d(x0))[0])
        return ExtremalOperator(self.sign, self.lam, self.Lam, a=a0, dim=self.dim)

    def with_params(self, **kw) -> ExtremalOperator:
        args = dict(sign=self.sign, lam=self.lam, Lam=self.Lam, b=self.b, mu=self.mu, d=self.d,
                    omega=self.omega, a=self.a, a_bounds=self.a_bounds if self.a is not None else None,
                    dim=self.dim)
        args.update(kw)
        return ExtremalOperator(**args)

    def describe(self) -> dict:
        out = {"name": self.name, "sign": "+" if self.sign > 0 else "-", "params": self.params.describe()}
        if self.a is not None:
            out["a"] = self.a.describe()
            out["a_bounds"] = list(self.a_bounds)
        return out


def make_lipschitz(L: float) -> Modulus:
    return Modulus("lipschitz", float(L), 1.0)


class PointwiseOperator(Operator):
    """General operator given by a vectorized rule ``rule(x, r, p, X)``.

    The declared ``params`` are the caller's claim; use
    :func:`check_structure_condition` to test it.
    """

    def __init__(self, rule: Callable, params: StructureParams, dim: int | None = None, name: str = "F",
                 pure_second_order: bool = False, x_independent: bool = False, homogeneous: bool | None = None):
        self.rule = rule
        self.params = params
        self.dim = dim
        self.name = name
        self._pure = pure_second_order
        self._xind = x_independent
        self._homog = homogeneous

    def _rule(self, x, r, p, X, sample):
        out = np.asarray(self.rule(x, r, p, X), dtype=float)
        return np.broadcast_to(out, (X.shape[0],)).astype(float)

    @property
    def pure_second_order(self) -> bool:
        return self._pure

    @property
    def x_independent(self) -> bool:
        return self._xind

    @property
    def homogeneous(self):
        return self._homog


class ReflectedOperator(Operator):
    """G(x, r, p, X) = −F(x, −r, −p, −X)."""

    def __init__(self, base: Operator):
        self.base = base
        self.params = base.params
        self.dim = base.dim
        self.name = f"reflect({base.name})"

    def _rule(self, x, r, p, X, sample):
        return -self.base._rule(x, -r, -p, -X, sample)

    def discrete(self, d):
        return -self.base.discrete(d.negated())

    def linearize(self, d):
        lin = self.base.linearize(d.negated())
        if lin is None:
            return None
        lin.value = -lin.value
        return lin

    @property
    def has_policy(self) -> bool:
        return self.base.has_policy

    def reflected(self) -> Operator:
        return self.base

    @property
    def pure_second_order(self) -> bool:
        return self.base.pure_second_order

    @property
    def x_independent(self) -> bool:
        return self.base.x_independent

    @property
    def homogeneous(self):
        return self.base.homogeneous


class ShiftedOperator(Operator):
    """F(x, r, p, X) + alpha · c(x) · r (the weighted eigen equation)."""

    def __init__(self, base: Operator, c: CoefficientField, alpha: float):
        self.base = base
        self.c = as_field(c)
        self.alpha = float(alpha)
        self.params = base.params
        self.dim = base.dim
        self.name = f"{base.name}+{self.alpha:g}c"

    def _rule(self, x, r, p, X, sample):
        return self.base._rule(x, r, p, X, sample) + self.alpha * sample(self.c, x) * r

    def discrete(self, d):
        return self.base.discrete(d) + self.alpha * d.sample(self.c, d.x) * d.r

    def linearize(self, d):
        lin = self.base.linearize(d)
        if lin is None:
            return None
        cv = self.alpha * d.sample(self.c, d.x)
        lin.value = lin.value + cv * d.r
        lin.d_r = lin.d_r + cv
        return lin

    @property
    def has_policy(self) -> bool:
        return self.base.has_policy


class RescaledOperator(Operator):
    """F̃(y, r, p, X) = κ[F(Ty, A r + ℓ(Ty), B p + q, C X) − F(Ty, ℓ(Ty), q, 0)].

    ``T y = scale · y + shift``; ``ell`` maps physical points to the values
    of an affine function with gradient ``q``. If ``subtract`` is False the
    offset term F(Ty, ℓ(Ty), q, 0) is omitted.
    """

    def __init__(self, base: Operator, scale: float, shift, A: float, B: float, C: float, kappa: float,
                 ell: Callable | None = None, q=None, subtract: bool = True):
        self.base = base
        self.scale = float(scale)
        self.shift = np.atleast_1d(np.asarray(shift, dtype=float))
        self.A, self.B, self.C, self.kappa = float(A), float(B), float(C), float(kappa)
        n = self.shift.shape[0]
        self.q = np.zeros(n) if q is None else np.asarray(q, dtype=float).reshape(n)
        self.ell = ell if ell is not None else (lambda y: np.zeros(np.atleast_2d(y).shape[0]))
        self.subtract = subtract
        self.params = base.params
        self.dim = n
        self.name = f"rescaled({base.name})"

    def T(self, y):
        return self.scale * np.atleast_2d(y) + self.shift

    def offset_term(self, y, sample=_default_sample):
        xs = self.T(y)
        N = xs.shape[0]
        n = xs.shape[1]
        return self.base._rule(xs, self.ell(xs), np.broadcast_to(self.q, (N, n)),
                               np.zeros((N, n, n)), sample)

    def _rule(self, x, r, p, X, sample):
        xs = self.T(x)
        lv = self.ell(xs)
        val = self.base._rule(xs, self.A * r + lv, self.B * p + self.q, self.C * X, sample)
        if self.subtract:
            val = val - self.base._rule(xs, lv, np.broadcast_to(self.q, p.shape), np.zeros_like(X), sample)
        return self.kappa * val

    def _mapped(self, d):
        xs = self.T(d.x)
        lv = self.ell(xs)
        return d.mapped(
            x=xs, r=self.A * d.r + lv, Dp=self.B * d.Dp + self.q, Dm=self.B * d.Dm + self.q,
            Dc=self.B * d.Dc + self.q, second=self.C * d.second, hess_scale=self.C,
            lattice_map=(self.scale, self.shift),
        ), xs, lv

    def discrete(self, d):
        md, xs, lv = self._mapped(d)
        val = self.base.discrete(md)
        if self.subtract:
            val = val - self.offset_term(d.x, md.sample)
        return self.kappa * val

    def linearize(self, d):
        md, xs, lv = self._mapped(d)
        lin = self.base.linearize(md)
        if lin is None:
            return None
        if self.subtract:
            lin.value = lin.value - self.offset_term(d.x, md.sample)
        lin.value = self.kappa * lin.value
        lin.d_second = self.kappa * self.C * lin.d_second
        lin.d_r = self.kappa * self.A * lin.d_r
        for name in ("d_Dp", "d_Dm", "d_Dc"):
            g = getattr(lin, name)
            if g is not None:
                setattr(lin, name, self.kappa * self.B * g)
        return lin

    @property
    def has_policy(self) -> bool:
        return self.base.has_policy


# ---------------------------------------------------------------------------
# Direct evaluation helpers


def extremal_apply(sign, x, r, p, X, params: StructureParams):
    """Evaluate L^± at a point (or batch) for the given structure params."""
    op = ExtremalOperator(sign, params.lam, params.Lam, params.b, params.mu, params.d, params.omega)
    return op(x, r, p, X)


def check_homogeneity(op: Operator, n: int, samples: int = 256, seed: int = 0, tol: float = 1e-9) -> Report:
    """Sample F(x, t r, t p, t X) − t F(x, r, p, X) for t > 0."""
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1, 1, (samples, n))
    r = rng.normal(size=samples)
    p = rng.normal(size=(samples, n))
    X = _random_sym(rng, samples, n)
    t = np.exp(rng.uniform(np.log(0.05), np.log(20.0), samples))
    lhs = op(x, t * r, t[:, None] * p, t[:, None, None] * X)
    rhs = t * op(x, r, p, X)
    err = np.abs(lhs - rhs) / (1 + np.abs(rhs))
    worst = int(np.argmax(err))
    ok = bool(err[worst] <= tol)
    data = {"worst_relative_error": float(err[worst])}
    if not ok:
        data["witness"] = {"x": x[worst].tolist(), "r": float(r[worst]), "p": p[worst].tolist(),
                           "X": X[worst].tolist(), "t": float(t[worst])}
    return Report("homogeneity", ok, data)


def _random_sym(rng, N: int, n: int) -> np.ndarray:
    A = rng.normal(size=(N, n, n))
    return 0.5 * (A + np.swapaxes(A, 1, 2))


def check_structure_condition(F: Operator, sample_count: int = 10_000, seed: int = 0, n: int | None = None,
                              box: Domain | tuple | None = None, tol: float = 1e-9) -> Report:
    """Test the two-sided structure envelope with the declared params.

    Draws random (x, r, s, p, q, X, Y) plus a few structured witnesses and
    evaluates both inequalities. The report lists the worst margin and, on
    failure, the violating tuple and side.
    """
    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    n = n or F.dim or 2
    prm = F.params
    rng = np.random.default_rng(seed)
    if box is None:
        lo, hi = -np.ones(n), np.ones(n)
    elif isinstance(box, Domain):
        lo, hi = box.bbox()
    else:
        lo, hi = (np.asarray(v, dtype=float) for v in box)
    S = sample_count
    x = lo + (hi - lo) * rng.random((S, n))
    if isinstance(box, Domain):
        # keep samples inside the domain
        inside = box.contains(x)
        x[~inside] = 0.5 * (lo + hi)
    r = rng.normal(scale=2.0, size=S)
    s = np.where(rng.random(S) < 0.2, r, rng.normal(scale=2.0, size=S))
    p = rng.normal(size=(S, n)) * 10 ** rng.uniform(-2, 1, (S, 1))
    q = np.where(rng.random((S, 1)) < 0.2, p, rng.normal(size=(S, n)) * 10 ** rng.uniform(-2, 1, (S, 1)))
    X = _random_sym(rng, S, n) * 10 ** rng.uniform(-2, 2, (S, 1, 1))
    Y = _random_sym(rng, S, n) * 10 ** rng.uniform(-2, 2, (S, 1, 1))
    eye = np.eye(n)
    structured = [(eye, 0 * eye), (0 * eye, eye), (-eye, 0 * eye)]
    if n == 2:
        structured.append((np.diag([1.0, -1.0]), 0 * eye))
    for i, (a, bm) in enumerate(structured[:S]):
        X[i], Y[i] = a, bm
        s[i], r[i] = 0.0, 0.0
        p[i], q[i] = 0.0, 0.0

    Fx = F(x, r, p, X)
    Fy = F(x, s, q, Y)
    diff = Fx - Fy
    Z = X - Y
    dp = np.linalg.norm(p - q, axis=1)
    grad = prm.b.evaluate(x) * dp + prm.mu * dp * (np.linalg.norm(p, axis=1) + np.linalg.norm(q, axis=1))
    zero = prm.d.evaluate(x) * prm.omega(np.abs(r - s))
    upper = pucci(Z, prm.lam, prm.Lam, 1) + grad + zero
    lower = pucci(Z, prm.lam, prm.Lam, -1) - grad - zero
    m_up = upper - diff
    m_lo = diff - lower
    scale = 1.0 + np.abs(Fx) + np.abs(Fy) + np.abs(upper) + np.abs(lower)
    rel_up, rel_lo = m_up / scale, m_lo / scale
    worst_up, worst_lo = int(np.argmin(rel_up)), int(np.argmin(rel_lo))
    if rel_up[worst_up] <= rel_lo[worst_lo]:
        idx, side, worst = worst_up, "upper", float(m_up[worst_up])
        rel = rel_up[worst_up]
    else:
        idx, side, worst = worst_lo, "lower", float(m_lo[worst_lo])
        rel = rel_lo[worst_lo]
    ok = bool(rel >= -tol)
    data = {"samples": S, "seed": seed, "worst_margin": worst, "worst_side": side}
    if not ok:
        data["witness"] = {
            "side": side, "x": x[idx].tolist(), "r": float(r[idx]), "s": float(s[idx]),
            "p": p[idx].tolist(), "q": q[idx].tolist(), "X": X[idx].tolist(), "Y": Y[idx].tolist(),
            "difference": float(diff[idx]), "bound": float(upper[idx] if side == "upper" else lower[idx]),
        }
    return Report("structure_condition", ok, data)


# ---------------------------------------------------------------------------
# Oscillation


@lru_cache(maxsize=8)
def oscillation_family(n: int, seed: int = 0, n_random: int = 512) -> np.ndarray:
    """Structured family (rotations × signed dyadic diagonals) plus random X."""
    ladder = np.array([sg * 2.0**k for k in range(-4, 5) for sg in (1, -1)])
    rng = np.random.default_rng(seed)
    if n == 1:
        fam = ladder.reshape(-1, 1, 1)
        rand = rng.normal(size=(n_random, 1, 1)) * 10 ** rng.uniform(-2, 2, (n_random, 1, 1))
        return np.concatenate([fam, rand])
    if n != 2:
        raise ValueError("oscillation family implemented for n in {1, 2}")
    mats = []
    d1, d2 = np.meshgrid(ladder, ladder, indexing="ij")
    D = np.zeros((d1.size, 2, 2))
    D[:, 0, 0], D[:, 1, 1] = d1.ravel(), d2.ravel()
    for j in range(32):
        th = j * math.pi / 32
        R = np.array([[math.cos(th), -math.sin(th)], [math.sin(th), math.cos(th)]])
        mats.append(R @ D @ R.T)
    fam = np.concatenate(mats)
    rand = _random_sym(rng, n_random, 2) * 10 ** rng.uniform(-2, 2, (n_random, 1, 1))
    out = np.concatenate([fam, rand])
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class OscillationResult:
    value: float
    X: np.ndarray
    variant: str
    norm: str

    def to_dict(self) -> dict:
        return {"value": self.value, "X": self.X.tolist(), "variant": self.variant, "norm": self.norm}


def oscillation_search(F: Operator, x, x0, variant: str = "beta", norm: str = "spectral",
                       n: int | None = None, seed: int = 0) -> OscillationResult:
    """Maximize |F(x,0,0,X) − F(x0,0,0,X)| / ‖X‖ (or ‖X‖+1) over the family."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    n = n or x.shape[0]
    fam = oscillation_family(n, seed)
    N = fam.shape[0]
    zr = np.zeros(N)
    zp = np.zeros((N, n))
    num = np.abs(F(np.broadcast_to(x, (N, n)), zr, zp, fam) - F(np.broadcast_to(x0, (N, n)), zr, zp, fam))
    den = matrix_norm(fam, norm)
    if variant == "beta_bar":
        den = den + 1.0
    elif variant != "beta":
        raise ValueError("variant must be 'beta' or 'beta_bar'")
    quot = num / den
    k = int(np.argmax(quot))
    return OscillationResult(float(quot[k]), np.array(fam[k]), variant, norm)


def oscillation_beta(F: Operator, x, x0, variant: str = "beta", norm: str = "spectral",
                     n: int | None = None, seed: int = 0) -> float:
    """Oscillation of F(·,0,0,X) between x and x0 normalized by ‖X‖ (β) or
    ‖X‖+1 (β̄), maximized over a structured family of matrices."""
    return oscillation_search(F, x, x0, variant, norm, n, seed).value


def h_theta_report(F: Operator, x0, r: float, p: float, domain: Domain | None = None,
                   resolution: int = 16, variant: str = "beta", norm: str = "spectral") -> float:
    """(r^{-n} ∫_{B_r(x0) ∩ Ω} β(x, x0)^p dx)^{1/p} by lattice quadrature.

    The quadrature lattice has spacing r/resolution and is centered at x0,
    so reports at different radii use corresponding points.
    """
    if r <= 0:
        raise ValueError("radius must be positive")
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    n = x0.shape[0]
    if p <= n:
        raise ValueError("h_theta_report requires p > n")
    k = np.arange(-resolution, resolution) + 0.5
    mesh = np.stack(np.meshgrid(*([k] * n), indexing="ij"), axis=-1).reshape(-1, n)
    step = r / resolution
    pts = x0 + step * mesh
    keep = np.linalg.norm(pts - x0, axis=1) < r
    if domain is not None:
        keep &= domain.contains(pts, closed=False)
    pts = pts[keep]
    if pts.shape[0] == 0:
        raise ValueError("ball does not meet the domain")
    if F.x_independent:
        return 0.0
    vals = np.array([oscillation_beta(F, xi, x0, variant, norm, n) for xi in pts])
    integral = np.sum(vals**p) * step**n
    return float((integral / r**n) ** (1.0 / p))
