"""Monotone finite differences on cut-cell grids.

A :class:`Scheme` assembles sparse difference matrices once per grid: one
second difference per line direction, forward/backward/centered first
differences along the axes. Near the boundary the arms are cut at the
boundary crossing and use the three-point weights for unequal spacing,
which stay exact on quadratics and keep the scheme monotone.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .core import Grid, GridFunction
from .operators import Operator, pucci
from .reports import Report


@dataclass(frozen=True)
class StencilConfig:
    """Wide-stencil settings: arm count ``m`` (4, 8 or 16 in 2D)."""

    m: int = 8
    h: float | None = None
    one_sided: bool = True

    def __post_init__(self):
        if self.m < 4:
            raise ValueError("wide stencil needs at least m = 4 directions")
        if self.m not in (4, 8, 16):
            raise ValueError(f"m must be 4, 8 or 16, got {self.m}")


class _Lattice:
    """Minimal lattice description used to snap singular centers."""

    def __init__(self, origin, h):
        self.origin = np.asarray(origin, dtype=float)
        self.h = float(h)

    def snap_off_node(self, x0):
        x0 = np.asarray(x0, dtype=float)
        return self.origin + self.h * (np.floor((x0 - self.origin) / self.h) + 0.5)


@dataclass
class DiscreteDerivs:
    """Discrete (x, r, p, X) slots at a set of interior nodes.

    ``second[:, k]`` is the second difference along unit direction
    ``directions[k]``; ``frames`` lists orthogonal direction groups.
    """

    x: np.ndarray
    r: np.ndarray
    Dp: np.ndarray
    Dm: np.ndarray
    Dc: np.ndarray
    second: np.ndarray
    directions: np.ndarray
    frames: list
    gradient: str = "upwind"
    lattice: object = None
    hess_scale: float = 1.0
    _hess: np.ndarray | None = field(default=None, repr=False)
    _cache: dict = field(default_factory=dict, repr=False)

    def sample(self, fld, x=None):
        if x is not None and x is not self.x:
            return fld.evaluate(x, self.lattice)
        key = id(fld)
        if key not in self._cache:
            self._cache[key] = (fld, fld.evaluate(self.x, self.lattice))
        return self._cache[key][1]

    def hessian(self) -> np.ndarray:
        if self._hess is not None:
            return self._hess
        N, n = self.Dc.shape
        H = np.zeros((N, n, n))
        if n == 1:
            H[:, 0, 0] = self.second[:, 0]
        else:
            if self.second.shape[1] < 4:
                raise ValueError("Hessian proxy needs the diagonal directions (m >= 8)")
            H[:, 0, 0] = self.second[:, 0]
            H[:, 1, 1] = self.second[:, 1]
            off = 0.5 * (self.second[:, 2] - self.second[:, 3])
            H[:, 0, 1] = H[:, 1, 0] = off
        self._hess = H
        return H

    def negated(self) -> DiscreteDerivs:
        return DiscreteDerivs(self.x, -self.r, -self.Dp, -self.Dm, -self.Dc, -self.second,
                              self.directions, self.frames, self.gradient, self.lattice,
                              self.hess_scale, None if self._hess is None else -self._hess)

    def mapped(self, x, r, Dp, Dm, Dc, second, hess_scale=1.0, lattice_map=None) -> DiscreteDerivs:
        lat = self.lattice
        if lattice_map is not None and lat is not None:
            scale, shift = lattice_map
            lat = _Lattice(scale * lat.origin + shift, scale * lat.h)
        hess = None if self._hess is None else hess_scale * self._hess
        return DiscreteDerivs(x, r, Dp, Dm, Dc, second, self.directions, self.frames,
                              self.gradient, lat, hess_scale, hess)

    def subset(self, rows) -> DiscreteDerivs:
        return DiscreteDerivs(self.x[rows], self.r[rows], self.Dp[rows], self.Dm[rows], self.Dc[rows],
                              self.second[rows], self.directions, self.frames, self.gradient,
                              self.lattice, self.hess_scale,
                              None if self._hess is None else self._hess[rows])


def frames_for(n: int, m: int) -> list[tuple[int, ...]]:
    if n == 1:
        return [(0,)]
    return [(2 * j, 2 * j + 1) for j in range(m // 4)]


class Scheme:
    """Sparse difference operators on a grid for a given stencil.

    Parameters
    ----------
    grid : Grid
    m : int
        Direction count of the wide stencil (2D). Frames are taken from the
        first ``m/2`` line directions; diagonals are always assembled so a
        Hessian proxy exists.
    gradient : {"upwind", "centered"}
    """

    def __init__(self, grid: Grid, m: int = 8, gradient: str = "upwind"):
        if gradient not in ("upwind", "centered"):
            raise ValueError("gradient must be 'upwind' or 'centered'")
        n = grid.n
        if n == 2:
            StencilConfig(m)
            K = max(m, 8) // 2
            if K > len(grid.directions):
                raise ValueError(f"grid was built for m={grid.m}; rebuild with m >= {m}")
        else:
            K = 1
        self.grid, self.m, self.gradient, self.n = grid, m, gradient, n
        self.K = K
        self.frames = frames_for(n, m)
        self.directions = grid.directions[:K].astype(float)
        self.unit_directions = self.directions / np.linalg.norm(self.directions, axis=1, keepdims=True)
        self.lattice = _Lattice(grid.origin, grid.h)
        self._assemble()
        self._factor_cache: dict = {}

    def _assemble(self) -> None:
        g = self.grid
        Ni, N, h = g.n_interior, g.n_nodes, g.h
        rows0 = np.arange(Ni)
        comps = []  # (rows, cols, vals) per component
        center_w = []
        for k in range(self.K):
            arm = g.arms[k]
            H = np.linalg.norm(arm.direction) * h
            tf, tb = arm.tf, arm.tb
            wf = 2.0 / (H * H * tf * (tf + tb))
            wb = 2.0 / (H * H * tb * (tf + tb))
            w0 = -(wf + wb)
            comps.append((np.concatenate([rows0, rows0, rows0]),
                          np.concatenate([arm.fwd, arm.bwd, rows0]),
                          np.concatenate([wf, wb, w0])))
            center_w.append(-w0)
        self.center_weights = np.stack(center_w, axis=1)
        self.arm_min = np.ones(Ni)
        for i in range(self.n):
            arm = g.arms[i]
            hf, hb = arm.tf * h, arm.tb * h
            self.arm_min = np.minimum(self.arm_min, np.minimum(arm.tf, arm.tb))
            comps.append((np.concatenate([rows0, rows0]), np.concatenate([arm.fwd, rows0]),
                          np.concatenate([1 / hf, -1 / hf])))
        for i in range(self.n):
            arm = g.arms[i]
            hb = arm.tb * h
            comps.append((np.concatenate([rows0, rows0]), np.concatenate([rows0, arm.bwd]),
                          np.concatenate([1 / hb, -1 / hb])))
        for i in range(self.n):
            arm = g.arms[i]
            hf, hb = arm.tf * h, arm.tb * h
            den = hf * hb * (hf + hb)
            comps.append((np.concatenate([rows0, rows0, rows0]),
                          np.concatenate([arm.fwd, arm.bwd, rows0]),
                          np.concatenate([hb * hb / den, -hf * hf / den, (hf * hf - hb * hb) / den])))
        comps.append((rows0, rows0, np.ones(Ni)))
        self._comps = comps
        self.mats = [sp.csr_matrix((v, (r, c)), shape=(Ni, N)) for r, c, v in comps]
        K, n = self.K, self.n
        self.S = self.mats[:K]
        self.P = self.mats[K : K + n]
        self.Mb = self.mats[K + n : K + 2 * n]
        self.C = self.mats[K + 2 * n : K + 3 * n]
        # flattened entries with interior columns, for Jacobian assembly
        rows, cols, vals, cid = [], [], [], []
        for j, (r, c, v) in enumerate(comps):
            keep = c < Ni
            rows.append(r[keep]); cols.append(c[keep]); vals.append(v[keep])
            cid.append(np.full(int(keep.sum()), j))
        self._jr = np.concatenate(rows)
        self._jc = np.concatenate(cols)
        self._jv = np.concatenate(vals)
        self._jid = np.concatenate(cid)

    # -- evaluation --------------------------------------------------------

    def derivs(self, u, rows=None) -> DiscreteDerivs:
        vals = u.values if isinstance(u, GridFunction) else np.asarray(u, dtype=float)
        g = self.grid
        if rows is None:
            mats = self.mats
            x = g.points[: g.n_interior]
            r = vals[: g.n_interior]
        else:
            mats = [m[rows] for m in self.mats]
            x = g.points[rows]
            r = vals[rows]
        K, n = self.K, self.n
        second = np.stack([m @ vals for m in mats[:K]], axis=1)
        Dp = np.stack([m @ vals for m in mats[K : K + n]], axis=1)
        Dm = np.stack([m @ vals for m in mats[K + n : K + 2 * n]], axis=1)
        Dc = np.stack([m @ vals for m in mats[K + 2 * n : K + 3 * n]], axis=1)
        return DiscreteDerivs(x, r, Dp, Dm, Dc, second, self.unit_directions, self.frames,
                              self.gradient, self.lattice)

    def apply(self, op: Operator, u) -> np.ndarray:
        """Discrete operator values at interior nodes."""
        return op.discrete(self.derivs(u))

    def jacobian(self, lin) -> sp.csr_matrix:
        """Jacobian of the interior residual with respect to interior values."""
        Ni = self.grid.n_interior
        K, n = self.K, self.n
        W = [lin.d_second[:, k] for k in range(K)]
        for part in (lin.d_Dp, lin.d_Dm, lin.d_Dc):
            if part is None:
                W.extend([np.zeros(Ni)] * n)
            else:
                W.extend([part[:, i] for i in range(n)])
        W.append(np.broadcast_to(lin.d_r, (Ni,)))
        Wm = np.stack(W)
        data = self._jv * Wm[self._jid, self._jr]
        return sp.csr_matrix((data, (self._jr, self._jc)), shape=(Ni, Ni))

    def factorize(self, J: sp.csr_matrix):
        """LU factorization of J, cached on its content (small LRU)."""
        import hashlib
        from scipy.sparse.linalg import splu

        J = J.tocsc()
        J.sum_duplicates()
        key = hashlib.sha1(J.indptr.tobytes() + J.indices.tobytes() + J.data.tobytes()).hexdigest()
        lu = self._factor_cache.get(key)
        if lu is None:
            lu = splu(J)
            if len(self._factor_cache) >= 8:
                self._factor_cache.pop(next(iter(self._factor_cache)))
            self._factor_cache[key] = lu
        return lu

    def stencil_neighbors(self, row: int) -> np.ndarray:
        """All node indices entering the discrete operator at an interior row."""
        cols = set()
        for m in self.mats:
            cols.update(m.indices[m.indptr[row] : m.indptr[row + 1]].tolist())
        cols.discard(row)
        return np.array(sorted(cols), dtype=np.int64)

    def diagonal_bound(self, op: Operator, u=None) -> np.ndarray:
        """Upper bound of the center coefficient of the discrete operator,
        from the declared structure params (used for explicit step sizes)."""
        prm = op.params
        g = self.grid
        x = g.points[: g.n_interior]
        frames = self.frames
        sec = np.max(np.stack([self.center_weights[:, list(f)].sum(axis=1) for f in frames], axis=1), axis=1)
        bound = prm.Lam * sec
        if not prm.b.is_zero or prm.mu:
            G = 0.0
            if u is not None and prm.mu:
                d = self.derivs(u)
                G = float(np.max(np.abs(np.concatenate([d.Dp.ravel(), d.Dm.ravel()]))))
            bvals = prm.b.evaluate(x, self.lattice) if not prm.b.is_zero else 0.0
            bound = bound + self.n * (bvals + 2 * prm.mu * G) / (g.h * self.arm_min)
        if not prm.d.is_zero and prm.omega.L:
            bound = bound + prm.d.evaluate(x, self.lattice) * prm.omega.derivative(np.array(1.0)) * 2
        c = getattr(op, "c", None)
        alpha = getattr(op, "alpha", 0.0)
        if c is not None:
            bound = bound + abs(alpha) * c.evaluate(x, self.lattice)
        return bound


# ---------------------------------------------------------------------------
# Pointwise helpers on grid functions


def _direction_index(grid: Grid, direction) -> tuple[int, int]:
    """Index of a lattice direction in the grid dictionary and its sign."""
    if np.isscalar(direction) and grid.n == 1:
        direction = (direction,)
    if isinstance(direction, (int, np.integer)) and grid.n > 1:
        return int(direction), 1
    v = np.asarray(direction, dtype=float).reshape(grid.n)
    for k, w in enumerate(grid.directions):
        wn = w / np.linalg.norm(w)
        vn = v / np.linalg.norm(v)
        if np.allclose(vn, wn):
            return k, 1
        if np.allclose(vn, -wn):
            return k, -1
    raise ValueError(f"direction {tuple(direction)} is not in the grid dictionary")


def _check_interior(grid: Grid, node: int) -> None:
    if not 0 <= node < grid.n_interior:
        raise ValueError(f"node {node} is not an interior node")


def second_directional_diff(u: GridFunction, node: int, direction, h: float | None = None,
                            allow_cut: bool = False) -> float:
    """Second difference of ``u`` at ``node`` along a grid direction.

    Uses the full arms (u(x+hθ) − 2u(x) + u(x−hθ))/|hθ|² and raises if an
    arm is cut by the boundary unless ``allow_cut`` is set, in which case
    the unequal-arm three-point formula is used.
    """
    grid = u.grid
    if h is not None and not np.isclose(h, grid.h):
        raise ValueError("spacing does not match the grid")
    _check_interior(grid, node)
    k, _ = _direction_index(grid, direction)
    arm = grid.arms[k]
    tf, tb = arm.tf[node], arm.tb[node]
    H = np.linalg.norm(arm.direction) * grid.h
    uf, ub, u0 = u.values[arm.fwd[node]], u.values[arm.bwd[node]], u.values[node]
    if tf == 1.0 and tb == 1.0:
        return float((uf - 2 * u0 + ub) / (H * H))
    if not allow_cut:
        raise ValueError("stencil arm leaves the domain; use allow_cut=True for the boundary variant")
    return float(2.0 / (H * (tf + tb)) * ((uf - u0) / (tf * H) + (ub - u0) / (tb * H)))


def pucci_stencil(u: GridFunction, node: int, lam: float, Lam: float, sign, cfg: StencilConfig) -> float:
    """Wide-stencil Pucci value at ``node``: extremize over orthogonal frames
    of the m-direction dictionary the sum of Λ(Δ)⁺ − λ(Δ)⁻ (sign +) or
    λ(Δ)⁺ − Λ(Δ)⁻ (sign −)."""
    grid = u.grid
    if grid.n == 2 and cfg.m // 2 > len(grid.directions):
        raise ValueError(f"grid dictionary has {2 * len(grid.directions)} arms, need m={cfg.m}")
    pucci(0.0, lam, Lam, sign)  # validates arguments
    s = 1 if sign in (1, "+") else -1
    hi, lo = (Lam, lam) if s > 0 else (lam, Lam)
    frames = frames_for(grid.n, cfg.m)
    K = max(max(f) for f in frames) + 1
    deltas = [second_directional_diff(u, node, k if grid.n > 1 else 1, allow_cut=cfg.one_sided) for k in range(K)]
    g = [hi * d if d > 0 else lo * d for d in deltas]
    sums = [sum(g[k] for k in f) for f in frames]
    return float(max(sums) if s > 0 else min(sums))


def _one_sided(u: GridFunction, node: int):
    grid = u.grid
    _check_interior(grid, node)
    Dp, Dm = [], []
    for i in range(grid.n):
        arm = grid.arms[i]
        hf, hb = arm.tf[node] * grid.h, arm.tb[node] * grid.h
        Dp.append((u.values[arm.fwd[node]] - u.values[node]) / hf)
        Dm.append((u.values[node] - u.values[arm.bwd[node]]) / hb)
    return np.array(Dp), np.array(Dm)


def upwind_gradient_norm(u: GridFunction, node: int, h: float | None = None, sign: int = 1) -> float:
    """Monotone upwind approximation of |Du| at ``node``.

    For a term entering the operator with a plus sign the components are
    max(D⁺u, −D⁻u, 0), which are nondecreasing in every neighbor value;
    for a minus sign, max(D⁻u, −D⁺u, 0). At a convex kink the plus form
    picks the steeper admissible slope.
    """
    if h is not None and not np.isclose(h, u.grid.h):
        raise ValueError("spacing does not match the grid")
    Dp, Dm = _one_sided(u, node)
    if sign in (1, "+"):
        comp = np.maximum(np.maximum(Dp, -Dm), 0.0)
    else:
        comp = np.maximum(np.maximum(Dm, -Dp), 0.0)
    return float(np.sqrt(np.sum(comp**2)))


def upwind_quadratic_hamiltonian(u: GridFunction, node: int, h: float | None = None, sign: int = 1) -> float:
    """Square of :func:`upwind_gradient_norm` (the monotone |Du|² term)."""
    return upwind_gradient_norm(u, node, h, sign) ** 2


# ---------------------------------------------------------------------------
# Monotonicity audit


def _audit_fields(grid: Grid, rng, count: int) -> list[np.ndarray]:
    pts = grid.points
    out = []
    for j in range(count):
        amp = 10 ** rng.uniform(-1, 1)
        k = rng.normal(size=grid.n) * rng.uniform(1, 6)
        smooth = amp * np.sin(pts @ k + rng.uniform(0, 2 * np.pi))
        quad = rng.normal() * np.sum((pts - pts.mean(axis=0)) ** 2, axis=1)
        rough = rng.normal(size=grid.n_nodes) * 10 ** rng.uniform(-3, 0) * amp
        out.append(smooth + quad + rough)
    return out


def monotonicity_audit(scheme: Scheme, operator: Operator, samples: int = 10_000, seed: int = 0,
                       tol: float = 1e-9, n_fields: int = 10) -> Report:
    """Randomized check that the discrete operator is degenerate elliptic.

    For random interior nodes and random increases of one stencil value,
    the operator at the node must not decrease when a neighbor increases
    and must not increase when the center increases (proper). Equivalently
    the residual F_h[u] − f is nondecreasing in neighbor values.
    """
    rng = np.random.default_rng(seed)
    grid = scheme.grid
    Ni = grid.n_interior
    fields = _audit_fields(grid, rng, n_fields)
    per = int(np.ceil(samples / n_fields))
    total = 0
    violations = 0
    worst = 0.0
    witness = None
    for base in fields:
        rows = rng.integers(0, Ni, per)
        # choose a stencil entry per row (center included)
        cols = np.empty(per, dtype=np.int64)
        for t, rw in enumerate(rows):
            nb = scheme.stencil_neighbors(int(rw))
            choice = rng.integers(0, len(nb) + 1)
            cols[t] = rw if choice == len(nb) else nb[choice]
        eps = 10 ** rng.uniform(-4, 0, per) * (1 + np.abs(base).max())
        d0 = scheme.derivs(base, rows)
        K, n = scheme.K, scheme.n

        def col_entries(mats):
            return np.stack([np.asarray(m[rows, cols]).ravel() for m in mats], axis=1)

        second = d0.second + eps[:, None] * col_entries(scheme.S)
        Dp = d0.Dp + eps[:, None] * col_entries(scheme.P)
        Dm = d0.Dm + eps[:, None] * col_entries(scheme.Mb)
        Dc = d0.Dc + eps[:, None] * col_entries(scheme.C)
        is_center = rows == cols
        r = d0.r + np.where(is_center, eps, 0.0)
        d1 = DiscreteDerivs(d0.x, r, Dp, Dm, Dc, second, d0.directions, d0.frames, d0.gradient, d0.lattice)
        F0 = operator.discrete(d0)
        F1 = operator.discrete(d1)
        change = F1 - F0
        scale = tol * (1 + np.abs(F0) + np.abs(F1))
        bad = np.where(is_center, change > scale, change < -scale)
        total += per
        violations += int(bad.sum())
        if np.any(bad):
            mag = np.where(bad, np.abs(change), 0.0)
            t = int(np.argmax(mag))
            if mag[t] > worst:
                worst = float(mag[t])
                witness = {
                    "node": int(rows[t]), "perturbed": int(cols[t]), "center": bool(is_center[t]),
                    "eps": float(eps[t]), "before": float(F0[t]), "after": float(F1[t]),
                    "x": grid.points[rows[t]].tolist(),
                }
    data = {"samples": total, "violations": violations, "seed": seed,
            "m": scheme.m, "gradient": scheme.gradient}
    if witness is not None:
        data["witness"] = witness
        data["worst_violation"] = worst
    return Report("monotonicity_audit", violations == 0, data)
