"""Domains, grids, grid functions, moduli, coefficient fields and norms."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

# Lattice points closer than this fraction of h to the boundary become
# boundary nodes. Keeps cut arms from degenerating (weights ~ 1/(t h^2)).
SNAP_FRACTION = 0.05

# Direction dictionary for the wide stencil in 2D. Entries 2k, 2k+1 are
# orthogonal, so each consecutive pair is a frame.
_DIRECTIONS_2D = np.array(
    [(1, 0), (0, 1), (1, 1), (1, -1), (2, 1), (1, -2), (1, 2), (2, -1)], dtype=int
)
_DIRECTIONS_1D = np.array([(1,)], dtype=int)


def directions_for(n: int, m: int) -> np.ndarray:
    """Line directions (lattice vectors) used by an m-arm stencil."""
    if n == 1:
        return _DIRECTIONS_1D
    if m not in (4, 8, 16):
        raise ValueError(f"stencil direction count m must be 4, 8 or 16, got {m}")
    return _DIRECTIONS_2D[: m // 2]


# ---------------------------------------------------------------------------
# Domains


@dataclass(frozen=True)
class _Constraint:
    kind: str  # "half" (a.x - c <= 0) or "ball" (|x - center| - R <= 0)
    label: str
    a: tuple[float, ...] = ()
    c: float = 0.0
    center: tuple[float, ...] = ()
    radius: float = 0.0

    def level(self, x: np.ndarray) -> np.ndarray:
        if self.kind == "half":
            return x @ np.asarray(self.a) - self.c
        return np.linalg.norm(x - np.asarray(self.center), axis=-1) - self.radius

    def exit_time(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Smallest t > 0 with level(x + t v) = 0 (inf if never)."""
        if self.kind == "half":
            av = v @ np.asarray(self.a)
            g = self.level(x)
            with np.errstate(divide="ignore", invalid="ignore"):
                t = np.where(av > 0, -g / av, np.inf)
            return t
        w = x - np.asarray(self.center)
        vv = np.sum(v * v, axis=-1)
        wv = np.sum(w * v, axis=-1)
        ww = np.sum(w * w, axis=-1)
        disc = np.maximum(wv**2 - vv * (ww - self.radius**2), 0.0)
        return (-wv + np.sqrt(disc)) / vv

    def inward_normal(self, x: np.ndarray) -> np.ndarray:
        if self.kind == "half":
            return np.broadcast_to(-np.asarray(self.a), x.shape).copy()
        w = x - np.asarray(self.center)
        return -w / np.linalg.norm(w, axis=-1, keepdims=True)


@dataclass(frozen=True)
class Domain:
    """Bounded convex domain from a small catalog.

    Use the constructors :meth:`interval`, :meth:`rectangle`, :meth:`disc`
    and :meth:`half_disc`. The domain is the intersection of half-spaces and
    balls, which gives closed-form boundary crossings for cut stencil arms.
    """

    shape: str
    n: int
    params: tuple = ()
    constraints: tuple[_Constraint, ...] = field(default=(), repr=False)

    @classmethod
    def interval(cls, a: float = 0.0, b: float = 1.0) -> Domain:
        if not b > a:
            raise ValueError("interval requires a < b")
        cons = (
            _Constraint("half", "left", a=(-1.0,), c=-float(a)),
            _Constraint("half", "right", a=(1.0,), c=float(b)),
        )
        return cls("interval", 1, (float(a), float(b)), cons)

    @classmethod
    def rectangle(cls, lo: Sequence[float] = (0.0, 0.0), hi: Sequence[float] = (1.0, 1.0)) -> Domain:
        lo = tuple(float(v) for v in lo)
        hi = tuple(float(v) for v in hi)
        if len(lo) != 2 or len(hi) != 2 or not all(h > l for l, h in zip(lo, hi)):
            raise ValueError("rectangle requires 2D corners with lo < hi")
        cons = []
        for i in range(2):
            e = [0.0, 0.0]
            e[i] = -1.0
            cons.append(_Constraint("half", f"x{i}_lo", a=tuple(e), c=-lo[i]))
            e = [0.0, 0.0]
            e[i] = 1.0
            cons.append(_Constraint("half", f"x{i}_hi", a=tuple(e), c=hi[i]))
        return cls("rectangle", 2, (lo, hi), tuple(cons))

    @classmethod
    def disc(cls, center: Sequence[float] = (0.0, 0.0), radius: float = 1.0) -> Domain:
        center = tuple(float(v) for v in center)
        if len(center) != 2 or radius <= 0:
            raise ValueError("disc requires a 2D center and radius > 0")
        cons = (_Constraint("ball", "curved", center=center, radius=float(radius)),)
        return cls("disc", 2, (center, float(radius)), cons)

    @classmethod
    def half_disc(
        cls, nu: float, radius: float = 1.0, center: Sequence[float] = (0.0, 0.0)
    ) -> Domain:
        """B_R(c) intersected with {x_2 > c_2 - nu}; labels 'flat' and 'curved'."""
        center = tuple(float(v) for v in center)
        if not 0.0 <= nu <= radius:
            raise ValueError("half_disc requires nu in [0, radius]")
        cons = (
            _Constraint("ball", "curved", center=center, radius=float(radius)),
            _Constraint("half", "flat", a=(0.0, -1.0), c=float(nu) - center[1]),
        )
        return cls("half_disc", 2, (float(nu), float(radius), center), cons)

    @classmethod
    def ball(cls, center: Sequence[float], radius: float) -> Domain:
        """Interval in 1D, disc in 2D."""
        center = tuple(float(v) for v in np.atleast_1d(center))
        if len(center) == 1:
            return cls.interval(center[0] - radius, center[0] + radius)
        return cls.disc(center, radius)

    # -- geometry ----------------------------------------------------------

    def level(self, x: np.ndarray) -> np.ndarray:
        """Max of constraint levels: < 0 inside, 0 on the boundary."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.max([c.level(x) for c in self.constraints], axis=0)

    def contains(self, x: np.ndarray, closed: bool = True) -> np.ndarray:
        lv = self.level(x)
        return lv <= 1e-12 if closed else lv < 0

    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        if self.shape == "interval":
            a, b = self.params
            return np.array([a]), np.array([b])
        if self.shape == "rectangle":
            lo, hi = self.params
            return np.array(lo), np.array(hi)
        if self.shape == "disc":
            c, r = self.params
            return np.array(c) - r, np.array(c) + r
        nu, r, c = self.params
        return np.array([c[0] - r, c[1] - nu]), np.array([c[0] + r, c[1] + r])

    @property
    def measure(self) -> float:
        if self.shape == "interval":
            a, b = self.params
            return b - a
        if self.shape == "rectangle":
            lo, hi = self.params
            return (hi[0] - lo[0]) * (hi[1] - lo[1])
        if self.shape == "disc":
            return math.pi * self.params[1] ** 2
        nu, r, _ = self.params
        cut = r * r * math.acos(nu / r) - nu * math.sqrt(r * r - nu * nu)
        return math.pi * r * r - cut

    @property
    def diam(self) -> float:
        if self.shape == "interval":
            a, b = self.params
            return b - a
        if self.shape == "rectangle":
            lo, hi = self.params
            return math.hypot(hi[0] - lo[0], hi[1] - lo[1])
        if self.shape == "disc":
            return 2 * self.params[1]
        return 2 * self.params[1]

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(c.label for c in self.constraints)

    def default_origin(self) -> np.ndarray:
        if self.shape in ("interval", "rectangle"):
            return self.bbox()[0]
        if self.shape == "disc":
            return np.array(self.params[0])
        return np.array(self.params[2])

    def describe(self) -> dict:
        names = {
            "interval": ("a", "b"),
            "rectangle": ("lo", "hi"),
            "disc": ("center", "radius"),
            "half_disc": ("nu", "radius", "center"),
        }[self.shape]
        out = {"shape": self.shape, "n": self.n}
        for k, v in zip(names, self.params):
            out[k] = list(v) if isinstance(v, tuple) else v
        return out

    @classmethod
    def from_dict(cls, d: dict) -> Domain:
        shape = d["shape"]
        if shape == "interval":
            return cls.interval(d.get("a", 0.0), d.get("b", 1.0))
        if shape == "rectangle":
            return cls.rectangle(d.get("lo", (0.0, 0.0)), d.get("hi", (1.0, 1.0)))
        if shape == "disc":
            return cls.disc(d.get("center", (0.0, 0.0)), d.get("radius", 1.0))
        if shape == "half_disc":
            return cls.half_disc(d.get("nu", 0.5), d.get("radius", 1.0), d.get("center", (0.0, 0.0)))
        raise ValueError(f"unknown domain shape {shape!r}")


# ---------------------------------------------------------------------------
# Grids


@dataclass(frozen=True)
class Arms:
    """Stencil arms of interior nodes along one line direction.

    ``fwd``/``bwd`` are node indices of the arm endpoints and ``tf``/``tb``
    the arm lengths as fractions of the full lattice step (1 unless cut).
    """

    direction: np.ndarray
    fwd: np.ndarray
    bwd: np.ndarray
    tf: np.ndarray
    tb: np.ndarray


class Grid:
    """Uniform Cartesian grid over a :class:`Domain` with cut boundary nodes.

    Node ordering is interior lattice nodes, then lattice nodes on the
    boundary (within ``SNAP_FRACTION * h``), then cut points where stencil
    arms cross the boundary. Every node is either interior or boundary.

    Parameters
    ----------
    domain : Domain
    h : float
        Lattice spacing.
    m : int
        Largest stencil direction count that will be used (2D only).
    origin : array_like, optional
        A lattice point; defaults to the domain's lower corner or center.
    """

    def __init__(self, domain: Domain, h: float, m: int = 8, origin=None):
        if not h > 0:
            raise ValueError("grid spacing h must be positive")
        self.domain = domain
        self.h = float(h)
        self.n = domain.n
        self.m = m if self.n == 2 else 2
        self.origin = np.asarray(domain.default_origin() if origin is None else origin, dtype=float)
        self.directions = directions_for(self.n, self.m if self.n == 2 else 4)
        self._build()

    def _build(self) -> None:
        h, n = self.h, self.n
        lo, hi = self.domain.bbox()
        kmin = np.floor((lo - self.origin) / h).astype(int) - 1
        kmax = np.ceil((hi - self.origin) / h).astype(int) + 1
        axes = [np.arange(a, b + 1) for a, b in zip(kmin, kmax)]
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
        pts = self.origin + mesh * h
        lv = self.domain.level(pts)
        snap = SNAP_FRACTION * h
        interior = lv < -snap
        onb = np.abs(lv) <= snap
        ki, kb = mesh[interior], mesh[onb]
        self.n_interior = int(ki.shape[0])
        self.n_lattice = self.n_interior + int(kb.shape[0])
        lattice_idx = np.concatenate([ki, kb])
        lattice_pts = self.origin + lattice_idx * h

        shape = tuple(int(v) for v in (kmax - kmin + 1))
        table = -np.ones(shape, dtype=np.int64)
        table[tuple((lattice_idx - kmin).T)] = np.arange(self.n_lattice)

        xi = lattice_pts[: self.n_interior]
        cut_pts: list[np.ndarray] = []
        raw_arms = []
        for v in self.directions:
            ends = []
            for sgn in (1, -1):
                target = ki + sgn * v
                inside = np.all((target >= kmin) & (target <= kmax), axis=1)
                idx = np.full(self.n_interior, -1, dtype=np.int64)
                idx[inside] = table[tuple((target[inside] - kmin).T)]
                t = np.ones(self.n_interior)
                miss = idx < 0
                if np.any(miss):
                    vec = np.broadcast_to(sgn * v * h, (int(miss.sum()), n)).astype(float)
                    tt = np.min([c.exit_time(xi[miss], vec) for c in self.domain.constraints], axis=0)
                    tt = np.clip(tt, 0.0, 1.0)
                    t[miss] = tt
                    cut_pts.append(xi[miss] + tt[:, None] * vec)
                ends.append((idx, t, miss))
            raw_arms.append(ends)

        if cut_pts:
            allcut = np.concatenate(cut_pts)
        else:
            allcut = np.zeros((0, n))
        # dedupe crossings shared by opposite arms of neighboring nodes
        key = np.round(allcut / h, 9)
        uniq, inverse = np.unique(key, axis=0, return_inverse=True)
        inverse = inverse.reshape(-1)
        first = np.zeros(len(uniq), dtype=np.int64)
        first[inverse[::-1]] = np.arange(len(inverse))[::-1]
        cut_unique = allcut[first]
        self.points = np.concatenate([lattice_pts, cut_unique]) if len(cut_unique) else lattice_pts
        self.n_nodes = int(self.points.shape[0])

        arms = []
        offset = 0
        for v, ends in zip(self.directions, raw_arms):
            resolved = []
            for idx, t, miss in ends:
                k = int(miss.sum())
                idx = idx.copy()
                idx[miss] = self.n_lattice + inverse[offset : offset + k]
                offset += k
                resolved.append((idx, t))
            (f, tf), (b, tb) = resolved
            arms.append(Arms(v.copy(), f, b, tf, tb))
        self.arms = tuple(arms)
        self.lattice_index = lattice_idx
        self._kmin = kmin
        self._table = table

        # boundary labels: active constraint at each boundary node
        bpts = self.points[self.n_interior :]
        levels = np.stack([c.level(bpts) for c in self.domain.constraints])
        self.boundary_label_index = np.argmax(levels, axis=0)
        self.weights = np.zeros(self.n_nodes)
        self.weights[: self.n_lattice] = h**n

    # -- accessors ---------------------------------------------------------

    @property
    def interior(self) -> np.ndarray:
        return np.arange(self.n_interior)

    @property
    def boundary(self) -> np.ndarray:
        return np.arange(self.n_interior, self.n_nodes)

    def is_interior(self) -> np.ndarray:
        mask = np.zeros(self.n_nodes, dtype=bool)
        mask[: self.n_interior] = True
        return mask

    def boundary_labels(self) -> np.ndarray:
        names = np.array(self.domain.labels)
        return names[self.boundary_label_index]

    def boundary_mask(self, label: str | None = None) -> np.ndarray:
        mask = ~self.is_interior()
        if label is not None:
            sel = self.boundary_labels() == label
            mask[self.n_interior :] &= sel
        return mask

    def inward_normals(self) -> np.ndarray:
        """Inward unit normal of the active constraint at each boundary node."""
        bpts = self.points[self.n_interior :]
        out = np.zeros_like(bpts)
        for j, c in enumerate(self.domain.constraints):
            sel = self.boundary_label_index == j
            if np.any(sel):
                out[sel] = c.inward_normal(bpts[sel])
        return out

    def lattice_lookup(self, k: np.ndarray) -> np.ndarray:
        """Node index of lattice coordinates ``k`` (or -1 if not a lattice node)."""
        k = np.atleast_2d(k)
        rel = k - self._kmin
        ok = np.all((rel >= 0) & (rel < np.array(self._table.shape)), axis=1)
        out = -np.ones(len(k), dtype=np.int64)
        out[ok] = self._table[tuple(rel[ok].T)]
        return out

    def nearest_node(self, x) -> int:
        d = np.linalg.norm(self.points - np.asarray(x, dtype=float), axis=1)
        return int(np.argmin(d))

    def snap_off_node(self, x0) -> np.ndarray:
        """Center of the lattice cell containing x0 (>= h/2 from every lattice node)."""
        x0 = np.asarray(x0, dtype=float)
        return self.origin + self.h * (np.floor((x0 - self.origin) / self.h) + 0.5)

    def region_mask(self, region) -> np.ndarray:
        """Resolve a region spec (None, bool mask, or callable on points) to a mask."""
        if region is None:
            return np.ones(self.n_nodes, dtype=bool)
        if callable(region):
            return np.asarray(region(self.points), dtype=bool).reshape(self.n_nodes)
        mask = np.asarray(region, dtype=bool)
        if mask.shape != (self.n_nodes,):
            raise ValueError("region mask does not match grid")
        return mask

    def same_as(self, other: Grid) -> bool:
        return self is other or (
            self.n_nodes == other.n_nodes
            and self.h == other.h
            and np.array_equal(self.points, other.points)
        )

    def describe(self) -> dict:
        return {
            "domain": self.domain.describe(),
            "h": self.h,
            "n": self.n,
            "nodes": self.n_nodes,
            "interior": self.n_interior,
            "boundary": self.n_nodes - self.n_interior,
        }

    def __repr__(self) -> str:
        return f"Grid({self.domain.shape}, h={self.h:g}, nodes={self.n_nodes}, interior={self.n_interior})"


# ---------------------------------------------------------------------------
# Grid functions


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Real values at every node of a grid."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).reshape(-1)
        if v.shape[0] != self.grid.n_nodes:
            raise ValueError("values length does not match grid nodes")
        if not np.all(np.isfinite(v)):
            raise ValueError("grid function values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_rule(cls, grid: Grid, rule: Callable | float) -> GridFunction:
        if callable(rule):
            vals = np.asarray(rule(grid.points), dtype=float)
            vals = np.broadcast_to(vals, (grid.n_nodes,))
        else:
            vals = np.full(grid.n_nodes, float(rule))
        return cls(grid, vals)

    @property
    def interior_values(self) -> np.ndarray:
        return self.values[: self.grid.n_interior]

    @property
    def boundary_values(self) -> np.ndarray:
        return self.values[self.grid.n_interior :]

    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))

    def restrict(self, region) -> np.ndarray:
        return self.values[self.grid.region_mask(region)]

    def _wrap(self, v) -> GridFunction:
        return GridFunction(self.grid, v)

    def __add__(self, other):
        o = other.values if isinstance(other, GridFunction) else other
        return self._wrap(self.values + o)

    __radd__ = __add__

    def __sub__(self, other):
        o = other.values if isinstance(other, GridFunction) else other
        return self._wrap(self.values - o)

    def __rsub__(self, other):
        return self._wrap(other - self.values)

    def __mul__(self, other):
        o = other.values if isinstance(other, GridFunction) else other
        return self._wrap(self.values * o)

    __rmul__ = __mul__

    def __neg__(self):
        return self._wrap(-self.values)

    def __truediv__(self, other):
        o = other.values if isinstance(other, GridFunction) else other
        return self._wrap(self.values / o)

    # -- serialization -----------------------------------------------------

    def to_csv(self, path=None) -> str:
        """CSV with node coordinates and value at 17 significant digits."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([f"x{i}" for i in range(self.grid.n)] + ["value"])
        for pt, v in zip(self.grid.points, self.values):
            w.writerow([f"{c:.17g}" for c in pt] + [f"{v:.17g}"])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, grid: Grid, source) -> GridFunction:
        """Read values written by :meth:`to_csv`; coordinates must match ``grid``."""
        if isinstance(source, str) and "\n" in source:
            text = source
        else:
            with open(source) as fh:
                text = fh.read()
        rows = list(csv.reader(io.StringIO(text)))[1:]
        data = np.array([[float(c) for c in r] for r in rows])
        if data.shape != (grid.n_nodes, grid.n + 1):
            raise ValueError("CSV does not match grid")
        if not np.allclose(data[:, :-1], grid.points, rtol=0, atol=1e-14 * max(1.0, np.abs(grid.points).max())):
            raise ValueError("CSV node coordinates do not match grid")
        return cls(grid, data[:, -1])

    def json_header(self, p: float = 2.0) -> dict:
        return {
            **self.grid.describe(),
            "norms": {
                "sup": self.sup(),
                f"l{p:g}": lp_norm(self, p),
            },
        }


# ---------------------------------------------------------------------------
# Moduli


@dataclass(frozen=True)
class Modulus:
    """Modulus of continuity ω(r) = L r^γ (γ = 1 for the Lipschitz kind)."""

    kind: str
    L: float
    gamma: float = 1.0

    def __call__(self, r):
        r = np.maximum(np.asarray(r, dtype=float), 0.0)
        if self.L == 0.0:
            return np.zeros_like(r) if r.ndim else 0.0
        out = self.L * r**self.gamma
        return out if np.ndim(out) else float(out)

    def derivative(self, r, cap: float = 1e12):
        """One-sided derivative, capped near 0 for power kinds."""
        r = np.maximum(np.asarray(r, dtype=float), 0.0)
        if self.gamma == 1.0:
            return np.full_like(r, self.L)
        with np.errstate(divide="ignore"):
            d = self.L * self.gamma * r ** (self.gamma - 1.0)
        return np.minimum(d, cap)

    def rescaled(self, inner: float, outer: float) -> Modulus:
        """The modulus r ↦ outer · ω(inner · r)."""
        return Modulus(self.kind, self.L * outer * inner**self.gamma, self.gamma)

    def describe(self) -> dict:
        return {"kind": self.kind, "L": self.L, "gamma": self.gamma}


def make_modulus(kind: str, L: float, gamma: float | None = None) -> Modulus:
    """Build a modulus of continuity.

    Parameters
    ----------
    kind : {"lipschitz", "power"}
    L : float
        Nonnegative constant.
    gamma : float, optional
        Exponent in (0, 1] for the power kind.
    """
    if L < 0:
        raise ValueError("modulus constant L must be nonnegative")
    if kind == "lipschitz":
        if gamma not in (None, 1, 1.0):
            raise ValueError("lipschitz modulus has exponent 1")
        return Modulus("lipschitz", float(L), 1.0)
    if kind == "power":
        g = 1.0 if gamma is None else float(gamma)
        if not 0.0 < g <= 1.0:
            raise ValueError("power modulus exponent must lie in (0, 1]")
        return Modulus("power", float(L), g)
    raise ValueError(f"unknown modulus kind {kind!r}")


ZERO_MODULUS = Modulus("lipschitz", 0.0, 1.0)


# ---------------------------------------------------------------------------
# Coefficient fields


@dataclass(frozen=True)
class CoefficientField:
    """Nonnegative coefficient x ↦ offset + factor · g(scale · x + shift).

    ``g`` is a constant, a smooth rule, or the singular profile
    κ |x − x₀|^(−s). Singular fields must satisfy s·p < n so that they lie
    in L^p; this is checked at construction.
    """

    kind: str
    value: float = 0.0
    rule: Callable | None = field(default=None, compare=False)
    kappa: float = 0.0
    s: float = 0.0
    center: tuple[float, ...] = ()
    p: float = math.inf
    n: int = 0
    sup_bound: float | None = None

    def __post_init__(self):
        if self.kind not in ("constant", "smooth", "singular"):
            raise ValueError(f"unknown coefficient kind {self.kind!r}")
        if self.kind == "constant" and self.value < 0:
            raise ValueError("coefficient must be nonnegative")
        if self.kind == "singular":
            if self.kappa < 0 or self.s < 0 or self.value < 0:
                raise ValueError("singular coefficient parameters must be nonnegative")
            if not self.admissible:
                raise ValueError(
                    f"singular coefficient not in L^p: s*p = {self.s * self.p:g} >= n = {self.n}"
                )

    @classmethod
    def constant(cls, value: float) -> CoefficientField:
        return cls("constant", value=float(value))

    @classmethod
    def smooth(cls, rule: Callable, sup_bound: float | None = None) -> CoefficientField:
        return cls("smooth", rule=rule, sup_bound=sup_bound)

    @classmethod
    def singular(
        cls, kappa: float, s: float, center: Sequence[float], p: float, n: int | None = None, offset: float = 0.0
    ) -> CoefficientField:
        center = tuple(float(c) for c in np.atleast_1d(center))
        return cls(
            "singular", value=float(offset), kappa=float(kappa), s=float(s),
            center=center, p=float(p), n=int(n if n is not None else len(center)),
        )

    @property
    def admissible(self) -> bool:
        if self.kind != "singular" or self.s == 0 or self.kappa == 0:
            return True
        return self.s * self.p < self.n

    @property
    def is_zero(self) -> bool:
        return (self.kind == "constant" and self.value == 0) or (
            self.kind == "singular" and self.kappa == 0 and self.value == 0
        )

    def evaluate(self, x: np.ndarray, grid: Grid | None = None) -> np.ndarray:
        """Values at points ``x`` (shape (N, n)). With ``grid``, the singular
        center is snapped to the containing lattice cell center."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.kind == "constant":
            return np.full(x.shape[0], self.value)
        if self.kind == "smooth":
            v = np.asarray(self.rule(x), dtype=float)
            v = np.broadcast_to(v, (x.shape[0],)).astype(float)
            if np.any(v < -1e-14):
                raise ValueError("smooth coefficient rule returned negative values")
            return self.value + np.maximum(v, 0.0)
        c = np.asarray(self.center)
        if grid is not None:
            c = grid.snap_off_node(c)
        r = np.linalg.norm(x - c, axis=1)
        with np.errstate(divide="ignore"):
            return self.value + self.kappa * r ** (-self.s)

    __call__ = evaluate

    def sup_estimate(self, grid: Grid | None = None, points=None) -> float:
        if self.kind == "constant":
            return self.value
        if self.sup_bound is not None:
            return float(self.sup_bound)
        pts = grid.points if points is None else points
        return float(np.max(self.evaluate(pts, grid)))

    def transformed(self, scale: float = 1.0, shift=0.0, factor: float = 1.0, offset: float = 0.0) -> CoefficientField:
        """The field y ↦ offset + factor · g(scale · y + shift)."""
        if factor < 0 or offset < 0:
            raise ValueError("transform must keep the coefficient nonnegative")
        if self.kind == "constant":
            return CoefficientField.constant(offset + factor * self.value)
        if self.kind == "singular":
            shift_v = np.broadcast_to(np.asarray(shift, dtype=float), (len(self.center),))
            center = tuple((np.asarray(self.center) - shift_v) / scale)
            # kappa |scale y + shift - c|^-s = kappa scale^-s |y - c'|^-s
            return CoefficientField(
                "singular", value=offset + factor * self.value,
                kappa=factor * self.kappa * scale ** (-self.s), s=self.s, center=center,
                p=self.p, n=self.n,
            )
        base, v0 = self.rule, self.value
        shift_v = np.asarray(shift, dtype=float)

        def rule(y, base=base, v0=v0):
            return factor * (v0 + np.maximum(np.asarray(base(scale * np.atleast_2d(y) + shift_v), dtype=float), 0.0))

        sb = None if self.sup_bound is None else factor * (self.value + self.sup_bound)
        return CoefficientField("smooth", value=offset, rule=rule, sup_bound=sb)

    def describe(self) -> dict:
        if self.kind == "constant":
            return {"kind": "constant", "value": self.value}
        if self.kind == "singular":
            return {
                "kind": "singular", "kappa": self.kappa, "s": self.s,
                "center": list(self.center), "p": self.p, "offset": self.value,
            }
        return {"kind": "smooth", "offset": self.value}


ZERO_FIELD = CoefficientField.constant(0.0)


def as_field(v) -> CoefficientField:
    if v is None:
        return ZERO_FIELD
    if isinstance(v, CoefficientField):
        return v
    if callable(v):
        return CoefficientField.smooth(v)
    return CoefficientField.constant(float(v))


def sample_coefficient(field: CoefficientField, grid: Grid) -> GridFunction:
    """Sample a coefficient at every node (singular centers snapped off-node)."""
    return GridFunction(grid, field.evaluate(grid.points, grid))


# ---------------------------------------------------------------------------
# Norms


def lp_norm(g: GridFunction | np.ndarray, p: float, region=None, grid: Grid | None = None) -> float:
    """Discrete L^p norm with weight h^n at every lattice node of the region.

    Parameters
    ----------
    g : GridFunction
    p : float
        Exponent ≥ 1, or ``inf`` for the max over region nodes.
    region : None, bool mask, or callable on points
    """
    if isinstance(g, GridFunction):
        grid, vals = g.grid, g.values
    else:
        vals = np.asarray(g, dtype=float)
    if p < 1:
        raise ValueError("lp_norm requires p >= 1")
    mask = grid.region_mask(region)
    w = grid.weights
    if math.isinf(p):
        sel = mask & (w > 0) if np.any(mask & (w > 0)) else mask
        if not np.any(sel):
            raise ValueError("lp_norm over an empty region")
        return float(np.max(np.abs(vals[sel])))
    sel = mask & (w > 0)
    if not np.any(sel):
        raise ValueError("lp_norm over an empty region")
    a = np.abs(vals[sel])
    scale = a.max()
    if scale == 0:
        return 0.0
    return float(scale * np.sum(w[sel] * (a / scale) ** p) ** (1.0 / p))
