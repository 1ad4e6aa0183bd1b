"""Independent reference computations used by the tests.

Nothing here imports viscolab: each oracle recomputes its quantity from
scratch with numpy/scipy so that agreement is a genuine cross-check.
"""

from __future__ import annotations

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import eigh_tridiagonal
from scipy.optimize import brentq, minimize_scalar


def sampled_trace_range(X: np.ndarray, lam: float, Lam: float, rng: np.random.Generator,
                        n_random: int = 2000) -> tuple[float, float]:
    """(min, max) of tr(AX) over sampled admissible A with λI ≤ A ≤ ΛI.

    The samples are random rotations with random spectra in [λ, Λ], plus the
    structured extremizers built in the eigenframe of X with every corner
    spectrum in {λ, Λ}^n.
    """
    n = X.shape[0]
    vals = []
    for _ in range(n_random):
        Q, _ = np.linalg.qr(rng.normal(size=(n, n)))
        A = Q @ np.diag(rng.uniform(lam, Lam, n)) @ Q.T
        vals.append(np.trace(A @ X))
    _, V = np.linalg.eigh(X)
    for mask in range(2**n):
        d = np.array([Lam if (mask >> i) & 1 else lam for i in range(n)])
        vals.append(np.trace(V @ np.diag(d) @ V.T @ X))
    return float(min(vals)), float(max(vals))


def structured_trace_best(X: np.ndarray, lam: float, Lam: float) -> tuple[float, float]:
    """(min, max) of tr(AX) over the 2^n eigenframe corner matrices only."""
    n = X.shape[0]
    _, V = np.linalg.eigh(X)
    vals = []
    for mask in range(2**n):
        d = np.array([Lam if (mask >> i) & 1 else lam for i in range(n)])
        vals.append(np.trace(V @ np.diag(d) @ V.T @ X))
    return float(min(vals)), float(max(vals))


def dirichlet_laplacian_eig(h: float, coef: float = 1.0, length: float = 1.0) -> float:
    """Smallest eigenvalue of −coef·u'' on (0, length) with the 3-point stencil."""
    N = int(round(length / h)) - 1
    d = np.full(N, 2.0 * coef / h**2)
    e = np.full(N - 1, -coef / h**2)
    w = eigh_tridiagonal(d, e, eigvals_only=True, select="i", select_range=(0, 0))
    return float(w[0])


def bessel_first_eig(radius: float = 1.0) -> float:
    """First Dirichlet eigenvalue of −Δ on the disc by radial shooting.

    φ'' + φ'/r + αφ = 0 with φ(0) = 1, φ'(0) = 0; α is the root of φ(R; α).
    The series φ ≈ 1 − αr²/4 seeds the integration off the singular origin.
    """
    r0 = 1e-6

    def end_value(alpha):
        y0 = [1 - alpha * r0**2 / 4, -alpha * r0 / 2]
        sol = solve_ivp(lambda r, y: [y[1], -y[1] / r - alpha * y[0]], (r0, radius), y0,
                        rtol=1e-12, atol=1e-14)
        return sol.y[0, -1]

    return float(brentq(end_value, 4.0 / radius**2, 8.0 / radius**2, xtol=1e-13))


def radial_pucci_profile(lam: float, Lam: float, f: float, r: np.ndarray, radius: float = 1.0) -> np.ndarray:
    """Radial solution of M⁺(D²u) = f on the disc, u = 0 on the circle (n = 2).

    The Hessian eigenvalues of a radial u are u'' and u'/r. For given u'/r
    the map u'' ↦ M⁺ is increasing and piecewise linear, so it inverts in
    closed form. Shooting from the origin with u(0) = 0, u'(0) = 0 and then
    subtracting u(R) gives the Dirichlet profile (f is constant, so the
    problem is invariant under adding constants).
    """

    def mplus(e):
        return Lam * sum(max(v, 0.0) for v in e) - lam * sum(max(-v, 0.0) for v in e)

    def upp(s):
        # solve mplus([x, s]) = f for x
        rest = mplus([0.0, s])
        target = f - rest
        return target / Lam if target >= 0 else target / lam

    # at r = 0 both eigenvalues equal u''(0)
    c0 = f / (2 * Lam) if f >= 0 else f / (2 * lam)
    r0 = 1e-8

    def rhs(t, y):
        return [y[1], upp(y[1] / t)]

    sol = solve_ivp(rhs, (r0, radius), [0.5 * c0 * r0**2, c0 * r0], rtol=1e-12, atol=1e-14, dense_output=True)
    rr = np.clip(np.asarray(r, dtype=float), r0, radius)
    return sol.sol(rr)[0] - sol.y[0, -1]


def minimax_line_1d(x: np.ndarray, u: np.ndarray) -> tuple[float, float, float]:
    """Best sup-norm affine fit a + b x of samples (x, u) in 1D.

    For fixed b the optimal a centers the residual range, leaving
    E(b) = (max(u − bx) − min(u − bx))/2, a convex function of b that is
    minimized by bounded scalar search. Returns (a, b, E).
    """
    x, u = np.asarray(x, dtype=float), np.asarray(u, dtype=float)

    def E(b):
        w = u - b * x
        return 0.5 * (w.max() - w.min())

    span = (u.max() - u.min()) / max(x.max() - x.min(), 1e-300)
    res = minimize_scalar(E, bounds=(-2 * span - 1, 2 * span + 1), method="bounded",
                          options={"xatol": 1e-13})
    b = float(res.x)
    w = u - b * x
    return float(0.5 * (w.max() + w.min())), b, float(E(b))


def holder_pairs(x: np.ndarray, u: np.ndarray, beta: float) -> float:
    """max |u_i − u_j| / |x_i − x_j|^β over all pairs, by brute force."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[0] == 1 and len(u) > 1:
        x = x.T
    best = 0.0
    for i in range(len(u) - 1):
        d = np.linalg.norm(x[i + 1:] - x[i], axis=1)
        q = np.abs(u[i + 1:] - u[i]) / d**beta
        best = max(best, float(q.max()))
    return best
