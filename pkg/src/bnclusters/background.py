"""Background solutions u0 supplied as data.

``mock_u0`` builds an analytic field on the half-space whose outward normal
derivative at the origin is s0 and whose tangential Hessian of that normal
derivative is A. ``shoot_annulus_u0`` solves the radial problem on an
annulus; its tangential Hessian vanishes, so it is meant for field-level
tests only.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import solve_ivp

from .bubbles import critical_exponent
from .geometry import Annulus, BoundaryChart, Domain, HalfSpace, chart_for


@dataclass(frozen=True, eq=False)
class U0Field:
    """Background solution: pointwise value, gradient and Laplacian maps plus boundary data."""

    value: Callable
    gradient: Callable
    laplacian: Callable
    s0: float
    A_matrix: np.ndarray
    domain: Domain
    kind: str = "mock"
    params: dict = field(default_factory=dict)

    @property
    def positive_definite(self) -> bool:
        return bool(np.all(np.linalg.eigvalsh(self.A_matrix) > 0))

    @property
    def dim(self) -> int:
        return self.domain.dim

    def to_config(self) -> dict:
        return {"kind": self.kind, **self.params}


# smooth step built from exp(-1/t); S(s) = 1 for s <= 0, 0 for s >= 1

def _h(t):
    t = np.asarray(t, dtype=np.float64)
    out = np.zeros_like(t)
    pos = t > 0
    out[pos] = np.exp(-1.0 / t[pos])
    return out


def _h1(t):
    t = np.asarray(t, dtype=np.float64)
    out = np.zeros_like(t)
    pos = t > 0
    tp = t[pos]
    out[pos] = np.exp(-1.0 / tp) / tp**2
    return out


def _h2(t):
    t = np.asarray(t, dtype=np.float64)
    out = np.zeros_like(t)
    pos = t > 0
    tp = t[pos]
    out[pos] = np.exp(-1.0 / tp) * (1 - 2 * tp) / tp**4
    return out


def smooth_step(s):
    """Value, first and second derivative of the C-infinity step S(s)."""
    a, b = _h(1 - s), _h(s)
    a1, b1 = -_h1(1 - s), _h1(s)
    a2, b2 = _h2(1 - s), _h2(s)
    d = a + b
    num = a1 * b - a * b1
    val = a / d
    d1 = num / d**2
    num1 = a2 * b - a * b2
    d2 = num1 / d**2 - 2 * num * (a1 + b1) / d**3
    return val, d1, d2


def _cutoff(x, cutoff):
    """chi(|x|) with its gradient and Laplacian: 1 on |x| <= cutoff/2, 0 beyond cutoff."""
    n = x.shape[-1]
    r = np.sqrt(np.einsum("...i,...i->...", x, x))
    half = cutoff / 2
    s = (r - half) / half
    val, d1, d2 = smooth_step(s)
    c1, c2 = d1 / half, d2 / half**2
    with np.errstate(invalid="ignore", divide="ignore"):
        unit = np.where(r[..., None] > 0, x / r[..., None], 0.0)
        lap = c2 + np.where(r > 0, (n - 1) * c1 / r, 0.0)
    return val, c1[..., None] * unit, lap


def mock_u0(s0: float, A, cutoff: float = 1.0, dim: int | None = None) -> U0Field:
    """u0(x) = x_N q(x') chi(x) with q(x') = -s0 - <A x', x'>/2 on the half-space."""
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    n = A.shape[0] + 1 if dim is None else int(dim)
    if A.shape != (n - 1, n - 1):
        raise ValueError(f"A must be ({n - 1}, {n - 1}), got {A.shape}")
    if not np.allclose(A, A.T, rtol=0, atol=1e-14):
        raise ValueError("A must be symmetric")
    if not s0 < 0:
        raise ValueError(f"s0 must be negative (Hopf lemma), got {s0}")
    if not np.all(np.linalg.eigvalsh(A) > 0):
        raise ValueError("A must be positive definite")
    if not cutoff > 0:
        raise ValueError("cutoff must be positive")
    trA = float(np.trace(A))

    def parts(x):
        x = np.asarray(x, dtype=np.float64)
        xp, xn = x[..., :-1], x[..., -1]
        Ax = xp @ A
        q = -s0 - 0.5 * np.einsum("...i,...i->...", Ax, xp)
        return xp, xn, Ax, q

    def value(x):
        _, xn, _, q = parts(x)
        chi, _, _ = _cutoff(np.asarray(x, dtype=np.float64), cutoff)
        return xn * q * chi

    def gradient(x):
        x = np.asarray(x, dtype=np.float64)
        _, xn, Ax, q = parts(x)
        chi, gchi, _ = _cutoff(x, cutoff)
        g = np.concatenate([-xn[..., None] * Ax, q[..., None]], axis=-1)  # grad(x_N q)
        return g * chi[..., None] + (xn * q)[..., None] * gchi

    def laplacian(x):
        x = np.asarray(x, dtype=np.float64)
        _, xn, Ax, q = parts(x)
        chi, gchi, lchi = _cutoff(x, cutoff)
        g = np.concatenate([-xn[..., None] * Ax, q[..., None]], axis=-1)
        return -xn * trA * chi + 2 * np.einsum("...i,...i->...", g, gchi) + xn * q * lchi

    return U0Field(value, gradient, laplacian, float(s0), A, HalfSpace(n), "mock",
                   {"s0": float(s0), "A": A.tolist(), "cutoff": float(cutoff)})


def boundary_normal_derivative(u0: U0Field, chart: BoundaryChart, xp):
    """Outward normal derivative of u0 at the chart points x'."""
    p = chart.point(xp)
    return np.einsum("...i,...i->...", u0.gradient(p), u0.domain.outward_normal(p))


def tangential_jet_fd(u0: U0Field, chart: BoundaryChart | None = None, h: float = 1e-3):
    """Value, gradient and Hessian in x' of the boundary normal derivative at the chart origin.

    Central differences of the analytic normal derivative (second order in h).
    """
    chart = chart or chart_for(u0.domain)
    n1 = chart.frame.shape[0]
    e = np.eye(n1)
    f0 = float(boundary_normal_derivative(u0, chart, np.zeros(n1)))
    grad = np.empty(n1)
    hess = np.empty((n1, n1))
    for i in range(n1):
        fp = boundary_normal_derivative(u0, chart, h * e[i])
        fm = boundary_normal_derivative(u0, chart, -h * e[i])
        grad[i] = (fp - fm) / (2 * h)
        hess[i, i] = (fp - 2 * f0 + fm) / h**2
        for j in range(i):
            pts = np.array([h * (e[i] + e[j]), h * (e[i] - e[j]), h * (-e[i] + e[j]), -h * (e[i] + e[j])])
            v = boundary_normal_derivative(u0, chart, pts)
            hess[i, j] = hess[j, i] = (v[0] - v[1] - v[2] + v[3]) / (4 * h * h)
    return f0, grad, hess


@dataclass(frozen=True, eq=False)
class ShootingResult:
    """Radial solution u(r) on (a, b) with u(a) = u(b) = 0."""

    m: float
    r: np.ndarray
    u: np.ndarray
    du_a: float
    du_b: float
    a: float
    b: float
    dim: int
    error_estimate: float
    iterations: int
    sol: object = field(repr=False, default=None)

    def profile(self, r):
        """(u, u') at radii r, zero outside [a, b]."""
        r = np.asarray(r, dtype=np.float64)
        inside = (r >= self.a) & (r <= self.b)
        y = self.sol(np.clip(r, self.a, self.b))
        return np.where(inside, y[0], 0.0), np.where(inside, y[1], 0.0)


def _integrate(m, a, b, dim, rtol):
    p = critical_exponent(dim)

    def rhs(r, y):
        return [y[1], -(dim - 1) / r * y[1] - np.abs(y[0]) ** (p - 1) * y[0]]

    def hit_zero(r, y):
        return y[0]

    hit_zero.terminal = True
    hit_zero.direction = -1
    # start a hair inside so the event does not fire at r = a; u(a) = 0 gives u''(a) = -(N-1) m / a
    r1 = a + 1e-9 * (b - a)
    s, upp = r1 - a, -(dim - 1) * m / a
    y1 = [m * s + 0.5 * upp * s * s, m + upp * s]
    return solve_ivp(rhs, (r1, b), y1, method="DOP853", rtol=rtol, atol=rtol * 1e-3,
                     events=hit_zero, dense_output=True)


def _shoot_value(m, a, b, dim, rtol):
    sol = _integrate(m, a, b, dim, rtol)
    if sol.t_events[0].size:
        return -(b - sol.t_events[0][0]), sol
    return sol.y[0, -1], sol


def shoot_annulus_u0(a: float, b: float, dim: int = 7, tol: float = 1e-10,
                     slope_range=(1e-3, 1e7), rtol: float = 1e-13) -> ShootingResult:
    """Positive radial solution of u'' + (N-1)/r u' + u^p = 0 on (a, b) by shooting on u'(a)."""
    if not 0 < a < b:
        raise ValueError(f"need 0 < a < b, got a={a}, b={b}")
    if dim < 7:
        raise ValueError(f"dim must be at least 7, got {dim}")
    lo = slope_range[0]
    f_lo, _ = _shoot_value(lo, a, b, dim, rtol)
    if f_lo <= 0:
        raise ArithmeticError(f"no bracket: u(b) <= 0 already at slope {lo}; scanned {slope_range}")
    hi = lo
    while True:
        hi *= 2
        if hi > slope_range[1]:
            raise ArithmeticError(f"no bracket found for slopes in {slope_range}")
        f_hi, _ = _shoot_value(hi, a, b, dim, rtol)
        if f_hi < 0:
            break
        lo = hi
    it = 0
    while True:
        it += 1
        mid = 0.5 * (lo + hi)
        f_mid, sol = _shoot_value(mid, a, b, dim, rtol)
        # accept only from above: an early zero (f < 0) means the profile is not usable
        if 0 <= f_mid <= tol or hi - lo <= 4 * np.spacing(mid):
            break
        if f_mid > 0:
            lo = mid
        else:
            hi = mid
        if it > 400:
            raise ArithmeticError("bisection did not converge")
    # a terminal zero just short of b means the accepted profile ends there
    if sol.t_events[0].size:
        f_mid, sol = _shoot_value(lo, a, b, dim, rtol)
        mid = lo
    r = np.linspace(a, b, 201)
    y = sol.sol(np.clip(r, sol.t[0], sol.t[-1]))
    y[:, 0] = [0.0, mid]
    # step-size refinement estimate of the global error of the accepted profile
    fine = _integrate(mid, a, b, dim, max(rtol / 16, 2.5e-14))
    yf = fine.sol(np.clip(r[1:], fine.t[0], fine.t[-1]))
    err = float(np.max(np.abs(yf[0] - y[0, 1:])))
    dense = sol.sol

    def sol_ab(rr):
        rr = np.atleast_1d(rr)
        out = dense(np.maximum(rr, sol.t[0]))
        # quadratic Taylor start on [a, a + 1e-9 (b - a)], matching the initial state
        near = rr < sol.t[0]
        s = rr[near] - a
        upp = -(dim - 1) * mid / a
        out[0, near] = mid * s + 0.5 * upp * s * s
        out[1, near] = mid + upp * s
        return out

    return ShootingResult(float(mid), r, y[0], float(mid), float(y[1, -1]), float(a), float(b),
                          int(dim), err, it, sol_ab)


def annulus_u0(res: ShootingResult, h: float = 2e-5) -> U0Field:
    """U0Field of a shooting result; u'' from fourth-order differences of the interpolated u'."""
    dom = Annulus(res.dim, res.a, res.b)
    n = res.dim

    def radius(x):
        x = np.asarray(x, dtype=np.float64)
        return x, np.sqrt(np.einsum("...i,...i->...", x, x))

    def value(x):
        _, r = radius(x)
        return res.profile(r.reshape(-1))[0].reshape(r.shape)

    def gradient(x):
        x, r = radius(x)
        du = res.profile(r.reshape(-1))[1].reshape(r.shape)
        return (du / r)[..., None] * x

    def second(r):
        # fourth-order differences of the interpolated u', shifted one-sided near the
        # ends so every node stays in [a, b] (the interpolant extrapolates badly outside)
        du = lambda s: res.sol(s)[1]
        out = np.empty_like(r)
        lo, hi = r - 2 * h < res.a, r + 2 * h > res.b
        mid = ~(lo | hi)
        rm = r[mid]
        out[mid] = (du(rm - 2 * h) - 8 * du(rm - h) + 8 * du(rm + h) - du(rm + 2 * h)) / (12 * h)
        for mask, sgn in ((lo, 1.0), (hi, -1.0)):
            if mask.any():
                r0 = np.clip(r[mask], res.a, res.b)
                f = [du(r0 + sgn * j * h) for j in range(5)]
                out[mask] = sgn * (-25 * f[0] + 48 * f[1] - 36 * f[2] + 16 * f[3] - 3 * f[4]) / (12 * h)
        return out

    def laplacian(x):
        _, r = radius(x)
        rf = r.reshape(-1)
        du = res.profile(rf)[1]
        inside = (rf >= res.a) & (rf <= res.b)
        out = np.zeros_like(rf)
        out[inside] = second(rf[inside]) + (n - 1) / rf[inside] * du[inside]
        return out.reshape(r.shape)

    return U0Field(value, gradient, laplacian, res.du_b, np.zeros((n - 1, n - 1)), dom, "annulus",
                   {"a": res.a, "b": res.b})


def u0_from_config(cfg: dict, dim: int) -> U0Field:
    kind = cfg.get("kind", "mock")
    if kind == "mock":
        A = cfg.get("A", "identity")
        if isinstance(A, str):
            if A != "identity":
                raise ValueError(f"u0.A must be a matrix or 'identity', got {A!r}")
            A = np.eye(dim - 1)
        A = np.asarray(A, dtype=np.float64)
        if A.ndim == 0:
            A = float(A) * np.eye(dim - 1)
        return mock_u0(cfg.get("s0", -1.0), A, cfg.get("cutoff", 1.0), dim)
    if kind == "annulus":
        return annulus_u0(shoot_annulus_u0(cfg.get("a", 1.0), cfg.get("b", 2.0), dim))
    raise ValueError(f"unknown u0.kind {kind!r}")


__all__ = ["U0Field", "ShootingResult", "mock_u0", "shoot_annulus_u0", "annulus_u0",
           "tangential_jet_fd", "boundary_normal_derivative", "smooth_step", "u0_from_config"]
