"""Aubin-Talenti bubbles, the kernel functions psi^j and universal constants.

Everything here is dimensionless. Points are numpy arrays whose last axis
has length ``dim``; evaluation functions broadcast over leading axes.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special


def alpha_N(dim: int) -> float:
    """Normalization (N(N-2))^((N-2)/4) of the bubble."""
    return float((dim * (dim - 2)) ** ((dim - 2) / 4))


def critical_exponent(dim: int) -> float:
    """p = (N+2)/(N-2), so that p + 1 = 2* is the critical Sobolev exponent."""
    return (dim + 2) / (dim - 2)


def sphere_area(dim: int) -> float:
    """Surface measure of the unit sphere S^{N-1} in R^N."""
    return 2.0 * math.pi ** (dim / 2) / math.gamma(dim / 2)


@dataclass(frozen=True, eq=False)
class Bubble:
    """One profile U_{delta, xi} in dimension ``dim``."""

    delta: float
    xi: np.ndarray
    dim: int = 7

    def __post_init__(self):
        xi = np.asarray(self.xi, dtype=np.float64).reshape(-1)
        if self.dim < 3:
            raise ValueError(f"dim must be at least 3, got {self.dim}")
        if xi.shape != (self.dim,):
            raise ValueError(f"xi must have {self.dim} coordinates, got {xi.shape[0]}")
        if not self.delta > 0:
            raise ValueError(f"delta must be positive, got {self.delta}")
        xi.setflags(write=False)
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "delta", float(self.delta))

    @property
    def m(self) -> float:
        return (self.dim - 2) / 2

    def moved(self, delta: float | None = None, xi=None) -> "Bubble":
        return Bubble(self.delta if delta is None else delta,
                      self.xi if xi is None else xi, self.dim)

    def __repr__(self):
        return f"Bubble(delta={self.delta!r}, xi={self.xi.tolist()!r}, dim={self.dim})"


def _sq(b: Bubble, x) -> np.ndarray:
    d = np.asarray(x, dtype=np.float64) - b.xi
    return np.einsum("...i,...i->...", d, d)


def eval_bubble(b: Bubble, x):
    """U_{delta,xi}(x) = alpha_N delta^m / (delta^2 + |x - xi|^2)^m, m = (N-2)/2."""
    m = b.m
    return alpha_N(b.dim) * b.delta**m * (b.delta**2 + _sq(b, x)) ** (-m)


def grad_bubble(b: Bubble, x):
    """Analytic gradient of U_{delta,xi}; shape ``x.shape``."""
    x = np.asarray(x, dtype=np.float64)
    m = b.m
    s = b.delta**2 + _sq(b, x)
    coef = -2.0 * m * alpha_N(b.dim) * b.delta**m * s ** (-m - 1)
    return coef[..., None] * (x - b.xi)


def laplacian_bubble(b: Bubble, x):
    """Analytic Laplacian of U_{delta,xi}.

    Obtained from the radial formula 2N g'(s) + 4 s g''(s) with s = |x - xi|^2,
    not from the equation, so it can be used to test that U solves it.
    """
    n, m, d2 = b.dim, b.m, b.delta**2
    s = _sq(b, x)
    a = alpha_N(n) * b.delta**m
    g1 = -m * a * (d2 + s) ** (-m - 1)
    g2 = m * (m + 1) * a * (d2 + s) ** (-m - 2)
    return 2 * n * g1 + 4 * s * g2


def eval_psi(j: int, b: Bubble, x):
    """Kernel function psi^j_{delta,xi}, j = 0..N.

    For delta = 1, xi = 0 these are psi^0 = (N-2)/2 U + x.grad U and
    psi^j = d U / d x_j; the general case follows by the scaling
    delta^{-(N-2)/2} psi^j((x - xi)/delta).
    """
    n = b.dim
    if not 0 <= j <= n:
        raise IndexError(f"kernel index j must lie in 0..{n}, got {j}")
    y = (np.asarray(x, dtype=np.float64) - b.xi) / b.delta
    r2 = np.einsum("...i,...i->...", y, y)
    a = alpha_N(n)
    if j == 0:
        val = a * (n - 2) / 2 * (1 - r2) / (1 + r2) ** (n / 2)
    else:
        val = -a * (n - 2) * y[..., j - 1] / (1 + r2) ** (n / 2)
    return b.delta ** (-(n - 2) / 2) * val


def radial_integral(a: float, b: float, *, return_error: bool = False):
    """Integral of r^a (1 + r^2)^(-b) over (0, inf) by adaptive quadrature.

    The half-line is split at 1 and the tail mapped back with r -> 1/r, so
    both pieces are integrals over [0, 1] with an algebraic endpoint weight
    handled by QUADPACK's QAWS rule.
    """
    if not a > -1:
        raise ValueError(f"divergent at 0: need a > -1, got a={a}")
    if not a + 1 < 2 * b:
        raise ValueError(f"divergent at infinity: need a + 1 < 2b, got a+1={a + 1}, 2b={2 * b}")

    def f(r):
        return (1.0 + r * r) ** (-b)

    opts = dict(epsabs=1e-14, epsrel=1e-13, limit=200)
    head, e1 = integrate.quad(f, 0.0, 1.0, weight="alg", wvar=(a, 0.0), **opts)
    tail, e2 = integrate.quad(f, 0.0, 1.0, weight="alg", wvar=(2 * b - a - 2, 0.0), **opts)
    err = e1 + e2
    if err > 1e-12:
        raise ArithmeticError(f"radial_integral({a}, {b}) error estimate {err:.3e} above 1e-12")
    if return_error:
        return head + tail, err
    return head + tail


def radial_integral_beta(a: float, b: float) -> float:
    """Closed form of ``radial_integral``: B((a+1)/2, b-(a+1)/2) / 2."""
    if not (a > -1 and a + 1 < 2 * b):
        raise ValueError(f"divergent parameters a={a}, b={b}")
    return 0.5 * float(special.beta((a + 1) / 2, b - (a + 1) / 2))


@dataclass(frozen=True)
class UniversalConstants:
    """alpha_N and the integrals C = int U^p, B = 1/2 int U^2, S = int U^{2*}.

    ``quadrature`` holds the same three integrals from the independent
    quadrature path and ``max_rel_gap`` the largest relative disagreement.
    """

    dim: int
    alpha_N: float
    C_const: float
    B_const: float
    int_U_2star: float
    quadrature: dict = field(default_factory=dict, compare=False)
    max_rel_gap: float = 0.0

    @property
    def p(self) -> float:
        return critical_exponent(self.dim)

    @property
    def m(self) -> float:
        return (self.dim - 2) / 2


def universal_constants(dim: int) -> UniversalConstants:
    """Evaluate the bubble integrals for delta = 1 by Beta reduction and by quadrature."""
    if dim < 5:
        raise ValueError(f"int U^2 diverges for dim < 5 (got dim={dim}); the theory needs N >= 7")
    if dim < 7:
        warnings.warn(f"dim={dim}: constants are finite but the reduction assumes N >= 7",
                      stacklevel=2)
    a = alpha_N(dim)
    p = critical_exponent(dim)
    om = sphere_area(dim)
    # exponent b of (1 + r^2)^(-b) for U^p, U^2 and U^{2*}
    powers = {"C": (dim + 2) / 2, "B": dim - 2.0, "S": float(dim)}
    prefac = {"C": a**p * om, "B": 0.5 * a**2 * om, "S": a ** (p + 1) * om}
    beta = {k: prefac[k] * radial_integral_beta(dim - 1, s) for k, s in powers.items()}
    quad = {k: prefac[k] * radial_integral(dim - 1, s) for k, s in powers.items()}
    gap = max(abs(beta[k] - quad[k]) / beta[k] for k in beta)
    return UniversalConstants(dim, a, beta["C"], beta["B"], beta["S"],
                              {"C_const": quad["C"], "B_const": quad["B"],
                               "int_U_2star": quad["S"]}, gap)
