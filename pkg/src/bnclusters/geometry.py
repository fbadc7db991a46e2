"""Domains, Green regular parts, boundary charts and projected bubbles.

The regular part is normalized without the Newtonian constant:
``H(x, y) = |x - y|^(2-N) - G(x, y) / gamma_N`` with
``gamma_N = 1 / ((N-2)|S^{N-1}|)``, so that near a flat piece of boundary
``H(xi, xi) ~ (2 dist)^(2-N)`` and the harmonic part of a projected bubble
is ``alpha_N delta^((N-2)/2) H(xi, .)`` to leading order. Pass
``normalization="gamma"`` to get ``gamma_N`` times this value.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bubbles import Bubble, alpha_N, eval_bubble, eval_psi, sphere_area
from .mc import MCResult, Proposal, Region, TComponent, mc_integral


def gamma_N(dim: int) -> float:
    """Newtonian constant: Delta(gamma_N |x|^(2-N)) = -delta_0."""
    return 1.0 / ((dim - 2) * sphere_area(dim))


def _arr(x):
    return np.asarray(x, dtype=np.float64)


def _norm(x):
    return np.sqrt(np.einsum("...i,...i->...", x, x))


class Domain:
    """Common interface; see :class:`HalfSpace`, :class:`Ball`, :class:`Annulus`."""

    tag = "domain"
    has_green = False

    def __init__(self, dim: int):
        if dim < 3:
            raise ValueError(f"dim must be at least 3, got {dim}")
        self.dim = int(dim)

    def contains(self, x) -> np.ndarray:
        return self.dist_signed(_arr(x)) > 0

    def dist_to_boundary(self, x) -> np.ndarray:
        return np.abs(self.dist_signed(_arr(x)))

    def dist_signed(self, x):
        raise NotImplementedError

    def outward_normal(self, x):
        raise NotImplementedError

    def to_config(self) -> dict:
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}({self.to_config()})"


class HalfSpace(Domain):
    """{x in R^N : x_N > 0}."""

    tag = "half-space"
    has_green = True

    def dist_signed(self, x):
        return x[..., -1]

    def outward_normal(self, x):
        out = np.zeros(np.shape(x))
        out[..., -1] = -1.0
        return out

    def nearest_boundary_point(self, x):
        y = np.array(x, dtype=np.float64)
        y[..., -1] = 0.0
        return y

    def reflect(self, y):
        r = np.array(y, dtype=np.float64)
        r[..., -1] *= -1.0
        return r

    def to_config(self):
        return {"tag": self.tag}


class Ball(Domain):
    """Ball of radius ``radius`` centered at the origin."""

    tag = "ball"
    has_green = True

    def __init__(self, dim: int, radius: float = 1.0):
        super().__init__(dim)
        if not radius > 0:
            raise ValueError("ball radius must be positive")
        self.radius = float(radius)

    def dist_signed(self, x):
        return self.radius - _norm(x)

    def outward_normal(self, x):
        x = _arr(x)
        return x / _norm(x)[..., None]

    def to_config(self):
        return {"tag": self.tag, "radius": self.radius}


class Annulus(Domain):
    """{a < |x| < b}; hosts the radial background solution only (no closed-form H)."""

    tag = "annulus"

    def __init__(self, dim: int, a: float, b: float):
        super().__init__(dim)
        if not 0 < a < b:
            raise ValueError(f"annulus needs 0 < a < b, got a={a}, b={b}")
        self.a, self.b = float(a), float(b)

    def dist_signed(self, x):
        r = _norm(x)
        return np.minimum(r - self.a, self.b - r)

    def outward_normal(self, x):
        x = _arr(x)
        r = _norm(x)
        sign = np.where(r - self.a < self.b - r, -1.0, 1.0)
        return sign[..., None] * x / r[..., None]

    def to_config(self):
        return {"tag": self.tag, "a": self.a, "b": self.b}


def domain_from_config(cfg: dict, dim: int) -> Domain:
    tag = cfg.get("tag", "half-space")
    if tag == "half-space":
        return HalfSpace(dim)
    if tag == "ball":
        return Ball(dim, cfg.get("radius", 1.0))
    if tag == "annulus":
        return Annulus(dim, cfg["a"], cfg["b"])
    raise ValueError(f"unknown domain tag {tag!r}")


def _require_green(dom: Domain):
    if not dom.has_green:
        raise ValueError(f"no closed-form regular part H on the {dom.tag}; "
                         "use the oracle-free paths (field-level checks) for this domain")


def regular_part_H(dom: Domain, x, y, normalization: str = "unit"):
    """Regular part H(x, y) of the Dirichlet Green function by the image method."""
    _require_green(dom)
    x, y = _arr(x), _arr(y)
    n = dom.dim
    if isinstance(dom, HalfSpace):
        d = x - dom.reflect(y)
        val = np.einsum("...i,...i->...", d, d) ** ((2 - n) / 2)
    else:
        r2 = dom.radius**2
        q = (np.einsum("...i,...i->...", x, x) * np.einsum("...i,...i->...", y, y) / r2
             - 2 * np.einsum("...i,...i->...", x, y) + r2)
        val = q ** ((2 - n) / 2)
    if normalization == "gamma":
        return gamma_N(n) * val
    if normalization != "unit":
        raise ValueError(f"normalization must be 'unit' or 'gamma', got {normalization!r}")
    return val


def grad_H_xi(dom: Domain, xi, x):
    """Gradient of H(xi, x) with respect to its first argument."""
    _require_green(dom)
    xi, x = _arr(xi), _arr(x)
    n = dom.dim
    if isinstance(dom, HalfSpace):
        d = xi - dom.reflect(x)
        s = np.einsum("...i,...i->...", d, d)
        return ((2 - n) * s ** (-n / 2))[..., None] * d
    r2 = dom.radius**2
    xx = np.einsum("...i,...i->...", x, x)
    q = xx * np.einsum("...i,...i->...", xi, xi) / r2 - 2 * np.einsum("...i,...i->...", x, xi) + r2
    dq = 2 * xx[..., None] * xi / r2 - 2 * x
    return ((2 - n) / 2 * q ** (-n / 2))[..., None] * dq


def boundary_H_asymptotic_check(dom: Domain, path) -> np.ndarray:
    """H(xi, xi) (2 dist(xi))^(N-2) along a sequence of interior points."""
    path = _arr(path)
    d = dom.dist_to_boundary(path)
    return regular_part_H(dom, path, path) * (2 * d) ** (dom.dim - 2)


@dataclass(frozen=True, eq=False)
class BoundaryChart:
    """Boundary near ``base`` written as base + x'.frame + theta(x') normal_in."""

    domain: Domain
    base: np.ndarray
    frame: np.ndarray
    normal_in: np.ndarray
    theta: object

    def point(self, xp):
        xp = _arr(xp)
        h = np.asarray(self.theta(xp))
        return self.base + xp @ self.frame + h[..., None] * self.normal_in

    def inward_normal(self, p):
        return -self.domain.outward_normal(p)


def chart_for(dom: Domain) -> BoundaryChart:
    """Chart at the bottom point -R e_N (ball, outer annulus sphere) or at 0 (half-space)."""
    n = dom.dim
    frame = np.eye(n)[: n - 1]
    e_n = np.eye(n)[n - 1]
    if isinstance(dom, HalfSpace):
        return BoundaryChart(dom, np.zeros(n), frame, e_n,
                             lambda xp: np.zeros(np.shape(xp)[:-1]))
    rad = dom.radius if isinstance(dom, Ball) else dom.b

    def theta(xp):
        return rad - np.sqrt(rad**2 - np.einsum("...i,...i->...", xp, xp))

    return BoundaryChart(dom, -rad * e_n, frame, e_n, theta)


def chart_gradient_check(chart: BoundaryChart, h: float = 1e-6) -> float:
    """Norm of the central-difference gradient of theta at the chart origin."""
    n1 = chart.frame.shape[0]
    g = [(chart.theta(h * e) - chart.theta(-h * e)) / (2 * h) for e in np.eye(n1)]
    return float(np.linalg.norm(g))


@dataclass(frozen=True, eq=False)
class ProjectedBubble:
    bubble: Bubble
    domain: Domain
    with_budget: bool = False


def phi_approx(b: Bubble, dom: Domain, x):
    """Leading term alpha_N delta^m H(xi, x) of the harmonic correction."""
    return alpha_N(b.dim) * b.delta ** ((b.dim - 2) / 2) * regular_part_H(dom, b.xi, x)


def projection_budget(b: Bubble, dom: Domain, j: int | None = None) -> float:
    """Sup-norm bound on (exact - approximate) harmonic correction.

    The approximant matches the boundary trace of the far field exactly, so
    the error is the boundary value of the near-field remainder, which the
    maximum principle carries inside. For U this is
    alpha_N m delta^((N+2)/2) / dist^N; for psi^0 an extra factor (N+2)/2;
    for psi^j (j >= 1) alpha_N (N-2) N/2 delta^((N+4)/2) / dist^(N+1).
    """
    n = b.dim
    m = (n - 2) / 2
    dist = float(dom.dist_to_boundary(b.xi))
    a = alpha_N(n)
    if j is None:
        return a * m * b.delta ** ((n + 2) / 2) / dist**n
    if j == 0:
        return a * m * (n + 2) / 2 * b.delta ** ((n + 2) / 2) / dist**n
    return a * (n - 2) * n / 2 * b.delta ** ((n + 4) / 2) / dist ** (n + 1)


def projected_bubble_eval(pb: ProjectedBubble, x):
    """PU approximated as U - alpha_N delta^m H(xi, x); with budget when requested."""
    b = pb.bubble
    val = eval_bubble(b, x) - phi_approx(b, pb.domain, x)
    if pb.with_budget:
        return val, projection_budget(b, pb.domain)
    return val


def projected_psi_eval(j: int, b: Bubble, dom: Domain, x, with_budget: bool = False):
    """P psi^j approximated by subtracting the harmonic extension of its far field.

    psi^0_{delta,xi} = -delta dU/d delta and psi^j_{delta,xi} = -delta dU/d xi_j,
    so the corrections are -delta d/d delta and -delta d/d xi_j of phi_approx:
    P psi^0 = psi^0 + alpha_N m delta^m H and P psi^j = psi^j + alpha_N delta^(N/2) dH/d xi_j.
    """
    n = b.dim
    psi = eval_psi(j, b, x)
    if j == 0:
        val = psi + (n - 2) / 2 * phi_approx(b, dom, x)
    else:
        g = grad_H_xi(dom, b.xi, x)[..., j - 1]
        val = psi + alpha_N(n) * b.delta ** (n / 2) * g
    if with_budget:
        return val, projection_budget(b, dom, j)
    return val


def _sphere_chart(center_dir, radius):
    """Inverse stereographic chart R^(N-1) -> sphere with ``center_dir`` at the origin.

    Returns (to_sphere, jacobian); the pole sits at -radius * center_dir.
    """
    u = center_dir / np.linalg.norm(center_dir)
    n = u.size
    q, _ = np.linalg.qr(np.column_stack([u, np.eye(n)]))
    perp = q[:, 1:n]

    def to_sphere(yp):
        s = np.einsum("ij,ij->i", yp, yp) / radius**2
        w = (2 / (1 + s))[:, None] * (yp @ perp.T) / radius + ((1 - s) / (1 + s))[:, None] * u
        return radius * w, (2 / (1 + s)) ** (n - 1)

    def to_plane(y):
        w = y / radius
        return radius * (w @ perp) / (1 + w @ u)

    return to_sphere, to_plane


def ball_poisson_integral(dom: Ball, x, f, focus=None, focus_scale: float | None = None,
                          samples: int = 100_000, seed: int = 0,
                          block_size: int | None = None) -> MCResult:
    """Monte-Carlo Poisson integral of boundary data ``f`` (maps (n, N) sphere points to (n,)).

    The sphere is parametrized stereographically around ``focus`` (default: the
    foot of x); the proposal mixes Student-t strata at the images of the foot of x
    and of ``focus`` with one at the sphere scale.
    """
    x = _arr(x).reshape(-1)
    n, R = dom.dim, dom.radius
    rx = float(np.linalg.norm(x))
    if not rx < R:
        raise ValueError("x must be interior")
    e_n = np.eye(n)[-1]
    focus = x if focus is None else _arr(focus).reshape(-1)
    fdir = focus if np.linalg.norm(focus) > 0 else (x if rx > 0 else e_n)
    to_sphere, to_plane = _sphere_chart(fdir, R)
    foot_x = R * (x / rx if rx > 0 else e_n)
    fs = focus_scale if focus_scale is not None else R - float(np.linalg.norm(focus))
    comps = [TComponent(np.zeros(n - 1), max(fs, 1e-12 * R) / 2, n / 2),
             TComponent(to_plane(foot_x[None, :])[0], (R - rx) / 2, n / 2),
             TComponent(np.zeros(n - 1), R, n / 2, 0.5)]
    prop = Proposal(n - 1, comps)
    pnorm = (R * R - rx * rx) / (sphere_area(n) * R)

    def integrand(yp):
        y, jac = to_sphere(yp)
        d = y - x
        return pnorm * np.einsum("ij,ij->i", d, d) ** (-n / 2) * np.asarray(f(y)) * jac

    kw = {} if block_size is None else {"block_size": block_size}
    return mc_integral(integrand, prop, Region(n - 1), samples, seed, **kw)


def harmonic_extension_oracle(b: Bubble, dom: Domain, x, samples: int = 100_000, seed: int = 0,
                              block_size: int | None = None) -> MCResult:
    """Poisson-integral Monte-Carlo estimate of the harmonic extension of U|boundary at x.

    Half-space: the boundary R^{N-1} is sampled from an equal mixture of the
    Poisson kernel at the foot of x (itself a Cauchy-type density) and a
    Cauchy-type density at the foot of xi with scale dist(xi).
    Ball: see :func:`ball_poisson_integral`, focused on the foot of xi.
    """
    if isinstance(dom, Annulus):
        raise ValueError("harmonic_extension_oracle: annulus has no Poisson kernel closed form")
    x = _arr(x).reshape(-1)
    n = dom.dim
    if isinstance(dom, Ball):
        dist = float(dom.dist_to_boundary(b.xi))
        return ball_poisson_integral(dom, x, lambda y: eval_bubble(b, y), b.xi,
                                     max(dist, b.delta), samples, seed, block_size)
    if not x[-1] > 0:
        raise ValueError("x must be interior")
    comps = [TComponent(x[:-1], x[-1], n / 2), TComponent(b.xi[:-1], b.xi[-1], n / 2)]
    prop = Proposal(n - 1, comps)
    pnorm = 2.0 * x[-1] / sphere_area(n)

    def integrand(yp):
        y = np.concatenate([yp, np.zeros((yp.shape[0], 1))], axis=1)
        d = y - x
        return pnorm * np.einsum("ij,ij->i", d, d) ** (-n / 2) * eval_bubble(b, y)

    kw = {} if block_size is None else {"block_size": block_size}
    return mc_integral(integrand, prop, Region(n - 1), samples, seed, **kw)
