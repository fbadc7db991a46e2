"""Finite-dimensional reduction at the two scales.

First scale: the energy Psi(d, t) of a single bubble at height t eps^beta
above the boundary, its critical point (d0, t0) and the second-order
coefficients around it. Second scale: the cluster energy Phi(d, t, tau)
and the minimization of its tau part G over point configurations.

Sign conventions: ``s0`` is the outward normal derivative of u0 at the
concentration point (negative), and the centers are displaced along the
inward normal.
"""

from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import optimize

from .bubbles import UniversalConstants
from .geometry import BoundaryChart

# ---------------------------------------------------------------- exponents


@dataclass(frozen=True)
class ExponentLadder:
    dim: int
    alpha: Fraction
    beta: Fraction
    alpha_hat: Fraction
    beta_hat: Fraction
    beta_tilde: Fraction
    theta: Fraction
    theta_hat: Fraction

    def identities(self) -> dict:
        """Exact truth values of the defining relations."""
        n = self.dim
        return {
            "theta = 1 + 2 alpha": self.theta == 1 + 2 * self.alpha,
            "theta = (alpha - beta)(N-2)": self.theta == (self.alpha - self.beta) * (n - 2),
            "theta_hat = 1 + 2 alpha_hat": self.theta_hat == 1 + 2 * self.alpha_hat,
            "theta_hat = (alpha - beta_hat)(N-2)":
                self.theta_hat == (self.alpha - self.beta_hat) * (n - 2),
            "alpha < alpha_hat": self.alpha < self.alpha_hat,
            "beta_hat < beta < beta_tilde": self.beta_hat < self.beta < self.beta_tilde,
        }

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in
                ("alpha", "beta", "alpha_hat", "beta_hat", "beta_tilde", "theta", "theta_hat")}


def exponents(dim: int) -> ExponentLadder:
    """Rates of the two-scale ansatz in exact rational arithmetic."""
    if dim <= 5:
        raise ValueError(f"exponents need dim >= 6 (N^2 - 6N + 4 > 0); got dim={dim}")
    n = dim
    den = n * n - 6 * n + 4
    alpha = Fraction(2 * (n - 1), den)
    beta = Fraction(n - 2, den)
    alpha_hat = Fraction(3 * n * n - 6 * n + 4, n * den)
    beta_hat = Fraction((n - 2) ** 2, n * den)
    beta_tilde = Fraction(2 * n * n - 6 * n + 4, n * den)
    return ExponentLadder(n, alpha, beta, alpha_hat, beta_hat, beta_tilde,
                          (alpha - beta) * (n - 2), (alpha - beta_hat) * (n - 2))


# ---------------------------------------------------------------- first scale


def _check_dt(d, t):
    if not (np.all(np.asarray(d) > 0) and np.all(np.asarray(t) > 0)):
        raise ValueError("psi_first needs d > 0 and t > 0")


def psi_first(d, t, s0: float, consts: UniversalConstants):
    """Psi(d, t) = -C s0 d^m t + alpha_N/2^(N-1) C d^(N-2)/t^(N-2) - B d^2, m = (N-2)/2."""
    _check_dt(d, t)
    n, C, B, a = consts.dim, consts.C_const, consts.B_const, consts.alpha_N
    m = (n - 2) / 2
    return -C * s0 * d**m * t + a / 2 ** (n - 1) * C * d ** (n - 2) / t ** (n - 2) - B * d * d


def psi_first_grad(d, t, s0: float, consts: UniversalConstants) -> np.ndarray:
    _check_dt(d, t)
    n, C, B, a = consts.dim, consts.C_const, consts.B_const, consts.alpha_N
    m = (n - 2) / 2
    c = a / 2 ** (n - 1) * C
    gd = -C * s0 * m * d ** (m - 1) * t + c * (n - 2) * d ** (n - 3) / t ** (n - 2) - 2 * B * d
    gt = -C * s0 * d**m - c * (n - 2) * d ** (n - 2) / t ** (n - 1)
    return np.array([gd, gt])


def psi_first_hessian(d, t, s0: float, consts: UniversalConstants) -> np.ndarray:
    _check_dt(d, t)
    n, C, B, a = consts.dim, consts.C_const, consts.B_const, consts.alpha_N
    m = (n - 2) / 2
    c = a / 2 ** (n - 1) * C
    dd = (-C * s0 * m * (m - 1) * d ** (m - 2) * t
          + c * (n - 2) * (n - 3) * d ** (n - 4) / t ** (n - 2) - 2 * B)
    dt = -C * s0 * m * d ** (m - 1) - c * (n - 2) ** 2 * d ** (n - 3) / t ** (n - 1)
    tt = c * (n - 2) * (n - 1) * d ** (n - 2) / t**n
    return np.array([[dd, dt], [dt, tt]])


def printed_system(d, t, s0: float, consts: UniversalConstants):
    """The two equations of the critical-point system as printed, with their term lists.

    The second equation is dPsi/dt. The first lacks the factor (N-2) on its
    middle term compared with dPsi/dd, so the two systems have different roots.
    """
    n, C, B, a = consts.dim, consts.C_const, consts.B_const, consts.alpha_N
    m = (n - 2) / 2
    c = a / 2 ** (n - 1) * C
    eq1 = (-2 * B * d, c * d ** (n - 3) / t ** (n - 2), -C * m * d ** ((n - 4) / 2) * t * s0)
    eq2 = (-c * (n - 2) * d ** (n - 2) / t ** (n - 1), -C * d**m * s0)
    return eq1, eq2


def psi_fd_gradient(d, t, s0, consts, steps=(1e-3, 5e-4)) -> np.ndarray:
    """Richardson-extrapolated central-difference gradient of Psi.

    Steps are relative to the coordinate (h d and h t), which keeps the
    truncation error uniform over the solution family.
    """
    h1, h2 = steps
    ratio = (h1 / h2) ** 2

    def cd(h):
        hd, ht = h * d, h * t
        return np.array([
            (psi_first(d + hd, t, s0, consts) - psi_first(d - hd, t, s0, consts)) / (2 * hd),
            (psi_first(d, t + ht, s0, consts) - psi_first(d, t - ht, s0, consts)) / (2 * ht),
        ])

    return (ratio * cd(h2) - cd(h1)) / (ratio - 1)


@dataclass(frozen=True)
class FirstScalePoint:
    d0: float
    t0: float
    s0: float
    dim: int
    system: str = "gradient"
    residuals: dict = field(default_factory=dict, compare=False)
    iterations: int = 0


def t0_of_d(d, s0, consts):
    """t from the second equation: [(N-2) alpha_N d^m / (2^(N-1) |s0|)]^(1/(N-1))."""
    n, a = consts.dim, consts.alpha_N
    return ((n - 2) * a * d ** ((n - 2) / 2) / (2 ** (n - 1) * abs(s0))) ** (1 / (n - 1))


def _system_terms(d, t, s0, consts, system):
    if system == "printed":
        eq1, eq2 = printed_system(d, t, s0, consts)
        return eq1, eq2
    n, C, B, a = consts.dim, consts.C_const, consts.B_const, consts.alpha_N
    m = (n - 2) / 2
    c = a / 2 ** (n - 1) * C
    eq1 = (-C * s0 * m * d ** (m - 1) * t, c * (n - 2) * d ** (n - 3) / t ** (n - 2), -2 * B * d)
    _, eq2 = printed_system(d, t, s0, consts)
    return eq1, eq2


def _rel(terms):
    return abs(sum(terms)) / sum(abs(x) for x in terms)


def residuals_at(d, t, s0, consts, system="gradient") -> dict:
    """Absolute and term-relative residuals of both equations."""
    eq1, eq2 = _system_terms(d, t, s0, consts, system)
    p1, _ = printed_system(d, t, s0, consts)
    return {"eq1": abs(sum(eq1)), "eq2": abs(sum(eq2)),
            "eq1_rel": _rel(eq1), "eq2_rel": _rel(eq2),
            "printed_eq1": sum(p1), "grad_psi": psi_first_grad(d, t, s0, consts).tolist()}


def _newton_bracketed(f, fprime, lo, hi, xtol=1e-15, maxit=200):
    """Newton steps kept inside a shrinking sign-change bracket (bisection fallback)."""
    flo, fhi = f(lo), f(hi)
    if flo * fhi > 0:
        raise ArithmeticError("bracket has no sign change")
    x = 0.5 * (lo + hi)
    for it in range(1, maxit + 1):
        fx = f(x)
        if fx == 0:
            return x, it
        if (fx < 0) == (flo < 0):
            lo, flo = x, fx
        else:
            hi, fhi = x, fx
        step = fx / fprime(x)
        xn = x - step
        if not lo < xn < hi:
            xn = 0.5 * (lo + hi)
        if abs(xn - x) <= xtol * abs(x):
            return xn, it
        x = xn
    return x, maxit


def solve_first_order(s0: float, consts: UniversalConstants, system: str = "gradient",
                      scan=(1e-8, 1e8)) -> FirstScalePoint:
    """Solve the first-scale system for (d0, t0).

    t0 is eliminated with the second equation; the first is then solved in d0.
    ``system="gradient"`` uses dPsi/dd = 0 so the result is a genuine critical
    point of Psi; ``system="printed"`` uses the first equation exactly as printed.
    """
    if not s0 < 0:
        raise ValueError(f"s0 must be negative (Hopf lemma), got {s0}")
    if system not in ("gradient", "printed"):
        raise ValueError(f"system must be 'gradient' or 'printed', got {system!r}")
    n = consts.dim
    mexp = (n - 2) / 2 / (n - 1)

    def f(d):
        return sum(_system_terms(d, t0_of_d(d, s0, consts), s0, consts, system)[0]) / d

    def fprime(d):
        t = t0_of_d(d, s0, consts)
        if system == "gradient":
            h = psi_first_hessian(d, t, s0, consts)
            g = psi_first_grad(d, t, s0, consts)[0]
            dtdd = mexp * t / d
            return (h[0, 0] + h[0, 1] * dtdd) / d - g / d**2
        eps_d = 1e-7 * d
        return (f(d + eps_d) - f(d - eps_d)) / (2 * eps_d)

    grid = np.geomspace(scan[0], scan[1], 161)
    vals = np.array([f(d) for d in grid])
    sign_changes = np.nonzero(np.sign(vals[:-1]) != np.sign(vals[1:]))[0]
    if sign_changes.size == 0:
        raise ArithmeticError(f"no bracket for d0 in scan range {scan}")
    if sign_changes.size > 1:
        raise ArithmeticError(f"several roots for d0 in {scan}: brackets at {grid[sign_changes]}")
    i = sign_changes[0]
    d0, it = _newton_bracketed(f, fprime, grid[i], grid[i + 1])
    t0 = t0_of_d(d0, s0, consts)
    return FirstScalePoint(float(d0), float(t0), float(s0), n, system,
                           residuals_at(d0, t0, s0, consts, system), it)


def first_order_closed_form(s0: float, consts: UniversalConstants):
    """Independent closed form of the gradient-system root.

    With t = c_t d^(m/(N-1)) the first equation reads -2B d + K d^g = 0.
    """
    n, C, B, a = consts.dim, consts.C_const, consts.B_const, consts.alpha_N
    m = (n - 2) / 2
    ct = t0_of_d(1.0, s0, consts)
    g = m - 1 + m / (n - 1)
    K = C * abs(s0) * m * ct + a / 2 ** (n - 1) * C * (n - 2) * ct ** (-(n - 2))
    d0 = (2 * B / K) ** (1 / (g - 1))
    return d0, t0_of_d(d0, s0, consts)


# ---------------------------------------------------------------- second order


@dataclass(frozen=True)
class SecondScaleCoeffs:
    """Coefficients of sum d_i^2, sum t_i d_i, sum t_i^2 and the zero-order bracket.

    ``frak_A``, ``frak_B``, ``frak_C`` are the printed expressions.
    ``frak_A_post`` is the printed form after substituting the first equation,
    ``frak_B_reduced`` the printed B after substituting the second one, and the
    ``*_taylor`` entries are the exact second-order Taylor coefficients of Psi.
    """

    frak_A: float
    frak_B: float
    frak_C: float
    g0: float
    frak_A_post: float
    frak_B_reduced: float
    frak_A_taylor: float
    frak_B_taylor: float
    frak_C_taylor: float
    notes: tuple = ()

    @property
    def A_positive(self) -> bool:
        return self.frak_A > 0

    @property
    def C_positive(self) -> bool:
        return self.frak_C > 0


def second_order_coeffs(fp: FirstScalePoint, consts: UniversalConstants) -> SecondScaleCoeffs:
    n, C, B, a = consts.dim, consts.C_const, consts.B_const, consts.alpha_N
    d0, t0, s0 = fp.d0, fp.t0, fp.s0
    A_v = (-B + a * (n - 2) * (n - 3) / 2**n * d0 ** (n - 4) / t0 ** (n - 2) * C
           - C * (n - 2) * (n - 4) / 4 * d0 ** ((n - 6) / 2) * t0 * s0)
    A_p = (a * (n * n - 5 * n + 5) / 2**n * d0 ** (n - 4) / t0 ** (n - 2) * C
           - C * (n - 2) * (n - 5) / 4 * d0 ** ((n - 6) / 2) * t0 * s0)
    B_v = (-a * (n - 2) ** 2 / 2 ** (n - 1) * d0 ** (n - 3) / t0 ** (n - 1) * C
           - C * (n - 2) / 2 * d0 ** ((n - 4) / 2) * s0)
    B_r = -a * (n - 2) ** 2 * C * d0 ** (n - 3) / (2**n * t0 ** (n - 1))
    C_v = a * (n - 2) * (n - 1) / 2**n * d0 ** (n - 2) / t0**n * C
    h = psi_first_hessian(d0, t0, s0, consts)
    notes = [f"printed B evaluates to {B_v:.12g}, not 0; its reduction under the second "
             f"equation is {B_r:.12g}"]
    if abs(A_v - A_p) > 1e-10 * abs(A_v):
        notes.append(f"the two printed forms of A differ by {A_v - A_p:.6g} = printed first "
                     f"equation / (2 d0); they agree only where that equation holds")
    notes.append(f"exact Taylor coefficient Psi_dd/2 = {h[0, 0] / 2:.12g} (printed A uses "
                 f"(N-2)(N-4)/4 where the Taylor expansion has (N-2)(N-4)/8)")
    return SecondScaleCoeffs(A_v, B_v, C_v, float(psi_first(d0, t0, s0, consts)), A_p, B_r,
                             h[0, 0] / 2, h[0, 1], h[1, 1] / 2, tuple(notes))


# ---------------------------------------------------------------- second scale


@dataclass(frozen=True, eq=False)
class ClusterParams:
    eps: float
    first: FirstScalePoint
    d: np.ndarray
    t: np.ndarray
    tau: np.ndarray
    chart: BoundaryChart | None = None
    deltas: np.ndarray | None = None
    xis: np.ndarray | None = None
    hat_xis: np.ndarray | None = None

    @property
    def k(self) -> int:
        return self.tau.shape[0]

    def bubbles(self):
        from .bubbles import Bubble

        if self.deltas is None:
            raise ValueError("cluster not assembled")
        return [Bubble(dl, xi, self.first.dim) for dl, xi in zip(self.deltas, self.xis)]


def _validate_cluster(d, t, tau, rho, box):
    d, t = np.atleast_1d(np.asarray(d, float)), np.atleast_1d(np.asarray(t, float))
    tau = np.atleast_2d(np.asarray(tau, float))
    k = tau.shape[0]
    if d.shape != (k,) or t.shape != (k,):
        raise ValueError("d, t and tau must describe the same number of bubbles")
    if np.any(np.abs(d) >= box) or np.any(np.abs(t) >= box):
        raise ValueError(f"|d_i| and |t_i| must stay below a={box}")
    for i, h in itertools.combinations(range(k), 2):
        if np.linalg.norm(tau[i] - tau[h]) <= rho:
            raise ValueError(f"tau_{i} and tau_{h} closer than rho={rho}")
    return d, t, tau


def _g_constants(fp, consts):
    n, C, a = consts.dim, consts.C_const, consts.alpha_N
    return a * C * fp.d0 ** (n - 2), C / 2 * fp.d0 ** ((n - 2) / 2) * fp.t0


def phi_second(params: ClusterParams, coeffs: SecondScaleCoeffs, A, consts: UniversalConstants,
               b_term: bool = False, rho: float = 1e-3, box: float = 10.0) -> float:
    """Phi = A sum d^2 + C sum t^2 - G(tau) (+ B sum t d when ``b_term``)."""
    d, t, tau = _validate_cluster(params.d, params.t, params.tau, rho, box)
    val = coeffs.frak_A * np.sum(d * d) + coeffs.frak_C * np.sum(t * t)
    if b_term:
        val += coeffs.frak_B * np.sum(t * d)
    return float(val - cluster_G(tau, A, params.first, consts))


def phi_second_grad(params: ClusterParams, coeffs, A, consts, b_term: bool = False):
    """Gradients of Phi in (d, t, tau)."""
    d, t, tau = (np.asarray(params.d, float), np.asarray(params.t, float),
                 np.atleast_2d(np.asarray(params.tau, float)))
    gd = 2 * coeffs.frak_A * d + (coeffs.frak_B * t if b_term else 0)
    gt = 2 * coeffs.frak_C * t + (coeffs.frak_B * d if b_term else 0)
    return gd, gt, -cluster_G_grad(tau, A, params.first, consts)


def cluster_G(tau, A, fp: FirstScalePoint, consts: UniversalConstants) -> float:
    """G(tau) = alpha_N C d0^(N-2) sum_{h<i} |tau_i - tau_h|^(2-N) + C/2 d0^m t0 sum <A tau, tau>."""
    tau = np.atleast_2d(np.asarray(tau, float))
    n = consts.dim
    c_int, c_trap = _g_constants(fp, consts)
    k = tau.shape[0]
    inter = 0.0
    for i in range(k):
        for h in range(i):
            inter += np.linalg.norm(tau[i] - tau[h]) ** (2 - n)
    trap = float(np.einsum("ij,jk,ik->", tau, np.asarray(A, float), tau))
    return c_int * inter + c_trap * trap


def cluster_G_grad(tau, A, fp, consts) -> np.ndarray:
    tau = np.atleast_2d(np.asarray(tau, float))
    n = consts.dim
    c_int, c_trap = _g_constants(fp, consts)
    diff = tau[:, None, :] - tau[None, :, :]
    r2 = np.einsum("ijk,ijk->ij", diff, diff)
    np.fill_diagonal(r2, 1.0)
    w = (2 - n) * r2 ** (-n / 2)
    np.fill_diagonal(w, 0.0)
    return c_int * np.einsum("ij,ijk->ik", w, diff) + 2 * c_trap * tau @ np.asarray(A, float)


def cluster_G_hessian(tau, A, fp, consts) -> np.ndarray:
    tau = np.atleast_2d(np.asarray(tau, float))
    k, n1 = tau.shape
    n = consts.dim
    c_int, c_trap = _g_constants(fp, consts)
    H = np.zeros((k * n1, k * n1))
    eye = np.eye(n1)
    for i in range(k):
        H[i * n1:(i + 1) * n1, i * n1:(i + 1) * n1] += 2 * c_trap * np.asarray(A, float)
        for h in range(k):
            if h == i:
                continue
            dv = tau[i] - tau[h]
            r2 = dv @ dv
            blk = c_int * (2 - n) * r2 ** (-n / 2) * (eye - n * np.outer(dv, dv) / r2)
            H[i * n1:(i + 1) * n1, i * n1:(i + 1) * n1] += blk
            H[i * n1:(i + 1) * n1, h * n1:(h + 1) * n1] -= blk
    return H


def pair_radius(A_scale: float, fp: FirstScalePoint, consts: UniversalConstants) -> float:
    """Radius of the antipodal two-point critical configuration for A = lambda I."""
    n, a = consts.dim, consts.alpha_N
    return ((n - 2) * a * fp.d0 ** ((n - 2) / 2) / (2 ** (n - 1) * fp.t0 * A_scale)) ** (1 / n)


def rotational_modes(tau, A) -> np.ndarray:
    """Orthonormal basis of tangent vectors to the orbit of tau under rotations commuting with A."""
    tau = np.atleast_2d(np.asarray(tau, float))
    n1 = tau.shape[1]
    A = np.asarray(A, float)
    gens = []
    for a_, b_ in itertools.combinations(range(n1), 2):
        E = np.zeros((n1, n1))
        E[a_, b_], E[b_, a_] = 1.0, -1.0
        gens.append(E)
    if not gens:
        return np.zeros((tau.size, 0))
    M = np.array([(E @ A - A @ E).ravel() for E in gens]).T
    _, s, vt = np.linalg.svd(M)
    tol = 1e-12 * max(1.0, s.max() if s.size else 1.0)
    rank = int(np.sum(s > tol))
    comm = vt[rank:]
    vecs = np.array([(tau @ sum(c * E for c, E in zip(coef, gens)).T).ravel() for coef in comm])
    if vecs.size == 0:
        return np.zeros((tau.size, 0))
    u, s, _ = np.linalg.svd(vecs.T, full_matrices=False)
    keep = s > 1e-10 * max(1.0, s.max())
    return u[:, keep]


@dataclass
class ClusterOptimum:
    tau: np.ndarray
    G: float
    grad_norm: float
    hessian_eigs: np.ndarray
    n_null: int
    n_rotational: int
    null_in_rotations: float
    center_of_mass: np.ndarray
    newton_iterations: int
    starts: list = field(default_factory=list)

    @property
    def psd_with_rotational_null_only(self) -> bool:
        return (self.n_null == self.n_rotational and self.null_in_rotations < 1e-6
                and bool(np.all(self.hessian_eigs > -1e-8 * max(1.0, abs(self.hessian_eigs).max()))))


def _canonical(tau):
    return tau[np.lexsort(tau.T[::-1])]


def _newton_polish(x, A, fp, consts, k, n1, tol=1e-10, maxit=50):
    it = 0
    for it in range(1, maxit + 1):
        tau = x.reshape(k, n1)
        g = cluster_G_grad(tau, A, fp, consts).ravel()
        if np.linalg.norm(g) <= tol:
            return x, it - 1
        H = cluster_G_hessian(tau, A, fp, consts)
        w, v = np.linalg.eigh(H)
        keep = np.abs(w) > 1e-10 * np.abs(w).max()
        step = v[:, keep] @ ((v[:, keep].T @ g) / w[keep])
        x = x - step
    return x, it


def optimize_cluster(k: int, A, fp: FirstScalePoint, coeffs: SecondScaleCoeffs | None,
                     consts: UniversalConstants, seed: int = 0, n_starts: int | None = None,
                     rho: float = 1e-3, workers: int = 1) -> ClusterOptimum:
    """Minimize G over k-point configurations in R^(N-1) by multistart BFGS plus Newton.

    ``coeffs`` is accepted for interface symmetry; G depends only on (d0, t0).
    """
    A = np.atleast_2d(np.asarray(A, float))
    n1 = consts.dim - 1
    if A.shape != (n1, n1) or not np.allclose(A, A.T):
        raise ValueError(f"A must be a symmetric ({n1}, {n1}) matrix")
    evals = np.linalg.eigvalsh(A)
    if not np.all(evals > 0):
        raise ValueError("A must be positive definite")
    if k < 1:
        raise ValueError("k must be at least 1")
    if k == 1:
        tau = np.zeros((1, n1))
        H = cluster_G_hessian(tau, A, fp, consts)
        return ClusterOptimum(tau, 0.0, 0.0, np.linalg.eigvalsh(H), 0, 0, 0.0, np.zeros(n1), 0)
    n_starts = max(8, 2 * k) if n_starts is None else n_starts
    scale = pair_radius(float(np.mean(evals)), fp, consts)
    cov_chol = np.linalg.cholesky(np.linalg.inv(A) * float(np.mean(evals)))
    rng = np.random.default_rng(np.random.SeedSequence([seed, k]))
    x0s = [(scale * rng.standard_normal((k, n1)) @ cov_chol.T).ravel() for _ in range(n_starts)]
    c_trap = _g_constants(fp, consts)[1]

    def fun(x):
        tau = x.reshape(k, n1)
        diff = tau[:, None, :] - tau[None, :, :]
        r2 = np.einsum("ijk,ijk->ij", diff, diff)[np.triu_indices(k, 1)]
        if np.any(r2 <= 0):
            return np.inf, np.zeros_like(x)
        return (cluster_G(tau, A, fp, consts) / c_trap,
                cluster_G_grad(tau, A, fp, consts).ravel() / c_trap)

    def run(x0):
        res = optimize.minimize(fun, x0, jac=True, method="BFGS",
                                options={"gtol": 1e-9 * scale, "maxiter": 5000})
        x, its = _newton_polish(res.x, A, fp, consts, k, n1)
        tau = _canonical(x.reshape(k, n1))
        return tau, cluster_G(tau, A, fp, consts), its

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, x0s))
    else:
        results = [run(x0) for x0 in x0s]

    admissible = []
    for tau, G, its in results:
        dists = [np.linalg.norm(tau[i] - tau[h]) for i, h in itertools.combinations(range(k), 2)]
        if min(dists) > rho and np.isfinite(G):
            admissible.append((tau, G, its))
    if not admissible:
        raise ArithmeticError("no admissible local minimizer found")
    gmin = min(G for _, G, _ in admissible)
    ties = [r for r in admissible if r[1] <= gmin + 1e-12 * abs(gmin)]
    tau, G, its = min(ties, key=lambda r: tuple(r[0].ravel()))

    grad = cluster_G_grad(tau, A, fp, consts).ravel()
    H = cluster_G_hessian(tau, A, fp, consts)
    w, v = np.linalg.eigh(H)
    null = np.abs(w) <= 1e-8 * np.abs(w).max()
    rot = rotational_modes(tau, A)
    if null.any() and rot.shape[1]:
        vn = v[:, null]
        null_res = float(np.linalg.norm(vn - rot @ (rot.T @ vn)))
    else:
        null_res = 0.0 if not null.any() else 1.0
    starts = [{"G": float(g), "newton_iterations": int(i)} for _, g, i in results]
    return ClusterOptimum(tau, float(G), float(np.linalg.norm(grad)), w, int(null.sum()),
                          int(rot.shape[1]), null_res, tau.mean(axis=0), int(its), starts)


def assemble_cluster(eps: float, fp: FirstScalePoint, d, t, tau, chart: BoundaryChart,
                     ladder: ExponentLadder | None = None, rho: float = 1e-3,
                     box: float = 10.0) -> ClusterParams:
    """Concrete scales and centers of the cluster at a given eps."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    d, t, tau = _validate_cluster(d, t, tau, rho, box)
    lad = ladder or exponents(fp.dim)
    al, ah = float(lad.alpha), float(lad.alpha_hat)
    be, bh, bt = float(lad.beta), float(lad.beta_hat), float(lad.beta_tilde)
    deltas = eps**al * fp.d0 + eps**ah * d
    if np.any(deltas <= 0):
        raise ValueError(f"eps={eps} too large: some delta_i <= 0")
    hat = chart.point(eps**bh * tau)
    nu_in = chart.inward_normal(hat)
    heights = eps**be * fp.t0 + eps**bt * t
    if np.any(heights <= 0):
        raise ValueError(f"eps={eps} too large: some displacement eps^beta t0 + eps^beta~ t_i <= 0")
    xis = hat + heights[:, None] * nu_in
    if not np.all(chart.domain.contains(xis)):
        raise ValueError(f"eps={eps} too large: some xi_i is not interior")
    return ClusterParams(float(eps), fp, d, t, tau, chart, deltas, xis, hat)
