"""Block-seeded, stratified mixture importance sampling.

A :class:`Proposal` is a finite mixture of radial Student-t components
(density proportional to (s^2 + |y - c|^2)^(-a)) plus an optional uniform
floor on a box. Samples are drawn with a deterministic allocation: every
block of ``block_size`` points gives each stratum its share rounded to
integers, and the estimator divides by the full mixture density (the
balance heuristic). Because the stratum counts are fixed, the variance
estimate is the within-stratum one.

Block ``b`` draws from ``SeedSequence([seed, b])``. Standardized draws
depend only on the seed, the block index and the stratum layout, so
two proposals with the same layout but different centers and scales see
common random numbers. Per-block partial sums are merged in block order
with compensated summation, which makes results independent of how
blocks are scheduled over threads.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from . import _core
from .bubbles import sphere_area

MIN_SAMPLES = 10_000
DEFAULT_BLOCK = 1 << 15


@dataclass(frozen=True, eq=False)
class TComponent:
    """Radial Student-t density proportional to (scale^2 + |y - center|^2)^(-power)."""

    center: np.ndarray
    scale: float
    power: float
    weight: float = 1.0

    def __post_init__(self):
        c = np.asarray(self.center, dtype=np.float64).reshape(-1)
        object.__setattr__(self, "center", c)
        if not self.scale > 0:
            raise ValueError(f"component scale must be positive, got {self.scale}")
        if not 2 * self.power > c.size:
            raise ValueError(f"power {self.power} not normalizable in dim {c.size}")
        if not self.weight > 0:
            raise ValueError("component weight must be positive")

    @property
    def dof(self) -> float:
        return 2 * self.power - self.center.size

    def log_norm(self) -> float:
        """log of the constant K with K (s^2 + r^2)^(-a) a probability density."""
        n, a = self.center.size, self.power
        log_radial = math.log(0.5) + special.betaln(n / 2, a - n / 2)
        return (2 * a - n) * math.log(self.scale) - math.log(sphere_area(n)) - log_radial


@dataclass(frozen=True, eq=False)
class Box:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=np.float64).reshape(-1)
        hi = np.asarray(self.hi, dtype=np.float64).reshape(-1)
        if lo.shape != hi.shape or np.any(hi <= lo):
            raise ValueError("box needs lo < hi coordinatewise")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self) -> int:
        return self.lo.size

    @property
    def volume(self) -> float:
        return float(np.prod(self.hi - self.lo))

    def contains(self, x) -> np.ndarray:
        return np.all((x >= self.lo) & (x <= self.hi), axis=-1)


@dataclass(frozen=True, eq=False)
class Region:
    """Integration region: an optional bounding box and an optional membership mask."""

    dim: int
    box: Box | None = None
    mask: object = None

    def indicator(self, x) -> np.ndarray:
        inside = np.ones(x.shape[0], dtype=bool)
        if self.box is not None:
            inside &= self.box.contains(x)
        if self.mask is not None:
            inside &= np.asarray(self.mask(x), dtype=bool)
        return inside


def whole_space(dim: int) -> Region:
    return Region(dim)


class Proposal:
    """Mixture of :class:`TComponent` strata plus an optional uniform floor."""

    def __init__(self, dim: int, components=(), box: Box | None = None, floor: float = 0.0):
        self.dim = int(dim)
        self.components = tuple(components)
        for c in self.components:
            if c.center.size != self.dim:
                raise ValueError("component center has the wrong dimension")
        if floor < 0 or (floor > 0 and box is None):
            raise ValueError("a uniform floor needs a box and a nonnegative weight")
        if not self.components and floor == 0:
            raise ValueError("empty proposal")
        self.box = box
        w = [c.weight for c in self.components] + ([floor] if floor > 0 else [])
        self.weights = np.asarray(w, dtype=np.float64) / sum(w)
        self._centers = np.array([c.center for c in self.components]).reshape(-1, self.dim)
        self._offsets = np.array([c.scale**2 for c in self.components], dtype=np.float64)
        self._powers = np.array([c.power for c in self.components], dtype=np.float64)
        self._lognorm = np.array([c.log_norm() for c in self.components], dtype=np.float64)

    @property
    def n_strata(self) -> int:
        return self.weights.size

    def layout(self) -> tuple:
        """Stratum signature; equal layouts share standardized draws."""
        return tuple(round(c.dof, 12) for c in self.components) + (
            ("uniform",) if self.n_strata > len(self.components) else ())

    def allocation(self, n: int) -> np.ndarray:
        """Largest-remainder split of ``n`` points over the strata."""
        raw = self.weights * n
        counts = np.floor(raw).astype(np.int64)
        rem = n - int(counts.sum())
        order = np.argsort(-(raw - counts), kind="stable")
        counts[order[:rem]] += 1
        return counts

    def draw(self, rng: np.random.Generator, counts) -> np.ndarray:
        parts = []
        for c, n_c in zip(self.components, counts):
            z = rng.standard_normal((int(n_c), self.dim))
            w = rng.chisquare(c.dof, int(n_c))
            parts.append(c.center + c.scale * z / np.sqrt(w)[:, None])
        if self.n_strata > len(self.components):
            u = rng.random((int(counts[-1]), self.dim))
            parts.append(self.box.lo + (self.box.hi - self.box.lo) * u)
        return np.concatenate(parts, axis=0)

    def pdf(self, x, fractions=None) -> np.ndarray:
        """Mixture density at ``x`` with stratum weights ``fractions``."""
        w = self.weights if fractions is None else np.asarray(fractions, dtype=np.float64)
        out = np.zeros(x.shape[0])
        if self.components:
            coef = w[: len(self.components)] * np.exp(self._lognorm)
            out += _core.power_sum(x, self._centers, self._offsets, self._powers, coef)
        if self.n_strata > len(self.components):
            out += w[-1] * self.box.contains(x) / self.box.volume
        return out


@dataclass
class MCResult:
    """Estimate with standard error; vector-valued when the integrand is."""

    value: float | np.ndarray
    stderr: float | np.ndarray
    samples: int
    cov: np.ndarray | None = None
    flags: list = field(default_factory=list)
    backend: str = _core.BACKEND

    @property
    def ok(self) -> bool:
        return not self.flags


def _block_stats(integrand, proposal, region, seed, block, n_block):
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, block])))
    counts = proposal.allocation(n_block)
    x = proposal.draw(rng, counts)
    q = proposal.pdf(x, counts / n_block)
    inside = region.indicator(x)
    if inside.any():
        vals = np.asarray(integrand(x[inside]), dtype=np.float64)
        vals = vals.reshape(int(inside.sum()), -1)
    else:
        width = np.asarray(integrand(x[:1]), dtype=np.float64).size
        vals = np.zeros((0, width))
    h = np.zeros((x.shape[0], vals.shape[1]))
    h[inside] = vals / q[inside, None]
    stats = []
    start = 0
    for n_c in counts:
        seg = h[start:start + n_c]
        start += n_c
        if n_c == 0:
            stats.append((0, np.zeros(h.shape[1]), np.zeros((h.shape[1],) * 2)))
            continue
        mean = seg.mean(axis=0)
        dev = seg - mean
        stats.append((int(n_c), seg.sum(axis=0), dev.T @ dev))
    peak = np.abs(h).max(axis=0)
    return stats, peak, np.abs(h).sum(axis=0)


def mc_integral(integrand, proposal: Proposal, region: Region | None = None, samples: int = 100_000,
                seed: int = 0, block_size: int = DEFAULT_BLOCK, workers: int = 1,
                rtol: float | None = None) -> MCResult:
    """Estimate the integral of ``integrand`` over ``region``.

    ``integrand`` maps an (n, dim) array of points inside the region to an
    (n,) or (n, m) array. Points drawn outside the region contribute zero.
    With ``rtol`` set, a relative standard error above it is flagged.
    """
    if samples < MIN_SAMPLES:
        raise ValueError(f"mc_integral needs at least {MIN_SAMPLES} samples, got {samples}")
    region = region or whole_space(proposal.dim)
    if region.dim != proposal.dim:
        raise ValueError("region and proposal dimensions differ")
    n_blocks = -(-samples // block_size)
    sizes = [block_size] * (n_blocks - 1) + [samples - block_size * (n_blocks - 1)]

    def run(b):
        return _block_stats(integrand, proposal, region, seed, b, sizes[b])

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, range(n_blocks)))
    else:
        results = [run(b) for b in range(n_blocks)]

    m = results[0][0][0][1].size
    n_str = proposal.n_strata
    value = np.empty(m)
    for j in range(m):
        value[j] = math.fsum(s[c][1][j] for s, _, _ in results for c in range(n_str)) / samples
    cov = np.zeros((m, m))
    for c in range(n_str):
        # Chan et al. pairwise merge of per-block centered second moments, in block order
        n_acc, mean_acc, m2_acc = 0, np.zeros(m), np.zeros((m, m))
        for s, _, _ in results:
            n_b, sum_b, m2_b = s[c]
            if n_b == 0:
                continue
            mean_b = sum_b / n_b
            tot = n_acc + n_b
            d = mean_b - mean_acc
            m2_acc = m2_acc + m2_b + np.outer(d, d) * (n_acc * n_b / tot)
            mean_acc = mean_acc + d * (n_b / tot)
            n_acc = tot
        if n_acc > 1:
            cov += m2_acc / (n_acc - 1) * n_acc
    cov /= samples**2
    stderr = np.sqrt(np.diag(cov))

    flags = []
    peak = np.max([r[1] for r in results], axis=0)
    mass = np.array([math.fsum(r[2][j] for r in results) for j in range(m)])
    if np.any(peak > 0.01 * np.where(mass > 0, mass, np.inf)):
        flags.append("heavy-tail: a single sample carries more than 1% of the absolute mass")
    if rtol is not None and np.any(stderr > rtol * np.abs(value)):
        flags.append(f"stderr above requested relative tolerance {rtol}")
    if m == 1:
        return MCResult(float(value[0]), float(stderr[0]), samples, cov, flags)
    return MCResult(value, stderr, samples, cov, flags)


def bubble_proposal(bubbles, power: float | None = None, box: Box | None = None,
                    floor: float = 0.0, weights=None) -> Proposal:
    """One t-component per bubble with the bubble's own scale.

    The default power N gives densities proportional to U_i^{2*}.
    """
    bubbles = list(bubbles)
    dim = bubbles[0].dim
    a = float(dim if power is None else power)
    ws = [1.0] * len(bubbles) if weights is None else list(weights)
    comps = [TComponent(b.xi, b.delta, a, w) for b, w in zip(bubbles, ws)]
    return Proposal(dim, comps, box=box, floor=floor)


def uniform_proposal(box: Box) -> Proposal:
    return Proposal(box.dim, (), box=box, floor=1.0)
