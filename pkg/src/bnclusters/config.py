"""Run configuration: one YAML file, fully resolved before anything runs."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

DEFAULT_TOLERANCES = {
    "solver_residual": 1e-12,
    "fd_gradient": 1e-8,
    "coefficients": 1e-10,
    "constants_gap": 1e-10,
    "pair_radius": 1e-6,
    "cluster_gradient": 1e-8,
    "triangle_sides": 1e-6,
    "interaction": 0.02,
    "u0_coupling": 0.02,
    "l2": 0.02,
    "self_H": 0.05,
    "zero_order_slope": 0.15,
    "first_order_sigma": 3.0,
    "second_order_phi": 0.10,
    "residual_slack": 0.2,
}

DEFAULT_TERM_CHECKS = {
    "interaction_delta": 1e-3,
    "separation": 0.1,
    "coupling_delta": 1e-4,
    "coupling_dist": 0.05,
    "self_H_delta": 1e-3,
    "self_H_dist": 0.1,
    "l2_delta": 1e-3,
    "l2_dist": 0.1,
    "l2_eps": 1e-3,
}


@dataclass
class RunConfig:
    dim: int = 7
    domain: dict = field(default_factory=lambda: {"tag": "half-space"})
    u0: dict = field(default_factory=lambda: {"kind": "mock", "cutoff": 1.0})
    s0: float = -1.0
    A: list | None = None
    k: int = 2
    eps_grid: list = field(default_factory=lambda: [1e-2, 3e-3, 1e-3, 3e-4, 1e-4])
    samples: int = 1_000_000
    residual_samples: int = 400_000
    seed: int = 0
    block_size: int = 1 << 15
    workers: int = 1
    system: str = "gradient"
    b_term: bool = False
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    term_checks: dict = field(default_factory=lambda: dict(DEFAULT_TERM_CHECKS))
    out: str = "results"

    def __post_init__(self):
        self.tolerances = {**DEFAULT_TOLERANCES, **(self.tolerances or {})}
        self.term_checks = {**DEFAULT_TERM_CHECKS, **(self.term_checks or {})}
        self.eps_grid = [float(e) for e in self.eps_grid]
        self.s0, self.dim, self.k = float(self.s0), int(self.dim), int(self.k)
        self.samples, self.seed = int(self.samples), int(self.seed)

    def A_matrix(self) -> np.ndarray:
        n1 = self.dim - 1
        if self.A is None:
            return np.eye(n1)
        a = np.asarray(self.A, dtype=np.float64)
        if a.ndim == 0:
            return float(a) * np.eye(n1)
        if a.ndim == 1:
            return np.diag(a)
        if a.shape != (n1, n1):
            raise ValueError(f"A must be {n1}x{n1}, got shape {a.shape}")
        return a

    def u0_config(self) -> dict:
        cfg = dict(self.u0)
        if cfg.get("kind", "mock") == "mock":
            cfg.setdefault("s0", self.s0)
            cfg.setdefault("A", self.A_matrix().tolist())
        return cfg

    def mc_kwargs(self) -> dict:
        return {"block_size": int(self.block_size), "workers": int(self.workers)}

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def dump(self, path) -> None:
        Path(path).write_text(yaml.safe_dump(self.to_dict(), sort_keys=False))

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        extra = set(data) - known
        if extra:
            raise ValueError(f"unknown config keys: {sorted(extra)}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "RunConfig":
        data = yaml.safe_load(Path(path).read_text()) or {}
        if not isinstance(data, dict):
            raise ValueError(f"{path}: expected a mapping at the top level")
        return cls.from_dict(data)
