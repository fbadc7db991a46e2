"""Command-line entry point.

    bnclusters constants   --dim 7
    bnclusters solve-base  --config run.yaml
    bnclusters cluster     --config run.yaml --out results/
    bnclusters sweep       --config run.yaml --seed 3 --samples 200000
    bnclusters verify-terms

Every command writes ``<cmd>.json`` (results plus tolerance checks),
``<cmd>.csv`` (a flat table) and ``config.yaml`` (the resolved RunConfig)
into ``--out``. The exit status is 1 when a declared tolerance failed and
2 on invalid input.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import math
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import _core
from .background import u0_from_config
from .bubbles import Bubble, universal_constants
from .config import RunConfig
from .geometry import HalfSpace, ProjectedBubble, chart_for
from .reduction import (assemble_cluster, exponents, optimize_cluster, pair_radius,
                        psi_fd_gradient, second_order_coeffs, solve_first_order)


def _plain(obj):
    """Recursively convert to JSON-friendly builtins (floats keep full repr precision)."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    if isinstance(obj, Fraction):
        return f"{obj.numerator}/{obj.denominator}"
    return obj


class Report:
    """Results, tolerance checks and a flat table for one command."""

    def __init__(self, command: str, cfg: RunConfig):
        self.command = command
        self.cfg = cfg
        self.results: dict = {}
        self.checks: list = []
        self.table: list = []

    def check(self, name: str, passed: bool, value=None, tol=None, note: str | None = None):
        entry = {"name": name, "pass": bool(passed), "value": value, "tol": tol}
        if note:
            entry["note"] = note
        self.checks.append(entry)
        return passed

    @property
    def passed(self) -> bool:
        return all(c["pass"] for c in self.checks)

    def payload(self) -> dict:
        return _plain({"command": self.command, "backend": _core.BACKEND, "passed": self.passed,
                       "checks": self.checks, "results": self.results})

    def write(self, out: Path) -> None:
        out.mkdir(parents=True, exist_ok=True)
        self.cfg.dump(out / "config.yaml")
        (out / f"{self.command}.json").write_text(
            json.dumps(self.payload(), indent=2, sort_keys=False) + "\n")
        write_csv(out / f"{self.command}.csv", self.table)

    def summary(self) -> str:
        lines = [f"{self.command}: {'PASS' if self.passed else 'FAIL'}"]
        for c in self.checks:
            v = _plain(c["value"])
            if isinstance(v, list):
                vs = "[" + ", ".join(f"{x:.6g}" for x in v) + "]"
            else:
                vs = f"{v:.6g}" if isinstance(v, float) else str(v)
            lines.append(f"  [{'PASS' if c['pass'] else 'FAIL'}] {c['name']}: {vs}"
                         + (f" (tol {c['tol']})" if c["tol"] is not None else ""))
        return "\n".join(lines)


def write_csv(path: Path, rows: list) -> None:
    rows = [_plain(r) for r in rows]
    cols: list = []
    for r in rows:
        cols += [c for c in r if c not in cols]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({c: (repr(v) if isinstance(v, float) else v) for c, v in r.items()})


# ---------------------------------------------------------------- commands


def _require_theory_dim(dim: int):
    if dim < 7:
        raise ValueError(f"dim={dim}: the construction needs N >= 7 "
                         "(the L^2 term and the exponent ladder require it)")


def cmd_constants(cfg: RunConfig) -> Report:
    _require_theory_dim(cfg.dim)
    rep = Report("constants", cfg)
    tol = cfg.tolerances
    c = universal_constants(cfg.dim)
    lad = exponents(cfg.dim)
    ladder = {k: {"exact": v, "decimal": float(v)} for k, v in lad.as_dict().items()}
    rep.results = {
        "dim": cfg.dim, "alpha_N": c.alpha_N,
        "C_const": {"beta": c.C_const, "quadrature": c.quadrature["C_const"]},
        "B_const": {"beta": c.B_const, "quadrature": c.quadrature["B_const"]},
        "int_U_2star": {"beta": c.int_U_2star, "quadrature": c.quadrature["int_U_2star"]},
        "max_rel_gap": c.max_rel_gap, "exponents": ladder,
        "identities": lad.identities(),
    }
    rep.check("beta vs quadrature", c.max_rel_gap <= tol["constants_gap"], c.max_rel_gap,
              tol["constants_gap"])
    rep.check("exponent identities", all(lad.identities().values()), None)
    rep.table = ([{"name": "alpha_N", "value": c.alpha_N, "exact": ""}]
                 + [{"name": k, "value": getattr(c, k), "exact": ""}
                    for k in ("C_const", "B_const", "int_U_2star")]
                 + [{"name": k, "value": float(v), "exact": _plain(v)}
                    for k, v in lad.as_dict().items()])
    return rep


def _base(cfg: RunConfig):
    _require_theory_dim(cfg.dim)
    consts = universal_constants(cfg.dim)
    fp = solve_first_order(cfg.s0, consts, cfg.system)
    return consts, fp, second_order_coeffs(fp, consts)


def cmd_solve_base(cfg: RunConfig) -> Report:
    rep = Report("solve-base", cfg)
    tol = cfg.tolerances
    consts, fp, co = _base(cfg)
    fp_printed = solve_first_order(cfg.s0, consts, "printed")
    co_printed = second_order_coeffs(fp_printed, consts)
    fd = psi_fd_gradient(fp.d0, fp.t0, fp.s0, consts)
    res_max = max(fp.residuals["eq1"], fp.residuals["eq2"])
    a_gap = abs(co_printed.frak_A - co_printed.frak_A_post) / abs(co_printed.frak_A)
    b_gap = abs(co.frak_B - co.frak_B_reduced) / abs(co.frak_B_reduced)
    rep.results = {
        "d0": fp.d0, "t0": fp.t0, "s0": fp.s0, "system": fp.system,
        "residuals": fp.residuals, "fd_gradient": fd, "iterations": fp.iterations,
        "frak_A": co.frak_A, "frak_B": co.frak_B, "frak_C": co.frak_C, "g0": co.g0,
        "frak_A_post": co.frak_A_post, "frak_B_reduced": co.frak_B_reduced,
        "taylor": {"A": co.frak_A_taylor, "B": co.frak_B_taylor, "C": co.frak_C_taylor},
        "A_positive": co.A_positive, "C_positive": co.C_positive,
        "printed_system": {"d0": fp_printed.d0, "t0": fp_printed.t0,
                           "frak_A": co_printed.frak_A, "frak_A_post": co_printed.frak_A_post},
        "B_nonzero_note": f"B evaluates to {co.frak_B:.12g}, not the assumed B := 0",
        "notes": list(co.notes),
    }
    rep.check("solver residuals", res_max <= tol["solver_residual"], res_max,
              tol["solver_residual"])
    rep.check("FD gradient of Psi", float(np.linalg.norm(fd)) <= tol["fd_gradient"],
              float(np.linalg.norm(fd)), tol["fd_gradient"])
    rep.check("A > 0", co.A_positive, co.frak_A)
    rep.check("C > 0", co.C_positive, co.frak_C)
    rep.check("two printed forms of A (printed-system root)", a_gap <= tol["coefficients"], a_gap,
              tol["coefficients"])
    rep.check("B matches its reduction", b_gap <= tol["coefficients"], b_gap,
              tol["coefficients"])
    rep.check("B deviates from the assumed B := 0", co.frak_B != 0, co.frak_B,
              note="flag, not a tolerance")
    rep.table = [{"quantity": k, "value": rep.results[k]}
                 for k in ("d0", "t0", "s0", "frak_A", "frak_B", "frak_C", "g0", "frak_A_post",
                           "frak_B_reduced")]
    return rep


def _scalar_multiple_of_identity(A):
    lam = float(np.trace(A)) / A.shape[0]
    return lam if np.allclose(A, lam * np.eye(A.shape[0]), rtol=0, atol=1e-14 * abs(lam)) else None


def cmd_cluster(cfg: RunConfig) -> Report:
    rep = Report("cluster", cfg)
    tol = cfg.tolerances
    consts, fp, co = _base(cfg)
    A = cfg.A_matrix()
    opt = optimize_cluster(cfg.k, A, fp, co, consts, seed=cfg.seed, workers=cfg.workers)
    tau = opt.tau
    rep.results = {"k": cfg.k, "tau": tau, "G": opt.G, "grad_norm": opt.grad_norm,
                   "hessian_eigs": opt.hessian_eigs, "n_null": opt.n_null,
                   "n_rotational": opt.n_rotational, "center_of_mass": opt.center_of_mass,
                   "d0": fp.d0, "t0": fp.t0}
    rep.check("gradient norm", opt.grad_norm <= tol["cluster_gradient"], opt.grad_norm,
              tol["cluster_gradient"])
    rep.check("Hessian PSD, null modes rotational", opt.psd_with_rotational_null_only,
              opt.n_null)
    lam = _scalar_multiple_of_identity(A)
    if cfg.k == 2 and lam is not None:
        r_opt = float(np.linalg.norm(tau[0] - tau[1])) / 2
        r_cf = pair_radius(lam, fp, consts)
        rel = abs(r_opt - r_cf) / r_cf
        rep.results["pair_radius"] = {"optimizer": r_opt, "closed_form": r_cf, "rel_gap": rel}
        rep.check("pair radius vs closed form", rel <= tol["pair_radius"], rel, tol["pair_radius"])
    if cfg.k == 3 and lam is not None:
        sides = [float(np.linalg.norm(tau[i] - tau[j]))
                 for i, j in itertools.combinations(range(3), 2)]
        spread = (max(sides) - min(sides)) / max(sides)
        rep.results["triangle_sides"] = sides
        rep.check("equilateral triangle", spread <= tol["triangle_sides"], spread,
                  tol["triangle_sides"])
    dom = u0_from_config(cfg.u0_config(), cfg.dim).domain
    chart = chart_for(dom)
    zeros = np.zeros(cfg.k)
    for eps in cfg.eps_grid:
        cl = assemble_cluster(eps, fp, zeros, zeros, tau, chart)
        for i, (dl, xi) in enumerate(zip(cl.deltas, cl.xis)):
            rep.table.append({"eps": eps, "i": i, "delta": float(dl),
                              **{f"xi_{j + 1}": float(v) for j, v in enumerate(xi)}})
    rep.results["assembled"] = rep.table
    return rep


def cmd_sweep(cfg: RunConfig, out: Path | None = None) -> Report:
    from .verify import expansion_report, residual_sweep

    rep = Report("sweep", cfg)
    tol = cfg.tolerances
    consts, fp, co = _base(cfg)
    A = cfg.A_matrix()
    u0 = u0_from_config(cfg.u0_config(), cfg.dim)
    opt = optimize_cluster(cfg.k, A, fp, co, consts, seed=cfg.seed, workers=cfg.workers)
    partial: list = []

    def flush(row):
        partial.append({k: v for k, v in row.items() if not isinstance(v, (list, dict))})
        if out is not None:
            out.mkdir(parents=True, exist_ok=True)
            write_csv(out / "sweep.csv", partial)

    sw = expansion_report(fp, co, opt.tau, cfg.eps_grid, cfg.samples, cfg.seed, u0, consts,
                          b_term=cfg.b_term, n_sigma=tol["first_order_sigma"],
                          slope_tol=tol["zero_order_slope"], phi_tol=tol["second_order_phi"],
                          on_row=flush, on_error="skip", **cfg.mc_kwargs())
    res = residual_sweep(fp, opt.tau, cfg.eps_grid, cfg.residual_samples, cfg.seed, u0,
                         slack=tol["residual_slack"], **cfg.mc_kwargs())
    rep.results = {"tau": opt.tau, "eps": sw.eps, "rows": sw.rows, "slopes": sw.slopes,
                   "constants": sw.constants, "expansion_checks": sw.checks,
                   "dropped": sw.dropped, "notes": sw.notes,
                   "residual": {"eps": res.eps, "norm": res.norms, "stderr": res.stderr,
                                "relative": res.relative, "slope": res.slope,
                                "target": res.target, "flags": res.flags}}
    ck = sw.checks
    rep.check("zero-order slope", ck["zero_order_slope"]["pass"], ck["zero_order_slope"]["value"],
              tol["zero_order_slope"])
    rep.check("first-order combination vanishes", ck["first_order_vanishes"]["pass"], None,
              f"{tol['first_order_sigma']} stderr")
    rep.check("second order vs Phi", ck["second_order_vs_Phi"]["pass"],
              ck["second_order_vs_Phi"]["ratio"], tol["second_order_phi"])
    rep.check("bookkeeping identity", ck["bookkeeping"]["pass"], ck["bookkeeping"]["max_gap"])
    rep.check("residual slope", res.passed, res.slope, f">= {res.target:.6g}")
    rep.table = sw.table()
    for row in rep.table:
        if row["eps"] in res.eps:
            j = res.eps.index(row["eps"])
            row["residual"], row["residual_err"] = res.norms[j], res.stderr[j]
    return rep


def cmd_verify_terms(cfg: RunConfig) -> Report:
    from .verify import (interaction_integral_check, l2_term_check, self_H_check,
                         u0_coupling_check)

    _require_theory_dim(cfg.dim)
    rep = Report("verify-terms", cfg)
    tol, tc = cfg.tolerances, cfg.term_checks
    n, S, seed, kw = cfg.dim, cfg.samples, cfg.seed, cfg.mc_kwargs()
    e_n = np.eye(n)[-1]
    e_1 = np.eye(n)[0]
    u0 = u0_from_config(cfg.u0_config(), n)
    if not isinstance(u0.domain, HalfSpace):
        raise ValueError("verify-terms runs on the half-space")
    dl, sep = tc["interaction_delta"], tc["separation"]
    bi = Bubble(dl, 0.5 * e_n, n)
    bh = Bubble(dl, 0.5 * e_n + sep * e_1, n)
    checks = [
        ("interaction", interaction_integral_check(bi, bh, S, seed, **kw), tol["interaction"]),
        ("interaction swapped", interaction_integral_check(bh, bi, S, seed, **kw),
         tol["interaction"]),
        ("u0 coupling", u0_coupling_check(Bubble(tc["coupling_delta"], tc["coupling_dist"] * e_n,
                                                 n), u0, S, seed, **kw), tol["u0_coupling"]),
        ("l2", l2_term_check(Bubble(tc["l2_delta"], tc["l2_dist"] * e_n, n), tc["l2_eps"], S, seed,
                             **kw), tol["l2"]),
        ("self H", self_H_check(ProjectedBubble(Bubble(tc["self_H_delta"], tc["self_H_dist"] * e_n,
                                                       n), u0.domain), S, seed, **kw),
         tol["self_H"]),
    ]
    for name, r, t in checks:
        rep.results[name] = {"ratio": r.ratio, "stderr": r.stderr, "value": r.value,
                             "value_stderr": r.value_stderr, "reference": r.reference,
                             "samples": r.samples, "seed": r.seed, "flags": r.flags,
                             "warnings": r.warnings, "tail_bound": r.tail_bound}
        rep.table.append({"term": name, "ratio": r.ratio, "stderr": r.stderr, "value": r.value,
                          "reference": r.reference, "samples": r.samples})
        if r.tolerance_applies:
            rep.check(f"{name} ratio", r.within(t), r.ratio, t)
    a, b = checks[0][1], checks[1][1]
    z = abs(a.value - b.value) / math.hypot(a.value_stderr, b.value_stderr)
    rep.results["swap_z"] = z
    rep.check("interaction swap within 2 stderr", z <= 2, z, 2)
    return rep


COMMANDS = {
    "constants": cmd_constants,
    "solve-base": cmd_solve_base,
    "cluster": cmd_cluster,
    "sweep": cmd_sweep,
    "verify-terms": cmd_verify_terms,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="bnclusters",
        description="Reduced-energy computations and Monte-Carlo checks for boundary bubble "
                    "clusters. Writes <command>.json, <command>.csv and config.yaml to --out.")
    ap.add_argument("command", choices=list(COMMANDS))
    ap.add_argument("--config", type=Path, help="YAML RunConfig (defaults when omitted)")
    ap.add_argument("--seed", type=int, help="override the base seed")
    ap.add_argument("--samples", type=int, help="override the Monte-Carlo sample count")
    ap.add_argument("--out", type=Path, help="output directory (default: results)")
    ap.add_argument("--dim", type=int, help="override the dimension N")
    ap.add_argument("--b-term", choices=("on", "off"),
                    help="include the computed B coefficient in Phi")
    return ap


def resolve_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise ValueError("--seed must be an unsigned 64-bit integer")
        cfg.seed = args.seed
    if args.samples is not None:
        cfg.samples = args.samples
    if args.out is not None:
        cfg.out = str(args.out)
    if args.dim is not None:
        cfg.dim = args.dim
        cfg.A = None if cfg.A is None or np.ndim(cfg.A) != 2 else cfg.A
    if args.b_term is not None:
        cfg.b_term = args.b_term == "on"
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        out = Path(cfg.out)
        if args.command == "sweep":
            rep = cmd_sweep(cfg, out)
        else:
            rep = COMMANDS[args.command](cfg)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    rep.write(out)
    print(rep.summary())
    return 0 if rep.passed else 1


if __name__ == "__main__":
    sys.exit(main())
