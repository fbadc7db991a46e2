"""Compare the compiled kernels with the numpy fallback.

    python3 benchmarks/bench_kernels.py
    python3 benchmarks/bench_kernels.py --points 100000 --centers 1 3 8 --repeat 7

Each kernel is timed on the same inputs in both backends (best of ``--repeat``
runs) and the outputs are checked to agree before any timing is reported.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from bnclusters._core import kernels_for


def inputs(n: int, k: int, dim: int, seed: int):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, dim))
    c = rng.normal(size=(k, dim))
    offsets = rng.uniform(1e-4, 1e-2, k)
    powers = np.full(k, (dim - 2) / 2)
    coef = rng.uniform(0.5, 2.0, k)
    return x, c, offsets, powers, coef


def calls(mod, x, c, offsets, powers, coef):
    return {
        "sqdist_table": lambda: mod.sqdist_table(x, c),
        "power_table": lambda: mod.power_table(x, c, offsets, powers),
        "power_sum": lambda: mod.power_sum(x, c, offsets, powers, coef),
    }


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--points", type=int, default=1 << 15, help="rows per call (one MC block)")
    ap.add_argument("--centers", type=int, nargs="+", default=[1, 2, 3, 6])
    ap.add_argument("--dim", type=int, default=7)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    try:
        cy = kernels_for("cython")
    except ImportError:
        print("compiled kernels not built; run `pip install -e . --no-build-isolation` first")
        return 1
    py = kernels_for("python")

    print(f"points={args.points} dim={args.dim} repeat={args.repeat}")
    print(f"{'kernel':<14}{'k':>3}{'python ms':>12}{'cython ms':>12}{'speedup':>10}")
    for k in args.centers:
        data = inputs(args.points, k, args.dim, args.seed)
        fc, fp = calls(cy, *data), calls(py, *data)
        for name in fc:
            np.testing.assert_allclose(np.asarray(fc[name]()), fp[name](), rtol=1e-12)
            tp = min(timeit.repeat(fp[name], number=1, repeat=args.repeat))
            tc = min(timeit.repeat(fc[name], number=1, repeat=args.repeat))
            print(f"{name:<14}{k:>3}{1e3 * tp:>12.3f}{1e3 * tc:>12.3f}{tp / tc:>10.2f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
