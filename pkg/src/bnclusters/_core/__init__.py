"""Kernel backend selection.

The compiled extension is used when it was built; otherwise the numpy
fallback is loaded. Setting ``BNCLUSTERS_BACKEND=python`` forces the
fallback (useful for benchmarking and for checking that both agree).
"""

import os

import numpy as np

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("BNCLUSTERS_BACKEND", "").lower() != "python":
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels


def _f64(a, ndim):
    a = np.ascontiguousarray(a, dtype=np.float64)
    if a.ndim != ndim:
        raise ValueError(f"expected a {ndim}-d array, got shape {a.shape}")
    return a


def sqdist_table(x, c):
    """Squared distances ``|x_i - c_j|^2`` as an (n, k) array."""
    return _impl.sqdist_table(_f64(x, 2), _f64(c, 2))


def power_table(x, c, offsets, powers):
    """Table ``(offsets_j + |x_i - c_j|^2) ** -powers_j`` of shape (n, k)."""
    return _impl.power_table(_f64(x, 2), _f64(c, 2), _f64(offsets, 1), _f64(powers, 1))


def power_sum(x, c, offsets, powers, coef):
    """Row sums of ``coef_j * power_table``; shape (n,)."""
    return _impl.power_sum(
        _f64(x, 2), _f64(c, 2), _f64(offsets, 1), _f64(powers, 1), _f64(coef, 1)
    )


def kernels_for(backend: str):
    """Return the raw kernel module for ``"cython"`` or ``"python"``."""
    if backend == "python":
        return _pykernels
    from . import _ckernels

    return _ckernels


__all__ = ["BACKEND", "sqdist_table", "power_table", "power_sum", "kernels_for"]
