"""Pure-numpy implementations of the compiled kernels.

Signatures and semantics match ``_ckernels``; the differences are
allocated explicitly (no ``|x|^2 - 2x.c + |c|^2`` expansion) so that
squared distances keep full relative precision near the centers.
"""

import numpy as np


def sqdist_table(x, c):
    diff = x[:, None, :] - c[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def power_table(x, c, offsets, powers):
    """out[i, j] = (offsets[j] + |x_i - c_j|^2) ** (-powers[j])."""
    return (offsets[None, :] + sqdist_table(x, c)) ** (-powers[None, :])


def power_sum(x, c, offsets, powers, coef):
    """out[i] = sum_j coef[j] * (offsets[j] + |x_i - c_j|^2) ** (-powers[j])."""
    return power_table(x, c, offsets, powers) @ coef
