import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special

from bnclusters.bubbles import (Bubble, alpha_N, critical_exponent, eval_bubble, eval_psi,
                                grad_bubble, laplacian_bubble, radial_integral,
                                radial_integral_beta, universal_constants)
from conftest import ORACLE


def richardson_laplacian(f, x, h=1e-3):
    def lap(hh):
        out = -2 * x.shape[-1] * f(x)
        for e in np.eye(x.shape[-1]):
            out = out + f(x + hh * e) + f(x - hh * e)
        return out / hh**2

    return (4 * lap(h / 2) - lap(h)) / 3


def test_alpha_7_is_35_to_the_5_4():
    assert alpha_N(7) == pytest.approx(35**1.25, rel=1e-15)
    assert alpha_N(7) == pytest.approx(ORACLE["alpha_7"], rel=1e-14)


def test_alpha_formula_all_dims():
    for n in range(7, 13):
        assert alpha_N(n) == pytest.approx((n * (n - 2)) ** ((n - 2) / 4), rel=1e-15)


def test_value_at_center():
    b = Bubble(1.0, np.zeros(7))
    assert eval_bubble(b, np.zeros(7)) == pytest.approx(35**1.25, rel=1e-15)
    b = Bubble(0.3, np.ones(7))
    assert eval_bubble(b, np.ones(7)) == pytest.approx(alpha_N(7) * 0.3**-2.5, rel=1e-14)


def test_far_field_limit():
    b = Bubble(1.0, np.zeros(7))
    vals = [eval_bubble(b, R * np.eye(7)[0]) * R**5 / alpha_N(7) for R in (1e2, 1e4, 1e6)]
    assert abs(vals[-1] - 1) < 1e-10
    assert abs(vals[0] - 1) > abs(vals[1] - 1) > abs(vals[2] - 1)


def test_bubble_solves_critical_equation_fd(rng):
    b = Bubble(1.0, np.zeros(7))
    p = critical_exponent(7)
    x = rng.normal(size=(20, 7))
    up = eval_bubble(b, x) ** p
    res = richardson_laplacian(lambda y: eval_bubble(b, y), x) + up
    assert np.all(np.abs(res) <= 1e-5 * up)


def test_analytic_laplacian_matches_equation(rng):
    b = Bubble(0.2, rng.normal(size=7))
    x = rng.normal(size=(50, 7))
    p = critical_exponent(7)
    np.testing.assert_allclose(laplacian_bubble(b, x), -eval_bubble(b, x) ** p, rtol=1e-12)


def test_gradient_matches_fd(rng):
    b = Bubble(0.7, rng.normal(size=7))
    x = rng.normal(size=(10, 7))
    h = 1e-6
    fd = np.stack([(eval_bubble(b, x + h * e) - eval_bubble(b, x - h * e)) / (2 * h)
                   for e in np.eye(7)], axis=1)
    np.testing.assert_allclose(grad_bubble(b, x), fd, rtol=1e-6, atol=1e-9)


def test_invalid_bubbles():
    with pytest.raises(ValueError):
        Bubble(0.0, np.zeros(7))
    with pytest.raises(ValueError):
        Bubble(-1.0, np.zeros(7))
    with pytest.raises(ValueError):
        Bubble(1.0, np.zeros(6), dim=7)


@settings(max_examples=100, deadline=None)
@given(st.floats(1e-3, 1e2), st.lists(st.floats(-5, 5), min_size=7, max_size=7),
       st.lists(st.floats(-5, 5), min_size=7, max_size=7))
def test_scaling_covariance(delta, xi, x):
    xi, x = np.array(xi), np.array(x)
    lhs = eval_bubble(Bubble(delta, xi), x)
    rhs = delta**-2.5 * eval_bubble(Bubble(1.0, np.zeros(7)), (x - xi) / delta)
    assert lhs == pytest.approx(rhs, rel=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.0, 20.0), st.floats(0.0, 20.0))
def test_radially_decreasing(r1, r2):
    b = Bubble(1.0, np.zeros(7))
    lo, hi = sorted((r1, r2))
    e = np.eye(7)[2]
    assert eval_bubble(b, lo * e) >= eval_bubble(b, hi * e) > 0


def test_psi_closed_forms():
    b = Bubble(1.0, np.zeros(7))
    a = alpha_N(7)
    assert eval_psi(0, b, np.zeros(7)) == pytest.approx(a * 5 / 2, rel=1e-15)
    assert eval_psi(0, b, np.eye(7)[1]) == pytest.approx(0.0, abs=1e-13)
    assert eval_psi(3, b, np.zeros(7)) == 0.0
    x = np.array([0.3, -0.2, 0.5, 0.1, 0.0, -0.4, 0.2])
    s = 1 + x @ x
    assert eval_psi(0, b, x) == pytest.approx(a * 2.5 * (1 - x @ x) / s**3.5, rel=1e-13)
    for j in range(1, 8):
        assert eval_psi(j, b, x) == pytest.approx(-a * 5 * x[j - 1] / s**3.5, rel=1e-13)


def test_psi_index_range():
    b = Bubble(1.0, np.zeros(7))
    with pytest.raises(IndexError):
        eval_psi(8, b, np.zeros(7))
    with pytest.raises(IndexError):
        eval_psi(-1, b, np.zeros(7))


def test_psi0_identity(rng):
    b = Bubble(1.0, np.zeros(7))
    x = rng.normal(size=(100, 7))
    lhs = eval_psi(0, b, x)
    rhs = 2.5 * eval_bubble(b, x) + np.einsum("ij,ij->i", grad_bubble(b, x), x)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-12)


def test_psi_scaling(rng):
    delta, xi = 0.4, rng.normal(size=7)
    x = rng.normal(size=(20, 7))
    for j in range(8):
        lhs = eval_psi(j, Bubble(delta, xi), x)
        rhs = delta**-2.5 * eval_psi(j, Bubble(1.0, np.zeros(7)), (x - xi) / delta)
        np.testing.assert_allclose(lhs, rhs, rtol=1e-12)


@pytest.mark.parametrize("j", range(8))
def test_psi_in_linearized_kernel(j, rng):
    b = Bubble(1.0, np.zeros(7))
    p = critical_exponent(7)
    x = rng.normal(size=(20, 7)) * 0.8
    pot = p * eval_bubble(b, x) ** (p - 1)
    psi = eval_psi(j, b, x)
    res = richardson_laplacian(lambda y: eval_psi(j, b, y), x) + pot * psi
    assert np.all(np.abs(res) <= 1e-4 * pot * np.abs(psi) + 1e-9)


def test_radial_integral_examples():
    assert radial_integral(0, 1) == pytest.approx(math.pi / 2, rel=1e-13)
    assert radial_integral(6, 7) == pytest.approx(special.beta(3.5, 3.5) / 2, rel=1e-12)
    with pytest.raises(ValueError, match="a \\+ 1 < 2b"):
        radial_integral(6, 3)
    with pytest.raises(ValueError, match="a > -1"):
        radial_integral(-1, 3)
    val, err = radial_integral(6, 7, return_error=True)
    assert err <= 1e-12


@settings(max_examples=40, deadline=None)
@given(st.floats(-0.9, 10), st.floats(0.05, 6))
def test_radial_integral_beta_agree(a, gap):
    b = (a + 1) / 2 + gap
    q = radial_integral(a, b)
    assert q == pytest.approx(radial_integral_beta(a, b), rel=1e-9)


def test_constants_frozen(consts7):
    assert consts7.C_const == pytest.approx(ORACLE["C_7"], rel=1e-13)
    assert consts7.B_const == pytest.approx(ORACLE["B_7"], rel=1e-13)
    assert consts7.int_U_2star == pytest.approx(ORACLE["S_7"], rel=1e-13)
    assert consts7.alpha_N == pytest.approx(ORACLE["alpha_7"], rel=1e-14)


@pytest.mark.parametrize("n", range(7, 13))
def test_constants_two_paths(n):
    c = universal_constants(n)
    assert c.max_rel_gap <= 1e-10
    assert min(c.C_const, c.B_const, c.int_U_2star, c.alpha_N) > 0


def test_constants_dim_gates():
    with pytest.raises(ValueError):
        universal_constants(4)
    with pytest.warns(UserWarning):
        universal_constants(6)
