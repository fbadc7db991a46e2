import math

import numpy as np
import pytest

from bnclusters import verify as V
from bnclusters.background import U0Field, annulus_u0, mock_u0, shoot_annulus_u0
from bnclusters.bubbles import Bubble
from bnclusters.geometry import Ball, HalfSpace, ProjectedBubble
from bnclusters.mc import Box, Region

N = 7


def at(height, *tangential):
    xi = np.zeros(N)
    xi[: len(tangential)] = tangential
    xi[-1] = height
    return xi


@pytest.fixture(scope="module")
def u0_mock():
    return mock_u0(-1.0, np.eye(N - 1), dim=N)


@pytest.fixture(scope="module")
def annulus_field():
    return annulus_u0(shoot_annulus_u0(1.0, 2.0))


# ---------------------------------------------------------------- ansatz field


def test_verification_region_is_upper_box():
    reg = V.verification_region(N, 0.5)
    x = np.array([at(0.1), at(-0.1), at(0.6), at(0.1, 0.7)])
    assert reg.indicator(x).tolist() == [True, False, False, False]


def test_bubble_table_matches_profile():
    from bnclusters.bubbles import eval_bubble

    bs = [Bubble(0.3, at(0.5)), Bubble(0.1, at(0.2, 0.4))]
    x = np.random.default_rng(3).normal(size=(50, N))
    tab = V.bubble_table(bs, x)
    for j, b in enumerate(bs):
        np.testing.assert_allclose(tab[:, j], eval_bubble(b, x), rtol=1e-13)


def test_ansatz_gradient_matches_differences(u0_mock):
    bs = (Bubble(0.05, at(0.3)), Bubble(0.04, at(0.25, 0.3)))
    fld = V.AnsatzField(u0_mock, bs, 1e-3)
    x = np.array([at(0.4, 0.1, 0.2), at(0.1, -0.3)])
    h = 1e-5
    fd = np.stack([(fld.value(x + h * e) - fld.value(x - h * e)) / (2 * h) for e in np.eye(N)],
                  axis=1)
    np.testing.assert_allclose(fld.gradient(x), fd, rtol=1e-6, atol=1e-6)


def test_ansatz_laplacian_matches_differences(u0_mock):
    # the projection term is harmonic, so the Laplacian of W is Delta u0 - sum Delta U_i
    fld = V.AnsatzField(u0_mock, (Bubble(0.2, at(0.3)),), 1e-3)
    x = np.array([at(0.35, 0.1), at(0.6, -0.2, 0.1)])
    h = 1e-3
    lap = sum((fld.value(x + h * e) - 2 * fld.value(x) + fld.value(x - h * e)) / h**2
              for e in np.eye(N))
    np.testing.assert_allclose(fld.laplacian(x), lap, rtol=1e-4)


def test_ansatz_projection_vanishes_on_boundary(u0_mock):
    b = Bubble(0.05, at(0.2))
    fld = V.AnsatzField(u0_mock, (b,), 1e-3)
    x = np.array([at(0.0, s) for s in np.linspace(-0.5, 0.5, 11)])
    # u0 vanishes on the wall; there phi / U = (1 + delta^2 / r^2)^m exactly, so P U is
    # zero only up to relative order m delta^2 / r^2
    u = V.bubble_table([b], x)[:, 0]
    r2 = np.sum((x - b.xi) ** 2, axis=1)
    np.testing.assert_allclose(fld.value(x) / u, (1 + b.delta**2 / r2) ** 2.5 - 1, rtol=1e-10)


def test_ansatz_unwrap_projected_bubbles(u0_mock):
    b = Bubble(0.05, at(0.2))
    fld = V.AnsatzField(u0_mock, (ProjectedBubble(b, u0_mock.domain),), 1e-3)
    assert fld.bubbles == (b,)


def test_ansatz_projection_needs_green(annulus_field):
    with pytest.raises(ValueError, match="closed-form H"):
        V.AnsatzField(annulus_field, (Bubble(0.01, at(1.5)),), 0.0)


# ---------------------------------------------------------------- term oracles


def test_interaction_ratio():
    r = V.interaction_integral_check(Bubble(1e-3, at(0.3)), Bubble(1e-3, at(0.3, 0.1)),
                                     samples=400_000, seed=1)
    assert r.tolerance_applies
    assert r.within(0.02)
    assert r.stderr < 0.005


def test_interaction_delta_refinement():
    sep = at(0.3, 0.1)
    devs = []
    for delta in (1e-2, 1e-3):
        r = V.interaction_integral_check(Bubble(delta, at(0.3)), Bubble(delta, sep),
                                         samples=1_000_000, seed=2)
        devs.append((abs(r.ratio - 1), r.stderr))
    assert devs[1][0] < devs[0][0]


def test_interaction_symmetric_under_swap():
    bi, bh = Bubble(2e-3, at(0.3)), Bubble(1e-3, at(0.3, 0.1))
    a = V.interaction_integral_check(bi, bh, samples=1_000_000, seed=3)
    b = V.interaction_integral_check(bh, bi, samples=1_000_000, seed=4)
    # the two integrals have the same leading term and differ only at higher order
    assert a.reference == pytest.approx(b.reference, rel=1e-14)
    assert abs(a.value - b.value) <= 2 * math.hypot(a.value_stderr, b.value_stderr) + 0.01 * a.value


def test_interaction_overlap_warning():
    r = V.interaction_integral_check(Bubble(0.05, at(0.3)), Bubble(0.05, at(0.3, 0.1)),
                                     samples=50_000, seed=0)
    assert not r.tolerance_applies
    assert "overlapping" in r.warnings[0]


def test_interaction_coincident_centers():
    with pytest.raises(ValueError, match="coincident"):
        V.interaction_integral_check(Bubble(1e-3, at(0.3)), Bubble(2e-3, at(0.3)), samples=1000)


def test_u0_coupling_ratio(u0_mock):
    r = V.u0_coupling_check(Bubble(1e-4, at(0.05)), u0_mock, samples=400_000, seed=5)
    assert r.tolerance_applies and r.within(0.02)


def test_u0_coupling_constant_background_is_exact():
    # with u0 = 1 the integral is int U^p over the truncated region, i.e. C delta^m up to the tail
    dom = HalfSpace(N)
    one = U0Field(lambda x: np.ones(len(x)), lambda x: np.zeros_like(x),
                  lambda x: np.zeros(len(x)), -1.0, np.eye(N - 1), dom)
    r = V.u0_coupling_check(Bubble(1e-4, at(0.05)), one, samples=400_000, seed=6)
    assert abs(r.ratio - 1) <= 3 * r.stderr + 1e-4
    assert r.ratio <= 1 + 3 * r.stderr


def test_u0_coupling_delta_refinement(u0_mock):
    devs = {}
    for delta in (1e-2, 1e-3, 1e-4):
        r = V.u0_coupling_check(Bubble(delta, at(0.05)), u0_mock, samples=1_000_000, seed=7)
        devs[delta] = (abs(r.ratio - 1), r.stderr)
    assert devs[1e-2][0] > devs[1e-3][0] + 3 * devs[1e-3][1]
    assert devs[1e-4][0] < devs[1e-2][0] / 10


def test_u0_coupling_rejects_zero_background(u0_mock):
    with pytest.raises(ValueError, match="u0"):
        V.u0_coupling_check(Bubble(1e-4, at(0.0)), u0_mock, samples=1000)


def test_self_H_ratio():
    r = V.self_H_check(ProjectedBubble(Bubble(1e-3, at(0.1)), HalfSpace(N)), samples=400_000,
                       seed=8)
    assert r.tolerance_applies and r.within(0.05)


def test_self_H_delta_sweep():
    devs = []
    for delta in (1e-2, 1e-3):
        r = V.self_H_check(ProjectedBubble(Bubble(delta, at(0.1)), HalfSpace(N)),
                           samples=400_000, seed=9)
        devs.append(abs(r.ratio - 1))
    assert devs[1] < devs[0]


def test_self_H_rejects_ball():
    with pytest.raises(ValueError, match="half-space"):
        V.self_H_check(ProjectedBubble(Bubble(1e-3, np.zeros(N)), Ball(N, 1.0)), samples=1000)


def test_l2_ratio_and_eps_independence():
    b = Bubble(1e-3, at(0.1))
    r1 = V.l2_term_check(b, 1e-3, samples=400_000, seed=10)
    r2 = V.l2_term_check(b, 1e-1, samples=400_000, seed=10)
    assert r1.within(0.02)
    assert r1.ratio == pytest.approx(r2.ratio, rel=1e-13)
    assert 1 - r1.ratio <= r1.tail_bound + 3 * r1.stderr


def test_l2_tail_bound_covers_truncation():
    # close to the wall a visible part of U^2 is cut off; the tail bound must cover it
    r = V.l2_term_check(Bubble(1e-2, at(0.05)), 1.0, samples=400_000, seed=11)
    deficit = 1 - r.ratio
    assert deficit > 3 * r.stderr
    assert deficit <= r.tail_bound + 3 * r.stderr


def test_l2_tail_fraction_decay():
    # the U^2 tail beyond R delta decays like R^(4-N) = R^-3 for N = 7
    q = V.l2_tail_fraction(N, 100.0) / V.l2_tail_fraction(N, 1000.0)
    assert q == pytest.approx(1000.0, rel=0.01)
    assert V.l2_tail_fraction(N, 1e-9) == pytest.approx(1.0, rel=1e-6)


# ---------------------------------------------------------------- energy and residual


def test_energy_single_bubble(consts7):
    fld = V.AnsatzField(None, (Bubble(1.0, np.zeros(N)),), 0.0, projected=False)
    r = V.energy_J(fld, 0.0, 1_000_000, 0)
    target = consts7.int_U_2star / N
    assert abs(r.value / target - 1) <= 0.01
    assert r.stderr / target < 0.005


def test_energy_scale_invariant(consts7):
    a = V.energy_J(V.AnsatzField(None, (Bubble(1.0, np.zeros(N)),), 0.0, projected=False),
                   0.0, 200_000, 1)
    b = V.energy_J(V.AnsatzField(None, (Bubble(0.01, np.ones(N)),), 0.0, projected=False),
                   0.0, 200_000, 1)
    # the proposal follows the bubble, so the rescaled draws are identical
    assert a.value == pytest.approx(b.value, rel=1e-9)


def test_energy_zero_field():
    r = V.energy_J(V.AnsatzField(None, (), 0.0, projected=False), 0.3)
    assert (r.value, r.stderr) == (0.0, 0.0)


def test_energy_linear_in_eps():
    fld = V.AnsatzField(None, (Bubble(0.5, np.zeros(N)),), 0.0, projected=False)
    a = V.energy_J(fld, 0.0, 100_000, 2)
    b = V.energy_J(fld, 0.2, 100_000, 2)
    assert b.value - a.value == pytest.approx(-0.2 * a.parts["l2"], rel=1e-12)


def test_energy_rtol_flag():
    fld = V.AnsatzField(None, (Bubble(1.0, np.zeros(N)),), 0.0, projected=False)
    r = V.energy_J(fld, 0.0, 20_000, 3, rtol=1e-6)
    assert not r.ok and "relative tolerance" in r.flags[-1]


def test_residual_exact_bubble():
    fld = V.AnsatzField(None, (Bubble(0.7, np.zeros(N)),), 0.0, projected=False)
    r = V.residual_norm(fld, 0.0, 100_000, 0, mode="raw")
    assert r.relative <= 1e-6
    c = V.residual_norm(fld, 0.0, 100_000, 0, mode="corrected")
    assert c.norm <= 1e-12 * c.reference_norm


def test_residual_annulus_background(annulus_field):
    fld = V.AnsatzField(annulus_field, (), 0.0, projected=False)
    reg = Region(N, Box(-2 * np.ones(N), 2 * np.ones(N)), mask=annulus_field.domain.contains)
    r = V.residual_norm(fld, 0.0, 100_000, 0, region=reg, mode="raw")
    assert r.relative <= 1e-6 or r.norm <= 3 * r.stderr


def test_residual_mock_background_is_not_a_solution(u0_mock):
    # the mock u0 only has the right boundary jet; the raw defect keeps its own part
    fld = V.AnsatzField(u0_mock, (), 0.0, projected=False)
    reg = V.verification_region(N)
    raw = V.residual_norm(fld, 0.0, 50_000, 0, region=reg, mode="raw")
    cor = V.residual_norm(fld, 0.0, 50_000, 0, region=reg, mode="corrected")
    assert raw.relative > 1e-3
    assert cor.norm <= 1e-12 * cor.reference_norm


def test_residual_bad_mode():
    fld = V.AnsatzField(None, (Bubble(1.0, np.zeros(N)),), 0.0, projected=False)
    with pytest.raises(ValueError, match="mode"):
        V.residual_norm(fld, 0.0, 1000, mode="full")


# ---------------------------------------------------------------- expansion report


def test_fit_slope_exact():
    eps = np.array([1e-2, 1e-3, 1e-4])
    s, c = V.fit_slope(eps, -3.0 * eps**2.5)
    assert s == pytest.approx(2.5, abs=1e-12)
    assert math.exp(c) == pytest.approx(3.0, rel=1e-12)


@pytest.fixture(scope="module")
def small_report(request):
    from bnclusters.bubbles import universal_constants
    from bnclusters.reduction import second_order_coeffs, solve_first_order

    c = universal_constants(N)
    base = solve_first_order(-1.0, c)
    coeffs = second_order_coeffs(base, c)
    seen = []
    rep = V.expansion_report(base, coeffs, [[0.0] * 6, [0.8] + [0.0] * 5], [1e-2, 1e-3, 1e-4],
                             samples=100_000, seed=0, on_row=seen.append)
    return rep, seen, base, coeffs


def test_report_bookkeeping(small_report):
    rep, seen, *_ = small_report
    assert rep.checks["bookkeeping"]["pass"]
    for r in rep.rows:
        assert r["Z"] + r["F"] + r["R2"] == pytest.approx(r["T"], rel=1e-12)
        assert r["F"] == 0.0
    assert [r["eps"] for r in seen] == [1e-2, 1e-3, 1e-4]


def test_report_zero_order(small_report):
    rep, _, base, coeffs = small_report
    assert rep.checks["zero_order_slope"]["pass"]
    for r in rep.rows:
        assert abs(r["Z_ratio"] - 1) <= 3 * r["Z_err"] / abs(r["Z_pred"]) + 0.01


def test_report_flat_table(small_report):
    rep, *_ = small_report
    rows = rep.table()
    assert len(rows) == 3
    assert all(not isinstance(v, (list, dict)) for row in rows for v in row.values())


def test_report_skips_failing_eps(monkeypatch, base7, coeffs7):
    import bnclusters.verify as mod

    real = mod.assemble_cluster

    def flaky(eps, *a, **kw):
        if eps == 3e-3:
            raise ArithmeticError("synthetic failure")
        return real(eps, *a, **kw)

    monkeypatch.setattr(mod, "assemble_cluster", flaky)
    tau = [[0.0] * 6, [0.8] + [0.0] * 5]
    rep = V.expansion_report(base7, coeffs7, tau, [1e-2, 3e-3, 1e-3], samples=20_000,
                             on_error="skip")
    assert 3e-3 in rep.dropped and len(rep.rows) == 2
    assert "synthetic failure" in rep.notes[0]
    with pytest.raises(ArithmeticError):
        V.expansion_report(base7, coeffs7, tau, [1e-2, 3e-3, 1e-3], samples=20_000)


def test_report_needs_two_rows(base7, coeffs7):
    with pytest.raises(ValueError, match="two usable"):
        V.expansion_report(base7, coeffs7, [[0.0] * 6, [0.8] + [0.0] * 5], [1e-3],
                           samples=20_000)


def test_report_drops_noisy_eps(base7, coeffs7):
    # with very few samples the second-order residual is lost in MC noise at large eps
    rep = V.expansion_report(base7, coeffs7, [[0.0] * 6, [0.8] + [0.0] * 5], [1e-1, 1e-4],
                             samples=10_000)
    for e in rep.dropped:
        row = next(r for r in rep.rows if r["eps"] == e)
        assert row["R2_err"] > abs(row["R2"] / row["R2_ratio_to_Phi"])
