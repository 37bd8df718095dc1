import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ovlab import core, ovspace
from ovlab.core import CoverPath, ModuliPoint, TangentVector, branch_points, circle_points, integrate_1form
from ovlab.gluing import (boundary_term, chern_form, chi_dot, gamma_e_integral, gamma_m_integral,
                          gluing_angle, glued_pair, omega_reg_ab_pair, puncture_cutoffs,
                          reg_gamma_m_holonomy, reg_lambda_integral, regularization_coefficient,
                          semiflat_form, smooth_step)

ZETA = np.exp(0.3j)


@given(st.floats(-3, 3))
def test_smooth_step_range_and_derivative(x):
    s, ds = smooth_step(np.array([x]))
    assert 0 <= s[0] <= 1 and ds[0] >= 0
    h = 1e-6
    fd = (smooth_step(np.array([x + h]))[0] - smooth_step(np.array([x - h]))[0]) / (2 * h)
    assert fd[0] == pytest.approx(ds[0], abs=1e-5)


def test_smooth_step_plateaus():
    s, ds = smooth_step(np.array([-2.0, 0.5, 2.0]))
    assert s == pytest.approx([0, 0.5, 1])
    assert ds[0] == 0 and ds[2] == 0


def test_cutoffs_are_complementary_at_the_ends():
    ci, _, c0, _ = puncture_cutoffs(np.array([-5.0, 0.0, 5.0]))
    assert ci == pytest.approx([0, 0, 1])
    assert c0 == pytest.approx([1, 0, 0])


def test_chern_form_is_flat_with_branch_holonomy():
    m = -1.0
    small = CoverPath.from_points(circle_points(2 + 2j, 0.3, 0, 2 * math.pi, 128), 1, m)
    assert abs(integrate_1form(small, chern_form(m, 0.3, 0.2))) < 1e-12
    b = branch_points(m)[0]
    twice = CoverPath.from_points(circle_points(b, 0.3, 0, 4 * math.pi, 256), 1, m)
    assert np.exp(integrate_1form(twice, chern_form(m, 0.3, 0.2))) == pytest.approx(-1, abs=1e-10)


@pytest.mark.parametrize("m", [-1.0, 1 + 1j, -2 + 0.5j])
def test_electric_and_magnetic_holonomies(m):
    pt = ModuliPoint(m, 0.3, 0.7)
    assert np.exp(gamma_e_integral(ZETA, pt)) == pytest.approx(1 / ovspace.Xe(ZETA, pt), rel=1e-9)
    assert np.exp(-gamma_m_integral(ZETA, pt)) == pytest.approx(ovspace.Xm_sf(ZETA, pt), rel=1e-9)


@pytest.mark.parametrize("m", [-1.0, 1 + 1j, 0.5j])
def test_regularized_lambda_integral(m):
    a = reg_lambda_integral(m, 1e-2)
    assert np.exp(a) == pytest.approx(np.exp(-core.Z_B(m)), abs=1e-8)
    assert abs(a - reg_lambda_integral(m, 1e-3)) < 1e-8


def test_hitchin_section_shift():
    m = -1.0
    pt = ModuliPoint(m, 0.5, 0.0)
    cfg = gluing_angle(ZETA, m)
    got = np.exp(-reg_gamma_m_holonomy(ZETA, pt, cfg))
    zb = core.Z_B(m)
    want = np.exp(zb / ZETA + ZETA * np.conj(zb) + cfg.vartheta / (2 * np.pi) * core.x_e(ZETA, pt))
    assert got == pytest.approx(want, rel=1e-6)


def test_chi_dot_changes_sign_between_sheets():
    v = TangentVector(1 + 0.5j, 0.2, 0.0)
    assert chi_dot(0.3, 1, ZETA, v) == pytest.approx(-chi_dot(0.3, -1, ZETA, v))


def test_regularization_coefficient_antisymmetric():
    v1, v2 = TangentVector(1.0, 0.3, 0.0), TangentVector(0.5j, -1.0, 0.2)
    assert regularization_coefficient(v1, v2, ZETA) == pytest.approx(-regularization_coefficient(v2, v1, ZETA))
    assert regularization_coefficient(v1, v1, ZETA) == 0


@pytest.mark.parametrize("m", [-1.0, -2 + 0.5j])
def test_regularized_pairing_three_ways(m):
    pt = ModuliPoint(m, 0.5, 0.0)
    v1, v2 = TangentVector(1.0, 0.0, 0.0), TangentVector(0.0, 1.0, 0.0)
    reg = omega_reg_ab_pair(ZETA, pt, v1, v2)
    assert reg.log_residual < 1e-8
    want = -4 * np.pi ** 2 * ovspace.omega_ov_shift_pair(ZETA, pt, v1, v2)
    assert abs(reg.value - want) < 1e-6 * abs(want)
    assert abs(glued_pair(ZETA, pt, v1, v2) - want) < 1e-6 * abs(want)


def test_boundary_term_carries_log_divergence():
    pt = ModuliPoint(-1.0, 0.5, 0.0)
    v1, v2 = TangentVector(1.0, 0.0, 0.0), TangentVector(0.0, 1.0, 0.0)
    r = 1e-2
    got = boundary_term(ZETA, pt, v1, v2, r)
    want = -2 * np.pi * math.log(r) * regularization_coefficient(v1, v2, ZETA)
    assert abs(got - want) < 1e-8 * abs(want)


def test_semiflat_form_closed_away_from_punctures():
    pt = ModuliPoint(1 + 1j, 0.3, 0.7)
    loop = CoverPath.from_points(circle_points(2 + 2j, 0.3, 0, 2 * math.pi, 128), 1, pt.m)
    assert abs(integrate_1form(loop, semiflat_form(ZETA, pt))) < 1e-12


@pytest.mark.parametrize("z", [50.0 + 0j, 30j, -20 + 25j])
def test_chern_form_near_punctures(z):
    # sheet +- near infinity: +-i m3 d arg w with w = 1/z
    m, m3 = -1.0, 0.3
    form = chern_form(m, m3, 0.2)
    for sheet in (1, -1):
        f, g = form(np.array([z]), sheet)
        assert f[0] == pytest.approx(-sheet * m3 / (2 * z), abs=1e-14)
        assert g[0] == pytest.approx(sheet * m3 / (2 * np.conj(z)), abs=1e-14)
