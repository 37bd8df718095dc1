import math
import warnings

import numpy as np
import pytest

from ovlab import hitchin as H
from ovlab.ovspace import g_ov_sf_norm

M = -1.0
PROBES = np.array([1.5 + 0.7j, 0.3j, 2.5, -1.2 + 2j])


@pytest.fixture(scope="module")
def elliptic():
    u = H.solve_u(M, H.EllipticGrid.for_radius(M, 8.0, 64, 48))
    return u, H.solve_F(M, 1.0, u)


def test_grid_validation():
    with pytest.raises(ValueError):
        H.CartesianGrid(4, 8.0)
    with pytest.raises(ValueError):
        H.EllipticGrid(2.0, 16, 15)
    g = H.EllipticGrid.for_radius(M, 8.0)
    assert g.R_inner(M) == pytest.approx(8.0)


def test_domain_too_small():
    with pytest.raises(H.DomainTooSmallError):
        H.solve_u(M, H.CartesianGrid(33, 3.0))
    with pytest.raises(H.DomainTooSmallError):
        H.solve_u(-4.0, H.EllipticGrid.for_radius(-4.0, 6.0, 16, 16))


def test_cartesian_second_order():
    fields = [H.solve_u(M, H.CartesianGrid(n, 8.0)) for n in (65, 129, 257)]
    # the three grids share the nodes of the coarsest one
    coarse = [f.values[::s, ::s] for f, s in zip(fields, (1, 2, 4))]
    e1 = np.abs(coarse[0] - coarse[1]).max()
    e2 = np.abs(coarse[1] - coarse[2]).max()
    assert math.log2(e1 / e2) > 1.8


def test_elliptic_spectral_convergence(elliptic):
    u, _ = elliptic
    coarse = H.solve_u(M, H.EllipticGrid.for_radius(M, 8.0, 48, 32))
    assert np.abs(coarse.value(PROBES) - u.value(PROBES)).max() < 1e-6
    cart = H.solve_u(M, H.CartesianGrid(257, 8.0))
    assert np.abs(cart.value(PROBES) - u.value(PROBES)).max() < 2e-5


def test_symmetries_for_real_m(elliptic):
    u, _ = elliptic
    assert u.value(np.conj(PROBES)) == pytest.approx(u.value(PROBES), abs=1e-12)
    assert u.value(-PROBES) == pytest.approx(u.value(PROBES), abs=1e-12)


def test_far_field_approaches_semiflat(elliptic):
    u, _ = elliptic
    near = np.abs(u.value(PROBES) - H.u_sf(PROBES, M)).max()
    far = np.abs(u.value(np.array([5.0, 5j, 4 + 3j])) - H.u_sf(np.array([5.0, 5j, 4 + 3j]), M)).max()
    assert far < 1e-6 < near


def test_F_is_complex_linear_in_mdot(elliptic):
    u, F1 = elliptic
    Fi = H.solve_F(M, 1j, u)
    assert np.abs(Fi.values - 1j * F1.values).max() < 1e-12
    F2 = H.solve_F(M, 2.0 - 1j, u)
    assert np.abs(F2.values - (2 - 1j) * F1.values).max() < 1e-12


def test_F_rejects_mismatched_u(elliptic):
    u, _ = elliptic
    with pytest.raises(ValueError):
        H.solve_F(-2.0, 1.0, u)


def test_semiflat_quadrature_and_closed_form():
    for mu0 in (1.0, 2.0, 3.0):
        assert H.sf_elliptic_integral(M, 1.0, mu0) == pytest.approx(16 * math.pi * mu0, rel=1e-12)
    for m in (-0.5, -1.0, -3.0, 1 + 1j):
        closed, quad = H.g_sf_reg(m, 1.0)
        assert closed == pytest.approx(4 * math.pi ** 2 * g_ov_sf_norm(m, 1.0), abs=1e-12)
        assert quad.value == pytest.approx(closed, abs=1e-10)
    assert H.g_sf_reg(2.0, 1.0)[0] == pytest.approx(0, abs=1e-15)


def test_instanton_difference_small_and_converged(elliptic):
    u, F = elliptic
    res = H.instanton_diff(M, 1.0, u, F)
    assert res.value < 0
    assert res.tail_estimate < 1e-7
    assert float(res) == res.value


def test_g_reg_log_slope_and_no_flag(elliptic):
    u, F = elliptic
    with warnings.catch_warnings():
        warnings.simplefilter("error", H.ExtrapolationWarning)
        res = H.g_reg(M, 1.0, u, F)
    assert not res.flagged
    closed = H.g_sf_reg(M, 1.0)[0]
    assert res.value == pytest.approx(closed + H.instanton_diff(M, 1.0, u, F).value, abs=1e-6)


def test_hitchin_u_switches_to_semiflat(elliptic):
    u, _ = elliptic
    hu = H.HitchinU(u)
    assert hu.R_switch == pytest.approx(0.8 * 8.0)
    far = np.array([7.0 + 0j, 20j])
    assert hu.value(far) == pytest.approx(H.u_sf(far, M))
    assert hu.value(PROBES) == pytest.approx(u.value(PROBES))
    assert hu.dz(far) == pytest.approx(far / (2 * (far ** 2 + 2 * M)))


def test_F_far_field(elliptic):
    _, F = elliptic
    z = 0.9 * 8.0 * np.exp(1j * np.linspace(0, 2 * np.pi, 16, endpoint=False))
    assert np.abs(F.value(z) - H.F_sf(z, M, 1.0)).max() < 1e-4


def test_semiflat_fields_reproduce_semiflat_integrand():
    rng = np.random.default_rng(3)
    z = rng.uniform(-5, 5, 50) + 1j * rng.uniform(-5, 5, 50)
    for m, md in ((-1.0, 1.0), (1 + 1j, 0.3 - 2j)):
        full = H.metric_integrand(z, m, md, H.u_sf(z, m), H.F_sf(z, m, md))
        assert np.abs(full - H.sf_integrand(z, m, md)).max() < 1e-10
