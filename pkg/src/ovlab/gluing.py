"""Semiflat abelian connection on the spectral cover, the gluing data of the
cylinder and the regularized pairings built from them.

Everything on the cover is expressed through the coordinate ``t`` of
:mod:`ovlab.core`, or equivalently ``xi = log t = mu + i nu``.  A 1-form
is stored by its coefficients ``(F, G)`` of ``dxi`` and ``dxibar``; the
z-chart evaluators divide by ``y`` and ``conj(y)``.

The abelian Chern form of the framed line bundle is the imaginary form

    A = -i m3 d(nu) - i m3 d(chi_inf arg(1 + t^-2)) + i m3 d(chi_0 arg(1 + t^2))
        + omega' + i kappa dPhi

where ``chi_inf``/``chi_0`` are smooth cutoffs supported near the two
punctures, ``Phi`` is a smooth step from the bottom puncture to the top
one, and ``omega'`` is a closed imaginary form with holonomy -1 around
each ramification point that vanishes near the punctures.  Near the
punctures A equals ``+-i m3 d arg w`` exactly.  The constant ``kappa``
fixes the framing angle, see :func:`framing_kappa`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import (CoverPath, arg_m, ModuliPoint, SheetPoint, TangentVector, Lambda0,
                   branch_points, circle_points, cover_c, integrate_1form,
                   sqrt_p, x_e, _check_m)
from .network import (JumpLocusError, anti_stokes_rays, topology, trace_network,
                      triangle_branch_point)

# band in s = log|t| where the puncture cutoffs switch on
S_IN, S_OUT = 1.0, 2.0


# ---------------------------------------------------------------------------
# smooth cutoffs


def _bump(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    pos = x > 0
    with np.errstate(over="ignore"):
        out[pos] = np.exp(-1.0 / x[pos])
    return out


def _dbump(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    pos = x > 0
    # log form avoids 0/0 for tiny x
    with np.errstate(over="ignore"):
        out[pos] = np.exp(-1.0 / x[pos] - 2 * np.log(x[pos]))
    return out


def smooth_step(x):
    """C-infinity step from 0 (x <= 0) to 1 (x >= 1) and its derivative."""
    a, b = _bump(x), _bump(1 - x)
    da, db = _dbump(x), -_dbump(1 - x)
    s = a + b
    return a / s, (da * s - a * (da + db)) / s ** 2


def puncture_cutoffs(s):
    """(chi_inf, chi_inf', chi_0, chi_0') as functions of s = log|t|."""
    w = S_OUT - S_IN
    ci, dci = smooth_step((s - S_IN) / w)
    c0, dc0 = smooth_step((-s - S_IN) / w)
    return ci, dci / w, c0, -dc0 / w


def framing_step(s):
    """Step Phi(s) from 0 at the bottom puncture to 1 at the top one."""
    return smooth_step(np.asarray(s, dtype=float) + 0.5)


def framing_kappa(pt: ModuliPoint) -> float:
    """Coefficient of i dPhi realising the framing angle theta_m.

    With ``kappa = 0`` the integral of A along the lifted straight WKB
    line through z = 0 vanishes; each unit of kappa adds i to it.
    """
    return pt.theta_m - pt.m3 * (arg_m(pt.m) - np.pi) - np.pi


# ---------------------------------------------------------------------------
# forms in the xi chart


def chern_xi(t, m3: float, kappa: float, branch: bool = True):
    """dxi, dxibar coefficients of the Chern form at cover points ``t``.

    ``branch=False`` drops ``omega'``, which is invariant under the sheet
    involution and hence pure trace after pushing forward.
    """
    t = np.asarray(t, dtype=complex)
    s = np.log(np.abs(t))
    ci, dci, c0, dc0 = puncture_cutoffs(s)
    _, dph = framing_step(s)
    top = ci > 0
    bot = c0 > 0
    with np.errstate(all="ignore"):
        tt = t * t
        h = -m3 * np.ones_like(t)
        h = h + np.where(top, m3 * ci * 2 / (tt + 1), 0)
        h = h + np.where(bot, m3 * c0 * 2 * tt / (tt + 1), 0)
        k = kappa * dph + np.where(top, -m3 * dci * np.angle(1 + 1 / np.where(top, tt, 1)), 0)
        k = k + np.where(bot, m3 * dc0 * np.angle(1 + np.where(bot, tt, 0)), 0)
        if branch:
            mid = 1 - ci - c0
            h = h + np.where(mid > 0, 0.5 * mid * 2 * t / (tt - 1), 0)
            r = (t - 1) / (t + 1)
            a_inf = np.where(top, np.angle(r), 0.0)
            a_0 = np.where(bot, np.pi + np.angle(-r), 0.0)
            k = k - 0.5 * (dci * a_inf + dc0 * a_0)
    # i Im(h dxi) + i Re(k dxi)
    F = h / 2 + 0.5j * k
    G = -np.conj(h) / 2 + 0.5j * np.conj(k)
    return F, G


def _t_and_y(z, sheet, m):
    z = np.asarray(z, dtype=complex)
    y = sheet * sqrt_p(z, m)
    return (z + y) / cover_c(m), y


def chern_form(m: complex, m3: float, kappa: float, branch: bool = True) -> Callable:
    """z-chart evaluator ``form(z, sheet) -> (f, g)`` of the Chern form."""
    m = _check_m(m)

    def form(z, sheet):
        t, y = _t_and_y(z, sheet, m)
        F, G = chern_xi(t, m3, kappa, branch)
        return F / y, G / np.conj(y)
    return form


def semiflat_form(zeta: complex, pt: ModuliPoint, branch: bool = True) -> Callable:
    """The abelian connection form zeta^-1 lambda + zeta lambda-bar + A."""
    zeta = complex(zeta)
    m = pt.m
    kappa = framing_kappa(pt)
    cf = chern_form(m, pt.m3, kappa, branch)

    def form(z, sheet):
        y = sheet * sqrt_p(z, m)
        f, g = cf(z, sheet)
        return f + y / zeta, g + zeta * np.conj(y)
    return form


def A_sf(p: SheetPoint, zeta: complex, pt: ModuliPoint, arg_w: float) -> complex:
    """Antiderivative of the semiflat form near the punctures.

    ``arg_w`` is the continued argument of ``w = 1/z`` at ``p``.
    """
    zeta = complex(zeta)
    L = Lambda0(p.z, pt.m, arg_w=arg_w)
    return p.sheet * (L / zeta + 1j * pt.m3 * arg_w + zeta * np.conj(L))


# ---------------------------------------------------------------------------
# gluing configuration


@dataclass(frozen=True)
class GlueConfig:
    """Boundary circle |w| = r, gluing angle and the marked points."""

    r: float
    vartheta: float
    rays: tuple
    zeta: complex
    m: complex
    basepoint: SheetPoint = field(init=False)
    image: SheetPoint = field(init=False)

    def __post_init__(self):
        th = self.rays
        object.__setattr__(self, "basepoint", SheetPoint(np.exp(-1j * th[2]) / self.r, 1))
        object.__setattr__(self, "image", SheetPoint(np.exp(-1j * th[1]) / self.r, -1))
        w, s = self.sigma(1 / self.basepoint.z, self.basepoint.sheet)
        if abs(w - 1 / self.image.z) > 1e-10 * abs(w) or s != self.image.sheet:
            raise ValueError("gluing map does not send the basepoint to its image")

    def sigma(self, w, sheet: int):
        """Orientation-reversing identification of the two boundary circles."""
        return np.exp(1j * self.vartheta) * np.conj(w), -sheet

    def ray_point(self, k: int, sheet: int) -> SheetPoint:
        """Point of ray k (1..4) on the boundary circle."""
        return SheetPoint(np.exp(-1j * self.rays[k - 1]) / self.r, sheet)


def gluing_angle(zeta: complex, m: complex, r: float = 1e-2) -> GlueConfig:
    """Gluing data with vartheta = theta(r2) + theta(r3)."""
    m = _check_m(m)
    if topology(zeta, m) == "Critical":
        raise JumpLocusError("Re(m/zeta) = 0: magnetic data jump here")
    if not r > 0:
        raise ValueError("r must be positive")
    th = anti_stokes_rays(zeta, m)
    return GlueConfig(float(r), float(th[1] + th[2]), tuple(float(x) for x in th),
                      complex(zeta), m)


def chi(w, sheet: int, cfg: GlueConfig, zeta: complex, m: complex):
    """Gluing function on the boundary annulus; odd under sigma, no constant term."""
    zeta = complex(zeta)
    w = np.asarray(w, dtype=complex)
    if np.any(w == 0):
        raise ValueError("chi is singular at w = 0")
    e2 = np.exp(2j * cfg.vartheta)
    out = 0.5 * sheet * ((1 / zeta + zeta * e2) * w ** -2 / 2
                         + (zeta + np.conj(e2) / zeta) * np.conj(w) ** -2 / 2
                         - 2 * (m / zeta + zeta * np.conj(m)) * np.log(np.abs(w)))
    return out if out.ndim else complex(out)


def chi_dot(w, sheet: int, zeta: complex, v: TangentVector):
    """Variation of :func:`chi` at fixed w."""
    zeta = complex(zeta)
    lw = np.log(np.abs(np.asarray(w, dtype=complex)))
    return -sheet * (v.m_dot / zeta + zeta * np.conj(v.m_dot)) * lw


# ---------------------------------------------------------------------------
# paths


def gamma_e_path(r: float, m: complex, sheet: int = 1, n: int = 64,
                 theta0: float = 0.0) -> CoverPath:
    """Loop |w| = r on one sheet, counterclockwise in z (clockwise in w).

    With this orientation the semiflat holonomy exponent is -x_e = -log Xe.
    """
    th = theta0 - np.linspace(0, 2 * np.pi, n + 1)
    return CoverPath.from_points(list(np.exp(-1j * th) / r), sheet, m)


def _detour(z_start: complex, sheet: int, z_end: complex, A: complex, B: complex,
            m: complex, n_arc: int = 200, rho_frac: float = 0.3) -> CoverPath:
    """Radially in towards A, around it across the cut once, radially out."""
    rho = rho_frac * abs(A - B)
    a0 = np.angle(z_start - A)
    a1 = np.angle(z_end - A)
    ac = np.angle(B - A)
    ccw = (a1 - a0) % (2 * np.pi)
    if (ac - a0) % (2 * np.pi) < ccw:
        end = a0 + ccw
    else:
        end = a0 - (a0 - a1) % (2 * np.pi)
    pts = [z_start] + circle_points(A, rho, a0, end, n_arc) + [z_end]
    path = CoverPath.from_points(pts, sheet, m)
    if len(path.cut_crossings) != 1:
        raise JumpLocusError("detour path does not cross the cut exactly once")
    return path


def magnetic_branch_point(cfg: GlueConfig, m: complex, net=None) -> int:
    """Index of the branch point whose walls reach rays 2 and 3."""
    if net is None:
        net = trace_network(m, float(np.angle(cfg.zeta)), ray_zeta=cfg.zeta)
    return triangle_branch_point(net, (2, 3))


def gamma_m_path(cfg: GlueConfig, m: complex, n_arc: int = 200, net=None) -> CoverPath:
    """Path from p3 (top) to p2 (bottom) winding once around the magnetic branch point."""
    src = magnetic_branch_point(cfg, m, net)
    bp = branch_points(m)
    return _detour(cfg.basepoint.z, 1, cfg.image.z, bp[src], bp[1 - src], m, n_arc)


def gamma_m_prime_path(cfg: GlueConfig, m: complex, n_arc: int = 200, net=None) -> CoverPath:
    """Path from p4 (bottom) to p3 (top) around the same branch point."""
    src = magnetic_branch_point(cfg, m, net)
    bp = branch_points(m)
    return _detour(cfg.ray_point(4, -1).z, -1, cfg.basepoint.z, bp[src], bp[1 - src], m, n_arc)


# ---------------------------------------------------------------------------
# regularized integrals


def reg_lambda_integral(m: complex, r: float = 1e-2, zeta: complex | None = None,
                        tol: float = 1e-12) -> complex:
    """Lambda0(p3) + Lambda0(p2) + integral of lambda along gamma_m (= -Z_B)."""
    m = _check_m(m)
    if zeta is None:
        zeta = m / abs(m)
    cfg = gluing_angle(zeta, m, r)
    path = gamma_m_path(cfg, m)

    def lam(z, sheet):
        return sheet * sqrt_p(z, m), 0.0
    th = cfg.rays
    return complex(Lambda0(cfg.basepoint.z, m, arg_w=th[2])
                   + Lambda0(cfg.image.z, m, arg_w=th[1])
                   + integrate_1form(path, lam, tol=tol))


def gamma_e_integral(zeta: complex, pt: ModuliPoint, r: float = 1e-2,
                     tol: float = 1e-12) -> complex:
    """Holonomy exponent of the semiflat form around gamma_e (equals -log Xe)."""
    return complex(integrate_1form(gamma_e_path(r, pt.m), semiflat_form(zeta, pt), tol=tol))


def gamma_m_integral(zeta: complex, pt: ModuliPoint, cfg: GlueConfig | None = None,
                     path: CoverPath | None = None, tol: float = 1e-12) -> complex:
    """A(p3) - A(p2) + integral of the semiflat form along gamma_m.

    ``exp(-result)`` is the magnetic coordinate.
    """
    if cfg is None:
        cfg = gluing_angle(zeta, pt.m)
    if path is None:
        path = gamma_m_path(cfg, pt.m)
    th = cfg.rays
    I = integrate_1form(path, semiflat_form(zeta, pt), tol=tol)
    return complex(A_sf(cfg.basepoint, zeta, pt, th[2]) - A_sf(cfg.image, zeta, pt, th[1]) + I)


def reg_gamma_m_holonomy(zeta: complex, pt: ModuliPoint, cfg: GlueConfig | None = None,
                         path: CoverPath | None = None, tol: float = 1e-12) -> complex:
    """chi(p0) - chi(sigma p0) + integral along gamma_m of the semiflat form."""
    if cfg is None:
        cfg = gluing_angle(zeta, pt.m)
    im = gamma_m_integral(zeta, pt, cfg, path, tol)
    return im - cfg.vartheta / (2 * np.pi) * x_e(zeta, pt)


# ---------------------------------------------------------------------------
# variations and the regularized pairing


def polar_coeffs(v: TangentVector, zeta: complex) -> tuple[complex, complex]:
    """(mu, lambda) with variation ~ mu dtheta + lambda dr/r at the top puncture."""
    zeta = complex(zeta)
    md = v.m_dot
    mu = -1j * (md / zeta - v.m3_dot - zeta * np.conj(md))
    lam = -(md / zeta + zeta * np.conj(md))
    return complex(mu), complex(lam)


def regularization_coefficient(v1: TangentVector, v2: TangentVector, zeta: complex) -> complex:
    """R^ab = 2 (mu1 lambda2 - mu2 lambda1)."""
    mu1, l1 = polar_coeffs(v1, zeta)
    mu2, l2 = polar_coeffs(v2, zeta)
    return 2 * (mu1 * l2 - mu2 * l1)


def regularization_term(v1: TangentVector, v2: TangentVector, zeta: complex,
                        R: float) -> complex:
    zeta = complex(zeta)

    def e(v):
        return v.m_dot / zeta - v.m3_dot - zeta * np.conj(v.m_dot)

    def l(v):
        return v.m_dot / zeta + zeta * np.conj(v.m_dot)
    return complex(-4j * np.pi * np.log(R) * (e(v1) * l(v2) - e(v2) * l(v1)))


@dataclass(frozen=True)
class VariationForm:
    """First-order variation of the semiflat form along a tangent vector.

    The identification of nearby covers keeps ``w`` fixed near the
    punctures; in the bulk it keeps ``xi`` fixed.  Up to exact forms
    vanishing near the punctures this gives

        zeta^-1 mdot dxi + zeta conj(mdot) dxibar + A(m3 -> m3dot, kappa -> kappadot)

    with ``kappadot = theta_m_dot - m3_dot arg(-m)`` and ``omega'`` absent.
    The ``m3 Im(mdot/m)`` parts of the framing variation cancel against
    the change of identification.
    """

    zeta: complex
    pt: ModuliPoint
    v: TangentVector
    mu_ab: complex
    lambda_ab: complex

    @property
    def kappa_dot(self) -> float:
        return self.v.theta_m_dot - self.v.m3_dot * (arg_m(self.pt.m) - np.pi)

    def xi_coeffs(self, t):
        F, G = chern_xi(t, self.v.m3_dot, self.kappa_dot, branch=False)
        return F + self.v.m_dot / self.zeta, G + self.zeta * np.conj(self.v.m_dot)

    def z_form(self) -> Callable:
        m = self.pt.m

        def form(z, sheet):
            t, y = _t_and_y(z, sheet, m)
            F, G = self.xi_coeffs(t)
            return F / y, G / np.conj(y)
        return form

    def polar_mu_nu(self, t):
        """Coefficients (p, q) of d mu and d nu."""
        F, G = self.xi_coeffs(t)
        return F + G, 1j * (F - G)


def variation_form(zeta: complex, pt: ModuliPoint, v: TangentVector) -> VariationForm:
    mu, lam = polar_coeffs(v, zeta)
    return VariationForm(complex(zeta), pt, v, mu, lam)


_GL = np.polynomial.legendre.leggauss(48)


def surface_pairing(zeta: complex, pt: ModuliPoint, v1: TangentVector, v2: TangentVector,
                    R: float, n_nu: int = 256) -> complex:
    """Integral of var1 ^ var2 over the cover minus the discs |w| < R.

    In ``xi = mu + i nu`` the region is |mu| < mu_R(nu) with
    sinh^2 mu_R + cos^2 nu = (R |c|)^-2; the mu integral is split at the
    cutoff bands and done by Gauss-Legendre, the periodic nu integral by
    the trapezoidal rule.
    """
    m = pt.m
    c = abs(cover_c(m))
    a2 = (1.0 / (R * c)) ** 2
    nu = 2 * np.pi * np.arange(n_nu) / n_nu
    if a2 <= 1.0:
        raise ValueError("R too large: the cutoff circles reach the branch cut")
    mu_r = np.arcsinh(np.sqrt(a2 - np.cos(nu) ** 2))
    f1, f2 = variation_form(zeta, pt, v1), variation_form(zeta, pt, v2)
    x, wts = _GL
    cuts = [-S_OUT, -S_IN, -0.5, 0.5, S_IN, S_OUT]
    total = np.zeros(n_nu, dtype=complex)
    edges = [-mu_r] + [np.full(n_nu, b) for b in cuts] + [mu_r]
    for lo, hi in zip(edges[:-1], edges[1:]):
        lo = np.maximum(np.minimum(lo, mu_r), -mu_r)
        hi = np.maximum(np.minimum(hi, mu_r), -mu_r)
        half = (hi - lo) / 2
        mu = (hi + lo)[:, None] / 2 + half[:, None] * x[None, :]
        t = np.exp(mu + 1j * nu[:, None])
        p1, q1 = f1.polar_mu_nu(t)
        p2, q2 = f2.polar_mu_nu(t)
        total += ((p1 * q2 - q1 * p2) @ wts) * half
    return complex(total.sum() * 2 * np.pi / n_nu)


@dataclass(frozen=True)
class RegPairResult:
    value: complex
    log_coeff: complex
    expected_log_coeff: complex
    lin_coeff: complex
    radii: tuple
    raw: tuple

    @property
    def log_residual(self) -> float:
        return abs(self.log_coeff - self.expected_log_coeff)


def omega_reg_ab_pair(zeta: complex, pt: ModuliPoint, v1: TangentVector, v2: TangentVector,
                      R_sequence: Sequence[float] = (0.02, 0.01, 0.005),
                      n_nu: int = 256) -> RegPairResult:
    """Regularized abelian Atiyah-Bott pairing by extrapolation in R.

    The raw surface integrals are fitted by c0 + c1 log R + c2 R; c0 is the
    regularized value and c1 is reported next to its expected value
    2 pi R^ab.
    """
    R = np.asarray(R_sequence, dtype=float)
    raw = np.array([surface_pairing(zeta, pt, v1, v2, r, n_nu) for r in R])
    M = np.column_stack([np.ones_like(R), np.log(R), R])
    coef, *_ = np.linalg.lstsq(M.astype(complex), raw, rcond=None)
    expected = 2 * np.pi * regularization_coefficient(v1, v2, zeta)
    return RegPairResult(complex(coef[0]), complex(coef[1]), complex(expected),
                         complex(coef[2]), tuple(R), tuple(raw))


def glued_pair(zeta: complex, pt: ModuliPoint, v1: TangentVector, v2: TangentVector,
               cfg: GlueConfig | None = None, path: CoverPath | None = None,
               tol: float = 1e-11) -> complex:
    """int_{gamma_e} var1 * reg int_{gamma_m} var2 - (1 <-> 2)."""
    if cfg is None:
        cfg = gluing_angle(zeta, pt.m)
    if path is None:
        path = gamma_m_path(cfg, pt.m)
    loop = gamma_e_path(cfg.r, pt.m)
    w0 = 1 / cfg.basepoint.z
    w1, s1 = cfg.sigma(w0, 1)
    out = []
    for v in (v1, v2):
        f = variation_form(zeta, pt, v).z_form()
        e = integrate_1form(loop, f, tol=tol)
        reg = (chi_dot(w0, 1, zeta, v) - chi_dot(w1, s1, zeta, v)
               + integrate_1form(path, f, tol=tol))
        out.append((e, reg))
    (e1, m1), (e2, m2) = out
    return complex(e1 * m2 - e2 * m1)


def boundary_term(zeta: complex, pt: ModuliPoint, v1: TangentVector, v2: TangentVector,
                  r: float, tol: float = 1e-11) -> complex:
    """Boundary integral of chidot2 var1 - chidot1 var2 + chidot1 d chidot2 over |w| = r.

    The circles are oriented as the boundary of the region |w| > r, i.e.
    clockwise in w like gamma_e; chidot is constant along them so the
    last term drops.
    """
    total = 0j
    for sheet in (1, -1):
        loop = gamma_e_path(r, pt.m, sheet)
        a1 = integrate_1form(loop, variation_form(zeta, pt, v1).z_form(), tol=tol)
        a2 = integrate_1form(loop, variation_form(zeta, pt, v2).z_form(), tol=tol)
        total += chi_dot(r, sheet, zeta, v2) * a1 - chi_dot(r, sheet, zeta, v1) * a2
    return complex(total)
