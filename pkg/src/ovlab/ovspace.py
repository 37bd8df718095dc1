"""Ooguri-Vafa side: Gibbons-Hawking potential, twistor coordinates and
the semiflat symplectic pairing."""

from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np

from .core import (DegenerateDifferentialError, ModuliPoint, SingularPointError,
                   TangentVector, Z_B, dZ_B)
from .specfun import bessel_K

DEFAULT_CUTOFF = 4j
_INST_TARGET = 1e-14


@dataclass(frozen=True)
class OVPoint:
    z: complex
    theta_e: float = 0.0
    theta_m: float = 0.0
    cutoff: complex = DEFAULT_CUTOFF

    @property
    def inside_cutoff(self) -> bool:
        """True where the semiflat potential is positive."""
        return abs(self.z) < abs(self.cutoff)


@dataclass(frozen=True)
class PotentialSplit:
    v_sf: float
    v_inst: float
    truncation: int
    tail_bound: float

    @property
    def value(self) -> float:
        return self.v_sf + self.v_inst


def v_sf(z: complex, cutoff: complex = DEFAULT_CUTOFF) -> float:
    if z == 0:
        raise SingularPointError("semiflat potential is singular at z = 0")
    return -math.log(abs(z) / abs(cutoff)) / (2 * math.pi)


def _auto_N(rho: float) -> int:
    n = 1
    while bessel_K(0, 2 * math.pi * (n + 1) * rho) >= _INST_TARGET:
        n += 1
    return n


def v_inst(z: complex, x3: float, N: int | None = None) -> tuple[float, float]:
    """Instanton part of the potential and a bound on the omitted tail.

    With ``N=None`` the truncation is picked so that the first omitted
    Bessel term is below 1e-14.
    """
    rho = abs(z)
    if rho == 0:
        raise SingularPointError("instanton sum is singular at z = 0")
    if N is None:
        N = _auto_N(rho)
    if N < 1:
        raise ValueError("N must be >= 1")
    n = np.arange(1, N + 1)
    k = bessel_K(0, 2 * math.pi * n * rho)
    val = float(np.sum(np.cos(2 * math.pi * n * x3) * k)) / math.pi
    # K0(x + a) <= exp(-a) K0(x), so the tail is dominated by a geometric series
    first = bessel_K(0, 2 * math.pi * (N + 1) * rho)
    tail = first / (math.pi * (1 - math.exp(-2 * math.pi * rho)))
    return val, tail


def potential(z: complex, x3: float, cutoff: complex = DEFAULT_CUTOFF,
              N: int | None = None) -> PotentialSplit:
    if N is None:
        N = _auto_N(abs(z))
    vi, tail = v_inst(z, x3, N)
    return PotentialSplit(v_sf(z, cutoff), vi, N, tail)


def v_lattice(x1: float, x2: float, x3: float, N: int = 100_000) -> float:
    """Direct lattice sum with the regularizer c_n = 1/(|n| + 1/2)."""
    rho2 = x1 * x1 + x2 * x2
    if rho2 == 0 and float(x3).is_integer():
        raise SingularPointError("lattice point")
    n = np.arange(-N, N + 1, dtype=float)
    c = np.where(n == 0, 0.0, 1.0 / (np.abs(n) + 0.5))
    terms = 1.0 / np.sqrt(rho2 + (x3 + n) ** 2) - c
    return float(np.sum(terms)) / (4 * math.pi)


# ---------------------------------------------------------------------------
# twistor coordinates


def Xe(zeta: complex, pt: ModuliPoint) -> complex:
    zeta = complex(zeta)
    if zeta == 0:
        raise ValueError("zeta must be nonzero")
    return complex(np.exp(-2j * np.pi * (pt.m / zeta - pt.m3 - np.conj(pt.m) * zeta)))


def Xm_sf(zeta: complex, pt: ModuliPoint) -> complex:
    zeta = complex(zeta)
    if zeta == 0:
        raise ValueError("zeta must be nonzero")
    zb = Z_B(pt.m)
    return complex(np.exp(zb / zeta + 1j * pt.theta_m + zeta * np.conj(zb)))


def dlogXe(zeta: complex, v: TangentVector) -> complex:
    zeta = complex(zeta)
    return -2j * np.pi * (v.m_dot / zeta - v.m3_dot - zeta * np.conj(v.m_dot))


def dlogXm_sf(zeta: complex, pt: ModuliPoint, v: TangentVector) -> complex:
    zeta = complex(zeta)
    d = dZ_B(pt.m) * v.m_dot
    return d / zeta + 1j * v.theta_m_dot + zeta * np.conj(d)


def omega_ov_sf_pair(zeta: complex, pt: ModuliPoint, v1: TangentVector,
                     v2: TangentVector) -> complex:
    """Semiflat holomorphic symplectic form evaluated on (v1, v2)."""
    e1, e2 = dlogXe(zeta, v1), dlogXe(zeta, v2)
    m1, m2 = dlogXm_sf(zeta, pt, v1), dlogXm_sf(zeta, pt, v2)
    return complex(-(e1 * m2 - e2 * m1) / (4 * np.pi ** 2))


# the shifted coordinate has the same differential as the semiflat one
omega_ov_shift_pair = omega_ov_sf_pair


# ---------------------------------------------------------------------------
# metric restricted to the Hitchin section


def _check_m(m: complex) -> complex:
    if m == 0:
        raise DegenerateDifferentialError("m = 0")
    return complex(m)


def g_ov_sf_norm(m: complex, m_dot: complex) -> float:
    m = _check_m(m)
    return -(2 / math.pi) * math.log(abs(m) / 2) * abs(m_dot) ** 2


def g_ov_norm(m: complex, m_dot: complex, N: int | None = None) -> float:
    """Norm of a Hitchin-section tangent vector, instantons included."""
    m = _check_m(m)
    z = -2j * m
    vi, _ = v_inst(z, 0.5, N)
    return 4 * (v_sf(z, DEFAULT_CUTOFF) + vi) * abs(m_dot) ** 2


def g_ov_inst_norm(m: complex, m_dot: complex, N: int | None = None) -> float:
    m = _check_m(m)
    vi, _ = v_inst(-2j * m, 0.5, N)
    return 4 * vi * abs(m_dot) ** 2
