"""Flat connections, parallel transport and Stokes data.

Two connections are supported.  ``Semiflat`` works in the frame pushed
forward from the spectral cover, where the connection is diagonal and
a path only contributes the two abelian integrals of the semiflat form
plus a swap of the frame at every cut crossing.  ``HitchinFull`` works in
the holomorphic trivialization of the Hitchin section with a metric
``h = diag(e^u, e^-u)`` supplied by a u-field (see :mod:`ovlab.hitchin`).

Flat sections grow like ``exp(|z|^2)``, so sections are carried as a
unit direction together with a separate log-scale.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, Sequence
import math
import warnings

import numpy as np
from scipy.integrate import solve_ivp

from .core import (CoverPath, ModuliPoint, OnCutError, SheetPoint, branch_points,
                   circle_points, cut_distance, integrate_1form, lambda0, sqrt_p,
                   _check_m)
from .gluing import A_sf, semiflat_form
from .network import JumpLocusError, anti_stokes_rays, topology, trace_network
from .ovspace import Xe

SEMIFLAT = "Semiflat"
HITCHIN_FULL = "HitchinFull"


class SpecError(ValueError):
    """Inconsistent connection specification."""


class TransportError(RuntimeError):
    pass


class DegenerateSectionError(ArithmeticError):
    """A wedge used as a denominator vanishes."""


class NormalizationWarning(UserWarning):
    pass


class UField(Protocol):
    """What the full connection needs from a solution of the self-duality equation."""

    def value(self, z) -> np.ndarray: ...

    def dz(self, z) -> np.ndarray: ...


class SemiflatU:
    """Exact semiflat field u = log|P|/2; singular at the branch points."""

    def __init__(self, m: complex):
        self.m = _check_m(m)

    def value(self, z):
        z = np.asarray(z, dtype=complex)
        return 0.5 * np.log(np.abs(z * z + 2 * self.m))

    def dz(self, z):
        z = np.asarray(z, dtype=complex)
        return z / (2 * (z * z + 2 * self.m))


@dataclass(frozen=True)
class ConnectionSpec:
    kind: str
    zeta: complex
    pt: ModuliPoint
    u_field: UField | None = None

    def __post_init__(self):
        if self.kind not in (SEMIFLAT, HITCHIN_FULL):
            raise SpecError(f"unknown connection kind {self.kind!r}")
        object.__setattr__(self, "zeta", complex(self.zeta))
        if self.zeta == 0:
            raise SpecError("zeta must be nonzero")
        if self.kind == HITCHIN_FULL:
            if self.u_field is None:
                raise SpecError("HitchinFull needs a u_field")
            if self.pt.m3 != 0.5 or self.pt.theta_m != 0.0:
                raise SpecError("HitchinFull is only defined on the Hitchin section (m3 = 1/2, theta_m = 0)")

    @property
    def m(self) -> complex:
        return self.pt.m


def _log_add(a, b):
    """log(e^a + e^b) for complex logs, None standing for log 0."""
    if a is None:
        return b
    if b is None:
        return a
    if b.real > a.real:
        a, b = b, a
    r = 1 + np.exp(b - a)
    if r == 0:
        return None
    return a + complex(np.log(r))


@dataclass(frozen=True)
class Section:
    """Flat section at ``z`` with components ``exp(logs[j])`` (None means 0).

    Semiflat components refer to the pushed-forward frame (sheet +, sheet -),
    full ones to the holomorphic trivialization.
    """

    index: int
    z: complex
    logs: tuple

    @classmethod
    def from_vector(cls, index: int, z: complex, v, log_scale: complex = 0j) -> "Section":
        logs = tuple(None if c == 0 else complex(np.log(complex(c))) + log_scale for c in v)
        return cls(index, complex(z), logs)

    def vector(self) -> np.ndarray:
        """Components, possibly overflowing."""
        return np.array([0j if l is None else np.exp(l) for l in self.logs])

    def log_norm(self) -> float:
        return max(l.real for l in self.logs if l is not None)

    def combine(self, other: "Section") -> "Section":
        if abs(self.z - other.z) > 1e-12 * max(1.0, abs(self.z)):
            raise ValueError("sections live at different points")
        return Section(self.index, self.z, tuple(_log_add(a, b) for a, b in zip(self.logs, other.logs)))


@dataclass(frozen=True)
class SectionFrame:
    """Two sections at a common point, labelled by their sectors."""

    basepoint: complex
    vectors: tuple
    normalization: tuple

    def __post_init__(self):
        if log_wedge(*self.vectors) is None:
            raise DegenerateSectionError("sections are linearly dependent")


@dataclass(frozen=True)
class StokesData:
    a: complex
    b: complex
    M0_diag: tuple

    def __post_init__(self):
        p = self.M0_diag[0] * self.M0_diag[1]
        if abs(p - 1) > 1e-12:
            raise ValueError("formal monodromy must have unit determinant")


def default_R0(m: complex) -> float:
    """Radius |w| of the seeding circle."""
    return 0.05 * min(1.0, abs(2 * m) ** -0.5)


# ---------------------------------------------------------------------------
# connection coefficients


def eigenframe(z, m: complex) -> np.ndarray:
    """Unimodular eigenframe of the semiflat Higgs field, columns (+, -).

    In this frame the semiflat connection of the Hitchin section equals
    the diagonal abelian form on the two sheets, including the puncture
    Chern term ``+-(i/2) d arg w``.  The constant phases exp(+-i pi/4)
    make the sheet exchange across the cut act without a phase, as it
    does in the abelian transport.
    """
    z = complex(z)
    y = sqrt_p(z, m)
    s = np.sqrt(z / y) / math.sqrt(2 * abs(z))
    ph = abs(z) / z
    cp, cm = np.exp(0.25j * np.pi), np.exp(-0.25j * np.pi)
    return np.array([[cp * ph * s, -cm * s], [cp * ph * s * y, cm * s * y]], dtype=complex)


def connection_coeffs(z: complex, spec: ConnectionSpec) -> tuple[np.ndarray, np.ndarray]:
    """(A_z, A_zbar) so that the flat sections solve ds = -(A_z dz + A_zbar dzbar) s."""
    z = complex(z)
    zeta = spec.zeta
    m = spec.m
    if spec.kind == SEMIFLAT:
        if cut_distance(z, m) < 1e-12 * max(1.0, abs(m)):
            raise OnCutError(f"z = {z} lies on the branch cut")
        form = semiflat_form(zeta, spec.pt)
        fp, gp = form(np.array([z]), 1)
        fm, gm = form(np.array([z]), -1)
        return (np.diag([complex(fp[0]), complex(fm[0])]),
                np.diag([complex(gp[0]), complex(gm[0])]))
    u = float(spec.u_field.value(z))
    uz = complex(spec.u_field.dz(z))
    P = z * z + 2 * m
    e2u = math.exp(2 * u)
    Az = np.array([[uz, 1 / zeta], [P / zeta, -uz]], dtype=complex)
    Azb = np.array([[0, zeta * np.conj(P) / e2u], [zeta * e2u, 0]], dtype=complex)
    return Az, Azb


# ---------------------------------------------------------------------------
# transport


@dataclass(frozen=True)
class AbelianTransport:
    """Monomial matrix: column j is ``exp(logs[j])`` times basis vector ``target[j]``."""

    target: tuple
    logs: tuple

    def matrix(self) -> np.ndarray:
        S = np.zeros((2, 2), dtype=complex)
        for j in range(2):
            S[self.target[j], j] = np.exp(self.logs[j])
        return S

    @property
    def log_det(self) -> complex:
        sign = 0 if self.target == (0, 1) else 1j * np.pi
        return self.logs[0] + self.logs[1] + sign

    def then(self, other: "AbelianTransport") -> "AbelianTransport":
        """Transport along this path followed by ``other``."""
        tgt = tuple(other.target[self.target[j]] for j in range(2))
        logs = tuple(self.logs[j] + other.logs[self.target[j]] for j in range(2))
        return AbelianTransport(tgt, logs)


_SHEET_INDEX = {1: 0, -1: 1}
_INDEX_SHEET = (1, -1)


def semiflat_transport(points: Sequence[complex], spec: ConnectionSpec,
                       tol: float = 1e-12, columns=(0, 1)) -> AbelianTransport:
    """Exact transport of the pushed-forward semiflat connection along a polyline.

    Columns not listed in ``columns`` are left as NaN.
    """
    pts = [complex(p) for p in points]
    if len(pts) < 2 or all(p == pts[0] for p in pts):
        return AbelianTransport((0, 1), (0j, 0j))
    form = semiflat_form(spec.zeta, spec.pt)
    target, logs = [], []
    for j, sheet in enumerate(_INDEX_SHEET):
        path = CoverPath.from_points(pts, sheet, spec.m)
        target.append(_SHEET_INDEX[path.end.sheet])
        if j in columns:
            logs.append(-complex(integrate_1form(path, form, tol=tol)))
        else:
            logs.append(complex(np.nan))
    return AbelianTransport(tuple(target), tuple(logs))


def _segment_rhs(spec: ConnectionSpec, za: complex, zb: complex):
    d = zb - za

    def f(s, y):
        v = y[0:2] + 1j * y[2:4]
        Az, Azb = connection_coeffs(za + s * d, spec)
        dv = -(Az * d + Azb * np.conj(d)) @ v
        return np.concatenate([dv.real, dv.imag])
    return f


def _transport_vectors(points: Sequence[complex], spec: ConnectionSpec, V: np.ndarray,
                       rtol: float = 1e-11, atol: float = 1e-13):
    """Transport the columns of V along the polyline, renormalizing per segment.

    Returns the final unit columns and the accumulated log-norms.
    """
    V = np.array(V, dtype=complex)
    if V.ndim == 1:
        V = V[:, None]
    logs = np.zeros(V.shape[1], dtype=float)
    n0 = np.linalg.norm(V, axis=0)
    V = V / n0
    logs += np.log(n0)
    # split segments so the growth over each stays far below overflow
    pts = [complex(points[0])]
    for za, zb in zip(points[:-1], points[1:]):
        za, zb = complex(za), complex(zb)
        Pmax = max(abs(za), abs(zb)) ** 2 + 2 * abs(spec.m)
        growth = Pmax * abs(zb - za) * (1 / abs(spec.zeta) + abs(spec.zeta))
        n = max(1, int(math.ceil(growth / 100.0)))
        pts.extend(za + (zb - za) * np.arange(1, n + 1) / n)
    for za, zb in zip(pts[:-1], pts[1:]):
        if za == zb:
            continue
        rhs = _segment_rhs(spec, za, zb)
        for j in range(V.shape[1]):
            y0 = np.concatenate([V[:, j].real, V[:, j].imag])
            sol = solve_ivp(rhs, (0.0, 1.0), y0, method="DOP853", rtol=rtol, atol=atol)
            if sol.status != 0:
                raise TransportError(f"transport failed on [{za}, {zb}]: {sol.message}")
            v = sol.y[0:2, -1] + 1j * sol.y[2:4, -1]
            n = np.linalg.norm(v)
            if not np.isfinite(n) or n == 0:
                raise TransportError("section underflowed or overflowed")
            V[:, j] = v / n
            logs[j] += math.log(n)
    return V, logs


def parallel_transport(points: Sequence[complex], spec: ConnectionSpec) -> np.ndarray:
    """Transport matrix S along a polyline in the z-plane, S(start) = 1.

    Semiflat: the matrix is expressed in the pushed-forward frame, whose
    basis vectors are labelled by the sheet of ``sqrt_p`` at each point.
    """
    pts = [complex(p) for p in points]
    if spec.kind == SEMIFLAT:
        return semiflat_transport(pts, spec).matrix()
    if len(pts) < 2:
        return np.eye(2, dtype=complex)
    V, logs = _transport_vectors(pts, spec, np.eye(2, dtype=complex))
    return V * np.exp(logs)[None, :]


def det_drift(points: Sequence[complex], spec: ConnectionSpec) -> float:
    """|det S - 1| / max(1, |S e1| |S e2|) for the transport S along a polyline.

    The transports grow like exp(|z|^2/|zeta|), so the determinant is
    compared with the product of the column norms; the expression is
    evaluated from the unit columns and their log-norms, without forming S.
    """
    pts = [complex(p) for p in points]
    if spec.kind == SEMIFLAT:
        T = semiflat_transport(pts, spec)
        L = T.logs[0].real + T.logs[1].real
        d = complex(np.exp(T.log_det - L))
        return float(abs(d - math.exp(-L)) if L >= 0 else abs(d * math.exp(L) - 1))
    if len(pts) < 2:
        return 0.0
    V, logs = _transport_vectors(pts, spec, np.eye(2, dtype=complex))
    L = float(logs.sum())
    d = complex(np.linalg.det(V))
    return float(abs(d - math.exp(-L)) if L >= 0 else abs(d * math.exp(L) - 1))


def log_wedge(s1: Section, s2: Section) -> complex | None:
    """log(s1 ^ s2) for sections at the same point; None if it vanishes."""
    if abs(s1.z - s2.z) > 1e-12 * max(1.0, abs(s1.z)):
        raise ValueError("wedge of sections at different points")

    def mul(a, b):
        return None if a is None or b is None else a + b
    x = mul(s1.logs[0], s2.logs[1])
    y = mul(s1.logs[1], s2.logs[0])
    if y is not None:
        y = y + 1j * np.pi
    out = _log_add(x, y)
    if out is None:
        return None
    # relative cancellation below roundoff counts as zero
    top = max(v.real for v in (x, y) if v is not None)
    if out.real < top + math.log(1e-13):
        return None
    return out


# ---------------------------------------------------------------------------
# sections


def ray_point(k: int, R0: float, spec: ConnectionSpec) -> tuple[complex, float]:
    """Point of anti-Stokes ray k on |w| = R0 and its w-angle."""
    th = anti_stokes_rays(spec.zeta, spec.m, warn=False)[k - 1]
    return complex(np.exp(-1j * th) / R0), float(th)


def recessive_sheet(k: int, spec: ConnectionSpec, R0: float = 0.05) -> int:
    """Sheet on which the abelian section decays towards infinity along ray k."""
    z, _ = ray_point(k, R0, spec)
    L = lambda0(SheetPoint(z, 1), spec.m) * z / 2
    return 1 if (L / spec.zeta).real > 0 else -1


def normalized_section(i: int, R0: float, spec: ConnectionSpec) -> Section:
    """Section s_i recessive along ray i, seeded on |w| = R0.

    The seed is the sheet vector of the abelian frame times exp(-A_sf),
    which is exact for the semiflat connection near infinity.
    """
    if i not in (1, 2, 3, 4):
        raise ValueError("section index must be 1..4")
    if not R0 > 0:
        raise ValueError("R0 must be positive")
    m = spec.m
    z, th = ray_point(i, R0, spec)
    sheet = recessive_sheet(i, spec, R0)
    if abs(z) < 3.7 * abs(2 * m) ** 0.5:
        warnings.warn("R0 is outside the asymptotic region", NormalizationWarning)
    logc = complex(-A_sf(SheetPoint(z, sheet), spec.zeta, spec.pt, th))
    if spec.kind == SEMIFLAT:
        logs = [None, None]
        logs[_SHEET_INDEX[sheet]] = logc
        return Section(i, z, tuple(logs))
    return Section.from_vector(i, z, eigenframe(z, m)[:, _SHEET_INDEX[sheet]], logc)


def transport_section(s: Section, points: Sequence[complex], spec: ConnectionSpec) -> Section:
    pts = [complex(p) for p in points]
    if abs(pts[0] - s.z) > 1e-9 * max(1.0, abs(s.z)):
        raise ValueError("path does not start at the section's point")
    if spec.kind == SEMIFLAT:
        T = semiflat_transport(pts, spec, columns=[j for j in range(2) if s.logs[j] is not None])
        logs = [None, None]
        for j in range(2):
            if s.logs[j] is not None:
                logs[T.target[j]] = _log_add(logs[T.target[j]], s.logs[j] + T.logs[j])
        return Section(s.index, pts[-1], tuple(logs))
    # factor out the overall scale so neither overflow nor underflow can occur
    top = s.log_norm()
    v = np.array([0j if l is None else np.exp(l - top) for l in s.logs])
    V, logs = _transport_vectors(pts, spec, v)
    return Section.from_vector(s.index, pts[-1], V[:, 0], logs[0] + top)


# ---------------------------------------------------------------------------
# routes for the semiflat connection


def _enclosing_branch_point(net, labels) -> int:
    found = [src for src in (0, 1)
             if set(labels) <= {w.asym_ray for w in net.walls_from(src)}]
    if len(found) != 1:
        raise JumpLocusError(f"no unique branch point has walls on rays {labels}")
    return found[0]


def _wall_leg(net, src: int, ray: int, z_far: complex, center: complex, rho: float):
    """Points from z_far inwards along the wall of ``src`` reaching ``ray``,
    stopping on the circle |z - center| = rho."""
    wall = next(w for w in net.walls_from(src) if w.asym_ray == ray)
    pts = np.asarray(wall.points)
    R = abs(z_far)
    inside = np.nonzero(np.abs(pts - center) >= rho)[0]
    i0 = inside[0]
    outer = np.nonzero(np.abs(pts) >= R)[0]
    i1 = outer[0] if outer.size else len(pts) - 1
    seg = pts[i0:i1 + 1]
    if seg.size > 400:
        seg = seg[np.linspace(0, seg.size - 1, 400).astype(int)]
    seg = list(seg[::-1])
    # join the far end to z_far on the circle |z| = R
    a_far = np.angle(z_far)
    a_w = np.angle(seg[0])
    da = (a_far - a_w + np.pi) % (2 * np.pi) - np.pi
    head = circle_points(0j, R, a_w + da, a_w, 16)
    # project the wall's first point onto the circle, then follow the wall
    head[-1] = R * np.exp(1j * a_w)
    # first inner point sits on the small circle
    seg[-1] = center + rho * np.exp(1j * np.angle(seg[-1] - center))
    return [complex(z_far)] + [complex(p) for p in head[1:]] + [complex(p) for p in seg]


def crossing_route(k_from: int, k_to: int, R0: float, spec: ConnectionSpec, net=None,
                   n_arc: int = 200, rho_frac: float = 0.3) -> list:
    """Polyline from ray ``k_from`` to ray ``k_to`` passing between the branch points.

    It runs in along the wall reaching ``k_from`` of the branch point whose
    walls reach both rays, around that branch point through the side facing
    the other branch point, and out along the wall reaching ``k_to``.
    """
    m = spec.m
    if net is None:
        net = trace_network(m, float(np.angle(spec.zeta)), ray_zeta=spec.zeta)
    if net.saddle:
        raise JumpLocusError("saddle network: route is ambiguous")
    src = _enclosing_branch_point(net, (k_from, k_to))
    bp = branch_points(m)
    A, B = bp[src], bp[1 - src]
    rho = rho_frac * abs(A - B)
    z0, _ = ray_point(k_from, R0, spec)
    z1, _ = ray_point(k_to, R0, spec)
    leg_in = _wall_leg(net, src, k_from, z0, A, rho)
    leg_out = _wall_leg(net, src, k_to, z1, A, rho)[::-1]
    a0 = np.angle(leg_in[-1] - A)
    a1 = np.angle(leg_out[0] - A)
    ac = np.angle(B - A)
    ccw = (a1 - a0) % (2 * np.pi)
    if (ac - a0) % (2 * np.pi) < ccw:
        end = a0 + ccw
    else:
        end = a0 - (a0 - a1) % (2 * np.pi)
    arc = circle_points(A, rho, a0, end, n_arc)
    return leg_in + [complex(p) for p in arc[1:-1]] + leg_out


def outer_arc(k_from: int, k_to: int, R0: float, spec: ConnectionSpec, n: int = 64) -> list:
    """Arc on |w| = R0 from ray k_from down to ray k_to (k_to < k_from), clockwise in w."""
    th = anti_stokes_rays(spec.zeta, spec.m, warn=False)
    t0, t1 = th[k_from - 1], th[k_to - 1]
    ang = np.linspace(t0, t1, n + 1)
    return list(np.exp(-1j * ang) / R0)


# ---------------------------------------------------------------------------
# Stokes data


def formal_monodromy(spec: ConnectionSpec) -> tuple[complex, complex]:
    xe = Xe(spec.zeta, spec.pt)
    return (1 / xe, xe)


def _sections_at_basepoint(spec: ConnectionSpec, R0: float, net=None) -> list:
    """s1..s4 continued to a common point.

    Semiflat: every section follows the outer circle clockwise in w down
    to ray 1.  Sections 3 and 4 also pick up the component that passes
    between the branch points into the next sector (routes 3 -> 2 and
    4 -> 3 around the branch point whose walls reach both rays); these are
    the components seen by the wedges with s1 and s2 respectively.
    """
    secs = [normalized_section(i, R0, spec) for i in (1, 2, 3, 4)]
    if spec.kind == SEMIFLAT:
        if net is None:
            net = trace_network(spec.m, float(np.angle(spec.zeta)), ray_zeta=spec.zeta)
        arcs = {k: outer_arc(k, k - 1, R0, spec) for k in (2, 3, 4)}

        def down(sec, k):
            # outer arcs from ray k to ray 1
            for j in range(k, 1, -1):
                sec = transport_section(sec, arcs[j], spec)
            return sec
        s2 = down(secs[1], 2)
        s3 = down(secs[2], 3).combine(
            down(transport_section(secs[2], crossing_route(3, 2, R0, spec, net), spec), 2))
        s4 = down(transport_section(secs[3], crossing_route(4, 3, R0, spec, net), spec), 3)
        return [secs[0], s2, s3, s4]
    # the full connection is smooth, so transports are path independent;
    # radial inward paths follow the growing direction of each section
    zstar = 0j
    return [transport_section(s, list(np.linspace(s.z, zstar, 9)), spec) for s in secs]


def stokes_elements(spec: ConnectionSpec, R0: float | None = None, net=None) -> StokesData:
    """a = (s3^s1)/(s2^s1) and b = (s4^s2)/(s3^s2) with the formal monodromy."""
    m = _check_m(spec.m)
    if R0 is None:
        R0 = default_R0(m)
        R_sw = getattr(spec.u_field, "R_switch", None)
        if spec.kind == HITCHIN_FULL and R_sw is not None:
            # beyond R_switch the field is exactly semiflat, so the abelian
            # seeds are exact there and the long outer stretch can be skipped
            R0 = max(R0, 1 / max(1.2 * R_sw, 3.7 * abs(2 * m) ** 0.5))
    s1, s2, s3, s4 = _sections_at_basepoint(spec, R0, net)
    w31, w21 = log_wedge(s3, s1), log_wedge(s2, s1)
    w42, w32 = log_wedge(s4, s2), log_wedge(s3, s2)
    if w21 is None or w32 is None:
        raise DegenerateSectionError("vanishing wedge in the denominator")
    a = 0j if w31 is None else complex(np.exp(w31 - w21))
    b = 0j if w42 is None else complex(np.exp(w42 - w32))
    return StokesData(a, b, formal_monodromy(spec))


def Xm(spec: ConnectionSpec, R0: float | None = None, tol: float = 1e-9, net=None) -> complex:
    """Magnetic coordinate: a where Re(m/zeta) > 0 and -1/b where it is negative."""
    topo = topology(spec.zeta, spec.m, tol)
    if topo == "Critical":
        raise JumpLocusError("Re(m/zeta) = 0: the two Stokes formulas disagree here")
    st = stokes_elements(spec, R0, net)
    if topo == "PosRe":
        return st.a
    if st.b == 0:
        raise DegenerateSectionError("b vanishes")
    return -1 / st.b
