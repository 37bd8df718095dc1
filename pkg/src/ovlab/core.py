"""Complex-analytic primitives for the differential (z^2 + 2m) dz^2.

The spectral cover is the curve y^2 = z^2 + 2m.  The square root used
throughout has its cut on the straight segment joining the two branch
points and behaves like ``z`` at infinity on the ``+`` sheet.

A convenient global coordinate on the cover is ``t`` with
``z = c (t + 1/t) / 2`` and ``y = c (t - 1/t) / 2`` where ``c`` is the
principal square root of ``-2m``.  The ``+`` sheet near infinity is
``t -> oo`` and the ``-`` sheet near infinity is ``t -> 0``; the branch
points sit at ``t = +1`` and ``t = -1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np


class DegenerateDifferentialError(ValueError):
    """Raised when m = 0 and the spectral cover degenerates."""


class OnCutError(ValueError):
    """Raised when a sheet-dependent quantity is evaluated on the cut."""


class SingularPointError(ValueError):
    """Raised at w = 0 or at another genuine singularity."""


class QuadratureError(RuntimeError):
    """Raised when an integrand is not finite along a path."""


_CUT_TOL = 1e-13


def _check_m(m: complex) -> complex:
    m = complex(m)
    if m == 0:
        raise DegenerateDifferentialError("m = 0: the differential has a double zero")
    return m


# ---------------------------------------------------------------------------
# data types


@dataclass(frozen=True)
class ModuliPoint:
    """Coordinates (m, m3, theta_m) of a framed bundle."""

    m: complex
    m3: float = 0.5
    theta_m: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "m", complex(self.m))
        object.__setattr__(self, "m3", float(self.m3))
        object.__setattr__(self, "theta_m", float(self.theta_m))
        if not (-0.5 < self.m3 <= 0.5):
            raise ValueError(f"m3 must lie in (-1/2, 1/2], got {self.m3}")

    @property
    def ov_z(self) -> complex:
        return -2j * self.m

    @property
    def theta_e(self) -> float:
        return 2 * np.pi * self.m3


@dataclass(frozen=True)
class TwistorParam:
    zeta: complex

    def __post_init__(self):
        object.__setattr__(self, "zeta", complex(self.zeta))
        if self.zeta == 0:
            raise ValueError("zeta must be nonzero")


@dataclass(frozen=True)
class SheetPoint:
    z: complex
    sheet: int = 1

    def __post_init__(self):
        object.__setattr__(self, "z", complex(self.z))
        if self.sheet not in (1, -1):
            raise ValueError("sheet must be +1 or -1")


@dataclass(frozen=True)
class TangentVector:
    m_dot: complex = 0j
    m3_dot: float = 0.0
    theta_m_dot: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "m_dot", complex(self.m_dot))
        object.__setattr__(self, "m3_dot", float(self.m3_dot))
        object.__setattr__(self, "theta_m_dot", float(self.theta_m_dot))
        if not all(np.isfinite([self.m_dot.real, self.m_dot.imag,
                                self.m3_dot, self.theta_m_dot])):
            raise ValueError("tangent vector must be finite")

    def __add__(self, other: "TangentVector") -> "TangentVector":
        return TangentVector(self.m_dot + other.m_dot, self.m3_dot + other.m3_dot,
                             self.theta_m_dot + other.theta_m_dot)

    def scale(self, s: float) -> "TangentVector":
        return TangentVector(s * self.m_dot, s * self.m3_dot, s * self.theta_m_dot)


# ---------------------------------------------------------------------------
# square roots and the cut


def branch_points(m: complex) -> tuple[complex, complex]:
    """Zeros of z^2 + 2m, principal square root of -2m first."""
    m = _check_m(m)
    c = np.sqrt(2 * abs(m)) * np.exp(0.5j * (arg_m(m) - np.pi))
    return complex(c), complex(-c)


def cut_distance(z, m: complex):
    """Distance from z to the cut segment between the branch points."""
    b1, b2 = branch_points(m)
    z = np.asarray(z, dtype=complex)
    d = b2 - b1
    s = np.clip(((z - b1) * np.conj(d)).real / abs(d) ** 2, 0.0, 1.0)
    return np.abs(z - (b1 + s * d))


def sqrt_p(z, m: complex):
    """Square root of z^2 + 2m with the cut on the branch-point segment.

    Uses ``z * sqrt(1 + 2m/z^2)``: the principal root of ``1 + 2m/z^2`` is
    discontinuous exactly where ``z^2 = -2m s`` with ``0 < s <= 1``, which
    is the segment.  Vectorised over ``z``.
    """
    m = _check_m(m)
    z = np.asarray(z, dtype=complex)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = z * np.sqrt(1 + 2 * m / (z * z))
    if np.any(~np.isfinite(out)):
        raise OnCutError("square root evaluated at z = 0, which lies on the cut")
    return out if out.ndim else complex(out)


def lambda0(p: SheetPoint, m: complex) -> complex:
    """dz-coefficient of the Liouville form on the sheet of ``p``.

    For m = 0 there is no cut and the value is ``+-z``.
    """
    if complex(m) == 0:
        return complex(p.sheet * p.z)
    if cut_distance(p.z, m) < _CUT_TOL * max(1.0, abs(m)):
        raise OnCutError(f"z = {p.z} lies on the branch cut")
    return p.sheet * sqrt_p(p.z, m)


def p_prime(z, m):
    return 2 * np.asarray(z)


# ---------------------------------------------------------------------------
# rational uniformisation of the cover


def cover_c(m: complex) -> complex:
    return branch_points(m)[0]


def t_of(z, sheet, m: complex):
    """Cover coordinate t of the point (z, sheet)."""
    c = cover_c(m)
    return (np.asarray(z, dtype=complex) + sheet * sqrt_p(z, m)) / c


def z_of_t(t, m: complex):
    """Base point and sheet of the cover point t."""
    c = cover_c(m)
    t = np.asarray(t, dtype=complex)
    z = c * (t + 1 / t) / 2
    y = c * (t - 1 / t) / 2
    u = sqrt_p(z, m)
    sheet = np.where(np.abs(y - u) <= np.abs(y + u), 1, -1)
    return z, sheet


# ---------------------------------------------------------------------------
# antiderivatives


def _continued_log(x, ref_arg):
    """log x with the imaginary part chosen within pi of ``ref_arg``."""
    x = np.asarray(x, dtype=complex)
    return np.log(np.abs(x)) + 1j * (ref_arg + np.angle(x * np.exp(-1j * ref_arg)))


def Lambda0(z, m: complex, arg_w: float | None = None):
    """Antiderivative of the + sheet square root.

    ``(z/2) y + m log(z + y) - m/2 - m log 2``.  By default the principal
    log is used.  Passing ``arg_w`` (the argument of ``w = 1/z`` continued
    along a path near infinity) selects the branch for which
    ``Lambda0 = w^-2/2 - m log w + O(w)`` with ``log w = log|w| + i arg_w``.
    At z = 0, which lies on the cut, the value is the limit
    ``(m/2) log(m/(2e))`` with the principal log.
    """
    m = _check_m(m)
    z = np.asarray(z, dtype=complex)
    if z.ndim == 0 and z == 0 and arg_w is None:
        return complex(0.5 * m * (np.log(m / 2) - 1))
    y = sqrt_p(z, m)
    s = z + y
    if arg_w is None:
        lg = np.log(s)
    else:
        lg = _continued_log(s, -arg_w)
    out = 0.5 * z * y + m * lg - m / 2 - m * np.log(2)
    return out if out.ndim else complex(out)


def _log_w(w, log_branch):
    """log w with winding ``log_branch`` (integer) or explicit continuous arg."""
    w = np.asarray(w, dtype=complex)
    if np.any(w == 0):
        raise SingularPointError("w = 0")
    return np.log(np.abs(w)) + 1j * (np.angle(w) + 2 * np.pi * log_branch)


def A0(w, zeta: complex, pt: ModuliPoint, log_branch=0):
    """Singular part of the framed connection form's antiderivative.

    ``log_branch`` counts windings of ``arg w`` away from the principal
    value, so that ``A0(w, ..., k + 1) - A0(w, ..., k) = x_e``.
    """
    zeta = complex(zeta)
    m, m3 = pt.m, pt.m3
    w = np.asarray(w, dtype=complex)
    lw = _log_w(w, log_branch)
    lwb = np.conj(lw)
    out = (w ** -2 / (2 * zeta) + zeta * np.conj(w) ** -2 / 2
           - (m / zeta - m3 / 2) * lw - (zeta * np.conj(m) + m3 / 2) * lwb)
    return out if out.ndim else complex(out)


def x_e(zeta: complex, pt: ModuliPoint) -> complex:
    """Monodromy of A0 around w = 0, so that Xe = exp(x_e)."""
    zeta = complex(zeta)
    return -2j * np.pi * (pt.m / zeta - pt.m3 - zeta * np.conj(pt.m))


def C0(w, m3: float, arg_w=None):
    """Antiderivative i m3 arg(w) of the puncture Chern form."""
    w = np.asarray(w, dtype=complex)
    if np.any(w == 0):
        raise SingularPointError("w = 0")
    a = np.angle(w) if arg_w is None else arg_w
    out = 1j * m3 * np.asarray(a, dtype=float)
    return out if out.ndim else complex(out)


def arg_m(m: complex) -> float:
    """Argument of m in (0, 2pi].

    This is the single branch convention for everything built on m: it is
    continuous across m < 0 and jumps on m > 0, where m is treated as the
    limit from Im m < 0 (matching the principal root of -2m).
    """
    m = _check_m(m)
    a = float(np.angle(m))
    return a + 2 * np.pi if a <= 0 else a


def _log_mb(m: complex) -> complex:
    # log(m / (-2e)) with arg(m) - pi in (-pi, pi]
    return complex(np.log(abs(m) / (2 * np.e)) + 1j * (arg_m(m) - np.pi))


def Z_B(m: complex) -> complex:
    """Magnetic period -m log(m / (-2e)), principal log continued from m < 0."""
    m = _check_m(m)
    return complex(-m * _log_mb(m))


def dZ_B(m: complex) -> complex:
    m = _check_m(m)
    return complex(-_log_mb(m) - 1)


# ---------------------------------------------------------------------------
# paths on the cover


def _segment_cut_crossing(za, zb, m):
    """Parameter s in (0,1) where [za, zb] crosses the cut, or None."""
    b1, b2 = branch_points(m)
    d = zb - za
    e = b2 - b1
    den = (np.conj(d) * e).imag
    if abs(den) < 1e-300:
        return None
    # za + s d = b1 + q e
    s = ((np.conj(b1 - za) * e).imag) / den
    q = ((np.conj(b1 - za) * d).imag) / den
    if 0.0 < s < 1.0 and 0.0 < q < 1.0:
        return s
    return None


@dataclass(frozen=True)
class CoverPath:
    """Polyline on the cover with explicit cut-crossing bookkeeping.

    ``cut_crossings`` holds ``(segment index, branch point index)``; the
    sheet flips on exactly those segments.
    """

    nodes: tuple
    cut_crossings: tuple = ()
    m: complex | None = None

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "cut_crossings", tuple(tuple(c) for c in self.cut_crossings))
        crossed = {c[0] for c in self.cut_crossings}
        for k in range(len(self.nodes) - 1):
            flip = self.nodes[k].sheet != self.nodes[k + 1].sheet
            if flip != (k in crossed):
                raise ValueError(f"sheet change on segment {k} does not match recorded crossings")

    @classmethod
    def from_points(cls, points: Sequence[complex], sheet: int, m: complex) -> "CoverPath":
        """Build a path through ``points`` starting on ``sheet``; crossings are detected."""
        m = _check_m(m)
        b1, b2 = branch_points(m)
        nodes = [SheetPoint(points[0], sheet)]
        crossings = []
        s = sheet
        for k in range(len(points) - 1):
            if _segment_cut_crossing(points[k], points[k + 1], m) is not None:
                s = -s
                # branch point nearest the crossing identifies it
                zc = points[k] + _segment_cut_crossing(points[k], points[k + 1], m) * (points[k + 1] - points[k])
                crossings.append((k, 0 if abs(zc - b1) <= abs(zc - b2) else 1))
            nodes.append(SheetPoint(points[k + 1], s))
        return cls(tuple(nodes), tuple(crossings), m)

    @property
    def start(self) -> SheetPoint:
        return self.nodes[0]

    @property
    def end(self) -> SheetPoint:
        return self.nodes[-1]

    def pieces(self):
        """Yield (za, zb, sheet) straight pieces, split at cut crossings."""
        crossed = {c[0] for c in self.cut_crossings}
        for k in range(len(self.nodes) - 1):
            a, b = self.nodes[k], self.nodes[k + 1]
            if k in crossed:
                s = _segment_cut_crossing(a.z, b.z, self.m)
                if s is None:
                    raise ValueError(f"segment {k} is recorded as crossing but does not meet the cut")
                zc = a.z + s * (b.z - a.z)
                yield a.z, zc, a.sheet
                yield zc, b.z, b.sheet
            else:
                yield a.z, b.z, a.sheet


# ---------------------------------------------------------------------------
# quadrature

_GL_LO = np.polynomial.legendre.leggauss(10)
_GL_HI = np.polynomial.legendre.leggauss(21)


def _panel_rule(form, za, zb, sheet, rule):
    x, wts = rule
    mid = (za + zb) / 2
    half = (zb - za) / 2
    z = mid[:, None] + half[:, None] * x[None, :]
    f, g = form(z, sheet)
    f = np.broadcast_to(np.asarray(f, dtype=complex), z.shape)
    g = np.broadcast_to(np.asarray(g, dtype=complex), z.shape)
    vals = f * half[:, None] + g * np.conj(half)[:, None]
    if not np.all(np.isfinite(vals)):
        bad = z[~np.isfinite(vals)][0]
        raise QuadratureError(f"non-finite integrand at z = {bad}")
    return vals @ wts


def _panel_abs(form, za, zb, sheet):
    x, wts = _GL_LO
    z = (za + zb)[:, None] / 2 + ((zb - za) / 2)[:, None] * x[None, :]
    f, g = form(z, sheet)
    mag = np.abs(np.broadcast_to(f, z.shape)) + np.abs(np.broadcast_to(g, z.shape))
    return (mag @ wts) * np.abs(zb - za) / 2


def _adaptive(form, za: np.ndarray, zb: np.ndarray, sheet: int, tol: float,
              total_length: float, max_panels: int):
    """Adaptive Gauss-Legendre (10/21 pair) over a batch of segments on one sheet."""
    todo_a, todo_b = za, zb
    total = 0j
    err = 0.0
    n_used = 0
    while todo_a.size:
        lo = _panel_rule(form, todo_a, todo_b, sheet, _GL_LO)
        hi = _panel_rule(form, todo_a, todo_b, sheet, _GL_HI)
        e = np.abs(hi - lo)
        # local tolerance proportional to panel length
        loc = tol * np.abs(todo_b - todo_a) / total_length
        # accept at the roundoff floor of large integrands as well
        floor = 64 * np.finfo(float).eps * _panel_abs(form, todo_a, todo_b, sheet)
        ok = (e <= np.maximum(loc, floor)) | (np.abs(todo_b - todo_a) < 1e-14 * total_length)
        total += hi[ok].sum()
        err += e[ok].sum()
        n_used += todo_a.size
        if n_used > max_panels:
            raise QuadratureError("panel budget exhausted")
        a, b = todo_a[~ok], todo_b[~ok]
        mid = (a + b) / 2
        todo_a = np.concatenate([a, mid])
        todo_b = np.concatenate([mid, b])
    return total, err


def integrate_segment(form, za: complex, zb: complex, sheet: int,
                      tol: float = 1e-10, max_panels: int = 200000):
    """Adaptive Gauss-Legendre (10/21 pair) integral of f dz + g dzbar on a segment.

    Returns ``(value, error_estimate)``.
    """
    length = abs(zb - za)
    if length == 0:
        return 0j, 0.0
    return _adaptive(form, np.array([za], dtype=complex), np.array([zb], dtype=complex),
                     sheet, tol, length, max_panels)


def integrate_1form(path: CoverPath, form: Callable, tol: float = 1e-10,
                    return_error: bool = False, max_panels: int = 400000):
    """Integrate ``f dz + g dzbar`` along a cover path.

    ``form(z, sheet)`` receives an array of base points and the sheet
    sign and returns the pair of coefficient arrays.  All pieces on the
    same sheet are refined together.
    """
    pieces = [p for p in path.pieces() if p[0] != p[1]]
    total = 0j
    err = 0.0
    if not pieces:
        return (total, err) if return_error else total
    length = sum(abs(b - a) for a, b, _ in pieces)
    for sheet in (1, -1):
        sel = [(a, b) for a, b, s in pieces if s == sheet]
        if not sel:
            continue
        za = np.array([a for a, _ in sel], dtype=complex)
        zb = np.array([b for _, b in sel], dtype=complex)
        v, e = _adaptive(form, za, zb, sheet, tol, length, max_panels)
        total += v
        err += e
    return (total, err) if return_error else total


def lambda_form(m: complex):
    """Evaluator of the Liouville form lambda = sheet * y dz."""
    def form(z, sheet):
        return sheet * sqrt_p(z, m), 0.0
    return form


def circle_points(center: complex, radius: float, a0: float, a1: float, n: int):
    """Polyline nodes on an arc of a circle, angles a0 -> a1."""
    ang = np.linspace(a0, a1, n + 1)
    return list(center + radius * np.exp(1j * ang))
