"""Spectral networks of (z^2 + 2m) dz^2.

Walls are traced as trajectories of the augmented system

    dz/ds = e^{i phase} conj(y) / |y|,    dy/ds = (z / y) dz/ds,

where ``y`` follows the square root of ``z^2 + 2m`` continuously along the
wall.  Along a solution ``y dz/ds = e^{i phase} |y|``, so the trajectory
condition holds by construction rather than by projection.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence
import warnings

import numpy as np
from scipy.integrate import solve_ivp

from .core import SheetPoint, arg_m, branch_points, sqrt_p, _check_m


class SingularFieldError(ValueError):
    pass


class TraceError(RuntimeError):
    pass


class LabellingJumpWarning(UserWarning):
    pass


class JumpLocusError(ValueError):
    """Raised when Re(m / zeta) = 0, where the magnetic data jump."""


@dataclass
class Wall:
    points: np.ndarray
    label: str
    source: int
    asym_ray: int | None = None
    sheet_y: np.ndarray | None = None
    hit_branch_point: bool = False


@dataclass
class SpectralNetwork:
    walls: list
    phase: float
    m: complex
    saddle: bool
    topology: str
    rays: tuple = ()

    def walls_from(self, source: int) -> list:
        return [w for w in self.walls if w.source == source]


def _arg(x: complex) -> float:
    a = float(np.angle(complex(x)))
    return np.pi if a == -np.pi else a


# ---------------------------------------------------------------------------
# local geometry


def trajectory_step_field(p: SheetPoint, phase: float, m: complex) -> complex:
    """Unit tangent d with lambda(d) in e^{i phase} R_+ on the sheet of p."""
    m = _check_m(m)
    lam = p.sheet * sqrt_p(p.z, m)
    if abs(lam) < 1e-300:
        raise SingularFieldError(f"z = {p.z} is a branch point")
    d = np.exp(1j * phase) / lam
    return complex(d / abs(d))


def seed_directions(b: complex, phase: float, m: complex) -> np.ndarray:
    """Three outgoing angles of the critical trajectories at a simple zero."""
    m = _check_m(m)
    a = _arg(2 * complex(b))
    return np.array([(2.0 / 3.0) * (phase - a / 2) + 2 * np.pi * k / 3 for k in range(3)])


def anti_stokes_rays(zeta: complex, m: complex, warn: bool = True) -> np.ndarray:
    """w-plane angles of the anti-Stokes rays r1..r4.

    The labelling is continuous in zeta starting from r1 = -arg(m)/2 at
    zeta = m, with the jump placed on the ray arg zeta = arg m - pi/2;
    arg m is taken in (0, 2pi] as everywhere else.
    """
    m = _check_m(m)
    zeta = complex(zeta)
    d = _arg(zeta) - arg_m(m)
    d = (d + np.pi / 2) % (2 * np.pi) - np.pi / 2
    if warn and (abs(d + np.pi / 2) < 1e-9 or abs(d - 1.5 * np.pi) < 1e-9):
        warnings.warn("zeta lies on the labelling jump ray", LabellingJumpWarning)
    r1 = -arg_m(m) / 2 - d / 2
    return np.array([r1 + k * np.pi / 2 for k in range(4)])


def topology(zeta: complex, m: complex, tol: float = 1e-9) -> str:
    s = (complex(m) / complex(zeta)).real / abs(m)
    if abs(s) < tol:
        return "Critical"
    return "PosRe" if s > 0 else "NegRe"


# ---------------------------------------------------------------------------
# tracing


@dataclass
class TraceOptions:
    seed_frac: float = 1e-3
    saddle_factor: float = 10.0
    escape_factor: float = 50.0
    rtol: float = 1e-10
    atol: float = 1e-12
    max_step: float = np.inf
    max_arclength: float | None = None


def _rhs(phase):
    e = np.exp(1j * phase)

    def f(s, st):
        z = st[0] + 1j * st[1]
        y = st[2] + 1j * st[3]
        dz = e * np.conj(y) / abs(y)
        dy = z / y * dz
        return [dz.real, dz.imag, dy.real, dy.imag]
    return f


def trace_wall(m: complex, phase: float, source: int, k: int,
               opts: TraceOptions | None = None) -> Wall:
    """Trace the k-th critical trajectory leaving branch point ``source``."""
    opts = opts or TraceOptions()
    m = _check_m(m)
    bps = branch_points(m)
    b, other = bps[source], bps[1 - source]
    sep = abs(bps[0] - bps[1])
    delta = opts.seed_frac * sep
    phi = seed_directions(b, phase, m)[k]
    z0 = b + delta * np.exp(1j * phi)
    y0 = np.sqrt(complex(z0 * z0 + 2 * m))
    d0 = np.exp(1j * phase) * np.conj(y0)
    if (d0 * np.exp(-1j * phi)).real < 0:
        y0 = -y0
    r_esc = opts.escape_factor * max(1.0, abs(m) ** 0.5)
    s_max = opts.max_arclength or 4 * r_esc

    def escape(s, st):
        return st[0] ** 2 + st[1] ** 2 - r_esc ** 2
    escape.terminal = True

    hit_r = opts.saddle_factor * delta

    def hit(s, st):
        return abs(st[0] + 1j * st[1] - other) - hit_r
    hit.terminal = True
    hit.direction = -1

    sol = solve_ivp(_rhs(phase), (0.0, s_max), [z0.real, z0.imag, y0.real, y0.imag],
                    method="RK45", rtol=opts.rtol, atol=opts.atol, events=(escape, hit),
                    dense_output=False, max_step=opts.max_step)
    if sol.status < 0:
        raise TraceError(f"wall {source}/{k} failed: {sol.message}")
    z = np.concatenate([[b], sol.y[0] + 1j * sol.y[1]])
    y = np.concatenate([[0j], sol.y[2] + 1j * sol.y[3]])
    hit_bp = len(sol.t_events[1]) > 0
    # label from the final point, away from the cut
    u = sqrt_p(z[-1], m)
    k_plus = 1 if abs(y[-1] - u) <= abs(y[-1] + u) else 2
    label = f"{3 - k_plus}{k_plus}"
    return Wall(points=z, label=label, source=source, sheet_y=y, hit_branch_point=hit_bp)


def _assign_ray(wall: Wall, rays: np.ndarray) -> int | None:
    if wall.hit_branch_point:
        return None
    ang = -np.angle(wall.points[-1])
    dist = np.abs((ang - rays + np.pi) % (2 * np.pi) - np.pi)
    return int(np.argmin(dist)) + 1


def trace_network(m: complex, phase: float, opts: TraceOptions | None = None,
                  ray_zeta: complex | None = None) -> SpectralNetwork:
    """Trace the six walls of the network at the given phase.

    ``ray_zeta`` selects the twistor parameter used to label asymptotic
    rays; by default ``e^{i phase}``.
    """
    m = _check_m(m)
    zeta = np.exp(1j * phase) if ray_zeta is None else complex(ray_zeta)
    rays = anti_stokes_rays(zeta, m, warn=False)
    walls = []
    for src in (0, 1):
        for k in range(3):
            w = trace_wall(m, phase, src, k, opts)
            w.asym_ray = _assign_ray(w, rays)
            walls.append(w)
    saddle = any(w.hit_branch_point for w in walls)
    topo = "Critical" if saddle else topology(np.exp(1j * phase), m)
    return SpectralNetwork(walls=walls, phase=float(phase), m=m, saddle=saddle,
                           topology=topo, rays=tuple(rays))


def asymptotic_angle_error(net: SpectralNetwork) -> float:
    """Largest angle between an escaping wall's last w-angle and its ray."""
    worst = 0.0
    for w in net.walls:
        if w.asym_ray is None:
            continue
        ang = -np.angle(w.points[-1])
        r = net.rays[w.asym_ray - 1]
        worst = max(worst, abs((ang - r + np.pi) % (2 * np.pi) - np.pi))
    return worst


def triangle_branch_point(net: SpectralNetwork, labels=(2, 3)) -> int:
    """Index of the branch point with walls reaching every ray in ``labels``.

    With the default this is the branch point around which the magnetic
    path winds: its walls separate the sectors of rays 2 and 3.
    """
    if net.saddle:
        raise JumpLocusError("saddle network: enclosing branch point is ambiguous")
    found = [src for src in (0, 1)
             if set(labels) <= {w.asym_ray for w in net.walls_from(src)}]
    if len(found) != 1:
        raise TraceError(f"no unique branch point has walls on rays {tuple(labels)}")
    return found[0]


# ---------------------------------------------------------------------------
# saddle search


def _signed_miss(m: complex, phase: float, opts: TraceOptions) -> float:
    """Signed closest approach of walls from branch point 0 to branch point 1."""
    bps = branch_points(m)
    target = bps[1]
    best = None
    o = TraceOptions(**{**opts.__dict__, "saddle_factor": 0.0})
    for k in range(3):
        w = trace_wall(m, phase, 0, k, o)
        d = np.abs(w.points - target)
        i = int(np.argmin(d))
        if i == 0 or i == len(d) - 1:
            continue
        tang = w.points[i + 1] - w.points[i - 1]
        side = np.sign(((target - w.points[i]) * np.conj(tang)).imag)
        if best is None or d[i] < abs(best):
            best = side * d[i]
    return np.inf if best is None else float(best)


def find_saddle_phase(m: complex, lo: float, hi: float, tol: float = 1e-6,
                      opts: TraceOptions | None = None) -> float:
    """Bisection in the phase for a wall joining the two branch points."""
    opts = opts or TraceOptions()
    flo = _signed_miss(m, lo, opts)
    fhi = _signed_miss(m, hi, opts)
    if not (np.isfinite(flo) and np.isfinite(fhi)) or np.sign(flo) == np.sign(fhi):
        raise TraceError("saddle phase is not bracketed")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        fm = _signed_miss(m, mid, opts)
        if np.sign(fm) == np.sign(flo):
            lo, flo = mid, fm
        else:
            hi, fhi = mid, fm
    return 0.5 * (lo + hi)


def first_saddle_phase(m: complex, n_scan: int = 32, tol: float = 1e-6,
                       opts: TraceOptions | None = None) -> float:
    """Smallest phase in [0, 2 pi) at which the network has a saddle."""
    opts = opts or TraceOptions()
    grid = np.linspace(0.0, 2 * np.pi, n_scan + 1)
    vals = [_signed_miss(m, t, opts) for t in grid]
    for a, b, fa, fb in zip(grid[:-1], grid[1:], vals[:-1], vals[1:]):
        if np.isfinite(fa) and np.isfinite(fb) and np.sign(fa) != np.sign(fb):
            # the miss distance also changes sign far from the target when the
            # closest wall switches; only accept genuine near-misses
            if min(abs(fa), abs(fb)) < abs(branch_points(m)[0]) * 2:
                ph = find_saddle_phase(m, a, b, tol, opts)
                if abs(_signed_miss(m, ph, opts)) < 1e-3 * abs(branch_points(m)[0]):
                    return ph
    raise TraceError("no saddle found")


# ---------------------------------------------------------------------------
# rendering


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def render_network(net: SpectralNetwork | None, path, size: int = 480,
                   extent: float | None = None) -> str:
    """Write a deterministic SVG drawing of the network and return the text."""
    walls = [] if net is None else net.walls
    if extent is None:
        extent = 3.0 * max(1.0, abs(net.m) ** 0.5) if net is not None else 3.0
    sc = size / (2 * extent)

    def xy(z):
        return _fmt((z.real + extent) * sc), _fmt((extent - z.imag) * sc)

    lines = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
             f'viewBox="0 0 {size} {size}">',
             f'<rect x="0" y="0" width="{size}" height="{size}" fill="white"/>',
             f'<line x1="0" y1="{_fmt(size / 2)}" x2="{size}" y2="{_fmt(size / 2)}" '
             'stroke="#999999" stroke-width="0.5"/>',
             f'<line x1="{_fmt(size / 2)}" y1="0" x2="{_fmt(size / 2)}" y2="{size}" '
             'stroke="#999999" stroke-width="0.5"/>']
    for i, w in enumerate(walls):
        pts = w.points[np.abs(w.points) <= 2 * extent]
        if pts.size < 2:
            continue
        coords = " ".join(",".join(xy(z)) for z in pts)
        if w.hit_branch_point:
            style = 'stroke="#cc0000" stroke-width="2.5"'
        else:
            style = 'stroke="#1f4e9c" stroke-width="1.2"' if w.label == "12" else \
                'stroke="#2a8a3a" stroke-width="1.2"'
        lines.append(f'<polyline id="wall{i}" fill="none" {style} points="{coords}"/>')
    if net is not None:
        for b in branch_points(net.m):
            x, y = xy(b)
            lines.append(f'<circle cx="{x}" cy="{y}" r="3" fill="black"/>')
    lines.append("</svg>")
    text = "\n".join(lines) + "\n"
    if path is not None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    return text
