"""Command-line entry point: ``ovlab <subcommand> ...``.

Exit codes: 0 on success, 1 when a verify suite has a failing identity,
2 on usage or input errors.  Every subcommand writes JSON to stdout (or to
``--out``/``--report`` paths); complex numbers are encoded as [re, im].
"""

from __future__ import annotations

import argparse
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
import io
import json
import math
import os
import re
import sys
import threading
from typing import Callable, Sequence
import warnings

import numpy as np

from . import core, gluing, hitchin, network, ovspace, stokes
from .core import ModuliPoint, TangentVector

SIG_DIGITS = 12


class UsageError(ValueError):
    pass


# ---------------------------------------------------------------------------
# formatting and emitters


def fmt_real(x: float) -> str:
    return format(float(x), f".{SIG_DIGITS}g")


def to_jsonable(obj):
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return [to_jsonable(x) for x in obj.tolist()]
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(x) for x in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


def dumps(obj) -> str:
    return json.dumps(to_jsonable(obj), indent=2) + "\n"


def _write_text(path, text: str) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc


def emit_csv(rows: Sequence[Sequence], path, columns: Sequence[str]) -> str:
    """Write rows under a fixed header; reals use 12 significant digits."""
    buf = io.StringIO()
    buf.write(",".join(columns) + "\n")
    for row in rows:
        if len(row) != len(columns):
            raise ValueError("row length does not match the header")
        cells = []
        for v in row:
            if isinstance(v, (float, np.floating)):
                cells.append(fmt_real(v))
            elif isinstance(v, (complex, np.complexfloating)):
                raise TypeError("split complex values into real columns")
            else:
                cells.append(str(v))
        buf.write(",".join(cells) + "\n")
    text = buf.getvalue()
    if path is not None:
        _write_text(path, text)
    return text


def emit_svg(data: dict, path, size: int = 480) -> str:
    """Deterministic line chart of ``data = {"x": [...], "series": {name: [...]}}``."""
    xs = np.asarray(data.get("x", []), dtype=float)
    series = data.get("series", {})
    lines = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
             f'viewBox="0 0 {size} {size}">',
             f'<rect x="0" y="0" width="{size}" height="{size}" fill="white"/>']
    ys = [np.asarray(v, dtype=float) for v in series.values()]
    finite = [y[np.isfinite(y)] for y in ys]
    if xs.size >= 2 and any(f.size for f in finite):
        x0, x1 = float(xs.min()), float(xs.max())
        y0 = min(float(f.min()) for f in finite if f.size)
        y1 = max(float(f.max()) for f in finite if f.size)
        if y1 == y0:
            y0, y1 = y0 - 1, y1 + 1
        if x1 == x0:
            x0, x1 = x0 - 1, x1 + 1
        pad = 0.08 * size

        def px(x):
            return pad + (x - x0) / (x1 - x0) * (size - 2 * pad)

        def py(y):
            return size - pad - (y - y0) / (y1 - y0) * (size - 2 * pad)
        palette = ["#1f4e9c", "#cc0000", "#2a8a3a", "#8a2a8a", "#c07000"]
        for i, (name, y) in enumerate(zip(series, ys)):
            ok = np.isfinite(y)
            pts = " ".join(f"{px(a):.6f},{py(b):.6f}" for a, b in zip(xs[ok], y[ok]))
            lines.append(f'<polyline id="{name}" fill="none" stroke="{palette[i % len(palette)]}" '
                         f'stroke-width="1.5" points="{pts}"/>')
    lines.append("</svg>")
    text = "\n".join(lines) + "\n"
    if path is not None:
        _write_text(path, text)
    return text


# ---------------------------------------------------------------------------
# configuration


def parse_complex(s: str) -> complex:
    """'re,im' or a single real number."""
    if isinstance(s, (int, float, complex)):
        return complex(s)
    if isinstance(s, (list, tuple)) and len(s) == 2:
        return complex(float(s[0]), float(s[1]))
    parts = str(s).split(",")
    try:
        if len(parts) == 1:
            return complex(float(parts[0]), 0.0)
        if len(parts) == 2:
            return complex(float(parts[0]), float(parts[1]))
    except ValueError:
        pass
    raise argparse.ArgumentTypeError(f"expected 're,im', got {s!r}")


@dataclass
class RunConfig:
    command: str
    params: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)

    def __post_init__(self):
        for k, v in self.tolerances.items():
            if not (isinstance(v, (int, float)) and v > 0):
                raise UsageError(f"tolerance {k!r} must be a positive number")


def _load_config(path: str, command: str, allowed: set) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise UsageError("config must be a JSON object")
    unknown = set(data) - allowed - {"tolerances"}
    if unknown:
        raise UsageError(f"unknown config keys for {command}: {sorted(unknown)}")
    tol = data.get("tolerances", {})
    if not isinstance(tol, dict):
        raise UsageError("tolerances must be an object")
    return data


def _threads() -> int:
    v = os.environ.get("OVLAB_THREADS")
    if v is None:
        return 1
    try:
        n = int(v)
    except ValueError as exc:
        raise UsageError("OVLAB_THREADS must be an integer") from exc
    if n < 1:
        raise UsageError("OVLAB_THREADS must be positive")
    return n


# ---------------------------------------------------------------------------
# verify suites


@dataclass(frozen=True)
class Identity:
    id: str
    anchor: str
    computed: object
    expected: object
    residual: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(self.residual <= self.tolerance)

    def as_dict(self) -> dict:
        d = asdict(self)
        d["pass"] = self.passed
        return d


@dataclass
class VerifyReport:
    suite: str
    entries: list

    @property
    def all_pass(self) -> bool:
        return all(e.passed for e in self.entries)

    def as_dict(self) -> dict:
        return {"suite": self.suite, "all_pass": self.all_pass,
                "entries": [e.as_dict() for e in sorted(self.entries, key=lambda e: e.id)]}


def _rel(a, b) -> float:
    return float(abs(a - b) / max(abs(b), 1e-300))


def _abs(a, b) -> float:
    return float(abs(a - b))


def _semiflat_checks(m: complex, zeta: complex, tol: dict) -> list[Callable[[], Identity]]:
    def xe_hol():
        pt = ModuliPoint(m, 0.3, 0.7)
        got = complex(np.exp(gluing.gamma_e_integral(zeta, pt)))
        want = 1 / ovspace.Xe(zeta, pt)
        return Identity("sf.01-electric-holonomy", "holonomy around the puncture equals 1/Xe",
                        got, want, _rel(got, want), tol.get("holonomy", 1e-8))

    def xm_hol():
        pt = ModuliPoint(m, 0.3, 0.7)
        got = complex(np.exp(-gluing.gamma_m_integral(zeta, pt)))
        want = ovspace.Xm_sf(zeta, pt)
        return Identity("sf.02-magnetic-holonomy", "normalized magnetic holonomy equals Xm",
                        got, want, _rel(got, want), tol.get("holonomy", 1e-8))

    def reg_lambda():
        got = complex(np.exp(gluing.reg_lambda_integral(m, 1e-2)))
        want = complex(np.exp(-core.Z_B(m)))
        return Identity("sf.03-regularized-lambda", "regularized lambda integral equals -Z_B",
                        got, want, _abs(got, want), tol.get("lambda", 1e-6))

    def reg_lambda_r():
        a = gluing.reg_lambda_integral(m, 1e-2)
        b = gluing.reg_lambda_integral(m, 1e-3)
        return Identity("sf.04-lambda-r-independence", "regularized lambda integral is r-independent",
                        a, b, _abs(a, b), tol.get("r_independence", 1e-8))

    def shift():
        pt = ModuliPoint(m, 0.5, 0.0)
        cfg = gluing.gluing_angle(zeta, m)
        got = complex(np.exp(-gluing.reg_gamma_m_holonomy(zeta, pt, cfg)))
        zb = core.Z_B(m)
        want = complex(np.exp(zb / zeta + zeta * np.conj(zb)
                              + cfg.vartheta / (2 * np.pi) * core.x_e(zeta, pt)))
        return Identity("sf.05-hitchin-section-shift", "regularized holonomy on the Hitchin section",
                        got, want, _rel(got, want), tol.get("shift", 1e-5))

    def stokes_xm():
        pt = ModuliPoint(m, 0.3, 0.7)
        got = stokes.Xm(stokes.ConnectionSpec(stokes.SEMIFLAT, zeta, pt))
        want = ovspace.Xm_sf(zeta, pt)
        return Identity("sf.06-stokes-magnetic", "Stokes-data magnetic coordinate equals Xm",
                        got, want, _rel(got, want), tol.get("stokes", 1e-5))

    def monodromy():
        pt = ModuliPoint(m, 0.3, 0.7)
        st = stokes.stokes_elements(stokes.ConnectionSpec(stokes.SEMIFLAT, zeta, pt))
        want = ovspace.Xe(zeta, pt)
        return Identity("sf.07-formal-monodromy", "formal monodromy entry equals Xe",
                        st.M0_diag[1], want, _abs(st.M0_diag[1], want), tol.get("monodromy", 1e-15))

    def metric():
        got = hitchin.g_sf_reg(m, 1.0)[0]
        want = 4 * math.pi ** 2 * ovspace.g_ov_sf_norm(m, 1.0)
        return Identity("sf.08-semiflat-metric", "regularized semiflat metric equals the OV semiflat norm",
                        got, want, _abs(got, want), tol.get("metric", 1e-12))

    def poisson():
        pts = [(0.3, 0.1, 0.2), (0.7, -0.4, 0.45), (-0.5, 0.9, 0.05)]
        diffs = []
        for x1, x2, x3 in pts:
            z = complex(x1, x2)
            split = ovspace.potential(z, x3)
            diffs.append(ovspace.v_lattice(x1, x2, x3, 100_000) - split.value)
        spread = float(max(diffs) - min(diffs))
        return Identity("sf.09-poisson-resummation", "lattice sum differs from the resummed potential by a constant",
                        spread, 0.0, spread, tol.get("poisson", 1e-8))

    return [xe_hol, xm_hol, reg_lambda, reg_lambda_r, shift, stokes_xm, monodromy, metric, poisson]


def _gluing_checks(m: complex, zeta: complex, tol: dict) -> list:
    pt = ModuliPoint(m, 0.5, 0.0)
    v1, v2 = TangentVector(1.0, 0.0, 0.0), TangentVector(0.0, 1.0, 0.0)
    cache = {}
    lock = threading.Lock()

    def reg():
        # shared by three checks; computed once even when they run in threads
        with lock:
            if "reg" not in cache:
                cache["reg"] = gluing.omega_reg_ab_pair(zeta, pt, v1, v2)
        return cache["reg"]

    def glued():
        got = reg().value
        want = gluing.glued_pair(zeta, pt, v1, v2)
        return Identity("gl.01-regularized-vs-glued", "regularized pairing equals the glued bilinear value",
                        got, want, _rel(got, want), tol.get("gluing", 1e-4))

    def ov():
        got = reg().value
        want = -4 * np.pi ** 2 * ovspace.omega_ov_shift_pair(zeta, pt, v1, v2)
        return Identity("gl.02-regularized-vs-ov", "regularized pairing equals -4 pi^2 times the OV form",
                        got, want, _rel(got, want), tol.get("gluing", 1e-4))

    def logc():
        r = reg()
        return Identity("gl.03-log-coefficient", "log R coefficient of the raw pairing",
                        r.log_coeff, r.expected_log_coeff, _rel(r.log_coeff, r.expected_log_coeff),
                        tol.get("log_coefficient", 1e-4))

    def boundary():
        r = 1e-2
        got = gluing.boundary_term(zeta, pt, v1, v2, r)
        want = -2 * np.pi * math.log(r) * gluing.regularization_coefficient(v1, v2, zeta)
        return Identity("gl.04-boundary-term", "boundary term carries the log divergence",
                        got, want, _rel(got, want), tol.get("boundary", 1e-6))

    return [glued, ov, logc, boundary]


def _metric_checks(grid_n: int, R_dom: float, tol: dict) -> list:
    def quad(mu0):
        def f():
            got = hitchin.sf_elliptic_integral(-1.0, 1.0, mu0)
            want = 16 * math.pi * mu0
            return Identity(f"mt.01-elliptic-quadrature-mu{mu0:g}", "semiflat elliptic quadrature",
                            got, want, _rel(got, want), tol.get("quadrature", 1e-6))
        return f

    def closed(m):
        def f():
            got = hitchin.g_sf_reg(m, 1.0)[0]
            want = 4 * math.pi ** 2 * ovspace.g_ov_sf_norm(m, 1.0)
            return Identity(f"mt.02-closed-form-m{m:g}", "closed-form regularized semiflat metric",
                            got, want, _abs(got, want), tol.get("closed_form", 1e-12))
        return f

    ms = (-0.5, -1.0, -1.5)

    def full(m):
        def f():
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                g = hitchin.CartesianGrid(grid_n, R_dom)
                u = hitchin.solve_u(m, g)
                F = hitchin.solve_F(m, 1.0, u)
                got = hitchin.g_reg(m, 1.0, u, F).value
            want = 4 * math.pi ** 2 * ovspace.g_ov_norm(m, 1.0)
            return Identity(f"mt.03-full-metric-m{m:g}", "regularized Hitchin metric equals the OV metric",
                            got, want, _rel(got, want), tol.get("full_metric", 0.02))
        return f

    def inst(m):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            g = hitchin.EllipticGrid.for_radius(m, 7.0, 96, 48)
            u = hitchin.solve_u(m, g, tol=1e-13)
            F = hitchin.solve_F(m, 1.0, u)
            val = hitchin.instanton_diff(m, 1.0, u, F).value
        return val / (ovspace.v_inst(-2j * m, 0.5)[0])

    def constancy():
        ratios = [inst(m) for m in ms]
        mean = float(np.mean(ratios))
        spread = float((max(ratios) - min(ratios)) / abs(mean))
        return Identity("mt.04-instanton-constant", "instanton difference over V_inst is constant",
                        ratios, 16 * math.pi ** 2, spread, tol.get("instanton", 0.02))

    return ([quad(mu) for mu in (1.0, 2.0, 3.0)] + [closed(m) for m in ms]
            + [full(m) for m in ms] + [constancy])


def run_suite(name: str, params: dict, tol: dict) -> VerifyReport:
    if name == "semiflat":
        checks = _semiflat_checks(params["m"], params["zeta"], tol)
    elif name == "gluing":
        checks = _gluing_checks(params["m"], params["zeta"], tol)
    elif name == "metric":
        checks = _gluing_checks(-1.0, 1.0, tol) + _metric_checks(params["grid"], params["Rdom"], tol)
    else:
        raise UsageError(f"unknown suite {name!r}")
    n = min(_threads(), len(checks))
    if n > 1:
        with ThreadPoolExecutor(max_workers=n) as ex:
            entries = list(ex.map(lambda f: f(), checks))
    else:
        entries = [f() for f in checks]
    return VerifyReport(name, entries)


# ---------------------------------------------------------------------------
# subcommands


def _cmd_ov_metric(a) -> dict:
    m = core._check_m(a.m)
    z = -2j * m
    split = ovspace.potential(z, a.m3, N=a.N)
    out = {"m": m, "V": split.value, "V_sf": split.v_sf, "V_inst": split.v_inst,
           "g_ov": 4 * split.value, "g_ov_sf": 4 * split.v_sf}
    if a.out == "csv":
        text = emit_csv([[m.real, m.imag, out["V"], out["V_sf"], out["V_inst"], out["g_ov"],
                          out["g_ov_sf"]]], a.path,
                        ["m_re", "m_im", "V", "V_sf", "V_inst", "g_ov", "g_ov_sf"])
        return {"_text": text}
    return out


def _network_rows(net) -> list:
    rows = []
    for i, w in enumerate(net.walls):
        for k, z in enumerate(w.points):
            rows.append([i, k, float(z.real), float(z.imag)])
    return rows


def _cmd_trace_network(a) -> dict:
    net = network.trace_network(a.m, a.phase)
    network.render_network(net, a.svg)
    if a.csv:
        emit_csv(_network_rows(net), a.csv, ["wall_id", "k", "re_z", "im_z"])
    return {"m": complex(a.m), "phase": a.phase, "n_walls": len(net.walls),
            "walls": [{"label": w.label, "source": w.source, "asym_ray": w.asym_ray,
                       "hit_branch_point": w.hit_branch_point} for w in net.walls],
            "asymptotic_angle_error": network.asymptotic_angle_error(net)}


def _cmd_stokes(a) -> dict:
    pt = ModuliPoint(a.m, a.m3, a.theta_m)
    if a.kind == "sf":
        spec = stokes.ConnectionSpec(stokes.SEMIFLAT, a.zeta, pt)
    else:
        m = core._check_m(a.m)
        R = max(7.0, 4.2 * abs(2 * m) ** 0.5)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            u = hitchin.solve_u(m, hitchin.EllipticGrid.for_radius(m, R, a.grid, 48), tol=1e-12)
        spec = stokes.ConnectionSpec(stokes.HITCHIN_FULL, a.zeta, pt, hitchin.HitchinU(u))
    st = stokes.stokes_elements(spec)
    return {"a": st.a, "b": st.b, "Xe": ovspace.Xe(a.zeta, pt), "Xm": stokes.Xm(spec),
            "M0": list(st.M0_diag)}


def _cmd_hitchin(a) -> dict:
    m = core._check_m(a.m)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        g = hitchin.CartesianGrid(a.grid, a.Rdom)
        u = hitchin.solve_u(m, g)
        F = hitchin.solve_F(m, a.mdot, u)
        r = hitchin.g_reg(m, a.mdot, u, F)
        eg = hitchin.EllipticGrid.for_radius(m, max(7.0, 4.2 * abs(2 * m) ** 0.5), a.spectral, 48)
        ue = hitchin.solve_u(m, eg, tol=1e-13)
        Fe = hitchin.solve_F(m, a.mdot, ue)
        inst = hitchin.instanton_diff(m, a.mdot, ue, Fe)
    closed, _ = hitchin.g_sf_reg(m, a.mdot)
    return {"g_reg": r.value, "g_sf_reg": closed, "instanton_diff": inst.value,
            "residuals": {"newton_u": u.residual, "linear_F": F.residual,
                          "extrapolation": r.extrapolation_residual, "log_slope": r.log_slope,
                          "instanton_tail": inst.tail_estimate,
                          "spectral_newton_u": ue.residual}}


def _cmd_verify(a) -> dict:
    params = {"m": core._check_m(a.m), "zeta": a.zeta, "grid": a.grid, "Rdom": a.Rdom}
    rep = run_suite(a.suite, params, a.tolerances)
    d = rep.as_dict()
    if a.report:
        _write_text(a.report, dumps(d))
    return d


def _cmd_plot(a) -> dict:
    if a.what == "network":
        net = network.trace_network(a.m, a.phase)
        network.render_network(net, a.svg)
        if a.csv:
            emit_csv(_network_rows(net), a.csv, ["wall_id", "k", "re_z", "im_z"])
        return {"svg": a.svg, "n_walls": len(net.walls)}
    # metric along the negative real m axis
    ms = -np.linspace(0.25, 3.0, 45)
    g = [ovspace.g_ov_norm(m, 1.0) for m in ms]
    gs = [ovspace.g_ov_sf_norm(m, 1.0) for m in ms]
    emit_svg({"x": -ms, "series": {"g_ov": g, "g_ov_sf": gs}}, a.svg)
    if a.csv:
        emit_csv([[float(m), x, y] for m, x, y in zip(ms, g, gs)], a.csv, ["m", "g_ov", "g_ov_sf"])
    return {"svg": a.svg, "n_points": len(ms)}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ovlab", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="JSON file with default parameter values")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ov-metric", help="OV potential and metric on the Hitchin section")
    s.add_argument("--m", type=parse_complex, required=True)
    s.add_argument("--m3", type=float, default=0.5)
    s.add_argument("--N", type=int, default=None)
    s.add_argument("--out", choices=("json", "csv"), default="json")
    s.add_argument("--path", help="output file (default stdout)")

    s = sub.add_parser("trace-network", help="trace a spectral network")
    s.add_argument("--m", type=parse_complex, required=True)
    s.add_argument("--phase", type=float, required=True)
    s.add_argument("--svg", required=True)
    s.add_argument("--csv")
    s.add_argument("--out", help="JSON summary file (default stdout)")

    s = sub.add_parser("stokes", help="Stokes data and twistor coordinates")
    s.add_argument("--zeta", type=parse_complex, required=True)
    s.add_argument("--m", type=parse_complex, required=True)
    s.add_argument("--m3", type=float, default=0.5)
    s.add_argument("--theta-m", dest="theta_m", type=float, default=0.0)
    s.add_argument("--kind", choices=("sf", "full"), default="sf")
    s.add_argument("--grid", type=int, default=64, help="Chebyshev order for --kind full")
    s.add_argument("--out", help="JSON output file (default stdout)")

    s = sub.add_parser("hitchin", help="regularized metric from the Hitchin equations")
    s.add_argument("--m", type=parse_complex, required=True)
    s.add_argument("--mdot", type=parse_complex, required=True)
    s.add_argument("--grid", type=int, default=512)
    s.add_argument("--Rdom", type=float, default=12.0)
    s.add_argument("--spectral", type=int, default=96, help="Chebyshev order for instanton_diff")
    s.add_argument("--out", help="JSON output file (default stdout)")

    s = sub.add_parser("verify", help="run a verification suite")
    s.add_argument("--suite", choices=("semiflat", "gluing", "metric"), required=True)
    s.add_argument("--m", type=parse_complex, default=complex(-1.0))
    s.add_argument("--zeta", type=parse_complex, default=complex(1.0))
    s.add_argument("--grid", type=int, default=512)
    s.add_argument("--Rdom", type=float, default=12.0)
    s.add_argument("--report", help="JSON report file")
    s.add_argument("--out", help="JSON output file (default stdout)")

    s = sub.add_parser("plot", help="static SVG/CSV figures")
    s.add_argument("what", choices=("network", "metric"))
    s.add_argument("--m", type=parse_complex, default=complex(-1.0))
    s.add_argument("--phase", type=float, default=0.0)
    s.add_argument("--svg", required=True)
    s.add_argument("--csv")
    s.add_argument("--out", help="JSON summary file (default stdout)")
    return p


_COMMANDS = {"ov-metric": _cmd_ov_metric, "trace-network": _cmd_trace_network,
             "stokes": _cmd_stokes, "hitchin": _cmd_hitchin, "verify": _cmd_verify,
             "plot": _cmd_plot}


def _apply_config(parser, command: str, path: str) -> dict:
    """Install config values as subcommand defaults so that flags win."""
    sp = parser._subparsers._group_actions[0].choices[command]
    allowed = {a.dest for a in sp._actions if a.dest != "help"}
    data = _load_config(path, command, allowed)
    tol = data.pop("tolerances", {})
    conv = {}
    for act in sp._actions:
        if act.dest in data:
            v = data[act.dest]
            try:
                conv[act.dest] = act.type(v) if act.type is not None and not isinstance(v, bool) else v
            except (TypeError, ValueError) as exc:
                raise UsageError(f"bad config value for {act.dest!r}: {v!r}") from exc
            if act.choices is not None and conv[act.dest] not in act.choices:
                raise UsageError(f"config value for {act.dest!r} must be one of {list(act.choices)}")
            # supplied by the config, so no longer required on the command line
            act.required = False
    sp.set_defaults(**conv)
    return tol


_NEGATIVE = re.compile(r"^-[0-9.][0-9.,eE+-]*$")


def _join_negative_values(argv: list) -> list:
    """Turn ``--m -1,0`` into ``--m=-1,0`` so argparse does not see an option."""
    out, i = [], 0
    while i < len(argv):
        tok = argv[i]
        if (tok.startswith("--") and "=" not in tok and i + 1 < len(argv)
                and _NEGATIVE.match(argv[i + 1])):
            out.append(f"{tok}={argv[i + 1]}")
            i += 2
            continue
        out.append(tok)
        i += 1
    return out


def run(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    argv = _join_negative_values(list(sys.argv[1:] if argv is None else argv))
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, rest = pre.parse_known_args(argv)
    tol = {}
    try:
        if known.config:
            command = next((t for t in rest if t in _COMMANDS), None)
            if command is None:
                parser.print_usage(sys.stderr)
                print("ovlab: error: a subcommand is required", file=sys.stderr)
                return 2
            tol = _apply_config(parser, command, known.config)
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors and 0 on --help
        return int(exc.code or 0)
    except UsageError as exc:
        print(f"ovlab: error: {exc}", file=sys.stderr)
        return 2
    try:
        cfg = RunConfig(args.command, {k: v for k, v in vars(args).items() if k != "command"}, tol)
        args.tolerances = cfg.tolerances
        result = _COMMANDS[args.command](args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (UsageError, argparse.ArgumentTypeError, core.DegenerateDifferentialError,
            stokes.SpecError, hitchin.DomainTooSmallError, network.JumpLocusError) as exc:
        print(f"ovlab: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"ovlab: error: {exc}", file=sys.stderr)
        return 2
    if "_text" in result:
        if getattr(args, "path", None) is None:
            sys.stdout.write(result["_text"])
        return 0
    text = dumps(result)
    out = getattr(args, "out", None) if args.command != "ov-metric" else args.path
    if out and out not in ("json",):
        _write_text(out, text)
    else:
        sys.stdout.write(text)
    if args.command == "verify" and not result["all_pass"]:
        return 1
    return 0


def main() -> None:
    sys.exit(run())
