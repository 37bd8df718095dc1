import math
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from ovlab.core import SheetPoint, branch_points
from ovlab.network import (anti_stokes_rays, asymptotic_angle_error, find_saddle_phase,
                           render_network, seed_directions, topology, trace_network,
                           trajectory_step_field, triangle_branch_point)


def _unoriented(angles):
    return sorted(round(a % math.pi, 9) % round(math.pi, 9) for a in angles)


def test_step_field_examples():
    # m = 0 is degenerate for the cover, so use a tiny m far from z = 1
    d = trajectory_step_field(SheetPoint(1.0, 1), 0.0, 1e-12)
    assert d == pytest.approx(1.0)
    d = trajectory_step_field(SheetPoint(1.0, 1), math.pi / 2, 1e-12)
    assert d == pytest.approx(1j)


@pytest.mark.parametrize("phase", [0.0, 0.7, -2.0])
def test_step_field_defining_condition(phase):
    m, z = -1.0, 2.0
    d = trajectory_step_field(SheetPoint(z, 1), phase, m)
    lam = math.sqrt(3.0) * d
    assert abs(d) == pytest.approx(1.0)
    assert abs((lam * np.exp(-1j * phase)).imag) < 1e-12
    assert (lam * np.exp(-1j * phase)).real > 0


def test_seed_directions_example_and_symmetry():
    phis = seed_directions(1.0, 0.0, -0.5)
    assert np.sort(phis % (2 * math.pi)) == pytest.approx([0, 2 * math.pi / 3, 4 * math.pi / 3])
    a = seed_directions(1.0 + 0.3j, 0.4, -0.5 + 0.2j)
    b = seed_directions(1.0 + 0.3j, 0.4 + math.pi, -0.5 + 0.2j)
    assert _unoriented(a) == _unoriented(b)


def _liouville_antiderivative(z, y, m):
    arg = np.unwrap(np.angle(z + y))
    return z * y / 2 + m * (np.log(np.abs(z + y)) + 1j * arg)


@pytest.mark.parametrize("m,phase", [(-1.0, 0.3), (1 + 1j, 1.2)])
def test_walls_keep_constant_phase(m, phase):
    net = trace_network(m, phase)
    for w in net.walls:
        z, y = w.points[1:101], w.sheet_y[1:101]
        F = _liouville_antiderivative(z, y, m)
        # the initial seed offset contributes a tiny constant; compare increments
        inc = (F - F[0]) * np.exp(-1j * phase)
        assert np.max(np.abs(inc.imag)) < 1e-8 * max(1.0, np.max(np.abs(inc)))
        assert np.all(inc.real[1:] > 0)


def test_saddle_and_topologies():
    assert trace_network(-1.0, math.pi / 2).saddle
    for phase in (math.pi / 2 - 0.2, math.pi / 2 + 0.2):
        net = trace_network(-1.0, phase)
        assert not net.saddle
        s = (np.exp(-1j * phase) * -1.0).real
        assert net.topology == ("PosRe" if s > 0 else "NegRe")
    assert trace_network(-1.0, 0.0).topology == "NegRe"
    assert topology(1.0, 1j) == "Critical"


def test_anti_stokes_rays_labelling():
    rays = anti_stokes_rays(-1.0, -1.0)
    assert rays[0] == pytest.approx(-math.pi / 2)
    assert np.diff(rays) == pytest.approx([math.pi / 2] * 3)


def test_walls_asymptote_to_rays():
    net = trace_network(-1.0, 0.0)
    assert len(net.walls_from(0)) == 3 and len(net.walls_from(1)) == 3
    assert asymptotic_angle_error(net) < 0.01
    assert all(abs(w.points[-1]) > 49 for w in net.walls)


def test_triangle_branch_point_is_unique():
    net = trace_network(-1.0, 0.3)
    k = triangle_branch_point(net)
    assert k in (0, 1)
    rays = {w.asym_ray for w in net.walls_from(k)}
    assert {2, 3} <= rays


def test_saddle_phase_bisection():
    ph = find_saddle_phase(-1.0, math.pi / 2 - 0.3, math.pi / 2 + 0.25, tol=1e-6)
    assert abs(ph - math.pi / 2) < 1e-3


def test_render_empty_and_deterministic(tmp_path):
    text = render_network(None, tmp_path / "empty.svg")
    root = ET.fromstring(text)
    assert root.tag.endswith("svg")
    assert not [e for e in root.iter() if e.tag.endswith("polyline")]
    net = trace_network(-1.0, math.pi / 2 - 0.2)
    a = render_network(net, tmp_path / "a.svg")
    b = render_network(trace_network(-1.0, math.pi / 2 - 0.2), tmp_path / "b.svg")
    assert a == b
    assert (tmp_path / "a.svg").read_bytes() == (tmp_path / "b.svg").read_bytes()


def test_saddle_wall_has_distinct_style():
    text = render_network(trace_network(-1.0, math.pi / 2), None)
    assert 'stroke="#cc0000"' in text
    text = render_network(trace_network(-1.0, math.pi / 2 - 0.2), None)
    assert 'stroke="#cc0000"' not in text
    for b in branch_points(-1.0):
        assert b != 0
