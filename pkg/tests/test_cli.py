import json

import pytest
from hypothesis import given, strategies as st

from ovlab.cli import RunConfig, UsageError, emit_csv, emit_svg, fmt_real, parse_complex, run
from ovlab.ovspace import potential


def _json(capsys):
    return json.loads(capsys.readouterr().out)


def test_ov_metric_schema(capsys):
    assert run(["ov-metric", "--m", "-1,0"]) == 0
    out = _json(capsys)
    assert {"V", "V_sf", "V_inst", "g_ov", "g_ov_sf"} <= set(out)
    assert out["m"] == [-1.0, 0.0]
    split = potential(2j, 0.5)
    assert out["V"] == pytest.approx(split.value, rel=1e-14)
    assert out["g_ov"] == pytest.approx(4 * out["V"])


def test_ov_metric_csv(tmp_path):
    p = tmp_path / "m.csv"
    assert run(["ov-metric", "--m", "-1,0", "--out", "csv", "--path", str(p)]) == 0
    lines = p.read_bytes().decode("utf-8").split("\n")
    assert lines[0] == "m_re,m_im,V,V_sf,V_inst,g_ov,g_ov_sf"
    assert lines[-1] == "" and b"\r" not in p.read_bytes()


def test_usage_errors_exit_2(capsys):
    assert run(["ov-metric"]) == 2
    assert "usage" in capsys.readouterr().err
    assert run(["nonsense"]) == 2
    assert run(["ov-metric", "--m", "0,0"]) == 2
    assert "m = 0" in capsys.readouterr().err
    assert run(["stokes", "--zeta", "0,2", "--m", "-1,0"]) == 2


def test_verify_semiflat_passes(tmp_path, capsys):
    rep = tmp_path / "rep.json"
    assert run(["verify", "--suite", "semiflat", "--report", str(rep)]) == 0
    out = _json(capsys)
    assert out["all_pass"] and len(out["entries"]) >= 6
    ids = [e["id"] for e in out["entries"]]
    assert ids == sorted(ids)
    for e in out["entries"]:
        assert e["pass"] == (e["residual"] <= e["tolerance"])
        assert e["anchor"]
    first = rep.read_bytes()
    assert run(["verify", "--suite", "semiflat", "--report", str(rep)]) == 0
    assert rep.read_bytes() == first


def test_verify_failure_exit_1(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"suite": "semiflat", "tolerances": {"monodromy": 1e-300,
                                                                   "holonomy": 1e-300}}))
    assert run(["--config", str(cfg), "verify"]) == 1
    out = _json(capsys)
    assert not out["all_pass"]


def test_config_defaults_and_overrides(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"m": "-2,0"}))
    assert run(["--config", str(cfg), "ov-metric"]) == 0
    assert _json(capsys)["m"] == [-2.0, 0.0]
    assert run(["--config", str(cfg), "ov-metric", "--m", "-1,0"]) == 0
    assert _json(capsys)["m"] == [-1.0, 0.0]
    cfg.write_text(json.dumps({"m": "-2,0", "bogus": 1}))
    assert run(["--config", str(cfg), "ov-metric"]) == 2


def test_run_config_rejects_bad_tolerance():
    with pytest.raises(UsageError):
        RunConfig("verify", {}, {"holonomy": -1.0})


def test_stokes_json(capsys):
    assert run(["stokes", "--zeta", "1,0", "--m", "-1,0", "--m3", "0.3", "--theta-m", "0.7"]) == 0
    out = _json(capsys)
    assert set(out) == {"a", "b", "Xe", "Xm", "M0"}
    assert len(out["Xm"]) == 2 and len(out["M0"]) == 2


def test_trace_network_outputs(tmp_path, capsys):
    svg, csv = tmp_path / "n.svg", tmp_path / "n.csv"
    args = ["trace-network", "--m", "-1,0", "--phase", "0.3", "--svg", str(svg), "--csv", str(csv)]
    assert run(args) == 0
    out = _json(capsys)
    assert out["n_walls"] == 6
    assert csv.read_text().splitlines()[0] == "wall_id,k,re_z,im_z"
    first = (svg.read_bytes(), csv.read_bytes())
    assert run(args) == 0
    assert (svg.read_bytes(), csv.read_bytes()) == first


def test_plot_metric(tmp_path, capsys):
    svg = tmp_path / "g.svg"
    assert run(["plot", "metric", "--svg", str(svg)]) == 0
    assert svg.read_text().startswith("<svg")


def test_emitters(tmp_path):
    assert emit_csv([], tmp_path / "e.csv", ["a", "b"]) == "a,b\n"
    with pytest.raises(ValueError):
        emit_csv([[1.0]], None, ["a", "b"])
    a = emit_svg({"x": [0, 1, 2], "series": {"s": [1.0, 4.0, 9.0]}}, None)
    assert a == emit_svg({"x": [0, 1, 2], "series": {"s": [1.0, 4.0, 9.0]}}, None)
    assert emit_svg({}, None).startswith("<svg")
    with pytest.raises(OSError, match="nope"):
        emit_csv([], tmp_path / "nope" / "x.csv", ["a"])


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_twelve_digit_round_trip(x):
    # 12 significant digits bound the relative error by 5e-12
    assert float(fmt_real(x)) == pytest.approx(x, rel=1e-11, abs=0)


def test_parse_complex():
    assert parse_complex("-1,0.5") == complex(-1, 0.5)
    assert parse_complex("2") == 2
