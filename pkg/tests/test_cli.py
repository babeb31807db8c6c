from __future__ import annotations

import json
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fdsing import cli
from fdsing.cli import ConfigError, main, normalize, parse_config, serialize_config
from fdsing.plotting import emit_plots


def _write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_defaults_and_round_trip():
    cfg = normalize({})
    assert cfg["problem"] == {"n": 2, "m": 0.2, "lam": 3.0, "nu": 2.0}
    text = serialize_config(cfg)
    assert parse_config(text) == cfg
    assert serialize_config(parse_config(text)) == text
    assert parse_config(serialize_config(cfg, "json"), "json") == cfg


@given(
    st.integers(min_value=2, max_value=6),
    st.floats(min_value=0.01, max_value=0.99),
    st.sampled_from(["constant", "cosine", "zonal_harmonic"]),
    st.integers(min_value=1, max_value=64),
)
@settings(max_examples=40, deadline=None)
def test_round_trip_property(n, m, family, nodes):
    text = f"[problem]\nn = {n}\nm = {m!r}\n[profile]\nfamily = {family}\nnodes = {nodes}\n"
    cfg = parse_config(text)
    assert serialize_config(parse_config(serialize_config(cfg))) == serialize_config(cfg)
    assert cfg["problem"]["m"] == m and cfg["profile"]["family"] == family


@pytest.mark.parametrize(
    "text",
    [
        "[problem]\nbogus = 1\n",
        "[nosuch]\nx = 1\n",
        "[problem]\nn = 2.5\n",
        "[profile]\nfamily = sawtooth\n",
        "[grid]\nNs = \"many\"\n",
        "[problem\n",
    ],
)
def test_invalid_configs_rejected(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_unknown_key_exit_code(tmp_path):
    cfg = _write(tmp_path, "bad.ini", "[problem]\nbogus = 1\n")
    assert main(["regimes", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
    assert main(["regimes", "--config", str(tmp_path / "missing.ini"), "--out", str(tmp_path / "o")]) == 1


def test_regimes_table(tmp_path):
    out = tmp_path / "reg"
    cfg = _write(tmp_path, "r.json", json.dumps({"regimes": {"n_values": [3]}}))
    assert main(["regimes", "--config", str(cfg), "--out", str(out)]) == 0
    rep = json.loads((out / "report.json").read_text())
    row = rep["table"][0]
    assert Fraction(row["m_c"]) == Fraction(1, 3)
    assert Fraction(row["m_star"]) == Fraction(1, 2)
    assert Fraction(row["m_starstar"]) == 0
    man = json.loads((out / "manifest.json").read_text())
    assert man["status"] == 0 and len(man["config_hash"]) == 64
    assert "regimes.csv" in man["artifacts"]


def test_assumption_failure_is_validation_error(tmp_path):
    cfg = _write(tmp_path, "e.ini", "[problem]\nn = 3\nm = 0.5\nlam = 4.0\nnu = 1.0\n")
    assert main(["envelope", "--config", str(cfg), "--out", str(tmp_path / "e")]) == 1
    assert json.loads((tmp_path / "e" / "diagnostics.json").read_text())["error"] == "validation"


def test_residual_stationary(tmp_path):
    cfg = _write(tmp_path, "s.ini", "[problem]\nn = 3\nm = 0.6\n")
    assert main(["residual", "--config", str(cfg), "--out", str(tmp_path / "s")]) == 0
    rep = json.loads((tmp_path / "s" / "report.json").read_text())
    assert rep["max_abs_residual"] < 1e-12 and rep["samples"] == 10000


def test_residual_traveling_wave(tmp_path):
    cfg = _write(tmp_path, "t.ini", "[problem]\nn = 3\nm = 0.6\n[residual]\nform = traveling_wave\n")
    assert main(["residual", "--config", str(cfg), "--out", str(tmp_path / "t")]) == 0
    rep = json.loads((tmp_path / "t" / "report.json").read_text())
    assert rep["C"] == pytest.approx(1.8**2.5)


def test_weakform_stationary_preset(tmp_path):
    cfg = _write(tmp_path, "w.ini", "[problem]\nn = 3\nm = 0.6\n")
    out = tmp_path / "w"
    assert main(["weakform", "--config", str(cfg), "--out", str(out)]) == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["limit"] / rep["weight"] == pytest.approx(4 * 3.141592653589793, rel=0.01)
    assert (out / "weakform.svg").exists()


def test_lp_monomial_and_workers_agree(tmp_path):
    cfg = _write(tmp_path, "l.ini", "[problem]\nn = 3\n[lp]\nsource = monomial\ngamma = 3.5\neps0 = 1e-3\ncount = 6\n")
    outs = []
    for w in (1, 2):
        out = tmp_path / f"l{w}"
        assert main(["lp", "--config", str(cfg), "--out", str(out), "--workers", str(w)]) == 0
        outs.append(out)
    a, b = ((o / "lp.csv").read_bytes() for o in outs)
    assert a == b
    rep = json.loads((outs[0] / "report.json").read_text())
    assert rep["classification"] == "power_divergent"
    assert rep["exponent"] == pytest.approx(0.5, rel=1e-3)


def test_critical_flow_failure_exit_code(tmp_path):
    cfg = _write(tmp_path, "c.ini", "[problem]\nn = 3\n[profile]\nfamily = constant\nnodes = 8\n"
                 "[critical]\nmode = flow\nm = 0.2\nT = 10.0\ndt = 0.1\n")
    out = tmp_path / "c"
    assert main(["critical", "--config", str(cfg), "--out", str(out)]) == 2
    diag = json.loads((out / "diagnostics.json").read_text())
    assert diag["error"] == "numerical" and diag["blowdown_estimate"] == pytest.approx(5.0, rel=0.05)


def test_critical_orbits_deterministic(tmp_path):
    cfg = _write(tmp_path, "o.ini", "[critical]\nstarts = [[1.1, 0.0], [1.2, 0.0]]\nh = 1e-3\ncurve = [1.05, 1.1]\n")
    outs = []
    for i in range(2):
        out = tmp_path / f"o{i}"
        assert main(["critical", "--config", str(cfg), "--out", str(out)]) == 0
        outs.append(out)
    for name in ("report.json", "orbit_00.csv", "phase.svg"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
    rep = json.loads((outs[0] / "report.json").read_text())
    assert all(o["status"] == "closed" for o in rep["orbits"])


def test_env_var_sets_output_root(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.ENV_OUTPUT_ROOT, str(tmp_path / "root"))
    assert main(["regimes"]) == 0
    assert (tmp_path / "root" / "regimes" / "manifest.json").exists()


def test_empty_schedule_plot_warns(tmp_path):
    with pytest.warns(RuntimeWarning):
        assert emit_plots({"epsilons": [], "values": []}, "lp", tmp_path) == []


def test_broken_report_degrades_to_warning(tmp_path):
    with pytest.warns(RuntimeWarning):
        assert emit_plots({"orbits": [{"beta": [1.0]}]}, "phase", tmp_path) == []
