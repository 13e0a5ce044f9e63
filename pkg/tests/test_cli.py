import csv
import json
import math
import os

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wavebreak import output
from wavebreak.cli import main
from wavebreak.errors import ConfigError
from wavebreak.scenario import KINDS, Scenario, parse_scenario, parse_text
from wavebreak.threshold import X_INTERCEPT, eval_G


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


SAMPLE_PARAMS = {
    "classify": {"points": [[-5.0, 3.5], [-1.0, 0.5]]},
    "separatrix": {"points": 50},
    "portrait": {"figure": "fig1", "arrows": 5},
    "ode_run": {"point": [-3.0, 1.0], "system": "inequality", "slack": {"kind": "piecewise", "pieces": 4}},
    "ode_sweep": {"nx": 10, "ny": 12, "band": 0.1},
    "pde_run": {"kernel": {"kind": "sech2", "width": 2.0},
                "profile": {"bumps": [{"amplitude": -1.0, "center": 0.0, "width": 1.0}]}, "n": 1024},
    "pde_sweep": {"kernel": {"kind": "gaussian"}, "points": [[-5.0, 3.5]]},
    "report": {"inputs": ["a.json"], "samples": 10},
}


# --- scenarios ----------------------------------------------------------------------

@pytest.mark.parametrize("kind", KINDS)
def test_round_trip(kind):
    s = Scenario.build(kind, SAMPLE_PARAMS[kind], {"dir": "out", "stem": "x"}, seed=12345678901234567890)
    assert parse_text(s.to_toml()) == s


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.floats(-1e6, -1e-3), st.floats(0.0, 1e6)), min_size=1, max_size=5),
       st.one_of(st.none(), st.integers(0, 2**64 - 1)))
def test_round_trip_classify_points(points, seed):
    s = Scenario.build("classify", {"points": [list(p) for p in points]}, seed=seed)
    assert parse_text(s.to_toml()) == s


def test_minimal_classify(tmp_path):
    f = tmp_path / "s.toml"
    f.write_text('kind = "classify"\n[classify]\npoints = [[-5.0, 3.5]]\n')
    s = parse_scenario(f)
    assert s.kind == "classify" and s.params["points"] == [[-5.0, 3.5]]


def test_missing_kernel_is_named():
    with pytest.raises(ConfigError, match="kernel"):
        parse_text('kind = "pde_run"\n[pde_run]\nprofile = {m1 = -5.0, m2 = 3.5}\n')


def test_negative_bump_width():
    text = ('kind = "pde_run"\n[pde_run]\nkernel = {kind = "gaussian"}\n'
            'profile = {bumps = [{amplitude = 1.0, center = 0.0, width = -2.0}]}\n')
    with pytest.raises(ConfigError, match=r"bumps\[0\]\.width"):
        parse_text(text)


def test_unknown_key_named_with_line():
    with pytest.raises(ConfigError, match=r"classify\.colour.*line 4"):
        parse_text('kind = "classify"\n\n[classify]\ncolour = 1\n')


def test_parse_error_has_line():
    with pytest.raises(ConfigError, match="line 2"):
        parse_text('kind = "classify"\n[classify\n')


def test_tolerances_must_be_positive():
    with pytest.raises(ConfigError, match="rtol"):
        Scenario.build("ode_run", {"rtol": 0.0})


def test_seed_required_for_random_slack():
    with pytest.raises(ConfigError, match="seed"):
        Scenario.build("ode_run", {"system": "inequality", "slack": {"kind": "piecewise"}})


def test_point_outside_quadrant():
    with pytest.raises(ConfigError, match=r"points\[0\]"):
        Scenario.build("classify", {"points": [[1.0, 2.0]]})


# --- command line --------------------------------------------------------------------

def test_classify_command(tmp_path, capsys):
    assert main(["classify", "--point", "-5", "3.5", "--point", "-1", "0.5", "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "classify.csv")
    assert rows[0]["in_omega"] == "true" and rows[0]["seliger_holds"] == "false"
    assert float(rows[0]["G"]) == pytest.approx(-5.05271146016716)
    assert rows[1]["time_bound"] == ""
    assert "classify: 2 points" in capsys.readouterr().out


def test_floats_have_17_digits(tmp_path):
    main(["classify", "--point", "-5", "3.5", "--out", str(tmp_path)])
    g = read_csv(tmp_path / "classify.csv")[0]["G"]
    assert len(g.lstrip("-").replace(".", "").lstrip("0")) == 17
    assert float(g) == eval_G(-5.0, 3.5)


def test_separatrix_command(tmp_path):
    assert main(["separatrix", "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "separatrix.csv")
    assert len(rows) == 500 and list(rows[0]) == ["x", "y", "G_residual"]
    assert max(abs(float(r["G_residual"])) for r in rows) < 1e-8
    assert float(rows[-1]["x"]) == pytest.approx(X_INTERCEPT)


def test_ode_sweep_summary(tmp_path, capsys):
    assert main(["ode-sweep", "--nx", "40", "--ny", "40", "--out", str(tmp_path)]) == 0
    assert "agreement >= 99% outside band" in capsys.readouterr().out
    summary = json.loads((tmp_path / "ode_sweep_summary.json").read_text())
    assert summary["agreement"] >= 0.99


def test_pde_witness_run(tmp_path):
    cfg = tmp_path / "w.toml"
    cfg.write_text('kind = "pde_run"\n[pde_run]\nkernel = {kind = "gaussian", width = 1.0}\n'
                   'profile = {m1 = -5.0, m2 = 3.5}\nn = 8192\nL = 160.0\nt_max = 0.6\n')
    assert main(["pde-run", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "pde_run.json").read_text())
    assert rep["bound_satisfied"] is True
    assert rep["t_break_observed"] <= 0.3958 * 1.05


def test_exit_codes(tmp_path):
    assert main(["frobnicate"]) == 1
    assert main(["classify", "--point", "x", "1"]) == 1
    bad = tmp_path / "bad.toml"
    bad.write_text('kind = "classify"\n[classify]\nbogus = 1\n')
    assert main(["classify", "--config", str(bad)]) == 2
    good = tmp_path / "good.toml"
    good.write_text('kind = "classify"\n')
    assert main(["ode-run", "--config", str(good)]) == 1  # kind mismatch is a usage error
    assert main(["classify", "--config", str(tmp_path / "missing.toml")]) == 2
    # 512 modes cannot resolve the witness: numerical failure
    under = tmp_path / "under.toml"
    under.write_text('kind = "pde_run"\n[pde_run]\nkernel = {kind = "gaussian"}\n'
                     'profile = {m1 = -5.0, m2 = 3.5}\nn = 512\nt_max = 0.6\n')
    assert main(["pde-run", "--config", str(under), "--out", str(tmp_path)]) == 3


def test_global_flags_before_subcommand(tmp_path):
    assert main(["--out", str(tmp_path), "classify"]) == 0
    assert (tmp_path / "classify.csv").exists()


def test_seed_flag_satisfies_random_slack(tmp_path):
    cfg = tmp_path / "s.toml"
    cfg.write_text('kind = "ode_run"\n[ode_run]\nsystem = "inequality"\nslack = {kind = "piecewise"}\n')
    assert main(["ode-run", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    assert main(["ode-run", "--config", str(cfg), "--seed", "3", "--out", str(tmp_path)]) == 0


def test_deterministic_outputs(tmp_path):
    cfg = tmp_path / "s.toml"
    cfg.write_text('kind = "ode_run"\nseed = 11\n[ode_run]\npoint = [-4.0, 2.0]\nsystem = "inequality"\n'
                   'slack = {kind = "piecewise"}\n')
    blobs = []
    for d in ("a", "b"):
        assert main(["ode-run", "--config", str(cfg), "--out", str(tmp_path / d)]) == 0
        blobs.append((tmp_path / d / "ode_run.csv").read_bytes())
    assert blobs[0] == blobs[1]
    main(["report", "--samples", "500", "--seed", "4", "--out", str(tmp_path / "r1")])
    main(["report", "--samples", "500", "--seed", "4", "--out", str(tmp_path / "r2")])
    assert (tmp_path / "r1" / "report.txt").read_bytes() == (tmp_path / "r2" / "report.txt").read_bytes()


def test_atomic_write_leaves_nothing_on_crash(tmp_path, monkeypatch):
    target = tmp_path / "x.csv"
    output.write_csv(target, ("a",), [(1.0,)])
    before = target.read_bytes()

    def boom(*a, **k):
        raise OSError("disk full")

    monkeypatch.setattr(output.os, "replace", boom)
    with pytest.raises(OSError):
        output.write_csv(target, ("a",), [(2.0,)])
    assert target.read_bytes() == before
    assert sorted(os.listdir(tmp_path)) == ["x.csv"]


# --- figures and report ---------------------------------------------------------------

def test_fig1_data(tmp_path):
    assert main(["portrait", "--figure", "fig1", "--out", str(tmp_path)]) == 0
    contour = read_csv(tmp_path / "fig1_contour.csv")
    near = [r for r in contour if math.hypot(float(r["m1"]) + 2, float(r["m2"]) - 2) < 1e-12]
    assert near and all(abs(float(r["residual"])) < 1e-8 for r in near)
    assert max(abs(float(r["residual"])) for r in contour) < 1e-8
    assert (tmp_path / "fig1.gp").read_text().count("fig1_") == 3


def test_fig2_data(tmp_path):
    assert main(["portrait", "--figure", "fig2", "--out", str(tmp_path)]) == 0
    seliger = read_csv(tmp_path / "fig2_seliger.csv")
    assert [(float(r["m1"]), float(r["m2"])) for r in seliger] == [(-8.0, 6.0), (-2.0, 0.0)]
    sep = [(float(r["m1"]), float(r["m2"])) for r in read_csv(tmp_path / "fig2_separatrix.csv")]
    assert (X_INTERCEPT, 0.0) in sep and (-2.0, 2.0) in sep
    raster = read_csv(tmp_path / "fig2_raster.csv")

    def label_near(m1, m2):
        best = min(raster, key=lambda r: math.hypot(float(r["m1"]) - m1, float(r["m2"]) - m2))
        return best["label"]

    assert label_near(-5.0, 3.5) == "blow-up"
    assert label_near(-1.0, 0.5) == "bounded"


def test_report(tmp_path, capsys):
    main(["classify", "--point", "-5", "3.5", "--point", "-4", "1", "--out", str(tmp_path)])
    assert main(["report", str(tmp_path / "classify.csv"), "--samples", "2000", "--seed", "1",
                 "--out", str(tmp_path)]) == 0
    wit = read_csv(tmp_path / "report_witnesses.csv")
    assert [(float(r["m1"]), float(r["m2"])) for r in wit] == [(-5.0, 3.5)]
    assert read_csv(tmp_path / "report_counterexamples.csv") == []
    assert "2000 points, 0 outside the region" in (tmp_path / "report.txt").read_text()


def test_empty_report(tmp_path):
    assert main(["report", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "report.txt").read_text() == "no artifacts\n"


def test_report_missing_input(tmp_path):
    assert main(["report", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == 2
