import json
import os
import subprocess
import sys

import numpy as np
import pytest

from overdet.cli import clean, dumps, main
from overdet.config import Scenario
from overdet.errors import ConfigError, ParseError
from overdet.field import LineField
from overdet.render import format_index, render_svg

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
SCEN = os.path.join(ROOT, "scenarios")
GOLDEN = os.path.join(ROOT, "tests", "golden")


def run(cmd, scenario, out, *extra):
    return main([cmd, "--config", os.path.join(SCEN, scenario), "--out", str(out), *extra])


def read(path):
    with open(path, encoding="utf-8") as fh:
        return fh.read()


@pytest.mark.parametrize("cmd,scenario,artifact,golden", [
    ("index-audit", "perturbed-serrin.ini", "index.json", "perturbed-serrin-index.json"),
    ("check-solution", "ellipse-canonical.ini", "check-solution.json", "ellipse-canonical-check.json"),
    ("index-audit", "qd-sphere.ini", "index.json", "qd-sphere-index.json"),
])
def test_golden_reports(tmp_path, cmd, scenario, artifact, golden):
    assert run(cmd, scenario, tmp_path) == 0
    assert read(tmp_path / artifact) == read(os.path.join(GOLDEN, golden))


def test_perturbed_serrin_audit(tmp_path):
    assert run("index-audit", "perturbed-serrin.ini", tmp_path) == 0
    rep = json.loads(read(tmp_path / "index.json"))
    assert [e["index"] for e in rep["interior"]] == [-0.5]
    for name in ("linefield.csv", "curve.csv", "singularities.json"):
        assert (tmp_path / name).exists()


def test_check_solution_exit_codes(tmp_path):
    assert run("check-solution", "ellipse-canonical.ini", tmp_path / "a") == 0
    assert json.loads(read(tmp_path / "a" / "check-solution.json"))["verdict"] == "canonical"
    assert run("check-solution", "ellipse-half.ini", tmp_path / "b") == 1
    rep = json.loads(read(tmp_path / "b" / "check-solution.json"))
    assert rep["neumannMax"] > 0 and rep["verdict"] == "not-a-solution"


def test_other_subcommands(tmp_path):
    assert run("verify-family", "family-ma.ini", tmp_path / "f") == 0
    assert json.loads(read(tmp_path / "f" / "verify-family.json"))["pass"]
    assert run("extract-neumann", "serrin-neumann.ini", tmp_path / "n") == 0
    rep = json.loads(read(tmp_path / "n" / "neumann.json"))
    assert rep["gMin"] == rep["gMax"] == 0.5
    assert run("solve", "solve-ma.ini", tmp_path / "s") == 0
    log = json.loads(read(tmp_path / "s" / "convergence.json"))
    assert isinstance(log, list) and log[-1] < 1e-8
    assert json.loads(read(tmp_path / "s" / "solve.json"))["maxError"] < 1e-9
    assert run("index-audit", "qd-disk.ini", tmp_path / "d") == 1  # contradiction flagged
    assert json.loads(read(tmp_path / "d" / "index.json"))["contradiction"]


def test_flags(tmp_path):
    assert run("solve", "solve-serrin.ini", tmp_path / "g", "--grid", "16") == 0
    assert json.loads(read(tmp_path / "g" / "solve.json"))["h"] == 0.0625
    assert run("check-solution", "ellipse-canonical.ini", tmp_path / "t", "--tol-scale", "1e-20") == 1
    assert run("verify-family", "family-ma.ini", tmp_path / "s1", "--seed", "7") == 0
    assert json.loads(read(tmp_path / "s1" / "verify-family.json"))["seed"] == 7


def test_idempotent_and_deterministic(tmp_path):
    for k in range(2):
        assert run("index-audit", "qd-doubled.ini", tmp_path / str(k)) == 0
        assert run("render", "qd-doubled.ini", tmp_path / str(k)) == 0
    for name in ("index.json", "linefield.csv", "linefield.svg"):
        assert read(tmp_path / "0" / name) == read(tmp_path / "1" / name)


def test_input_errors(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[equation]\nname = nope\n[family]\nbase = serrin\n")
    assert main(["verify-family", "--config", str(bad), "--out", str(tmp_path)]) == 2
    assert "nope" in capsys.readouterr().err
    bad.write_text("[equation]\nname = serrin-laplace\n[bogus]\nx = 1\n")
    assert main(["verify-family", "--config", str(bad)]) == 2
    assert "line 3" in capsys.readouterr().err
    assert main(["verify-family", "--config", str(tmp_path / "missing.ini")]) == 2
    bad.write_text("[render]\nlinefield = nothing.csv\n")
    assert main(["render", "--config", str(bad), "--out", str(tmp_path)]) == 2


def test_config_line_diagnostics():
    sc = Scenario.parse("[equation]\nname = serrin-laplace\n\n[family]\nkind = translation\n")
    with pytest.raises(ConfigError) as err:
        sc.require("family", "base")
    assert err.value.line == 4
    with pytest.raises(ConfigError):
        Scenario.parse("[equation\nname = x\n")


def test_console_script_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "overdet.cli", "render", "--config",
                          os.path.join(SCEN, "qd-sphere.ini"), "--out", str(tmp_path)],
                         capture_output=True, text=True)
    assert out.returncode == 2  # no line field dumped yet


# -- rendering -------------------------------------------------------------------


def test_constant_field_renders_parallel_ticks():
    xs = np.arange(10.0)
    xx, yy = np.meshgrid(xs, xs)
    lf = LineField(xx.ravel(), yy.ravel(), np.full(100, 0.4), np.ones(100, bool))
    svg = render_svg(lf)
    assert svg.count("<line ") == 100
    assert "marker" not in svg
    assert render_svg(lf) == svg


def test_render_markers_and_legend(tmp_path):
    assert run("index-audit", "qd-sphere.ini", tmp_path) == 0
    assert run("render", "qd-sphere.ini", tmp_path) == 0
    svg = read(tmp_path / "linefield.svg")
    assert svg.count('class="marker"') == 2
    assert "index sum: 2<" in svg
    assert run("index-audit", "perturbed-serrin.ini", tmp_path / "p") == 0
    assert run("render", "perturbed-serrin.ini", tmp_path / "p") == 0
    svg = read(tmp_path / "p" / "linefield.svg")
    assert svg.count('class="marker"') == 1 and ">−1/2<" in svg


def test_render_parse_error():
    with pytest.raises(ParseError):
        LineField.from_csv("not a line field")


def test_format_index():
    assert [format_index(v) for v in (-0.5, 2.5, 2.0, 0.0, -1.0)] == ["−1/2", "5/2", "2", "0", "−1"]


def test_clean_rounds_and_maps_nonfinite():
    assert clean({"a": 0.1 + 0.2, "b": float("nan"), "c": np.float64(1e-20), "d": -0.0}) == {
        "a": 0.3, "b": None, "c": 1e-20, "d": 0.0}
    assert dumps([1, 2]).endswith("\n")


def test_suite_runs_every_scenario(tmp_path):
    assert main(["suite", "--dir", SCEN, "--out", str(tmp_path)]) == 0
    rep = json.loads(read(tmp_path / "suite.json"))
    assert rep["pass"] and len(rep["scenarios"]) == len([p for p in os.listdir(SCEN) if p.endswith(".ini")])
    assert rep["scenarios"]["qd-disk"] == {"command": "index-audit", "exit": 1, "expected": 1}
    assert (tmp_path / "perturbed-serrin" / "linefield.svg").exists()


def test_suite_rejects_scenarios_without_command(tmp_path):
    d = tmp_path / "scen"
    d.mkdir()
    (d / "a.ini").write_text("[equation]\nname = serrin-laplace\n")
    assert main(["suite", "--dir", str(d), "--out", str(tmp_path / "o")]) == 2
    assert main(["suite", "--dir", str(tmp_path / "o"), "--out", str(tmp_path / "p")]) == 2
