from __future__ import annotations

import json
import math
import re
from pathlib import Path

import numpy as np
import pytest

from avgdist.cli import SceneParseError, main, parse_scene, render_svg, run_command
from avgdist.constructions import stadium_domain, stationary_circle, wedge_set
from avgdist.errors import DegenerateConstructionError, ValidationError

SCENES = Path(__file__).resolve().parents[1] / "scenes"


def test_circle_construction():
    sf = parse_scene("lambda: 0.3\nconstruction: {name: circle}\n")
    r = np.hypot(*sf.scene.graph.vertices.T)
    assert np.allclose(r, 0.44721, atol=5e-6)


def test_degenerate_circle_surfaced():
    with pytest.raises(DegenerateConstructionError, match="1/2"):
        parse_scene("lambda: 0.5\nconstruction: {name: circle}\n")


def test_malformed_edge_named():
    text = "lambda: 0.1\nregion: {disk: {radius: 1}}\ngraph:\n  vertices: [[0, 0], [0.5, 0]]\n  edges: [[0, 1], [1, 9]]\n"
    with pytest.raises(ValidationError, match=r"graph\.edges\[1\]"):
        parse_scene(text)


def test_parse_error_location():
    with pytest.raises(SceneParseError) as info:
        parse_scene("lambda: 0.1\nregion: [1, 2\n")
    assert info.value.line is not None and info.value.column is not None


@pytest.mark.parametrize(
    "text, path",
    [
        ("lambda: 0.1\nbogus: 1\n", "scene"),
        ("lambda: 0.1\nconstruction: {name: circle, params: {radius: 2}}\n", "construction.params"),
        ("lambda: x\n", "lambda"),
        ("lambda: 0.1\nregion: {disk: {radius: 1, centre: [0, 0]}}\n", "region.disk"),
        ("lambda: 0.1\nconstruction: {name: hexagon}\n", "construction.name"),
    ],
)
def test_validation_field_paths(text, path):
    with pytest.raises(ValidationError, match=re.escape(path)):
        parse_scene(text)


def test_numeric_expressions():
    sf = parse_scene("corner_math: {alpha: pi/6, lambda: 1.25e-1}\n")
    assert sf.corner_math["alpha"] == "pi/6"
    rep = run_command("corner-math", "corner_math: {alpha: pi/6, lambda: '1.25e-1'}\n")
    assert rep.results["alpha"] == pytest.approx(math.pi / 6, abs=1e-15)


def test_check_stadium_stationary():
    rep = run_command("check", (SCENES / "stadium.yaml").read_text())
    assert rep.results["verdict"] == "stationary"


def test_corner_math_verb():
    rep = run_command("corner-math", (SCENES / "corner_math.yaml").read_text())
    r = rep.results
    assert r["b"] == pytest.approx(0.11803, abs=1e-5) and r["r"] == pytest.approx(0.5)
    assert r["h_of_phi"] == pytest.approx(1.29559, abs=1e-5)
    assert rep.warnings and "no interior root" in rep.warnings[0]


def test_compliance_solve_verb():
    text = "compliance: {domain: [0, 0, 1, 1], n: 128, richardson: true}\n"
    rep = run_command("compliance-solve", text)
    assert rep.results["compliance"] == pytest.approx(0.0351, rel=1e-2)
    assert rep.results["richardson"] == pytest.approx(0.035144, abs=2e-6)


def test_report_shape_and_determinism():
    text = (SCENES / "slope.yaml").read_text()
    a = run_command("slope", text, {"threads": 4})
    b = run_command("slope", text, {"threads": 1})
    assert set(a.document()) == {"inputs", "results", "refinement", "warnings", "timing"}
    assert json.dumps(a.results, sort_keys=True) == json.dumps(b.results, sort_keys=True)
    assert a.refinement == b.refinement
    c = run_command("slope", text, {"threads": 4})
    assert c.inputs["digest"] == a.inputs["digest"]
    assert json.dumps(c.document()["results"]) == json.dumps(a.document()["results"])


def test_unknown_verb():
    with pytest.raises(ValidationError):
        run_command("plot", "lambda: 0.1\n")


def test_main_writes_outputs(tmp_path):
    out, table, fig = tmp_path / "r.json", tmp_path / "t.csv", tmp_path / "f.svg"
    code = main(["loopcut", "--scene", str(SCENES / "loopcut.yaml"), "--out", str(out),
                 "--csv", str(table), "--svg", str(fig), "--quad-h", "0.02"])
    assert code == 0
    doc = json.loads(out.read_text())
    assert doc["results"]["all_negative"] is True
    assert table.read_text().splitlines()[0].startswith("eps,")
    assert fig.read_text().startswith("<svg")


def test_main_exit_status(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("lambda: 0.5\nconstruction: {name: circle}\n")
    assert main(["eval", "--scene", str(bad)]) != 0
    assert "lambda" in capsys.readouterr().err
    assert main(["eval", "--scene", str(tmp_path / "missing.yaml")]) != 0
    assert main(["eval"]) != 0
    assert main(["corner-math"]) == 0


def test_svg_stadium_outline():
    s = stadium_domain(0.25, 2.0)
    svg = render_svg(s.graph, s.region)
    assert svg.count('class="region"') == 3
    assert svg.count('class="sigma"') == s.graph.n_edges


def test_svg_circle_ridge_near_center():
    s = stationary_circle(0.3, 128)
    mu = s.measure(0.02)
    svg = render_svg(s.graph, s.region, mu, s.lam, ("ridge",))
    pts = np.array([[float(x), float(y)] for x, y in re.findall(r'class="ridge" cx="([^"]+)" cy="([^"]+)"', svg)])
    assert len(pts) > 0
    # every marked sample lies well inside the loop, around its centre
    assert np.max(np.hypot(*pts.T)) < 0.5 * math.sqrt(0.2)


def test_svg_wedge_gradient_near_vertex():
    s = wedge_set(math.pi / 3, n_arm=16)
    mu = s.measure(0.02)
    svg = render_svg(s.graph, s.region, mu, s.lam, ("gradient", "atoms"))
    grads = re.findall(r'class="grad" x1="([^"]+)" y1="([^"]+)" x2="([^"]+)" y2="([^"]+)"', svg)
    assert grads
    lengths = {(float(a), float(b)): math.hypot(float(c) - float(a), float(d) - float(b)) for a, b, c, d in grads}
    longest = max(lengths, key=lengths.get)
    assert math.hypot(*longest) < 0.2
