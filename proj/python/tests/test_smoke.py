import json
import math
import os
from pathlib import Path

import numpy as np
import pytest

import cadkit

ROOT = Path(os.environ.get("CADKIT_SOURCE_DIR", Path(__file__).resolve().parents[2]))
FIXTURES = ROOT / "tests" / "fixtures" / "agent"
GOLDEN = ROOT / "tests" / "golden"


def rectangle(w=4.0, h=2.0, skew=0.0):
    s = cadkit.Sketch()
    s.add_line((0, 0), (w, skew))
    s.add_line((w, skew), (w, h))
    s.add_line((w, h), (0, h))
    s.add_line((0, h), (0, 0))
    return s


def test_build_and_round_trip():
    s = rectangle()
    s.add_circle((2, 1), 0.5)
    s.add_constraint("coincident(0.end, 1.start)")
    assert len(s) == 5
    assert s.ids == [0, 1, 2, 3, 4]
    assert s.constraints == ["coincident(0.end, 1.start)"]
    assert s.type_of(4) == "circle"
    back = cadkit.Sketch.from_json(s.to_json())
    assert back == s


def test_solve_removes_drift():
    s = rectangle(skew=0.05)
    for spec in ["horizontal(0)", "horizontal(2)", "vertical(1)", "vertical(3)"]:
        s.add_constraint(spec)
    for a, b in [(0, 1), (1, 2), (2, 3), (3, 0)]:
        s.add_constraint(f"coincident({a}.end, {b}.start)")
    r = s.solve()
    assert r.converged
    assert r.residual_norm < 1e-8
    assert r.max_displacement > 0
    for spec in r.solved.constraints:
        assert r.solved.check(spec)["valid"]


def test_checker_reports_movement():
    s = rectangle(skew=0.05)
    report = s.check("horizontal(0)")
    assert report["valid"]
    assert report["causes_movement"]
    assert not rectangle().check("horizontal(0)")["causes_movement"]


def test_errors_carry_codes():
    s = rectangle()
    with pytest.raises(cadkit.CadkitError) as err:
        s.add_constraint("coincident(0.end, 9.start)")
    assert err.value.args[0] == "DanglingReference"
    with pytest.raises(cadkit.CadkitError) as err:
        s.add_constraint("coincident(0.end")
    assert err.value.args[0] == "SyntaxError"


def test_serialize_formats():
    s = rectangle()
    doc = json.loads(s.serialize())
    assert len(doc["primitives"]) == 4
    csv = s.serialize(format="csv", strategy="implicit")
    assert csv.splitlines()[0].startswith("id,type")
    with pytest.raises(cadkit.CadkitError):
        s.serialize(format="yaml")


def test_render_and_chamfer():
    a = rectangle().render(size=128)
    assert a.shape == (128, 128)
    assert a.dtype == np.uint8
    assert set(np.unique(a)) <= {0, 1}
    assert cadkit.chamfer(a, a) == 0.0
    b = np.roll(a, 3, axis=1)
    assert cadkit.chamfer(a, b) > 0
    assert "<svg" in rectangle().svg()
    assert "<svg" in cadkit.Sketch().svg()


def test_metrics_identity():
    s = cadkit.Sketch.load(FIXTURES / "bracket.sketch.json")
    assert cadkit.pf1(s, s) == 1.0
    assert cadkit.cf1(s, s) == 1.0
    assert cadkit.accuracy(s, s) == 1.0


def test_extrude_occupancy_and_section():
    box = cadkit.Solid().extrude(rectangle(), d_plus=1.0)
    assert len(box) == 1
    inside = box.occupancy(np.array([[2.0, 1.0, 0.5], [5.0, 1.0, 0.5], [2.0, 1.0, 1.5]]))
    assert inside.tolist() == [True, False, False]
    cut = box.section((0, 0, 0.5), (0, 0, 1))
    assert cut["area"] == pytest.approx(8.0)
    assert cut["perimeter"] == pytest.approx(12.0)
    hole = cadkit.Sketch()
    hole.add_circle((2, 1), 0.5)
    drilled = box.extrude(hole, d_plus=1.0, operation="cut")
    assert drilled.section((0, 0, 0.5), (0, 0, 1))["area"] == pytest.approx(8 - math.pi / 4, rel=1e-3)
    assert cadkit.Solid.from_json(drilled.to_json()).to_json() == drilled.to_json()
    views = drilled.views(size=64)
    assert sorted(views) == ["front", "isometric", "right", "top"]
    with pytest.raises(cadkit.CadkitError) as err:
        cadkit.Solid().extrude(rectangle(), d_plus=0.0)
    assert err.value.args[0] == "InvalidExtrusion"


def test_scripted_agent_matches_golden():
    run = cadkit.run_scripted(FIXTURES / "autoconstrain.fixture.json")
    assert run["status"] == "Terminated"
    golden = [json.loads(line) for line in (GOLDEN / "agent_autoconstrain.transcript.jsonl").read_text().splitlines()]
    assert run["transcript"] == golden
    assert run["sketch"] == cadkit.Sketch.load(GOLDEN / "agent_autoconstrain.sketch.json")
