import glob
import math
import os

import numpy as np
import pytest
import yaml
from hypothesis import given
from hypothesis import strategies as st

from hjdirichlet.config import load, parse
from hjdirichlet.errors import ConfigError
from hjdirichlet.geometry import Disk, Polygon

SCENARIOS = sorted(glob.glob(os.path.join(os.path.dirname(__file__), "..", "scenarios", "*.yaml")))
BASE = """\
schema: 1
name: t
domain: {kind: disk}
lagrangian: {kind: kinetic}
boundary: {kind: constant, value: 0.0}
"""


@pytest.mark.parametrize("path", SCENARIOS, ids=os.path.basename)
def test_shipped_scenarios_parse(path):
    sc = load(path)
    assert sc.problem() is not None and len(sc.hash) == 64


def test_minimal_scenario_defaults():
    sc = parse(BASE)
    assert sc.name == "t" and sc.h == 0.05 and sc.threads is None
    assert isinstance(sc.build_domain(), Disk)
    prob = sc.problem()
    assert prob.value([0.5, 0.0]).u == pytest.approx(math.sqrt(2) / 2, rel=1e-8)


def test_unknown_key_reports_position():
    with pytest.raises(ConfigError) as e:
        parse(BASE + "grid: {h: 0.1, hh: 2}\n")
    assert "hh" in str(e.value) and e.value.line == 6 and e.value.column == 16


def test_nested_unknown_key():
    text = BASE.replace("{kind: disk}", "{kind: disk, radius: 2.0, colour: red}")
    with pytest.raises(ConfigError) as e:
        parse(text)
    assert "colour" in str(e.value) and e.value.line == 3


@pytest.mark.parametrize("text, needle", [
    (BASE.replace("schema: 1", "schema: 2"), "schema"),
    (BASE.replace("schema: 1\n", ""), "schema"),
    (BASE.replace("{kind: disk}", "{kind: torus}"), "torus"),
    (BASE.replace("{kind: disk}", "{radius: 1.0}"), "kind"),
    (BASE.replace("{kind: disk}", "{kind: disk, radius: one}"), "number"),
    (BASE.replace("{kind: disk}", "{kind: disk, radius: -1.0}"), "domain"),
    (BASE + "grid: {h: 0}\n", "positive"),
    (BASE + "trace: {mode: sideways}\n", "trace.mode"),
    (BASE + "threads: 1.5\n", "integer"),
    (BASE + "tolerances: {tol_opt: x}\n", "number"),
    (BASE + "name: again\n", "duplicate"),
    ("schema: [1\n", "syntax"),
    ("", "empty"),
    (BASE.replace("{kind: kinetic}", "{kind: quadratic, A: [[1, 0], [0, -1]]}"), "lagrangian"),
    (BASE.replace("{kind: disk}", "{kind: polygon, vertices: [[0, 0], [1, 1], [1, 0], [0, 1]]}"), "domain"),
])
def test_schema_errors(text, needle):
    with pytest.raises(ConfigError) as e:
        parse(text)
    assert needle in str(e.value)
    if text:
        assert e.value.line is not None


def test_missing_file():
    with pytest.raises(ConfigError):
        load("/nonexistent/scenario.yaml")


def test_hash_ignores_formatting():
    a = parse(BASE)
    b = parse(BASE.replace("{kind: disk}", "\n  kind: disk\n"))
    assert a.hash == b.hash
    assert a.hash != parse(BASE.replace("value: 0.0", "value: 0.5")).hash


num = st.floats(-5, 5, allow_nan=False).map(lambda v: round(v, 6))


@given(num, st.floats(0.2, 3).map(lambda v: round(v, 6)), num, st.lists(num, min_size=2, max_size=2),
       st.floats(0.01, 0.5), st.integers(1, 8))
def test_round_trip_through_yaml(cx, r, c, a, h, threads):
    raw = {
        "schema": 1, "name": "rt",
        "domain": {"kind": "disk", "center": [cx, 0.0], "radius": r},
        "lagrangian": {"kind": "mechanical", "A": [[1.0, 0.0], [0.0, 2.0]], "V": {"c": -1.0}},
        "boundary": {"kind": "affine", "c": c, "a": a},
        "grid": {"h": h}, "threads": threads,
    }
    sc = parse(yaml.safe_dump(raw))
    assert sc.raw == raw and sc.h == h and sc.threads == threads
    d = sc.build_domain()
    assert np.allclose(d.center, [cx, 0.0]) and d.radius == r
    assert sc.build_boundary()(np.array([[1.0, 2.0]]))[0] == pytest.approx(c + a[0] + 2 * a[1])


@given(st.integers(3, 9), st.floats(0.3, 3.0), st.floats(0, 2 * math.pi))
def test_polygon_round_trip(n, r, rot):
    th = rot + 2 * math.pi * np.arange(n) / n
    V = [[round(r * math.cos(t), 6), round(r * math.sin(t), 6)] for t in th]
    raw = yaml.safe_load(BASE)
    raw["domain"] = {"kind": "polygon", "vertices": V}
    sc = parse(yaml.safe_dump(raw))
    d = sc.build_domain()
    assert isinstance(d, Polygon) and np.allclose(d.vertices, V)
    assert sc.raw == raw
