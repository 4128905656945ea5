import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hjdirichlet import BoundaryData, Problem, kinetic
from hjdirichlet.errors import FieldCorrupted, RootNotBracketed, SupercriticalViolated
from hjdirichlet.geometry import BoundaryPoint, make_domain
from hjdirichlet.lagrangian import ScalarField, polynomial_kinetic, quadratic
from hjdirichlet.solver import ValueField, boundary_covector, check_compatibility, lattice, solve_field

SQ2 = math.sqrt(2.0)


# -- value, exit time, backtrace ---------------------------------------------------------
def test_value_disk_example(disk_problem):
    r = disk_problem.value([0.5, 0.0])
    assert r.u == pytest.approx(SQ2 * 0.5, rel=1e-8)
    assert np.allclose(r.y_star.point, [1, 0], atol=1e-6)
    assert r.T == pytest.approx(0.5 / SQ2, rel=1e-5)
    assert disk_problem.exit_time([0.5, 0.0]) == pytest.approx(0.35355, abs=1e-5)


def test_value_on_boundary_is_g(disk, square):
    bd = BoundaryData.affine(0.3, [0.2, -0.1])
    prob = Problem(kinetic(), disk, bd)
    y = np.array([math.cos(1.0), math.sin(1.0)])
    r = prob.value(y)
    assert r.u == pytest.approx(float(bd(y)), abs=1e-12) and r.T == 0.0
    assert prob.exit_time(y) == 0.0
    bt = prob.backtrace(y)
    assert len(bt.curve.nodes) == 1


def test_value_square_center_tie_break(square_problem):
    r = square_problem.value([0.0, 0.0])
    assert r.u == pytest.approx(SQ2, rel=1e-8)
    assert np.allclose(r.y_star.point, [-1, 0], atol=1e-6)
    assert square_problem.exit_time([0, 0]) == pytest.approx(1 / SQ2, rel=1e-5)
    assert len(r.near_optimal(1e-6)) >= 4


@settings(max_examples=20)
@given(st.floats(-0.95, 0.95), st.floats(-0.95, 0.95))
def test_square_value_is_scaled_distance(square_problem, a, b):
    assert square_problem.value([a, b]).u == pytest.approx(SQ2 * (1 - max(abs(a), abs(b))), rel=1e-7, abs=1e-9)


@settings(max_examples=10)
@given(st.floats(0.05, 1.95), st.floats(0.05, 0.95))
def test_rectangle_value_is_scaled_distance(a, b):
    prob = _rectangle_problem()
    assert prob.value([a, b]).u == pytest.approx(SQ2 * min(a, 2 - a, b, 1 - b), rel=1e-7, abs=1e-9)


_RECT = {}


def _rectangle_problem():
    if "p" not in _RECT:
        _RECT["p"] = Problem(kinetic(), make_domain("rectangle", lo=[0, 0], hi=[2, 1]), BoundaryData.const(0.0))
    return _RECT["p"]


def test_affine_boundary_data_matches_linear_programming_oracle(disk):
    # g(y) = <a, y> with |a| < sqrt(2): u(x) = min_y <a,y> + sqrt(2)|x-y| over the circle
    a = np.array([0.5, 0.2])
    prob = Problem(kinetic(), disk, BoundaryData.affine(0.0, a))
    th = np.linspace(0, 2 * np.pi, 200001)
    Y = np.column_stack([np.cos(th), np.sin(th)])
    for x in ([0.0, 0.0], [0.3, -0.4], [-0.6, 0.1]):
        oracle = float(np.min(Y @ a + SQ2 * np.linalg.norm(Y - x, axis=1)))
        assert prob.value(x).u == pytest.approx(oracle, abs=1e-7)


def test_backtrace_disk(disk_problem):
    bt = disk_problem.backtrace([0.5, 0.0])
    nodes = bt.curve.nodes
    assert np.allclose(nodes[0], [1, 0], atol=1e-6) and np.allclose(nodes[-1], [0.5, 0])
    assert np.allclose(nodes[:, 1], 0, atol=1e-7)
    speed = np.linalg.norm(np.diff(nodes, axis=0), axis=1) / np.diff(bt.curve.times)
    assert np.allclose(speed, SQ2, rtol=1e-5)
    assert bt.curve.times[0] == pytest.approx(-0.5 / SQ2, rel=1e-5) and bt.curve.times[-1] == 0.0
    assert np.allclose(bt.dual[0], [-SQ2, 0], atol=1e-5)


def test_backtrace_square_off_diagonal(square_problem):
    bt = square_problem.backtrace([0.3, 0.7])
    nodes = bt.curve.nodes
    assert np.allclose(nodes[0], [0.3, 1.0], atol=1e-6)
    assert np.allclose(nodes[:, 0], 0.3, atol=1e-7)
    speed = np.linalg.norm(np.diff(nodes, axis=0), axis=1) / np.diff(bt.curve.times)
    assert np.allclose(speed, SQ2, rtol=1e-5)


# -- boundary covector -----------------------------------------------------------------
def test_boundary_covector_examples(disk):
    y = BoundaryPoint(np.array([0.6, 0.8]), np.array([0.6, 0.8]), 0.9273)
    mu, p = boundary_covector(kinetic(), disk, y)
    assert mu == pytest.approx(SQ2, rel=1e-14) and np.allclose(p, -SQ2 * y.normal)
    mu, _ = boundary_covector(polynomial_kinetic([0.25], ScalarField.polynomial(-1.0)), disk, y)  # H = |p|^2 - 1
    assert mu == pytest.approx(1.0, rel=1e-12)
    with pytest.raises(RootNotBracketed):
        boundary_covector(quadratic(np.eye(2)), disk, y)  # H(y, 0) = 0


# -- compatibility -------------------------------------------------------------------------
def test_compatibility_constant_data(disk):
    rep = check_compatibility(kinetic(), disk, BoundaryData.const(0.0))
    assert rep.ok
    assert rep["G1"].passed and rep["G2"].passed


def test_compatibility_steep_data_fails_sh3(disk):
    rep = check_compatibility(kinetic(), disk, BoundaryData.affine(0.0, [2.0, 0.0]))
    assert not rep.ok and rep.first_failure().name == "SH3"
    assert rep["SH3"].worst > 0


def test_supercritical_gate(disk):
    prob = Problem(quadratic(np.eye(2)), disk, BoundaryData.const(0.0))
    rep = check_compatibility(prob.spec, disk, prob.bd)
    assert not rep.ok and rep.first_failure().name == "SH4'"
    with pytest.raises(SupercriticalViolated):
        prob.require_supercritical()


# -- fields -------------------------------------------------------------------------------
def test_lattice_covers_closed_domain(disk):
    lo, shape, index, pts = lattice(disk, 0.25)
    assert shape == (9, 9)
    assert np.all(disk.signed_distance_many(pts) <= disk.tau)
    assert any(np.allclose(p, [1, 0]) for p in pts)
    assert np.allclose(lo + 0.25 * index, pts)


@pytest.fixture(scope="module")
def coarse_disk_field(disk_problem):
    return solve_field(disk_problem, 0.2, threads=1)


def test_solve_field_disk_coarse(coarse_disk_field):
    f = coarse_disk_field
    assert np.all(f.ok)
    exact = SQ2 * (1 - np.linalg.norm(f.points, axis=1))
    assert np.max(np.abs(f.u - exact)) <= 1e-6
    assert f.singular[np.argmin(np.linalg.norm(f.points, axis=1))]
    assert np.sum(f.singular) == 1


def test_field_round_trip_and_corruption(coarse_disk_field, tmp_path):
    path = tmp_path / "field.csv"
    coarse_disk_field.save(path, {"scenario": "disk"})
    g = ValueField.load(path)
    assert np.array_equal(g.points, coarse_disk_field.points)
    assert np.array_equal(g.u, coarse_disk_field.u)
    assert np.array_equal(g.singular, coarse_disk_field.singular)
    assert g.csv_text() == coarse_disk_field.csv_text()
    assert path.read_text().splitlines()[0] == "x1,x2,u,T,ystar_arc,singular"
    text = path.read_text()
    path.write_text(text.replace("0.", "1.", 1))
    with pytest.raises(FieldCorrupted):
        ValueField.load(path)
    with pytest.raises(FieldCorrupted):
        ValueField.load(tmp_path / "missing.csv")


def test_field_is_thread_count_invariant(disk_problem):
    a = solve_field(disk_problem, 0.4, threads=1)
    b = solve_field(disk_problem, 0.4, threads=2)
    assert a.csv_text() == b.csv_text()
