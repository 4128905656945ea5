import dataclasses
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hjdirichlet import BoundaryData, Problem, kinetic
from hjdirichlet.errors import BallTouchesBoundary, ConditionMViolated, NotCutPoint
from hjdirichlet.lagrangian import ScalarField, mechanical
from hjdirichlet.options import Options
from hjdirichlet.singular import (
    Superdifferential,
    is_critical,
    is_cut,
    is_singular,
    limiting_gradients,
    min_norm_point,
    minimal_selection,
    sample_cut_points,
    skeleton,
    step_maximizer,
    trace_general,
    trace_mechanical,
)
from hjdirichlet.solver import solve_field

SQ2 = math.sqrt(2.0)


def _has(vertices, p, tol=1e-5):
    return bool(np.min(np.linalg.norm(np.asarray(vertices) - p, axis=1)) <= tol)


# -- superdifferential and classification --------------------------------------------------
def test_limiting_gradients_regular_point(disk_problem):
    sd = limiting_gradients(disk_problem, [0.5, 0.0])
    assert len(sd) == 1 and _has(sd.vertices, [-SQ2, 0])
    assert not is_singular(sd)
    assert not is_cut(disk_problem, [0.5, 0.0], sd)
    assert not is_critical(kinetic(), sd)


def test_limiting_gradients_disk_center(disk_problem):
    sd = limiting_gradients(disk_problem, [0.0, 0.0])
    # every boundary point is optimal: the vertices sample the circle of radius sqrt(2)
    assert len(sd) >= 8
    assert np.allclose(np.linalg.norm(sd.vertices, axis=1), SQ2, atol=1e-5)
    assert is_singular(sd) and is_cut(disk_problem, [0, 0], sd) and is_critical(kinetic(), sd)


def test_limiting_gradients_square(square_problem):
    sd = limiting_gradients(square_problem, [0.0, 0.0])
    assert len(sd) == 4
    for p in ([SQ2, 0], [-SQ2, 0], [0, SQ2], [0, -SQ2]):
        assert _has(sd.vertices, p)
    assert is_critical(kinetic(), sd)
    diag = limiting_gradients(square_problem, [0.5, 0.5])
    assert len(diag) == 2 and _has(diag.vertices, [-SQ2, 0]) and _has(diag.vertices, [0, -SQ2])
    assert is_singular(diag) and not is_critical(kinetic(), diag)


def test_limiting_gradients_rejects_boundary(disk_problem):
    with pytest.raises(ValueError):
        limiting_gradients(disk_problem, [1.0, 0.0])


# -- minimal selection ------------------------------------------------------------------------
def test_minimal_selection_examples():
    sd = Superdifferential(np.zeros(2), np.array([[-SQ2, 0.0], [0.0, -SQ2]]), 1e-4)
    assert np.allclose(minimal_selection(sd, np.eye(2)), [-SQ2 / 2, -SQ2 / 2], atol=1e-10)
    # minimize (1-s)^2 + s^2/4 along the segment: s = 0.8
    assert np.allclose(minimal_selection(sd, np.diag([1.0, 4.0])), [-0.2 * SQ2, -0.8 * SQ2], atol=1e-10)
    one = Superdifferential(np.zeros(2), np.array([[1.0, 2.0]]), 1e-4)
    assert np.allclose(minimal_selection(one, np.eye(2)), [1, 2])
    ring = Superdifferential(np.zeros(2), np.array([[1.0, 0], [-1, 0], [0, 1], [0, -1]]), 1e-4)
    assert np.allclose(minimal_selection(ring, np.eye(2)), 0, atol=1e-10)


points = st.lists(st.lists(st.floats(-5, 5, allow_nan=False), min_size=2, max_size=2), min_size=1, max_size=12)


@settings(max_examples=100)
@given(points)
def test_min_norm_point_optimality_certificate(Z):
    Z = np.array(Z)
    x, w, gap = min_norm_point(Z)
    assert np.all(w >= -1e-12) and w.sum() == pytest.approx(1.0)
    assert np.allclose(w @ Z, x, atol=1e-9)
    # x is the projection of 0 on co(Z) iff <z_i - x, x> >= 0 for all i
    scale = 1.0 + float(np.max(np.abs(Z))) ** 2
    assert np.min(Z @ x) >= x @ x - 1e-8 * scale
    assert gap <= 1e-8 * scale


@settings(max_examples=30)
@given(points)
def test_min_norm_point_beats_sampled_hull(Z):
    Z = np.array(Z)
    x, _, _ = min_norm_point(Z)
    W = np.random.default_rng(0).dirichlet(np.ones(len(Z)), size=2000)
    sampled = np.min(np.linalg.norm(np.vstack([W @ Z, Z]), axis=1))
    assert np.linalg.norm(x) <= sampled + 1e-9


# -- step maximizer ---------------------------------------------------------------------------
def test_step_maximizer_regular_point(disk_problem):
    # u(y) - |y-x|^2/(2t) - t along the radius: the maximizer moves inward by sqrt(2) t
    t = 0.01
    y = step_maximizer(disk_problem, [0.5, 0.0], t)
    assert np.allclose(y, [0.5 - SQ2 * t, 0.0], atol=1e-6)


def test_step_maximizer_stays_at_maximum(square_problem):
    y = step_maximizer(square_problem, [0.0, 0.0], 0.05)
    assert np.allclose(y, 0.0, atol=1e-6)


def test_step_maximizer_ball_check(disk_problem):
    with pytest.raises(BallTouchesBoundary):
        step_maximizer(disk_problem, [0.95, 0.0], 0.1)


# -- chains -------------------------------------------------------------------------------
def test_general_chain_at_disk_center_is_critical(disk_problem):
    c = trace_general(disk_problem, [0.0, 0.0])
    assert c.verdict == "CriticalPoint" and len(c.points) == 1


def test_general_chain_follows_square_diagonal(square_mechanical):
    c = trace_general(square_mechanical, [0.5, 0.5])
    assert c.verdict == "CriticalPoint"
    assert np.allclose(c.points[:, 0], c.points[:, 1], atol=1e-6)
    assert np.allclose(c.points[-1], 0.0, atol=1e-3)
    assert np.all(np.diff(c.u_values) >= -1e-9)
    assert c.u_values[-1] == pytest.approx(SQ2, rel=1e-6)


def test_mechanical_chain_square(square_mechanical):
    c = trace_mechanical(square_mechanical, [0.5, 0.5])
    assert c.verdict == "CriticalPoint"
    assert c.s[-1] == pytest.approx(1 / SQ2, abs=5e-3)
    assert c.u_values[-1] - c.u_values[0] == pytest.approx(1 / SQ2, abs=5e-3)
    assert np.allclose(c.points[-1], 0.0, atol=5e-3)
    assert np.all(np.diff(c.u_values) >= -1e-9)
    fd, pred = c.rates()
    assert np.allclose(fd[:-1], pred[:-1], atol=1e-2)
    assert c.csv_text().splitlines()[0] == "k,s_k,x1,x2,u,pmin_norm,d_boundary,verdict"


def test_general_chain_from_regular_seed_warns_and_flows_to_center(disk_problem):
    with pytest.warns(NotCutPoint):
        c = trace_general(disk_problem, [0.0, 0.1])
    assert c.verdict == "CriticalPoint"
    assert np.allclose(c.points[-1], 0.0, atol=1e-3)
    assert np.all(np.linalg.norm(c.points[1:] - c.points[:-1], axis=1) <= c.meta["lambda"] * c.step_times + 1e-9)


def test_general_chain_rejects_seed_in_collar(disk_problem):
    with pytest.raises(BallTouchesBoundary):
        trace_general(disk_problem, [0.999, 0.0])
    with pytest.raises(ValueError):
        trace_mechanical(disk_problem, [1.0, 0.0])


def test_general_chain_boundary_approach(disk):
    # g = -1.3 y1^2: left and right sheets tie on the y-axis, where u grows toward (0, 1);
    # a collar of width 2 h_flow = 0.4 stops the chain before the cut segment ends
    G = ScalarField.polynomial(0.0, None, [[-2.6, 0.0], [0.0, 0.0]])
    opts = dataclasses.replace(Options(), h_flow_frac=0.1)
    prob = Problem(kinetic(), disk, BoundaryData.from_field(G), opts)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NotCutPoint)
        c = trace_general(prob, [0.0, 0.55])
    assert c.verdict == "BoundaryApproach"
    assert c.boundary_distance[-1] < 0.4 <= c.boundary_distance[-2]
    assert np.allclose(c.points[:, 0], 0.0, atol=1e-6)
    assert np.all(np.diff(c.points[:, 1]) > 0)


def test_condition_m(disk):
    warm = mechanical(np.eye(2), None, ScalarField.polynomial(0.5))
    with pytest.raises(ConditionMViolated):
        trace_mechanical(Problem(warm, disk, BoundaryData.const(0.0)), [0.0, 0.0])
    with pytest.raises(ConditionMViolated):
        trace_mechanical(Problem(kinetic(), disk, BoundaryData.affine(0.0, [0.3, 0.0])), [0.0, 0.0])


def test_gauge_reduced_mechanical_chain(disk):
    # S = <b, x> with g = -S on the boundary: reduces to the plain kinetic problem
    b = np.array([0.3, -0.2])
    S = ScalarField.polynomial(0.0, b)
    spec = mechanical(np.eye(2), S, ScalarField.polynomial(-1.0))
    prob = Problem(spec, disk, BoundaryData.affine(0.0, -b))
    c = trace_mechanical(prob, [0.0, 0.0])
    assert c.verdict == "CriticalPoint" and len(c.points) == 1


# -- skeleton -------------------------------------------------------------------------------
def test_skeleton_square(square_problem):
    f = solve_field(square_problem, 0.1, threads=1)
    pts, stats = skeleton(f)
    assert stats["components"] == 1 and stats["points"] == len(pts)
    # every flagged point lies near a diagonal
    assert np.all(np.abs(np.abs(pts[:, 0]) - np.abs(pts[:, 1])) <= 0.1 + 1e-9)
    cut = sample_cut_points(f, 5, seed=1)
    assert len(cut) == 5 and all(any(np.allclose(c, p) for p in pts) for c in cut)
    assert np.array_equal(cut, sample_cut_points(f, 5, seed=1))
