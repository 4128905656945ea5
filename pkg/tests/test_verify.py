import json
import math

import numpy as np
import pytest

from hjdirichlet import BoundaryData, Problem, kinetic
from hjdirichlet.errors import HypothesisUnmet
from hjdirichlet.lagrangian import ScalarField
from hjdirichlet.singular import SingularChain, trace_mechanical
from hjdirichlet.solver import solve_field
from hjdirichlet.verify import (
    check_boundary_agreement,
    check_boundary_semiconvexity,
    check_domination,
    check_exit_time,
    check_fenchel_young,
    check_global_semiconcavity,
    check_local_semiconcavity,
    check_monotonicity,
    check_pde,
    check_triangle,
    phi,
    rng_for,
    run_checks,
    scenario_hash,
)

SQ2 = math.sqrt(2.0)
H = "0" * 64


def test_scenario_hash_and_streams_are_deterministic():
    a = scenario_hash({"b": 1, "a": [1, 2]})
    assert a == scenario_hash({"a": [1, 2], "b": 1}) and len(a) == 64
    assert rng_for(a, "x").random() == rng_for(a, "x").random()
    assert rng_for(a, "x").random() != rng_for(a, "y").random()


def test_phi_matches_scaled_distance(disk_problem, lshape):
    assert phi(disk_problem, [0.1, 0.2], [-0.4, 0.5]) == pytest.approx(SQ2 * math.hypot(0.5, 0.3), rel=1e-7)
    prob = Problem(kinetic(), lshape, BoundaryData.const(0.0))
    assert phi(prob, [0.5, 1.8], [1.8, 0.5]) == pytest.approx(SQ2 * 2 * math.sqrt(0.89), rel=1e-9)


def test_structural_checks_pass_on_disk(disk_problem):
    for c in (check_domination(disk_problem, 40, H), check_triangle(disk_problem, 20, H),
              check_boundary_agreement(disk_problem, 200, H), check_exit_time(disk_problem, 100, H),
              *check_fenchel_young(disk_problem, 500, H)):
        assert c.applicable and c.passed, c


def test_local_semiconcavity_disk(disk_problem):
    c = check_local_semiconcavity(disk_problem, 0.2, 400, H)
    assert c.passed
    # u = sqrt(2)(1 - |x|): second differences are bounded by sqrt(2)|z|^2 / d(x) <= sqrt(2)|z|^2 / rho
    assert c.details["C_fit"] <= SQ2 + 1e-6
    with pytest.raises(ValueError):
        check_local_semiconcavity(disk_problem, 0.0, 10, H)


def test_global_semiconcavity_disk(disk_problem):
    c = check_global_semiconcavity(disk_problem, 200, H)
    assert c.passed


def test_boundary_semiconvexity_disk(disk_problem):
    c = check_boundary_semiconvexity(disk_problem, samples=200, hash_hex=H)
    assert c.passed and c.details["eta"] > 0


def test_hypotheses_unmet_on_polygons(lshape, square_problem):
    prob = Problem(kinetic(), lshape, BoundaryData.const(0.0))
    with pytest.raises(HypothesisUnmet):
        check_global_semiconcavity(prob, 10, H)
    with pytest.raises(HypothesisUnmet):
        check_boundary_semiconvexity(prob, samples=10, hash_hex=H)
    with pytest.raises(HypothesisUnmet):
        check_boundary_semiconvexity(square_problem, samples=10, hash_hex=H)


def test_boundary_semiconvexity_needs_positive_lagrangian(disk):
    from hjdirichlet.lagrangian import mechanical
    spec = mechanical(np.eye(2), None, ScalarField.polynomial(-1.0, None, [[-1.0, 0], [0, -1.0]]))
    prob = Problem(spec, disk, BoundaryData.const(0.0))
    c = check_boundary_semiconvexity(prob, samples=50, hash_hex=H)  # L >= 1 here: applicable
    assert c.applicable


def test_pde_residual_on_coarse_field(disk_problem):
    fld = solve_field(disk_problem, 0.1, threads=1)
    c = check_pde(disk_problem, fld)
    assert c.passed and c.details["excluded"] > 0
    # exact radial field: residual comes only from the central difference of a cone
    assert c.worst <= 3 * 0.1


def test_monotonicity_on_mechanical_chain(square_mechanical):
    ch = trace_mechanical(square_mechanical, [0.3, 0.3])
    c = check_monotonicity(ch)
    assert c.passed and c.samples == len(ch.points) - 1


def test_monotonicity_detects_decrease():
    pts = np.array([[0.0, 0.0], [0.1, 0.0], [0.2, 0.0]])
    ch = SingularChain(pts, np.array([0.1, 0.1]), np.array([[1.0, 0], [1.0, 0], [1.0, 0]]),
                       np.array([0.0, 0.1, 0.05]), "Global", [], np.ones(3), "mechanical", {"A": np.eye(2).tolist()})
    assert not check_monotonicity(ch).passed
    still = SingularChain(pts[:1], np.zeros(0), np.zeros((1, 2)), np.zeros(1), "CriticalPoint", [], np.ones(1))
    assert check_monotonicity(still).passed


def test_run_checks_report_shape(disk_problem, lshape):
    prob = Problem(kinetic(), lshape, BoundaryData.const(0.0))
    rep = run_checks(prob, samples=20, hash_hex=H, rho=0.1)
    names = [c.name for c in rep.checks]
    assert names == sorted(names)
    assert not rep["global_semiconcavity"].applicable and not rep["boundary_semiconvexity"].applicable
    data = json.loads(rep.to_json())
    assert data["scenario_hash"] == H and {"name", "samples", "worst", "tolerance", "pass"} <= set(data["checks"][0])
