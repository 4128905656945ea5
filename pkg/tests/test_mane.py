import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hjdirichlet.errors import SupercriticalViolated
from hjdirichlet.geometry import make_domain
from hjdirichlet.lagrangian import ScalarField, kinetic, mechanical
from hjdirichlet.mane import critical_value, critical_value_details, potential, time_horizon_bound

SQ2 = math.sqrt(2.0)


def test_critical_value_kinetic(disk):
    assert critical_value(kinetic(), disk) == pytest.approx(-1.0, abs=1e-9)
    assert critical_value(kinetic(mass=0.5), disk) == pytest.approx(-1.0, abs=1e-9)


def test_critical_value_mechanical_is_max_potential(disk):
    V = ScalarField.polynomial(-1.0)
    assert critical_value(mechanical(np.eye(2), None, V), disk) == pytest.approx(-1.0, abs=1e-9)
    # V = -1 - 1/2|x|^2 peaks at the center; sampling gives c_hat <= max V
    V2 = ScalarField.polynomial(-1.0, None, -np.eye(2))
    est = critical_value_details(mechanical(np.eye(2), None, V2), disk)
    assert -1.0 - 0.02 <= est.value <= -1.0 + 1e-9


def test_critical_value_is_cached(disk):
    spec = kinetic()
    a = critical_value(spec, disk)
    assert critical_value(spec, disk) == a


def test_time_horizon_bound(disk):
    assert time_horizon_bound(kinetic(), disk, -1.0, [0, 0], [1, 0]) == pytest.approx(3.0)
    assert time_horizon_bound(kinetic(), disk, -1.0, [0.2, 0], [0.2, 0]) == 0.0
    with pytest.raises(SupercriticalViolated):
        time_horizon_bound(kinetic(), disk, 0.5, [0, 0], [1, 0])


def test_potential_closed_form(disk):
    q = potential(kinetic(), disk, [0, 0], [1, 0])
    assert q.value == pytest.approx(SQ2, rel=1e-9)
    assert q.t == pytest.approx(1 / SQ2, rel=1e-6)
    z = potential(kinetic(), disk, [0.3, 0.3], [0.3, 0.3])
    assert z.value == 0.0 and z.minimizer is None


def test_potential_lshape(lshape):
    x, y = [0.5, 1.8], [1.8, 0.5]
    geodesic = 2 * math.sqrt(0.89)  # through the reflex corner (1, 1)
    q = potential(kinetic(), lshape, x, y)
    assert q.value == pytest.approx(SQ2 * geodesic, rel=1e-9)
    assert q.t == pytest.approx(geodesic / SQ2, rel=1e-6)


@settings(max_examples=15)
@given(st.floats(0, 2 * math.pi), st.floats(0, 0.95), st.floats(0, 2 * math.pi), st.floats(0, 0.95))
def test_potential_is_sqrt2_distance_on_convex_domain(disk, a1, r1, a2, r2):
    # kinetic + 1: Phi(x, y) = min_t |y-x|^2/(2t) + t = sqrt(2)|y-x|
    x = r1 * np.array([math.cos(a1), math.sin(a1)])
    y = r2 * np.array([math.cos(a2), math.sin(a2)])
    q = potential(kinetic(), disk, x, y)
    assert q.value == pytest.approx(SQ2 * np.linalg.norm(y - x), rel=1e-6, abs=1e-9)


@settings(max_examples=10)
@given(st.floats(0.05, 1.95), st.floats(0.05, 0.95), st.floats(0.05, 0.95), st.floats(0.05, 1.95),
       st.floats(0.05, 0.95), st.floats(0.05, 0.95))
def test_potential_triangle_inequality(lshape, a, b, c, e, f, g):
    x, y, z = np.array([a, b]), np.array([c, e]), np.array([f, g])
    spec = kinetic()
    lhs = potential(spec, lshape, x, z).value
    rhs = potential(spec, lshape, x, y).value + potential(spec, lshape, y, z).value
    assert lhs <= rhs + 1e-6 * (1 + rhs)


def test_potential_on_rectangle_matches_distance():
    d = make_domain("rectangle", lo=[0, 0], hi=[2, 1])
    q = potential(kinetic(), d, [0.1, 0.1], [1.9, 0.9])
    assert q.value == pytest.approx(SQ2 * math.hypot(1.8, 0.8), rel=1e-8)


def test_potential_wraps_reflex_corner_exactly(lshape):
    # y lies almost on the geodesic from x to z through the corner (1, 1);
    # the triangle inequality is nearly tight and must hold to solver accuracy
    x, y, z = np.array([0.8678, 1.7332]), np.array([0.9157, 1.2873]), np.array([1.9180, 0.9537])
    dist = lambda a, b: np.linalg.norm(a - [1.0, 1.0]) + np.linalg.norm(b - [1.0, 1.0])
    xz = potential(kinetic(), lshape, x, z).value
    yz = potential(kinetic(), lshape, y, z).value
    xy = potential(kinetic(), lshape, x, y).value
    assert xz == pytest.approx(SQ2 * dist(x, z), rel=1e-9)
    assert yz == pytest.approx(SQ2 * dist(y, z), rel=1e-9)
    assert xz <= xy + yz + 1e-8
