import heapq
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hjdirichlet.errors import InvalidDomain, PathNotFound
from hjdirichlet.geometry import Disk, ImplicitDomain, make_domain

from conftest import LSHAPE

coord = st.floats(-0.99, 0.99, allow_nan=False)


# -- independent oracles -----------------------------------------------------
def _inside_polygon(p, V):
    """Even-odd ray casting, boundary counted inside up to 1e-12."""
    x, y = p
    inside = False
    n = len(V)
    for i in range(n):
        (x1, y1), (x2, y2) = V[i], V[(i + 1) % n]
        # on-edge test
        cross = (x2 - x1) * (y - y1) - (y2 - y1) * (x - x1)
        if abs(cross) < 1e-12 and min(x1, x2) - 1e-12 <= x <= max(x1, x2) + 1e-12 \
                and min(y1, y2) - 1e-12 <= y <= max(y1, y2) + 1e-12:
            return True
        if (y1 > y) != (y2 > y):
            xi = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            if xi > x:
                inside = not inside
    return inside


def _visible(a, b, V, k=400):
    s = np.linspace(0, 1, k)
    return all(_inside_polygon(a + si * (b - a), V) for si in s)


def visibility_geodesic(x, y, V):
    """Dijkstra over the visibility graph of x, y and the polygon vertices."""
    nodes = [np.asarray(x, float), np.asarray(y, float)] + [np.asarray(v, float) for v in V]
    n = len(nodes)
    dist = [math.inf] * n
    dist[0] = 0.0
    pq = [(0.0, 0)]
    while pq:
        dcur, i = heapq.heappop(pq)
        if dcur > dist[i]:
            continue
        for j in range(n):
            if j != i and _visible(nodes[i], nodes[j], V):
                nd = dcur + float(np.linalg.norm(nodes[j] - nodes[i]))
                if nd < dist[j] - 1e-15:
                    dist[j] = nd
                    heapq.heappush(pq, (nd, j))
    return dist[1]


# -- signed distance -----------------------------------------------------------
def test_signed_distance_disk(disk):
    assert disk.signed_distance([0, 0]) == pytest.approx(-1.0)
    assert disk.signed_distance([1, 0]) == pytest.approx(0.0, abs=1e-15)


def test_signed_distance_square(square):
    assert square.signed_distance([0.5, 0.5]) == pytest.approx(-0.5)


@given(coord, coord)
def test_square_signed_distance_matches_infinity_norm(square, a, b):
    assert square.signed_distance([a, b]) == pytest.approx(max(abs(a), abs(b)) - 1.0, abs=1e-12)


@given(st.floats(-1.5, 1.5), st.floats(-1.5, 1.5))
def test_projection_realizes_distance(disk, a, b):
    x = np.array([a, b])
    if np.linalg.norm(x) < 1e-6:
        return
    bp = disk.project_to_boundary(x)
    assert abs(disk.signed_distance(x)) == pytest.approx(np.linalg.norm(bp.point - x), abs=1e-12)
    assert np.linalg.norm(bp.normal) == pytest.approx(1.0)


@given(st.floats(0.0, 2.0), st.floats(0.0, 2.0))
def test_lshape_distance_sign_matches_ray_casting(lshape, a, b):
    x = np.array([a, b])
    sd = lshape.signed_distance(x)
    if abs(sd) > 1e-9:
        assert (sd < 0) == _inside_polygon(x, LSHAPE)


@given(st.lists(st.floats(-3, 3), min_size=2, max_size=2))
def test_clamp_lands_in_closure_and_is_idempotent(lshape, p):
    P = np.array([p])
    C = lshape.clamp(P)
    assert lshape.signed_distance(C[0]) <= 1e-9
    assert np.allclose(lshape.clamp(C), C, atol=1e-12)


# -- projection and sampling ---------------------------------------------------------
def test_projection_examples(disk, square):
    bp = disk.project_to_boundary([0.5, 0.0])
    assert np.allclose(bp.point, [1, 0]) and np.allclose(bp.normal, [1, 0])
    assert np.allclose(disk.project_to_boundary([1.0, 0.0]).point, [1, 0])
    # four equidistant faces; the smallest arc coordinate wins
    assert np.allclose(square.project_to_boundary([0.0, 0.0]).point, [-1, 0])


def test_boundary_sample_examples(disk, square):
    pts = np.array([b.point for b in disk.boundary_sample(4)])
    assert np.allclose(pts, [[1, 0], [0, 1], [-1, 0], [0, -1]], atol=1e-12)
    sq = {tuple(np.round(b.point, 12)) for b in square.boundary_sample(8)}
    expected = {(x, y) for x in (-1.0, 0.0, 1.0) for y in (-1.0, 0.0, 1.0)} - {(0.0, 0.0)}
    assert sq == expected
    rect = make_domain("rectangle", lo=[0, 0], hi=[2, 1])
    s = [b.arc for b in rect.boundary_sample(6)]
    assert rect.perimeter == pytest.approx(6.0)
    assert np.allclose(np.diff(s), 1.0)


@given(st.floats(0.0, 8.0))
def test_point_at_inverts_projection(square, s):
    bp = square.point_at(s)
    assert square.signed_distance(bp.point) == pytest.approx(0.0, abs=1e-12)
    back = square.project_to_boundary(bp.point)
    assert np.allclose(back.point, bp.point, atol=1e-12)


# -- admissible paths ----------------------------------------------------------------
def test_quasiconvex_path_convex(disk):
    p = disk.quasiconvex_path([0, 0], [0.5, 0])
    assert len(p.nodes) == 2 and p.length() == pytest.approx(0.5)
    z = disk.quasiconvex_path([0.2, 0.1], [0.2, 0.1])
    assert z.length() == 0.0


def test_quasiconvex_path_lshape_bends_at_reflex_corner(lshape):
    x, y = [0.5, 1.8], [1.8, 0.5]
    p = lshape.quasiconvex_path(x, y)
    oracle = visibility_geodesic(x, y, LSHAPE)
    assert oracle == pytest.approx(2 * math.sqrt(0.89), rel=1e-12)
    assert p.length() == pytest.approx(oracle, rel=1e-12)
    assert any(np.allclose(n, [1, 1]) for n in p.nodes)


@given(st.floats(0.05, 1.95), st.floats(0.05, 0.95), st.floats(0.05, 0.95), st.floats(0.05, 1.95))
def test_lshape_geodesic_matches_visibility_graph(lshape, a, b, c, e):
    x, y = np.array([a, b]), np.array([c, e])
    assert lshape.quasiconvex_path(x, y).length() == pytest.approx(visibility_geodesic(x, y, LSHAPE), rel=1e-9, abs=1e-12)


def test_quasiconvex_path_rejects_outside_points(lshape):
    with pytest.raises(PathNotFound):
        lshape.quasiconvex_path([0.5, 0.5], [1.5, 1.5])


# -- exterior spheres ----------------------------------------------------------------
def test_exterior_sphere_radius(disk, square, lshape):
    assert disk.exterior_sphere_radius() == pytest.approx(1.0)
    assert square.exterior_sphere_radius() >= 1.0
    assert lshape.exterior_sphere_radius() is None


def test_implicit_ellipse():
    d = ImplicitDomain("ellipse", axes=[1.0, 0.5])
    assert d.signed_distance([0, 0]) == pytest.approx(-0.5, abs=1e-9)
    assert d.signed_distance([1, 0]) == pytest.approx(0.0, abs=1e-9)
    bp = d.project_to_boundary([0.0, 0.3])
    assert np.allclose(bp.point, [0, 0.5], atol=1e-8)
    assert d.perimeter == pytest.approx(4.844224110273838, rel=1e-5)  # 4 E(3/4), complete elliptic integral


def test_invalid_domains():
    with pytest.raises(InvalidDomain):
        make_domain("torus")
    with pytest.raises(InvalidDomain):
        make_domain("polygon", vertices=[[0, 0], [1, 1], [1, 0], [0, 1]])  # self-intersecting
    with pytest.raises(InvalidDomain):
        Disk(radius=-1.0)
