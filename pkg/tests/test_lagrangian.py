import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hjdirichlet.errors import ExactnessViolated, NewtonDivergence, NotTonelli
from hjdirichlet.geometry import Path
from hjdirichlet.lagrangian import (
    Envelope,
    LagrangianSpec,
    ScalarField,
    euler_lagrange_residual,
    fenchel_young_gap,
    gauge_transform,
    hamilton_ode_rhs,
    hamiltonian,
    hamiltonian_p,
    inverse_legendre,
    kinetic,
    legendre,
    mechanical,
    polynomial_kinetic,
    quadratic,
    tonelli_check,
)

SQ2 = np.sqrt(2.0)
vec = st.lists(st.floats(-3, 3, allow_nan=False), min_size=2, max_size=2).map(np.array)


def test_legendre_examples():
    assert np.allclose(legendre(kinetic(), [0, 0], [1, 0]), [1, 0])
    assert np.allclose(legendre(mechanical(2 * np.eye(2)), [0, 0], [1, 0]), [2, 0])
    assert np.allclose(legendre(kinetic(mass=0.5), [0, 0], [2, 0]), [1, 0])


def test_hamiltonian_examples():
    L = kinetic()
    assert hamiltonian(L, [0, 0], [SQ2, 0]) == pytest.approx(0.0, abs=1e-14)
    assert hamiltonian(L, [0.3, 0.1], [0, 0]) == pytest.approx(-1.0)
    M = mechanical(np.eye(2), None, ScalarField.polynomial(-1.0))
    assert hamiltonian(M, [0.2, 0.4], [1, 1]) == pytest.approx(0.0, abs=1e-14)


def test_mechanical_hamiltonian_closed_form():
    A = np.array([[2.0, 0.3], [0.3, 1.0]])
    S = ScalarField.polynomial(0.0, [0.5, -0.2], [[0.4, 0.1], [0.1, -0.3]])
    V = ScalarField.polynomial(-1.0, [0.1, 0.0], [[-0.5, 0.0], [0.0, -0.2]])
    spec = mechanical(A, S, V)
    rng = np.random.default_rng(3)
    X, P = rng.normal(size=(20, 2)), rng.normal(size=(20, 2))
    q = P + S.grad(X)
    expect = 0.5 * np.einsum("ij,ij->i", q, np.linalg.solve(A, q.T).T) + V.f(X)
    assert np.allclose(hamiltonian(spec, X, P), expect, atol=1e-12)


@given(vec, vec)
def test_numeric_hamiltonian_matches_closed_form(x, p):
    # 1/4|v|^2 + 1 through the damped Newton route: H = |p|^2 - 1
    spec = polynomial_kinetic([0.25], ScalarField.polynomial(-1.0))
    assert hamiltonian(spec, x, p) == pytest.approx(float(p @ p) - 1.0, rel=1e-9, abs=1e-9)


@given(vec, vec)
def test_legendre_round_trip_quartic(x, v):
    spec = polynomial_kinetic([0.5, 0.1])
    p = legendre(spec, x, v)
    assert np.allclose(inverse_legendre(spec, x, p), v, atol=1e-8 * (1 + np.linalg.norm(v) ** 3))


@given(vec, vec, vec)
def test_fenchel_young_inequality(x, v, p):
    spec = polynomial_kinetic([0.5, 0.1], ScalarField.polynomial(-1.0, [0.2, 0.0]))
    assert fenchel_young_gap(spec, x, v, p) >= -1e-9 * (1 + np.abs(p @ v))
    assert fenchel_young_gap(spec, x, v, legendre(spec, x, v)) == pytest.approx(0.0, abs=1e-8 * (1 + v @ v) ** 2)


def test_hamiltonian_p_is_gradient():
    spec = polynomial_kinetic([0.5, 0.1])
    x, p, e = np.array([0.1, 0.2]), np.array([0.7, -0.4]), 1e-6
    fd = np.array([(hamiltonian(spec, x, p + e * u) - hamiltonian(spec, x, p - e * u)) / (2 * e) for u in np.eye(2)])
    assert np.allclose(hamiltonian_p(spec, x, p), fd, atol=1e-7)


# -- Tonelli checks -----------------------------------------------------------------
def _custom(L, Lv, Lvv, env):
    zero = lambda x, v: np.zeros(np.broadcast_shapes(np.shape(x), np.shape(v)))
    return LagrangianSpec(L, Lv, zero, Lvv, 2, env)


def test_tonelli_kinetic_passes():
    rep = tonelli_check(kinetic(), np.array([[0.0, 0.0], [0.5, 0.5]]))
    assert rep.ok and rep.min_eigenvalue == pytest.approx(1.0)


def test_tonelli_linear_fails_convexity():
    b = np.array([1.0, 0.0])
    env = Envelope(lambda r: 0.5 * r * r, lambda r: 0.5 * r * r + r, 10.0)
    spec = _custom(lambda x, v: np.asarray(v) @ b, lambda x, v: np.broadcast_to(b, np.shape(v)),
                   lambda x, v: np.zeros(np.shape(v)[:-1] + (2, 2)), env)
    rep = tonelli_check(spec, np.zeros((1, 2)))
    assert not rep.convex and not rep.ok
    with pytest.raises(NotTonelli):
        rep.raise_if_failed()


def test_tonelli_envelope_violation():
    # L - theta1 = -10|v|, so the margin reaches -100 at the largest sampled speed 10
    def L(x, v):
        r = np.linalg.norm(v, axis=-1)
        return 0.5 * r * r - 10 * r

    def Lv(x, v):
        v = np.asarray(v, dtype=float)
        r = np.maximum(np.linalg.norm(v, axis=-1, keepdims=True), 1e-300)
        return v - 10 * v / r

    env = Envelope(lambda r: 0.5 * r * r, lambda r: 0.5 * r * r + 100, 0.0)
    spec = _custom(L, Lv, lambda x, v: np.broadcast_to(np.eye(2), np.shape(v)[:-1] + (2, 2)), env)
    rep = tonelli_check(spec, np.zeros((1, 2)))
    assert not rep.envelope and rep.worst_lower_margin == pytest.approx(-100.0, rel=1e-9)


def test_non_tonelli_constructors():
    with pytest.raises(NotTonelli):
        quadratic(np.diag([1.0, -1.0]))
    with pytest.raises(NotTonelli):
        polynomial_kinetic([0.0, 1.0])


def test_newton_divergence_is_reported():
    # L_v saturates, so no v reaches p = (5, 0)
    def Lv(x, v):
        return np.tanh(np.asarray(v, dtype=float))

    def Lvv(x, v):
        c = 1 / np.cosh(np.clip(np.asarray(v, dtype=float), -300, 300)) ** 2
        return c[..., :, None] * np.eye(2)

    spec = _custom(lambda x, v: np.sum(np.log(np.cosh(v)), -1), Lv, Lvv, None)
    with pytest.raises(NewtonDivergence):
        inverse_legendre(spec, [0.0, 0.0], [5.0, 0.0])


# -- gauge transform ----------------------------------------------------------------
def test_gauge_transform_cancels_linear_term():
    L = quadratic(np.eye(2), s1=[1.0, 0.0], v0=-1.0)  # 1/2|v|^2 - <b,v> + 1
    S = ScalarField.polynomial(0.0, [-1.0, 0.0])  # S(x) = -x1
    L1 = gauge_transform(L, S)
    rng = np.random.default_rng(0)
    X, V = rng.normal(size=(30, 2)), rng.normal(size=(30, 2))
    assert np.allclose(L1.L(X, V), 0.5 * np.sum(V * V, 1) + 1.0)


def test_gauge_transform_zero_field_is_identity():
    L = kinetic()
    L1 = gauge_transform(L, ScalarField.zero())
    X, V = np.random.default_rng(1).normal(size=(2, 10, 2))
    assert np.allclose(L1.L(X, V), L.L(X, V))


def test_gauge_transform_mechanical_removes_drift():
    S = ScalarField.polynomial(0.0, [0.3, -0.1], [[0.2, 0.0], [0.0, 0.1]])
    V = ScalarField.polynomial(-1.0)
    spec = mechanical(np.eye(2), S, V)
    minus_S = ScalarField.polynomial(0.0, [-0.3, 0.1], [[-0.2, 0.0], [0.0, -0.1]])
    L0 = gauge_transform(spec, minus_S)  # L0 = L + <DS, v>
    ref = mechanical(np.eye(2), None, V)
    X, W = np.random.default_rng(2).normal(size=(2, 10, 2))
    assert np.allclose(L0.L(X, W), ref.L(X, W))
    assert np.allclose(L0.L(X, W), spec.L(X, W) + np.sum(S.grad(X) * W, 1))
    A, S0, V0 = L0.mechanical
    assert np.allclose(S0.grad(X), 0.0) and np.allclose(V0.f(X), V.f(X))


def test_gauge_transform_requires_exactness():
    with pytest.raises(ExactnessViolated):
        gauge_transform(kinetic(), ScalarField.polynomial(0.0, [1.0, 0.0]))


# -- Euler-Lagrange and Hamilton equations ---------------------------------------------------
def test_euler_lagrange_straight_segment():
    t = np.linspace(0, 1, 33)
    path = Path(t, np.column_stack([t, 0 * t]))
    assert np.max(euler_lagrange_residual(kinetic(), path)) <= 1e-12


def test_euler_lagrange_gravity():
    grav = mechanical(np.eye(2), None, ScalarField.polynomial(0.0, [0.0, 1.0]))  # 1/2|v|^2 - x2
    res = []
    for N in (16, 32, 64):
        t = np.linspace(0, 1, N + 1)
        arc = Path(t, np.column_stack([t, -0.5 * t * t]))
        res.append(np.max(euler_lagrange_residual(grav, arc)))
    assert res[-1] <= 1e-10 or res[-1] < res[0]
    t = np.linspace(0, 1, 33)
    line = Path(t, np.column_stack([t, 0 * t]))
    assert np.max(euler_lagrange_residual(grav, line)) == pytest.approx(1.0, rel=1e-9)


def test_hamilton_ode_examples():
    dx, dp = hamilton_ode_rhs(kinetic(), np.array([0.2, 0.3]), np.array([1.0, 0.0]))
    assert np.allclose(dx, [1, 0]) and np.allclose(dp, 0)
    V = ScalarField.polynomial(-1.0, None, [[-2.0, 0.0], [0.0, 0.0]])  # -1 - x1^2
    dx, dp = hamilton_ode_rhs(mechanical(np.eye(2), None, V), np.array([1.0, 0.0]), np.zeros(2))
    assert np.allclose(dx, 0) and np.allclose(dp, [2, 0])
