"""Tonelli Lagrangians, Legendre transform and the numerical Hamiltonian.

A :class:`LagrangianSpec` bundles ``L(x, v)`` with its first and second
derivatives and the growth envelopes ``theta1 - c0 <= L <= theta2`` used by
the a priori bounds. All callables are vectorized over leading axes: ``x``
and ``v`` have shape ``(..., n)``.

Lagrangians of the quadratic family

    L(x, v) = 1/2 <A v, v> - <s1 + S2 x, v> - (v0 + <w, x> + 1/2 <Q x, x>)

carry a :class:`QuadraticForm` which the compiled path optimizer consumes
directly.
"""
from __future__ import annotations

import math
import weakref
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .errors import ExactnessViolated, NewtonDivergence, NotTonelli


# ---------------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class ScalarField:
    """Scalar function with gradient and Hessian, vectorized over leading axes."""

    f: Callable[[np.ndarray], np.ndarray]
    grad: Callable[[np.ndarray], np.ndarray]
    hess: Callable[[np.ndarray], np.ndarray]
    # coefficients (c, a, B) when the field is c + <a, x> + 1/2 <B x, x>
    quadratic: Optional[tuple] = None

    def __call__(self, x):
        return self.f(np.asarray(x, dtype=float))

    @classmethod
    def polynomial(cls, c=0.0, a=None, B=None, dim=2) -> "ScalarField":
        """The field ``c + <a, x> + 1/2 <B x, x>`` with symmetric ``B``."""
        a = np.zeros(dim) if a is None else np.asarray(a, dtype=float)
        B = np.zeros((dim, dim)) if B is None else np.asarray(B, dtype=float)
        B = 0.5 * (B + B.T)
        c = float(c)

        def f(x):
            x = np.asarray(x, dtype=float)
            return c + x @ a + 0.5 * np.einsum("...i,ij,...j->...", x, B, x)

        def grad(x):
            x = np.asarray(x, dtype=float)
            return a + x @ B

        def hess(x):
            x = np.asarray(x, dtype=float)
            return np.broadcast_to(B, x.shape[:-1] + B.shape)

        return cls(f, grad, hess, (c, a, B))

    @classmethod
    def zero(cls, dim=2) -> "ScalarField":
        return cls.polynomial(0.0, dim=dim)

    def shifted(self, other: "ScalarField", sign: float = 1.0) -> "ScalarField":
        """``self + sign * other``."""
        quad = None
        if self.quadratic is not None and other.quadratic is not None:
            c1, a1, B1 = self.quadratic
            c2, a2, B2 = other.quadratic
            quad = (c1 + sign * c2, a1 + sign * a2, B1 + sign * B2)
        return ScalarField(
            lambda x: self.f(x) + sign * other.f(x),
            lambda x: self.grad(x) + sign * other.grad(x),
            lambda x: self.hess(x) + sign * other.hess(x),
            quad,
        )


@dataclass(frozen=True, eq=False)
class QuadraticForm:
    """Coefficients of a Lagrangian of the quadratic family (see module doc)."""

    A: np.ndarray
    s1: np.ndarray
    S2: np.ndarray
    v0: float
    w: np.ndarray
    Q: np.ndarray

    @property
    def dim(self) -> int:
        return self.A.shape[0]

    def arrays(self):
        c = np.ascontiguousarray
        return c(self.A), c(self.s1), c(self.S2), float(self.v0), c(self.w), c(self.Q)


@dataclass(frozen=True, eq=False)
class Envelope:
    """Growth envelopes ``theta1(|v|) - c0 <= L(x, v) <= theta2(|v|)``.

    ``theta1`` must be convex, nondecreasing and superlinear.
    """

    theta1: Callable[[float], float]
    theta2: Callable[[float], float]
    c0: float = 0.0

    def theta1_star(self, s: float) -> float:
        """Convex conjugate ``sup_{r >= 0} s r - theta1(r)``."""
        f = lambda r: -(s * r - self.theta1(r))
        rmax = 1.0
        for _ in range(200):
            if f(2 * rmax) > f(rmax):
                break
            rmax *= 2
        res = minimize_scalar(f, bounds=(0.0, 2 * rmax), method="bounded", options={"xatol": 1e-12})
        return float(max(-res.fun, -f(0.0)))

    def kappa(self, s: float, C: float = 1.0) -> float:
        """Speed bound on minimizers whose chord-to-time ratio is ``s``.

        With ``m = theta2(C s) + theta1*(1) + c0`` this is the root of
        ``theta1(r) = m + c0 + 1``.
        """
        m = self.theta2(C * s) + self.theta1_star(1.0) + self.c0
        target = m + self.c0 + 1.0
        g = lambda r: self.theta1(r) - target
        if g(0.0) >= 0:
            return 0.0
        hi = 1.0
        while g(hi) < 0:
            hi *= 2
        return float(brentq(g, 0.0, hi, xtol=1e-14, rtol=1e-14))


# ---------------------------------------------------------------------------
_ENVELOPES: "weakref.WeakKeyDictionary" = weakref.WeakKeyDictionary()


@dataclass(frozen=True, eq=False)
class LagrangianSpec:
    """A Tonelli Lagrangian with derivatives and growth envelopes.

    Parameters
    ----------
    L, L_v, L_x, L_vv:
        Vectorized callables of ``(x, v)``.
    dim:
        Configuration-space dimension.
    envelope:
        Growth envelopes; derived from coefficient bounds when None and a
        derivation rule is available.
    quad:
        Quadratic-family coefficients, enables the compiled kernels.
    mechanical:
        ``(A, S, V)`` when ``L = 1/2 <A v, v> - <DS, v> - V``.
    """

    L: Callable
    L_v: Callable
    L_x: Callable
    L_vv: Callable
    dim: int = 2
    envelope: Optional[Envelope] = None
    quad: Optional[QuadraticForm] = None
    mechanical: Optional[tuple] = None
    name: str = "custom"
    envelope_rule: Optional[Callable] = field(default=None, repr=False)

    def __call__(self, x, v):
        return self.L(np.asarray(x, dtype=float), np.asarray(v, dtype=float))

    def envelope_for(self, bbox=None) -> Envelope:
        """Envelope given at construction or derived over the bounding box."""
        if self.envelope is not None:
            return self.envelope
        if self.envelope_rule is None:
            raise NotTonelli("no growth envelope supplied and none can be derived")
        if bbox is None:
            bbox = (-np.ones(self.dim), np.ones(self.dim))
        key = tuple(np.concatenate([np.ravel(bbox[0]), np.ravel(bbox[1])]).tolist())
        cache = _ENVELOPES.setdefault(self, {})
        if key not in cache:
            cache[key] = self.envelope_rule(bbox)
        return cache[key]

    def min_vv_eigenvalue(self, x=None, v=None) -> float:
        """Smallest eigenvalue of ``L_vv`` (exact for the quadratic family)."""
        if self.quad is not None:
            return float(np.linalg.eigvalsh(self.quad.A)[0])
        x = np.zeros(self.dim) if x is None else np.asarray(x, dtype=float)
        v = np.zeros(self.dim) if v is None else np.asarray(v, dtype=float)
        return float(np.linalg.eigvalsh(self.L_vv(x, v))[0])

    def mean_vv_eigenvalue(self, x, v) -> float:
        """Mean eigenvalue of ``L_vv`` over paired samples, used for preconditioning."""
        if self.quad is not None:
            return float(np.trace(self.quad.A) / self.dim)
        H = self.L_vv(np.asarray(x, dtype=float), np.asarray(v, dtype=float))
        return float(np.mean(np.trace(H, axis1=-2, axis2=-1)) / self.dim)


def _box_samples(bbox, k=33):
    lo, hi = (np.asarray(b, dtype=float) for b in bbox)
    axes = [np.linspace(lo[i], hi[i], k) for i in range(lo.size)]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, lo.size)


def quadratic(A, s1=None, S2=None, v0=0.0, w=None, Q=None, envelope=None, name="quadratic") -> LagrangianSpec:
    """Lagrangian ``1/2 <Av,v> - <s1 + S2 x, v> - (v0 + <w,x> + 1/2 <Qx,x>)``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    if not np.allclose(A, A.T) or np.linalg.eigvalsh(A)[0] <= 0:
        raise NotTonelli("kinetic matrix must be symmetric positive definite")
    s1 = np.zeros(n) if s1 is None else np.asarray(s1, dtype=float)
    S2 = np.zeros((n, n)) if S2 is None else np.asarray(S2, dtype=float)
    w = np.zeros(n) if w is None else np.asarray(w, dtype=float)
    Q = np.zeros((n, n)) if Q is None else np.asarray(Q, dtype=float)
    S2 = 0.5 * (S2 + S2.T)
    Q = 0.5 * (Q + Q.T)
    qf = QuadraticForm(A, s1, S2, float(v0), w, Q)

    def drift(x):
        return s1 + x @ S2

    def pot(x):
        return v0 + x @ w + 0.5 * np.einsum("...i,ij,...j->...", x, Q, x)

    def L(x, v):
        x, v = np.asarray(x, dtype=float), np.asarray(v, dtype=float)
        return 0.5 * np.einsum("...i,ij,...j->...", v, A, v) - np.sum(drift(x) * v, axis=-1) - pot(x)

    def L_v(x, v):
        x, v = np.asarray(x, dtype=float), np.asarray(v, dtype=float)
        return v @ A - drift(x)

    def L_x(x, v):
        x, v = np.asarray(x, dtype=float), np.asarray(v, dtype=float)
        return -(v @ S2) - w - x @ Q

    def L_vv(x, v):
        shape = np.broadcast_shapes(np.shape(x), np.shape(v))[:-1]
        return np.broadcast_to(A, shape + A.shape)

    def rule(bbox):
        X = _box_samples(bbox)
        ev = np.linalg.eigvalsh(A)
        a_min, a_max = float(ev[0]), float(ev[-1])
        s_max = float(np.max(np.linalg.norm(drift(X), axis=1)))
        P = pot(X)
        v_max, v_min = float(P.max()), float(P.min())
        if s_max <= 1e-14:
            th1 = lambda r: 0.5 * a_min * r * r - v_max
            c0 = 0.0
        else:
            th1 = lambda r: 0.25 * a_min * r * r - v_max
            c0 = s_max**2 / a_min
        th2 = lambda r: 0.5 * a_max * r * r + s_max * r - v_min
        return Envelope(th1, th2, c0)

    S_field = ScalarField.polynomial(0.0, s1, S2, dim=n)
    V_field = ScalarField.polynomial(v0, w, Q, dim=n)
    return LagrangianSpec(L, L_v, L_x, L_vv, n, envelope, qf, (A, S_field, V_field), name, rule)


def kinetic(mass: float = 1.0, constant: float = 1.0, dim: int = 2) -> LagrangianSpec:
    """``mass/2 |v|^2 + constant``."""
    return quadratic(mass * np.eye(dim), v0=-constant, name="kinetic")


def mechanical(A, S: Optional[ScalarField] = None, V: Optional[ScalarField] = None, envelope=None) -> LagrangianSpec:
    """``1/2 <A v, v> - <DS(x), v> - V(x)`` for scalar fields ``S`` and ``V``.

    Quadratic polynomial fields produce the quadratic family (compiled path).
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    S = ScalarField.zero(n) if S is None else S
    V = ScalarField.zero(n) if V is None else V
    if S.quadratic is not None and V.quadratic is not None:
        _, a, B = S.quadratic
        c, w, Q = V.quadratic
        spec = quadratic(A, a, B, c, w, Q, envelope=envelope, name="mechanical")
        return replace(spec, mechanical=(A, S, V))

    def L(x, v):
        x, v = np.asarray(x, dtype=float), np.asarray(v, dtype=float)
        return 0.5 * np.einsum("...i,ij,...j->...", v, A, v) - np.sum(S.grad(x) * v, axis=-1) - V.f(x)

    def L_v(x, v):
        return np.asarray(v, dtype=float) @ A - S.grad(np.asarray(x, dtype=float))

    def L_x(x, v):
        x, v = np.asarray(x, dtype=float), np.asarray(v, dtype=float)
        return -np.einsum("...ij,...j->...i", S.hess(x), v) - V.grad(x)

    def L_vv(x, v):
        shape = np.broadcast_shapes(np.shape(x), np.shape(v))[:-1]
        return np.broadcast_to(A, shape + A.shape)

    def rule(bbox):
        X = _box_samples(bbox)
        ev = np.linalg.eigvalsh(A)
        s_max = float(np.max(np.linalg.norm(S.grad(X), axis=1)))
        P = V.f(X)
        th1 = lambda r: 0.25 * ev[0] * r * r - P.max()
        th2 = lambda r: 0.5 * ev[-1] * r * r + s_max * r - P.min()
        return Envelope(th1, th2, s_max**2 / ev[0])

    return LagrangianSpec(L, L_v, L_x, L_vv, n, envelope, None, (A, S, V), "mechanical", rule)


def polynomial_kinetic(coeffs, V: Optional[ScalarField] = None, dim: int = 2) -> LagrangianSpec:
    """``sum_k c_k |v|^(2k) - V(x)`` with ``c_1 > 0`` and ``c_k >= 0``."""
    c = np.asarray(coeffs, dtype=float)
    if c.size == 0 or c[0] <= 0 or np.any(c < 0):
        raise NotTonelli("polynomial kinetic energy needs c_1 > 0 and c_k >= 0")
    V = ScalarField.zero(dim) if V is None else V
    k = np.arange(1, c.size + 1)

    def phi(r2):  # energy as a function of |v|^2, and its first two derivatives
        r2 = np.asarray(r2)[..., None]
        return (np.sum(c * r2**k, -1), np.sum(c * k * r2 ** (k - 1), -1), np.sum(c * k * (k - 1) * r2 ** np.maximum(k - 2, 0), -1))

    def L(x, v):
        x, v = np.asarray(x, dtype=float), np.asarray(v, dtype=float)
        return phi(np.sum(v * v, -1))[0] - V.f(x)

    def L_v(x, v):
        v = np.asarray(v, dtype=float)
        return 2 * phi(np.sum(v * v, -1))[1][..., None] * v

    def L_x(x, v):
        x = np.asarray(x, dtype=float)
        g = -V.grad(x)
        return np.broadcast_to(g, np.broadcast_shapes(g.shape, np.shape(v))).copy()

    def L_vv(x, v):
        v = np.asarray(v, dtype=float)
        _, d1, d2 = phi(np.sum(v * v, -1))
        I = np.eye(v.shape[-1])
        return 2 * d1[..., None, None] * I + 4 * d2[..., None, None] * v[..., :, None] * v[..., None, :]

    def rule(bbox):
        P = V.f(_box_samples(bbox))
        vmax, vmin = float(P.max()), float(P.min())
        th1 = lambda r: float(np.sum(c * (r * r) ** k)) - vmax
        th2 = lambda r: float(np.sum(c * (r * r) ** k)) - vmin
        return Envelope(th1, th2, 0.0)

    return LagrangianSpec(L, L_v, L_x, L_vv, dim, None, None, None, "polynomial", rule)


# ---------------------------------------------------------------------------
def legendre(spec: LagrangianSpec, x, v) -> np.ndarray:
    """Momentum ``p = L_v(x, v)``."""
    return np.asarray(spec.L_v(np.asarray(x, dtype=float), np.asarray(v, dtype=float)), dtype=float)


def inverse_legendre(spec: LagrangianSpec, x, p, tol: float = 1e-10, maxiter: int = 100) -> np.ndarray:
    """Velocity ``v`` with ``L_v(x, v) = p`` by damped Newton, vectorized.

    Raises
    ------
    NewtonDivergence
        If the residual is not below ``tol * (1 + |p|)`` within ``maxiter``
        iterations.
    """
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    shape = np.broadcast_shapes(x.shape, p.shape)
    x = np.broadcast_to(x, shape)
    p = np.broadcast_to(p, shape)
    if spec.quad is not None:
        A, s1, S2 = spec.quad.A, spec.quad.s1, spec.quad.S2
        return np.linalg.solve(A, (p + s1 + x @ S2)[..., None])[..., 0]
    v = np.zeros(shape)
    scale = tol * (1.0 + np.linalg.norm(p, axis=-1))
    r = spec.L_v(x, v) - p
    for _ in range(maxiter):
        rn = np.linalg.norm(r, axis=-1)
        if np.all(rn <= scale):
            return v
        try:
            step = np.linalg.solve(spec.L_vv(x, v), r[..., None])[..., 0]
        except np.linalg.LinAlgError as e:
            raise NewtonDivergence("L_vv became singular during Legendre inversion") from e
        if not np.all(np.isfinite(step)):
            raise NewtonDivergence("Legendre inversion produced a non-finite step")
        alpha = np.ones(shape[:-1])
        for _ in range(40):
            vn = v - alpha[..., None] * step
            rnew = spec.L_v(x, vn) - p
            bad = np.linalg.norm(rnew, axis=-1) > (1 - 1e-4 * alpha) * rn
            bad &= rn > scale
            if not np.any(bad):
                break
            alpha = np.where(bad, 0.5 * alpha, alpha)
        v, r = vn, rnew
    if np.all(np.linalg.norm(r, axis=-1) <= scale):
        return v
    raise NewtonDivergence("Legendre inversion did not converge")


def hamiltonian(spec: LagrangianSpec, x, p) -> np.ndarray:
    """``H(x, p) = sup_v <p, v> - L(x, v)``, vectorized over leading axes."""
    v = inverse_legendre(spec, x, p)
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    out = np.sum(p * v, axis=-1) - spec.L(x, v)
    return out if np.ndim(out) else float(out)


def hamiltonian_p(spec: LagrangianSpec, x, p) -> np.ndarray:
    """``H_p(x, p)``: the velocity dual to ``p``."""
    return inverse_legendre(spec, x, p)


def hamiltonian_x(spec: LagrangianSpec, x, p) -> np.ndarray:
    """``H_x(x, p) = -L_x(x, H_p(x, p))``."""
    v = inverse_legendre(spec, x, p)
    return -np.asarray(spec.L_x(np.asarray(x, dtype=float), v))


def hamilton_ode_rhs(spec: LagrangianSpec, x, p) -> tuple[np.ndarray, np.ndarray]:
    """Right-hand side ``(H_p, -H_x)`` of Hamilton's equations."""
    v = inverse_legendre(spec, x, p)
    return v, np.asarray(spec.L_x(np.asarray(x, dtype=float), v), dtype=float)


def euler_lagrange_residual(spec: LagrangianSpec, path) -> np.ndarray:
    """Discrete Euler-Lagrange residual norm at the interior nodes of ``path``.

    Uses the same midpoint discretization as the path optimizer, so a
    converged minimizer has residual at the optimizer tolerance.
    """
    X = np.asarray(path.nodes, dtype=float)
    dt = np.diff(np.asarray(path.times, dtype=float))[:, None]
    V = np.diff(X, axis=0) / dt
    M = 0.5 * (X[:-1] + X[1:])
    Lv = spec.L_v(M, V)
    Lx = spec.L_x(M, V)
    tau = 0.5 * (dt[:-1] + dt[1:])
    res = (Lv[1:] - Lv[:-1]) / tau - 0.5 * (dt[:-1] * Lx[:-1] + dt[1:] * Lx[1:]) / tau
    return np.linalg.norm(res, axis=1)


# ---------------------------------------------------------------------------
@dataclass
class TonelliReport:
    """Outcome of :func:`tonelli_check`."""

    convex: bool
    envelope: bool
    superlinear: bool
    min_eigenvalue: float
    worst_lower_margin: float
    worst_upper_margin: float
    messages: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.convex and self.envelope and self.superlinear

    def raise_if_failed(self):
        if not self.ok:
            raise NotTonelli("; ".join(self.messages))


def tonelli_check(spec: LagrangianSpec, xs, vmax: float = 10.0, n_dir: int = 16, n_rad: int = 24, envelope=None) -> TonelliReport:
    """Check convexity in ``v`` and the growth envelopes at sampled states.

    Parameters
    ----------
    xs:
        Sample positions, shape ``(m, n)``.
    vmax:
        Largest sampled speed.
    """
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    n = spec.dim
    env = envelope if envelope is not None else spec.envelope_for((xs.min(0), xs.max(0)))
    rng = np.random.default_rng(12345)
    dirs = rng.normal(size=(n_dir, n))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    radii = np.concatenate([[0.0], np.geomspace(1e-2, vmax, n_rad - 1)])
    V = (radii[:, None, None] * dirs[None]).reshape(-1, n)
    X = np.repeat(xs, len(V), axis=0)
    VV = np.tile(V, (len(xs), 1))
    msgs = []

    H = np.asarray(spec.L_vv(X, VV))
    eig = float(np.min(np.linalg.eigvalsh(H)))
    convex = eig > 1e-12
    if not convex:
        msgs.append(f"L_vv not positive definite (min eigenvalue {eig:.3g})")

    Lval = spec.L(X, VV)
    r = np.linalg.norm(VV, axis=1)
    th1 = np.array([env.theta1(ri) for ri in r])
    th2 = np.array([env.theta2(ri) for ri in r])
    low = float(np.min(Lval - (th1 - env.c0)))
    up = float(np.min(th2 - Lval))
    tol = 1e-9 * (1 + np.max(np.abs(Lval)))
    envelope_ok = low >= -tol and up >= -tol
    if low < -tol:
        msgs.append(f"lower envelope violated by {-low:.3g}")
    if up < -tol:
        msgs.append(f"upper envelope violated by {-up:.3g}")

    ratios = [env.theta1(R) / R for R in (1e2, 1e3, 1e4)]
    superlinear = ratios[2] > ratios[1] > ratios[0] and ratios[2] > 10 * abs(ratios[0]) + 1
    if not superlinear:
        msgs.append("theta1 is not superlinear")
    return TonelliReport(convex, envelope_ok, superlinear, eig, low, up, msgs)


def gauge_transform(spec: LagrangianSpec, S: ScalarField, xs=None, tol: float = 1e-8) -> LagrangianSpec:
    """Return ``L1 = L - <DS, v>``.

    The matching boundary data is ``g - S`` and the value functions satisfy
    ``u1 = u - S``. Requires ``L_v(x, 0) = DS(x)`` at the sample positions
    ``xs``.

    Raises
    ------
    ExactnessViolated
        If ``L_v(x, 0)`` differs from ``DS(x)`` by more than ``tol``.
    """
    n = spec.dim
    if xs is None:
        xs = _box_samples((-np.ones(n), np.ones(n)), 9)
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    gap = spec.L_v(xs, np.zeros_like(xs)) - S.grad(xs)
    worst = float(np.max(np.abs(gap)))
    if worst > tol:
        raise ExactnessViolated(f"L_v(x,0) - DS(x) reaches {worst:.3g}")

    if spec.quad is not None and S.quadratic is not None:
        q = spec.quad
        _, a, B = S.quadratic
        out = quadratic(q.A, q.s1 + a, q.S2 + B, q.v0, q.w, q.Q, envelope=None, name=spec.name + "-gauged")
        mech = None
        if spec.mechanical is not None:
            A, Sm, Vm = spec.mechanical
            mech = (A, Sm.shifted(S, 1.0), Vm)
        return replace(out, mechanical=mech)

    def L(x, v):
        return spec.L(x, v) - np.sum(S.grad(np.asarray(x, dtype=float)) * v, axis=-1)

    def L_v(x, v):
        return spec.L_v(x, v) - S.grad(np.asarray(x, dtype=float))

    def L_x(x, v):
        x = np.asarray(x, dtype=float)
        return spec.L_x(x, v) - np.einsum("...ij,...j->...i", S.hess(x), np.asarray(v, dtype=float))

    mech = None
    if spec.mechanical is not None:
        A, Sm, Vm = spec.mechanical
        mech = (A, Sm.shifted(S, 1.0), Vm)
    return LagrangianSpec(L, L_v, L_x, spec.L_vv, n, None, None, mech, spec.name + "-gauged", None)


def fenchel_young_gap(spec: LagrangianSpec, x, v, p) -> np.ndarray:
    """``H(x, p) + L(x, v) - <p, v>``, nonnegative with equality at ``p = L_v``."""
    x, v, p = (np.asarray(a, dtype=float) for a in (x, v, p))
    return hamiltonian(spec, x, p) + spec.L(x, v) - np.sum(p * v, axis=-1)
