"""Pure numpy path kernels.

Reference implementation of the discrete action and the projected
preconditioned descent. The compiled module ``_ckernels`` implements the
same algorithm for the quadratic family and must agree with this file to
rounding.

Discretization: nodes ``X[0..N]`` on a uniform grid of step ``dt``. The
action is the midpoint rule ``sum_k dt * L((X_k + X_{k+1})/2, (X_{k+1} - X_k)/dt)``.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np

ARMIJO = 1e-4
MAX_BACKTRACK = 30


def quad_action_grad(X, dt, A, s1, S2, v0, w, Q):
    """Action, node gradient and time derivative for the quadratic family."""
    D = np.diff(X, axis=0)
    V = D / dt
    M = 0.5 * (X[:-1] + X[1:])
    AV = V @ A
    DS = s1 + M @ S2
    QM = M @ Q
    Lk = 0.5 * np.sum(V * AV, axis=1) - np.sum(DS * V, axis=1) - (v0 + M @ w + 0.5 * np.sum(M * QM, axis=1))
    Lv = AV - DS
    Lx = -(V @ S2) - w - QM
    grad = np.zeros_like(X)
    grad[:-1] += 0.5 * dt * Lx - Lv
    grad[1:] += 0.5 * dt * Lx + Lv
    dadt = float(np.mean(Lk - np.sum(Lv * V, axis=1)))
    return float(dt * np.sum(Lk)), grad, dadt


def generic_action_grad(X, dt, spec):
    """Same quantities as :func:`quad_action_grad` for any LagrangianSpec."""
    V = np.diff(X, axis=0) / dt
    M = 0.5 * (X[:-1] + X[1:])
    Lk = spec.L(M, V)
    Lv = spec.L_v(M, V)
    Lx = spec.L_x(M, V)
    grad = np.zeros_like(X)
    grad[:-1] += 0.5 * dt * Lx - Lv
    grad[1:] += 0.5 * dt * Lx + Lv
    dadt = float(np.mean(Lk - np.sum(Lv * V, axis=1)))
    return float(dt * np.sum(Lk)), grad, dadt


@lru_cache(maxsize=64)
def _laplace_inverse(N: int) -> np.ndarray:
    """Inverse of tridiag(-1, 2, -1) of size N-1: ``min(i,j) (N - max(i,j)) / N``."""
    i = np.arange(1, N)
    I, J = np.meshgrid(i, i, indexing="ij")
    K = np.minimum(I, J) * (N - np.maximum(I, J)) / N
    K.setflags(write=False)
    return K


def _cone_residual(z, normals):
    """``z + P_N(-z)`` where ``N`` is the cone spanned by the rows of ``normals``.

    By the Moreau decomposition this is minus the projection of ``-z`` onto
    the tangent cone, so it vanishes exactly at constrained stationarity.
    """
    y = -z
    best = y
    best_r = float(y @ y)
    k = len(normals)
    faces = [(i,) for i in range(k)] + [(i, j) for i in range(k) for j in range(i + 1, k)]
    for S in faces:
        G = normals[list(S)]
        lam, *_ = np.linalg.lstsq(G.T, y, rcond=None)
        if np.any(lam < 0):
            continue
        r = y - G.T @ lam
        rr = float(r @ r)
        if rr < best_r:
            best, best_r = r, rr
    return -best


def active_constraints(X, kind, par, poly, tau=1e-9):
    """Node indices and outward unit normals of constraints active at rows of ``X``."""
    n = X.shape[1]
    if kind == 0:
        c, R = par[:-1], par[-1]
        D = X - c
        r = np.linalg.norm(D, axis=1)
        idx = np.flatnonzero(r >= R - tau)
        return idx, D[idx] / r[idx, None]
    if kind == 1:
        lo, hi = par[:n], par[n:]
        I, J = np.nonzero(X <= lo + tau)
        I2, J2 = np.nonzero(X >= hi - tau)
        idx = np.concatenate([I, I2])
        nrm = np.zeros((len(idx), n))
        nrm[np.arange(len(I)), J] = -1.0
        nrm[len(I) + np.arange(len(I2)), J2] = 1.0
        return idx, nrm
    if kind == 2:
        A, B = poly, np.roll(poly, -1, axis=0)
        E = B - A
        L = np.linalg.norm(E, axis=1)
        en = np.column_stack([E[:, 1], -E[:, 0]]) / L[:, None]
        AP = X[:, None, :] - A[None]
        t = np.clip(np.einsum("mki,ki->mk", AP, E) / (L * L), 0.0, 1.0)
        d = np.linalg.norm(AP - t[..., None] * E[None], axis=-1)
        I, J = np.nonzero(d <= tau)
        return I, en[J]
    return np.zeros(0, dtype=int), np.zeros((0, n))


def stationarity(g, idx, nrm):
    """Max-norm of the cone-projected gradient (``g`` holds interior nodes)."""
    if len(g) == 0:
        return 0.0
    worst = float(np.max(np.abs(np.delete(g, np.unique(idx), axis=0)))) if len(idx) < len(g) else 0.0
    for k in np.unique(idx):
        r = _cone_residual(g[k], nrm[idx == k])
        worst = max(worst, float(np.max(np.abs(r))))
    return worst


def reduced_direction(d0, idx, nrm, Kinv, scale):
    """Newton direction with binding node constraints ``<d_k, nu> <= 0`` held as equalities.

    Multipliers come from the Schur complement ``B H^-1 B^T`` which is
    explicit because ``H^-1 = scale * Kinv`` acts coordinatewise.
    """
    c = len(idx)
    if c == 0:
        return d0
    push = np.sum(d0[idx] * nrm, axis=1)
    act = list(np.flatnonzero(push > 0))
    d = d0
    for _ in range(2 * c + 2):
        if not act:
            return d0
        I = idx[act]
        Nn = nrm[act]
        S = scale * Kinv[np.ix_(I, I)] * (Nn @ Nn.T)
        rhs = np.sum(d0[I] * Nn, axis=1)
        mu = np.linalg.lstsq(S, rhs, rcond=None)[0]
        if np.min(mu) < -1e-14 * (1 + np.max(np.abs(mu))):
            act.pop(int(np.argmin(mu)))
            continue
        d = d0 - scale * (Kinv[:, I] @ (mu[:, None] * Nn))
        viol = [b for b in range(c) if b not in act and float(d[idx[b]] @ nrm[b]) > 1e-14 * scale]
        if not viol:
            return d
        act.extend(viol)
    return d


def optimize_path(X0, dt, objective, project, mass, tol, maxiter, constraints=None):
    """Projected Newton-type descent on the interior nodes.

    The preconditioner is ``(mass / dt) * tridiag(-1, 2, -1)``, the exact
    Hessian for an isotropic quadratic kinetic term. Binding constraints are
    held in the Newton step, the trial point is projected, and an Armijo
    backtrack guards the decrease; a plain projected-gradient step is the
    fallback.

    Parameters
    ----------
    X0:
        Initial nodes ``(N+1, n)``; endpoints stay fixed.
    objective:
        ``X -> (value, gradient, dA/dt)``.
    project:
        Metric projection of an ``(m, n)`` array onto the admissible set.
    mass:
        Scalar preconditioner weight (mean eigenvalue of ``L_vv``).
    tol:
        Stationarity tolerance, scaled by ``1 + |value|``.
    constraints:
        ``X_interior -> (node_index, normals)`` of active constraints.

    Returns
    -------
    X, value, dadt, iterations, converged
    """
    X = np.array(X0, dtype=float)
    N = len(X) - 1
    n = X.shape[1]
    val, g, dadt = objective(X)
    if N < 2:
        return X, val, dadt, 0, True
    Kinv = _laplace_inverse(N)
    scale = dt / mass
    empty = (np.zeros(0, dtype=int), np.zeros((0, n)))
    it = 0
    converged = False
    while True:
        gi = g[1:-1]
        idx, nrm = constraints(X[1:-1]) if constraints is not None else empty
        if stationarity(gi, idx, nrm) <= tol * (1.0 + abs(val)):
            converged = True
            break
        if it >= maxiter:
            break
        d = reduced_direction(-scale * (Kinv @ gi), idx, nrm, Kinv, scale)
        accepted = False
        # Newton step first, plain projected gradient as fallback
        for direction, alpha in ((d, 1.0), (-gi, 0.25 * scale)):
            for _ in range(MAX_BACKTRACK):
                Xn = X.copy()
                Xn[1:-1] = project(X[1:-1] + alpha * direction)
                vn, gn, dn = objective(Xn)
                slope = float(np.sum(gi * (Xn[1:-1] - X[1:-1])))
                if vn <= val + ARMIJO * min(slope, 0.0):
                    accepted = True
                    break
                alpha *= 0.5
            if accepted:
                break
        if not accepted:
            break
        it += 1
        moved = np.max(np.abs(Xn - X))
        X, val, g, dadt = Xn, vn, gn, dn
        if moved == 0.0:
            break
    return X, val, dadt, it, converged


def project_disk(P, par):
    c = par[:-1]
    R = par[-1]
    D = P - c
    r = np.linalg.norm(D, axis=1)
    out = r > R
    if np.any(out):
        P = P.copy()
        P[out] = c + D[out] * (R / r[out])[:, None]
    return P


def project_rectangle(P, par):
    n = len(par) // 2
    return np.clip(P, par[:n], par[n:])


def polygon_inside(P, V):
    A, B = V, np.roll(V, -1, axis=0)
    ya, yb = A[:, 1], B[:, 1]
    px, py = P[:, 0:1], P[:, 1:2]
    straddle = (ya > py) != (yb > py)
    with np.errstate(divide="ignore", invalid="ignore"):
        xint = A[:, 0] + (py - ya) * (B[:, 0] - A[:, 0]) / (yb - ya)
    return (np.sum(straddle & (px < xint), axis=1) % 2) == 1


def polygon_closest(P, V):
    A, B = V, np.roll(V, -1, axis=0)
    E = B - A
    L2 = np.sum(E * E, axis=1)
    AP = P[:, None, :] - A[None]
    t = np.clip(np.einsum("mki,ki->mk", AP, E) / L2, 0.0, 1.0)
    C = A[None] + t[..., None] * E[None]
    d = np.linalg.norm(P[:, None, :] - C, axis=-1)
    j = np.argmin(d, axis=1)
    idx = np.arange(len(P))
    return C[idx, j], d[idx, j]


def project_polygon(P, V):
    out = ~polygon_inside(P, V)
    if np.any(out):
        P = P.copy()
        P[out] = polygon_closest(P[out], V)[0]
    return P


def polygon_sdf(P, V):
    _, d = polygon_closest(P, V)
    return np.where(polygon_inside(P, V), -d, d)


def make_projector(kind, par, poly):
    if kind == 0:
        return lambda P: project_disk(P, par)
    if kind == 1:
        return lambda P: project_rectangle(P, par)
    if kind == 2:
        return lambda P: project_polygon(P, poly)
    return lambda P: P


def optimize_quad_path(X0, dt, A, s1, S2, v0, w, Q, kind, par, poly, tol, maxiter):
    """Quadratic-family optimizer on a domain given by kernel code."""
    obj = lambda X: quad_action_grad(X, dt, A, s1, S2, v0, w, Q)
    mass = float(np.trace(A)) / A.shape[0]
    cons = lambda Xi: active_constraints(Xi, kind, par, poly)
    return optimize_path(X0, dt, obj, make_projector(kind, par, poly), mass, tol, maxiter, cons)
