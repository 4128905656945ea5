"""Singular set of the value function and its propagation.

Superdifferentials are assembled from the terminal covectors of the boundary
co-minimizers of ``g(y) + Phi(y, x)`` (the reachable gradients). Singular
chains follow either the step-maximizer construction, for general Tonelli
Lagrangians, or the minimal-selection semiflow ``x' = A^{-1} p_min`` for
mechanical ones.
"""
from __future__ import annotations

import csv
import io
import json
import math
import multiprocessing as mp
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import ndimage
from scipy.integrate import solve_ivp
from scipy.optimize import minimize

from .action import fundamental_solution
from .errors import (
    AmbiguousMaximizer,
    BallTouchesBoundary,
    ConditionMViolated,
    InvariantViolation,
    NotCutPoint,
)
from .lagrangian import hamiltonian_p, hamiltonian_x, mechanical
from .mane import base_points
from .solver import BoundaryData, Problem, ValueField, _fmt, _thread_count

GLOBAL = "Global"
CRITICAL = "CriticalPoint"
BOUNDARY = "BoundaryApproach"


@dataclass(frozen=True, eq=False)
class Superdifferential:
    """Approximate reachable gradients at ``base``; ``D+u`` is their hull."""

    base: np.ndarray
    vertices: np.ndarray
    radius: float
    values: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __len__(self):
        return len(self.vertices)


@dataclass(eq=False)
class SingularChain:
    """Discrete singular characteristic.

    ``u_values`` hold the value function that drives the chain; in mechanical
    mode this is the gauge-reduced value, which is nondecreasing.
    """

    points: np.ndarray
    step_times: np.ndarray
    covectors: np.ndarray
    u_values: np.ndarray
    verdict: str
    vertex_sets: list
    boundary_distance: np.ndarray
    mode: str = "general"
    meta: dict = field(default_factory=dict)

    @property
    def s(self) -> np.ndarray:
        """Elapsed chain time at each point."""
        return np.concatenate([[0.0], np.cumsum(self.step_times)])

    @property
    def pmin_norms(self) -> np.ndarray:
        return np.linalg.norm(self.covectors, axis=1)

    def rates(self) -> tuple[np.ndarray, np.ndarray]:
        """Finite-difference growth of ``u`` per step and the predicted ``<p, A^-1 p>``."""
        fd = np.diff(self.u_values) / np.where(self.step_times > 0, self.step_times, np.nan)
        A = self.meta.get("A")
        Ainv = np.linalg.inv(np.asarray(A)) if A is not None else np.eye(self.points.shape[1])
        P = self.covectors[: len(fd)]
        pred = np.einsum("ki,ij,kj->k", P, Ainv, P)
        return fd, pred

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "s_k", "x1", "x2", "u", "pmin_norm", "d_boundary", "verdict"])
        s = self.s
        n = len(self.points)
        for k in range(n):
            w.writerow([k, _fmt(s[k]), _fmt(self.points[k, 0]), _fmt(self.points[k, 1]), _fmt(self.u_values[k]),
                        _fmt(self.pmin_norms[k]), _fmt(self.boundary_distance[k]), self.verdict if k == n - 1 else "step"])
        return buf.getvalue()

    def summary(self) -> dict:
        return {
            "mode": self.mode,
            "verdict": self.verdict,
            "steps": int(len(self.points) - 1),
            "start": [float(v) for v in self.points[0]],
            "end": [float(v) for v in self.points[-1]],
            "elapsed": float(self.s[-1]),
            "u_start": float(self.u_values[0]),
            "u_end": float(self.u_values[-1]),
        }

    def save(self, csv_path) -> None:
        with open(csv_path, "w", newline="") as fh:
            fh.write(self.csv_text())
        with open(str(csv_path) + ".json", "w") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)


# ---------------------------------------------------------------------------
def eps_sing(prob: Problem) -> float:
    return 1e-4 * (1.0 + prob.lip)


def h_flow(prob: Problem) -> float:
    return prob.opts.h_flow_frac * prob.d.diameter


def merge(sd: Superdifferential, other: Superdifferential, eps: float) -> Superdifferential:
    """``sd`` with the vertices of ``other`` added, deduplicated within ``eps``."""
    V, vals = _dedupe(np.vstack([sd.vertices, other.vertices]), np.concatenate([sd.values, other.values]), eps)
    return Superdifferential(sd.base, V, sd.radius, vals)


def _dedupe(P: np.ndarray, vals: np.ndarray, eps: float):
    keep: list[int] = []
    for i in np.argsort(vals, kind="stable"):
        if all(np.linalg.norm(P[i] - P[j]) > eps for j in keep):
            keep.append(int(i))
    return P[keep], vals[keep]


def limiting_gradients(prob: Problem, x, delta_opt: Optional[float] = None) -> Superdifferential:
    """Reachable gradients of ``u`` at an interior point.

    Every refined boundary co-minimizer within ``delta_opt`` of the optimum
    contributes its terminal covector at ``x``. Boundary samples whose screened
    constant-speed action is already within ``delta_opt`` add the covector of
    that path, so the whole near-optimal boundary set is represented even when
    it is not a local minimum of the screen (the center of a disk seen from a
    nearby point). Vertices closer than ``eps_sing`` are merged.

    Parameters
    ----------
    delta_opt:
        Value slack; defaults to ``1e-6 (1 + |u(x)|)``.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    spec, d = prob.spec, prob.d
    if d.signed_distance(x) >= -d.tau:
        raise ValueError(f"point {x.tolist()} is not interior")
    screen_slack = 1e-3 * (1.0 + prob.lip * d.diameter)
    r = prob.value(x, delta_keep=(delta_opt or 0.0) + screen_slack)
    delta = 1e-6 * (1.0 + abs(r.u)) if delta_opt is None else float(delta_opt)
    P = [c.covector for c in r.near_optimal(delta)]
    vals = [c.value for c in r.near_optimal(delta)]
    ub, _, t, length, polys = prob.screen(x)
    for j in np.flatnonzero(ub <= r.u + delta):
        if t[j] <= 0:
            continue
        seg = polys[j][-1] - polys[j][-2]
        v = seg / np.linalg.norm(seg) * (length[j] / t[j])
        P.append(np.asarray(spec.L_v(x, v), dtype=float))
        vals.append(float(ub[j]))
    V, vals = _dedupe(np.array(P), np.array(vals), eps_sing(prob))
    return Superdifferential(x, V, eps_sing(prob), vals)


def is_singular(sd: Superdifferential) -> bool:
    return len(sd.vertices) >= 2


def _hamilton_flow(spec, x, p, T):
    """Forward extremal from ``(x, p)`` with its running action."""
    n = x.size

    def rhs(_, z):
        X, Pc = z[:n], z[n:2 * n]
        v = hamiltonian_p(spec, X, Pc)
        return np.concatenate([v, -hamiltonian_x(spec, X, Pc), [float(spec.L(X, v))]])

    sol = solve_ivp(rhs, (0.0, T), np.concatenate([x, p, [0.0]]), rtol=1e-11, atol=1e-13, method="DOP853")
    z = sol.y[:, -1]
    return z[:n], float(z[-1])


def is_cut(prob: Problem, x, sd: Optional[Superdifferential] = None) -> bool:
    """Singular, or the unique calibrated curve through ``x`` stops there.

    The second case is a forward calibration test: follow the extremal from
    ``(x, p)`` for ``10 h_flow`` and compare the value gain with its action.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    sd = limiting_gradients(prob, x) if sd is None else sd
    if is_singular(sd):
        return True
    eps_fw = 10 * h_flow(prob)
    eps_cal = 10 * prob.opts.tol_opt
    xf, act = _hamilton_flow(prob.spec, x, sd.vertices[0], eps_fw)
    if prob.d.signed_distance(xf) >= -prob.d.tau:
        return False
    ux = prob.value(x).u
    uf = prob.value(xf).u
    return bool(uf < ux + act - eps_cal * (1.0 + abs(ux)))


# ---------------------------------------------------------------------------
def min_norm_point(Z: np.ndarray, tol: float = 1e-10, maxiter: int = 500):
    """Wolfe's minimum-norm point of the convex hull of the rows of ``Z``.

    Returns ``(point, weights, gap)`` with ``gap = |x|^2 - min_i <z_i, x>``,
    the Frank-Wolfe duality gap at the returned point.
    """
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    m = len(Z)
    j = int(np.argmin(np.einsum("ij,ij->i", Z, Z)))
    S = [j]
    lam = np.array([1.0])
    x = Z[j].copy()
    for _ in range(maxiter):
        dots = Z @ x
        j = int(np.argmin(dots))
        gap = float(x @ x - dots[j])
        if gap <= tol or j in S:
            break
        S.append(j)
        lam = np.append(lam, 0.0)
        while True:
            B = Z[S]
            k = len(S)
            K = np.zeros((k + 1, k + 1))
            K[:k, :k] = B @ B.T
            K[:k, k] = K[k, :k] = 1.0
            rhs = np.zeros(k + 1)
            rhs[k] = 1.0
            alpha = np.linalg.lstsq(K, rhs, rcond=None)[0][:k]
            if np.all(alpha > 1e-14):
                lam = alpha
                x = alpha @ B
                break
            neg = alpha <= 1e-14
            with np.errstate(divide="ignore", invalid="ignore"):
                ratios = np.where(neg, lam / (lam - alpha), np.inf)
            theta = float(min(1.0, np.min(ratios)))
            lam = (1 - theta) * lam + theta * alpha
            keep = lam > 1e-14
            S = [s for s, kp in zip(S, keep) if kp]
            lam = lam[keep]
            lam = lam / lam.sum()
            x = lam @ Z[S]
    w = np.zeros(m)
    w[S] = lam
    gap = float(x @ x - np.min(Z @ x))
    return x, w, gap


def minimal_selection(sd: Superdifferential, A, tol: float = 1e-10) -> np.ndarray:
    """Element of ``co(vertices)`` minimizing ``<A^-1 p, p>``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    R = np.linalg.cholesky(np.linalg.inv(A))  # A^-1 = R R^T
    Z = sd.vertices @ R
    _, w, _ = min_norm_point(Z, tol)
    return w @ sd.vertices


def velocity_hull(spec, sd: Superdifferential) -> np.ndarray:
    """``H_p(base, p_i)`` for every vertex."""
    return np.atleast_2d(hamiltonian_p(spec, np.broadcast_to(sd.base, sd.vertices.shape), sd.vertices))


def is_critical(spec, sd: Superdifferential, eps_crit: float = 1e-3) -> bool:
    """``0`` lies within ``eps_crit`` of ``co H_p(x, D+u(x))``."""
    z, _, _ = min_norm_point(velocity_hull(spec, sd))
    return bool(np.linalg.norm(z) <= eps_crit)


def hull_distance(point, Z) -> float:
    """Euclidean distance from ``point`` to ``co(Z)``."""
    z, _, _ = min_norm_point(np.atleast_2d(Z) - np.asarray(point, dtype=float))
    return float(np.linalg.norm(z))


# ---------------------------------------------------------------------------
def ball_speed(prob: Problem) -> float:
    """``lambda = 2 Lip(u) / min eig L_vv``: every step maximizer lies in ``B(x, lambda t)``."""
    return 2.0 * prob.lip / prob.spec.min_vv_eigenvalue()


def step_maximizer(prob: Problem, x, t: float, lam: Optional[float] = None,
                   sd: Optional[Superdifferential] = None) -> np.ndarray:
    """Maximizer of ``y -> u(y) - A_t(x, y)`` over ``B(x, lambda t)``.

    Near ``x`` the value is the minimum of smooth sheets, one per boundary
    co-minimizer, each with its terminal covector as gradient. The step is
    solved in epigraph form, ``max z`` subject to ``z <= S_i(y) - A_t(x, y)``
    and ``|y - x| <= lambda t``, by SLSQP from ``x`` and from
    ``x + t H_p(x, p_i)`` for every vertex. A full value solve at each result
    adds any sheet the local model missed.

    Raises
    ------
    BallTouchesBoundary
        If the ball is not inside the domain.
    AmbiguousMaximizer
        If the starts end further apart than ``10 eps_sing``.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    d, spec, opts = prob.d, prob.spec, prob.opts
    lam = ball_speed(prob) if lam is None else float(lam)
    R = lam * t
    if -d.signed_distance(x) <= R:
        raise BallTouchesBoundary(f"ball of radius {R:.4g} around {x.tolist()} reaches the boundary")
    sd = limiting_gradients(prob, x) if sd is None else sd
    reach = 2.0 * prob.lip * R
    r = prob.value(x, delta_keep=reach + 1e-3 * (1.0 + abs(prob.lip * d.diameter)))
    sheets = [c for c in r.candidates if c.value <= r.u + reach]
    cache: dict = {}

    def evaluate(y):
        # SLSQP iterates may leave the ball; clip radially so every solve stays inside the domain
        w = y - x
        nw = float(np.linalg.norm(w))
        if nw > R:
            y = x + w * (R / nw)
        key = y.tobytes()
        if key not in cache:
            if np.linalg.norm(y - x) <= 1e-12 * (1.0 + np.abs(x).max()):
                # rest path
                a = t * float(spec.L(x, np.zeros_like(x)))
                ga = np.asarray(spec.L_v(x, np.zeros_like(x)), dtype=float)
            else:
                mr = fundamental_solution(spec, d, t, x, y, opts, n_starts=1, strict=False)
                a, ga = mr.value, mr.terminal_covector
            cs = [prob.sheet(y, c, reach) for c in sheets]
            cache[key] = (np.array([c.value - a for c in cs]), np.array([c.covector - ga for c in cs]))
        return cache[key]

    def cons(z):
        vals, _ = evaluate(z[:-1])
        return np.concatenate([vals - z[-1], [R * R - float((z[:-1] - x) @ (z[:-1] - x))]])

    def cons_jac(z):
        _, grads = evaluate(z[:-1])
        J = np.hstack([grads, -np.ones((len(grads), 1))])
        return np.vstack([J, np.concatenate([-2.0 * (z[:-1] - x), [0.0]])])

    starts = [x.copy()]
    for v in velocity_hull(spec, sd):
        w = t * v
        nw = float(np.linalg.norm(w))
        starts.append(x + (w * min(1.0, 0.9 * R / nw) if nw > 0 else w))
    bounds = [(xi - R, xi + R) for xi in x] + [(None, None)]
    ends = []
    for y0 in starts:
        for _ in range(4):
            vals, _ = evaluate(y0)
            res = minimize(lambda z: -z[-1], np.concatenate([y0, [float(vals.min())]]),
                           jac=lambda z: np.concatenate([np.zeros_like(x), [-1.0]]), method="SLSQP",
                           constraints=[{"type": "ineq", "fun": cons, "jac": cons_jac}], bounds=bounds,
                           options={"ftol": 1e-14, "maxiter": 200})
            y = res.x[:-1]
            w = y - x
            if float(np.linalg.norm(w)) > R:
                y = x + w * (R / float(np.linalg.norm(w)))
            model = float(evaluate(y)[0].min())
            full = prob.value(y, delta_keep=reach)
            a = fundamental_solution(spec, d, t, x, y, opts, n_starts=1, strict=False).value
            if full.u - a >= model - 1e-9 * (1.0 + abs(full.u)):
                break
            # a sheet outside the local model is lower at y; add it and resolve
            arcs = [c.boundary.arc for c in sheets]
            for c in full.candidates:
                if c.value <= full.u + reach and all(abs(c.boundary.arc - a_) > 1e-6 * d.perimeter for a_ in arcs):
                    sheets.append(c)
            cache.clear()
        ends.append((-float(res.fun), y))
    best = max(ends, key=lambda e: e[0])[1]
    spread = max(float(np.linalg.norm(e[1] - best)) for e in ends)
    if spread > 10 * eps_sing(prob):
        raise AmbiguousMaximizer(f"step maximizers from {len(ends)} starts spread by {spread:.3g}")
    return best


def chain_superdifferential(prob: Problem, x, A, h: float, sd: Optional[Superdifferential] = None):
    """Superdifferential at ``x`` closed under one look-ahead step.

    The tentative Euler point ``x + h A^{-1} p_min`` is solved too; when it
    sees gradients that ``x`` does not, the step would cross the singular set
    and both sets are merged (upper semicontinuity of ``D+u`` at the crossing).
    Returns ``(sd, p_min, sd_ahead)``; ``sd_ahead`` is reusable at the next
    point when no merge happened.
    """
    x = np.asarray(x, dtype=float)
    eps = eps_sing(prob)
    sd = limiting_gradients(prob, x) if sd is None else sd
    p = minimal_selection(sd, A)
    y = x + h * np.linalg.solve(A, p)
    if prob.d.signed_distance(y) >= -prob.d.tau or np.allclose(y, x):
        return sd, p, None
    ahead = limiting_gradients(prob, y)
    new = [q for q in ahead.vertices if np.min(np.linalg.norm(sd.vertices - q, axis=1)) > eps]
    if not new:
        return sd, p, ahead
    sd = merge(sd, ahead, eps)
    return sd, minimal_selection(sd, A), None


def trace_general(prob: Problem, x0, budget: float = math.inf, max_steps: Optional[int] = None,
                  eps_crit: Optional[float] = None) -> SingularChain:
    """Step-maximizer chain ``x_{k+1} = argmax_y u(y) - A_{t_k}(x_k, y)``.

    Step times follow ``t_k = min(0.1 d(x_k) / lambda, t_cap)``. The chain ends
    with ``CriticalPoint`` when ``0`` enters the velocity hull, with
    ``BoundaryApproach`` when the distance to the boundary drops below
    ``2 h_flow`` and with ``Global`` when the time or step budget runs out.
    """
    d, opts = prob.d, prob.opts
    x = np.asarray(x0, dtype=float).reshape(-1)
    max_steps = opts.max_steps if max_steps is None else max_steps
    eps_crit = opts.eps_crit if eps_crit is None else eps_crit
    delta_bd = 2 * h_flow(prob)
    if -d.signed_distance(x) <= delta_bd:
        raise BallTouchesBoundary(f"seed {x.tolist()} is on or next to the boundary")
    hf = h_flow(prob)
    A = np.atleast_2d(prob.spec.L_vv(x, np.zeros_like(x)))
    sd, p, _ = chain_superdifferential(prob, x, A, hf)
    if not is_cut(prob, x, limiting_gradients(prob, x)):
        warnings.warn(NotCutPoint(f"seed {x.tolist()} fails the cut test"))
    lam = ball_speed(prob)
    t_cap = opts.t_cap_frac * d.diameter
    pts, times, covs, us, sets, dist = [x], [], [p], [prob.value(x).u], [sd.vertices], [-d.signed_distance(x)]
    verdict = GLOBAL
    s = 0.0
    for _ in range(max_steps + 1):
        if dist[-1] < delta_bd:
            verdict = BOUNDARY
            break
        if is_critical(prob.spec, sd, eps_crit):
            verdict = CRITICAL
            break
        if s >= budget or len(times) >= max_steps:
            break
        tk = min(0.1 * dist[-1] / lam, t_cap)
        x = step_maximizer(prob, x, tk, lam, sd)
        s += tk
        A = np.atleast_2d(prob.spec.L_vv(x, np.zeros_like(x)))
        sd, p, _ = chain_superdifferential(prob, x, A, hf)
        pts.append(x)
        times.append(tk)
        covs.append(p)
        us.append(prob.value(x).u)
        sets.append(sd.vertices)
        dist.append(-d.signed_distance(x))
    return SingularChain(np.array(pts), np.array(times), np.array(covs), np.array(us), verdict, sets,
                         np.array(dist), "general", {"lambda": lam})


# ---------------------------------------------------------------------------
def mechanical_reduction(prob: Problem, samples: int = 256) -> Problem:
    """Gauge-reduced problem ``(1/2 <A v, v> - V, g + S)`` for a mechanical Lagrangian.

    Raises
    ------
    ConditionMViolated
        If the Lagrangian is not mechanical, ``max V >= 0`` on the sampled
        domain, or ``g + S`` is not constant on the boundary.
    """
    if prob.spec.mechanical is None:
        raise ConditionMViolated("trace_mechanical needs a mechanical Lagrangian")
    A, S, V = prob.spec.mechanical
    d = prob.d
    X = np.vstack([base_points(d, samples, prob.opts.seed), prob.ring[1]])
    vmax = float(np.max(V(X)))
    if not vmax < 0:
        raise ConditionMViolated(f"max V = {vmax:.6g} is not negative")
    gs = prob.ring[2] + S(prob.ring[1])
    spread = float(np.ptp(gs))
    if spread > 1e-9 * (1.0 + float(np.max(np.abs(gs)))):
        raise ConditionMViolated(f"g + S varies by {spread:.3g} on the boundary")
    if np.all(S.grad(X) == 0) and np.ptp(prob.ring[2]) == 0:
        return prob
    spec0 = mechanical(A, None, V)
    return Problem(spec0, d, BoundaryData.const(float(np.mean(gs))), prob.opts, c_hat=prob.c_hat)


def trace_mechanical(prob: Problem, x0, budget: float = math.inf, max_steps: Optional[int] = None,
                     eps_crit: Optional[float] = None) -> SingularChain:
    """Euler chain of ``x' = A^{-1} p_min`` on the gauge-reduced value.

    ``p_min`` minimizes ``<A^-1 p, p>`` over the superdifferential. The chain
    stops with ``CriticalPoint`` once ``|p_min|_{A^-1} <= eps_crit`` and with
    ``Global`` when the budget runs out.

    Raises
    ------
    ConditionMViolated
        See :func:`mechanical_reduction`.
    InvariantViolation
        ``BoundaryHit`` if the chain comes within ``2 h_flow`` of the boundary.
    """
    red = mechanical_reduction(prob)
    A = np.atleast_2d(red.spec.mechanical[0])
    Ainv = np.linalg.inv(A)
    d, opts = red.d, red.opts
    x = np.asarray(x0, dtype=float).reshape(-1)
    if not d.contains(x) or -d.signed_distance(x) <= d.tau:
        raise ValueError(f"seed {x.tolist()} is not interior")
    max_steps = opts.max_steps if max_steps is None else max_steps
    eps_crit = opts.eps_crit if eps_crit is None else eps_crit
    h = h_flow(red)
    delta_bd = 2 * h
    pts, times, covs, us, sets, dist = [], [], [], [], [], []
    verdict = GLOBAL
    s = 0.0
    ahead = None
    while True:
        dk = -d.signed_distance(x)
        if dk < delta_bd:
            raise InvariantViolation("BoundaryHit", f"mechanical chain reached {x.tolist()} at s={s:.6g}")
        sd, p, ahead = chain_superdifferential(red, x, A, h, ahead)
        pts.append(x)
        covs.append(p)
        us.append(red.value(x).u)
        sets.append(sd.vertices)
        dist.append(dk)
        if math.sqrt(max(float(p @ Ainv @ p), 0.0)) <= eps_crit:
            verdict = CRITICAL
            break
        if s >= budget or len(times) >= max_steps:
            break
        x = x + h * np.linalg.solve(A, p)
        times.append(h)
        s += h
    return SingularChain(np.array(pts), np.array(times), np.array(covs), np.array(us), verdict, sets,
                         np.array(dist), "mechanical", {"A": A.tolist(), "h_flow": h})


# ---------------------------------------------------------------------------
_WORKER: dict = {}


def _chain_worker(k):
    prob, seeds, mode, budget = _WORKER["args"]
    fn = trace_mechanical if mode == "mechanical" else trace_general
    try:
        return fn(prob, seeds[k], budget), None
    except InvariantViolation as exc:
        return None, exc


def trace_many(prob: Problem, seeds, mode: str = "mechanical", budget: float = math.inf,
               threads: Optional[int] = None) -> list:
    """Chains from several seeds on a fork pool; results keep the seed order.

    Each entry is a :class:`SingularChain`; a ``BoundaryHit`` is re-raised
    after all chains finish.
    """
    _ = prob.c_hat
    seeds = [np.asarray(s, dtype=float) for s in seeds]
    _WORKER["args"] = (prob, seeds, mode, budget)
    nth = min(_thread_count(threads), max(1, len(seeds)))
    try:
        if nth > 1 and "fork" in mp.get_all_start_methods():
            with mp.get_context("fork").Pool(nth) as pool:
                out = pool.map(_chain_worker, range(len(seeds)), chunksize=1)
        else:
            out = [_chain_worker(k) for k in range(len(seeds))]
    finally:
        _WORKER.clear()
    for _, exc in out:
        if exc is not None:
            raise exc
    return [c for c, _ in out]


def sample_cut_points(field: ValueField, k: int, seed: int = 0) -> np.ndarray:
    """Up to ``k`` flagged lattice points, drawn without replacement."""
    idx = np.flatnonzero(field.singular & field.ok)
    if len(idx) == 0:
        return np.zeros((0, field.points.shape[1]))
    rng = np.random.default_rng(seed)
    pick = np.sort(rng.choice(idx, size=min(k, len(idx)), replace=False))
    return field.points[pick]


def skeleton(field: ValueField) -> tuple[np.ndarray, dict]:
    """Flagged point cloud and advisory connectivity statistics (8-neighbour components)."""
    mask = field.as_grid(field.singular & field.ok) > 0
    labels, n = ndimage.label(mask, structure=np.ones((3, 3), dtype=int))
    sizes = np.bincount(labels.ravel())[1:] if n else np.zeros(0, dtype=int)
    pts = field.points[field.singular & field.ok]
    return pts, {"points": int(len(pts)), "components": int(n), "largest": int(sizes.max()) if n else 0}


def skeleton_csv(points: np.ndarray) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x1", "x2"])
    for p in points:
        w.writerow([_fmt(p[0]), _fmt(p[1])])
    return buf.getvalue()
