"""Value function of the Dirichlet problem and its exit-time data.

``u(x) = inf_{y on the boundary} g(y) + Phi(y, x)``. The boundary search runs
in two stages. A vectorized screen prices every boundary sample with the
best constant-speed path along the shortest admissible polyline (an upper
bound) and with the growth envelope (a lower bound). Then each retained
local minimum is refined jointly in arc coordinate and time, using the
exact derivatives ``g'(s) - <p(0), tau(s)>`` and ``dA/dt`` of the discrete
action.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import multiprocessing as mp
import os
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq, minimize, minimize_scalar

from .action import (
    MinimizerResult, _shaved_corner, _split_at_corner, fundamental_solution, node_count, optimize_nodes, resample,
)
from .errors import (
    FieldCorrupted,
    HJError,
    NoFeasibleCandidate,
    RootNotBracketed,
    SupercriticalViolated,
)
from .geometry import BoundaryPoint, Domain, Path
from .lagrangian import LagrangianSpec, ScalarField, hamiltonian, hamiltonian_p, tonelli_check
from .mane import critical_value, effective_critical_value, potential, time_horizon_bound
from .options import DEFAULT, Options


# ---------------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class BoundaryData:
    """Dirichlet data ``g`` on the boundary.

    Parameters
    ----------
    g:
        Vectorized callable on points ``(m, n) -> (m,)``.
    grad:
        Gradient of a smooth extension ``G`` (used for arc derivatives and
        the G2 check). Finite differences along the boundary when absent.
    nu:
        Constant of condition G1, if claimed.
    constant:
        Set when ``g`` is constant, which makes G1 and G2 automatic.
    """

    g: Callable
    grad: Optional[Callable] = None
    nu: Optional[float] = None
    constant: Optional[float] = None
    name: str = "custom"

    def __call__(self, P) -> np.ndarray:
        P = np.asarray(P, dtype=float)
        return np.asarray(self.g(np.atleast_2d(P)), dtype=float).reshape(-1) if P.ndim == 2 else float(
            np.asarray(self.g(P[None, :])).reshape(-1)[0]
        )

    @classmethod
    def const(cls, value: float = 0.0) -> "BoundaryData":
        v = float(value)
        return cls(lambda P: np.full(len(P), v), lambda P: np.zeros_like(np.atleast_2d(P)), 0.0, v, f"constant({v:g})")

    @classmethod
    def from_field(cls, G: ScalarField, nu: Optional[float] = None, name: str = "field") -> "BoundaryData":
        """Restriction of a smooth scalar field, which doubles as its extension."""
        return cls(G.f, G.grad, nu, None, name)

    @classmethod
    def affine(cls, c: float = 0.0, a=(0.0, 0.0), nu: Optional[float] = None) -> "BoundaryData":
        a = np.asarray(a, dtype=float)
        if np.all(a == 0):
            return cls.const(c)
        return cls.from_field(ScalarField.polynomial(c, a, dim=a.size), nu, "affine")

    def shifted(self, S: ScalarField, sign: float = -1.0) -> "BoundaryData":
        """``g + sign * S``, the boundary data matching a gauge change by ``S``."""
        g0, gr0 = self.g, self.grad
        g = lambda P: np.asarray(g0(P), dtype=float) + sign * np.asarray(S.f(P), dtype=float)
        grad = None if gr0 is None else (lambda P: np.asarray(gr0(P), dtype=float) + sign * np.asarray(S.grad(P), dtype=float))
        return BoundaryData(g, grad, None, None, f"{self.name}-gauged")

    def arc_derivative(self, d: Domain, s: float) -> float:
        """Derivative of ``g`` along the boundary in the arc coordinate."""
        if self.constant is not None:
            return 0.0
        if self.grad is not None:
            y = d.point_at(s).point
            return float(np.asarray(self.grad(y[None, :])).reshape(-1) @ d.tangent_at(s))
        e = 1e-6 * d.perimeter
        P = d.points_at(np.array([s - e, s + e]))
        gv = self(P)
        return float((gv[1] - gv[0]) / (2 * e))


# ---------------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class Candidate:
    """A refined boundary co-minimizer of ``g(y) + Phi(y, x)``."""

    value: float
    boundary: BoundaryPoint
    t: float
    minimizer: MinimizerResult
    basin: int

    @property
    def covector(self) -> np.ndarray:
        """Terminal covector ``L_v`` at ``x``; a limiting gradient of ``u``."""
        return self.minimizer.terminal_covector


@dataclass(frozen=True, eq=False)
class ValueResult:
    """``u(x)`` with its minimizing boundary point and exit time.

    ``candidates`` are sorted by value; the first is the selected one.
    """

    x: np.ndarray
    u: float
    y_star: BoundaryPoint
    T: float
    minimizer: Optional[MinimizerResult]
    candidates: tuple = ()

    def near_optimal(self, delta: float) -> list:
        return [c for c in self.candidates if c.value <= self.u + delta]


@dataclass(frozen=True, eq=False)
class Backtrace:
    """Calibrated curve on ``[-T, 0]`` ending at ``x``."""

    curve: Path
    dual: np.ndarray
    y_star: BoundaryPoint
    action: float


# ---------------------------------------------------------------------------
def _kappa0(env) -> float:
    """``inf_r (theta1(r) - c0) / r``: every admissible path of length ``l`` costs at least ``kappa0 * l``."""
    f0 = env.theta1(0.0) - env.c0
    if f0 < 0:
        return -math.inf
    r = np.geomspace(1e-6, 1e6, 241)
    vals = np.array([(env.theta1(ri) - env.c0) / ri for ri in r])
    i = int(np.argmin(vals))
    lo, hi = r[max(i - 1, 0)], r[min(i + 1, len(r) - 1)]
    res = minimize_scalar(lambda q: (env.theta1(q) - env.c0) / q, bounds=(lo, hi), method="bounded")
    return float(min(vals[i], res.fun))


def _polyline_bounds(spec: LagrangianSpec, polys: list, q: int = 3):
    """Least constant-speed action along each polyline and the matching time.

    The action of a constant-speed traversal is quasiconvex in the speed for
    convex ``L``, so a log grid followed by a vectorized golden search finds it.
    """
    m = len(polys)
    K = max(len(p) for p in polys) - 1
    n = polys[0].shape[1]
    P = np.empty((m, K + 1, n))
    for i, p in enumerate(polys):
        P[i, : len(p)] = p
        P[i, len(p):] = p[-1]
    D = np.diff(P, axis=1)
    ell = np.linalg.norm(D, axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        dirs = np.where(ell[..., None] > 0, D / ell[..., None], 0.0)
    if spec.quad is not None:
        return _quad_polyline_bounds(spec.quad, P, ell, dirs)
    frac = (np.arange(q) + 0.5) / q
    Qp = P[:, :-1, None, :] + frac[None, None, :, None] * D[:, :, None, :]
    total = ell.sum(axis=1)

    def action(r):  # r has shape (m,) or (m, k)
        r = np.asarray(r)
        if r.ndim == 1:
            r = r[:, None]
        V = r[:, None, None, :, None] * dirs[:, :, None, None, :]
        Lq = spec.L(Qp[:, :, :, None, :], V)  # (m, K, q, k)
        return np.sum(ell[..., None] * Lq.mean(axis=2), axis=1) / r

    grid = np.geomspace(1e-3, 1e3, 25)
    A = action(np.broadcast_to(grid, (m, grid.size)))
    i = np.argmin(A, axis=1)
    a = np.log(grid[np.maximum(i - 1, 0)])
    b = np.log(grid[np.minimum(i + 1, grid.size - 1)])
    gr = 0.5 * (math.sqrt(5) - 1)
    c, d = b - gr * (b - a), a + gr * (b - a)
    fc, fd = action(np.exp(c))[:, 0], action(np.exp(d))[:, 0]
    for _ in range(24):
        left = fc < fd
        a, b = np.where(left, a, c), np.where(left, d, b)
        z = np.where(left, b - gr * (b - a), a + gr * (b - a))
        fz = action(np.exp(z))[:, 0]
        c, d, fc, fd = (np.where(left, z, d), np.where(left, c, z), np.where(left, fz, fd), np.where(left, fc, fz))
    r = np.exp(0.5 * (a + b))
    ub = action(r)[:, 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(total > 0, total / r, 0.0)
    ub = np.where(total > 0, ub, 0.0)
    return ub, t, total


def _quad_polyline_bounds(qf, P, ell, dirs):
    """Closed form for the quadratic family.

    At speed ``r`` the action is ``alpha r - beta + gamma / r`` with
    ``alpha = sum l <Ae, e>/2``, ``beta`` the mean drift along the path and
    ``gamma`` the integral of ``-V``; Simpson's rule is exact for the
    quadratic potential.
    """
    A, s1, S2, v0, w, Q = qf.arrays()
    a, b = P[:, :-1], P[:, 1:]
    mid = 0.5 * (a + b)
    pot = lambda X: v0 + X @ w + 0.5 * np.einsum("...i,ij,...j->...", X, Q, X)
    Vbar = (pot(a) + 4 * pot(mid) + pot(b)) / 6.0
    drift = np.sum((s1 + mid @ S2) * dirs, axis=-1)
    alpha = np.sum(ell * 0.5 * np.einsum("...i,ij,...j->...", dirs, A, dirs), axis=1)
    beta = np.sum(ell * drift, axis=1)
    gamma = -np.sum(ell * Vbar, axis=1)
    total = ell.sum(axis=1)
    pos = (gamma > 0) & (alpha > 0)
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.where(pos, np.sqrt(np.abs(gamma / alpha)), 1e3)
        ub = np.where(pos, 2 * np.sqrt(np.abs(alpha * gamma)) - beta, alpha * r - beta + gamma / r)
        t = np.where(total > 0, total / r, 0.0)
    return np.where(total > 0, ub, 0.0), t, total


def _basins(ub: np.ndarray, rel: float = 1e-12) -> list[list[int]]:
    """Cyclic local minima of ``ub``; flat runs come back as one group."""
    m = len(ub)
    tol = rel * (1.0 + np.abs(ub))
    left, right = np.roll(ub, 1), np.roll(ub, -1)
    is_min = (ub <= left + tol) & (ub <= right + tol)
    if np.all(is_min):
        return [list(range(m))]
    idx = np.flatnonzero(is_min)
    if len(idx) == 0:
        return [[int(np.argmin(ub))]]
    runs: list[list[int]] = []
    for j in idx:
        if runs and j == runs[-1][-1] + 1:
            runs[-1].append(int(j))
        else:
            runs.append([int(j)])
    if len(runs) > 1 and runs[0][0] == 0 and runs[-1][-1] == m - 1:
        runs[0] = runs.pop() + runs[0]
    return runs


class Problem:
    """A Dirichlet scenario ``(L, domain, g)`` with cached global constants."""

    def __init__(self, spec: LagrangianSpec, d: Domain, bd: BoundaryData, opts: Options = DEFAULT, c_hat: Optional[float] = None):
        self.spec, self.d, self.bd, self.opts = spec, d, bd, opts
        if c_hat is not None:
            self.__dict__["c_hat"] = float(c_hat)

    @cached_property
    def c_hat(self) -> float:
        return critical_value(self.spec, self.d, self.opts.c_samples, self.opts)

    @property
    def c_eff(self) -> float:
        return effective_critical_value(self.c_hat, self.opts)

    @cached_property
    def envelope(self):
        return self.spec.envelope_for(self.d.bbox())

    @cached_property
    def C1(self) -> float:
        """``theta2(1) C``: Lipschitz bound of ``Phi`` and of ``u``."""
        return abs(self.envelope.theta2(1.0)) * self.d.quasiconvexity_constant

    @cached_property
    def C2(self) -> float:
        """Speed-to-distance constant of the exit-time bound ``d(x) <= C2 T(x)``."""
        env = self.envelope
        C = self.d.quasiconvexity_constant
        return env.theta1_star(C * env.theta2(env.kappa(1.0, C)) + 1.0) + env.c0

    @cached_property
    def kappa0(self) -> float:
        return _kappa0(self.envelope)

    @property
    def lip(self) -> float:
        return self.C1

    @cached_property
    def ring(self):
        m = self.opts.m_bd
        arcs = np.arange(m) * (self.d.perimeter / m)
        pts = self.d.points_at(arcs)
        return arcs, pts, self.bd(pts)

    @property
    def h_path(self) -> float:
        return self.opts.h_path_frac * self.d.diameter

    def require_supercritical(self):
        if not self.c_eff < 0:
            raise SupercriticalViolated(f"critical value estimate {self.c_hat:.6g} with margin is not negative")

    # -- boundary search -------------------------------------------------
    def screen(self, x: np.ndarray):
        """Upper and lower bounds of ``g(y_j) + Phi(y_j, x)`` over the boundary ring."""
        arcs, pts, gv = self.ring
        polys = self.d.geodesics_to(x, pts)
        ub, t, length = _polyline_bounds(self.spec, polys)
        lb = gv + self.kappa0 * length if self.kappa0 >= 0 else np.full(len(gv), -math.inf)
        return gv + ub, gv + lb, t, length, polys

    def _refine(self, x: np.ndarray, j: int, t0: float, length: float, poly: np.ndarray):
        """Joint local minimization of ``g(y(s)) + A_t(y(s), x)`` near ring sample ``j``."""
        d = self.d
        arcs, pts, _ = self.ring
        step = d.perimeter / len(arcs)
        N = node_count(d, length, self.opts)
        X = resample(Path(np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(poly, axis=0), axis=1))]), poly), N)
        t_max = time_horizon_bound(self.spec, d, self.c_eff, x, pts[j]) * (1.0 + step / max(length, 1e-300)) + 1e-12
        return self._refine_from(x, float(arcs[j]), t0, X, t_max, step, j)

    def sheet(self, x, cand: Candidate, reach: float = 0.0) -> Candidate:
        """Re-minimize the boundary sheet of ``cand`` at a nearby point ``x``.

        The boundary point may move by ``reach`` plus one ring spacing. The
        result is the smooth local branch of ``u`` that ``cand`` belongs to.
        """
        x = np.asarray(x, dtype=float).reshape(-1)
        step = self.d.perimeter / self.opts.m_bd + reach
        X = cand.minimizer.path.nodes
        t_max = 2.0 * time_horizon_bound(self.spec, self.d, self.c_eff, x, cand.boundary.point) + 2.0 * cand.t + 1e-12
        return self._refine_from(x, float(cand.boundary.arc), cand.t, X, t_max, step, cand.basin)

    def _refine_from(self, x, s0, t0, X, t_max, step, basin):
        spec, d, bd, opts = self.spec, self.d, self.bd, self.opts
        N = len(X) - 1
        t_lo = 1e-3 * t_max
        t0 = float(min(max(t0, 2 * t_lo), 0.5 * t_max)) if t0 > 0 else 0.1 * t_max
        state = {"X": X}

        def f(z):
            s = s0 + z[0] * step
            t = t0 * math.exp(z[1])
            y = d.point_at(s).point
            Xw = state["X"].copy()
            Xw[0], Xw[-1] = y, x
            Xw[1:-1] = d.clamp(Xw[1:-1])
            Xn, val, dadt, _, _ = optimize_nodes(spec, d, Xw, t / N, opts)
            state["X"] = Xn
            v = _shaved_corner(d, Xn)
            split = None if v is None else _split_at_corner(spec, d, t, y, v, x, opts, False)
            if split is not None:
                val, dadt, P0 = split.value, split.dadt, split.initial_covector
            else:
                dt = t / N
                P0 = spec.L_v(0.5 * (Xn[0] + Xn[1]), (Xn[1] - Xn[0]) / dt) - 0.5 * dt * spec.L_x(
                    0.5 * (Xn[0] + Xn[1]), (Xn[1] - Xn[0]) / dt
                )
            ds = bd.arc_derivative(d, s) - float(P0 @ d.tangent_at(s))
            return float(bd(y)) + val, np.array([ds * step, dadt * t])

        bounds = [(-1.0, 1.0), (math.log(t_lo / t0), math.log(t_max / t0))]
        res = minimize(f, np.zeros(2), jac=True, method="L-BFGS-B", bounds=bounds,
                       options={"ftol": 1e-15, "gtol": 1e-11, "maxiter": 80})
        s_star = s0 + float(res.x[0]) * step
        t_star = t0 * math.exp(float(res.x[1]))
        bp = d.point_at(s_star)
        mr = fundamental_solution(spec, d, t_star, bp.point, x, opts, init=state["X"], n_intervals=N, strict=False)
        return Candidate(float(bd(bp.point)) + mr.value, bp, t_star, mr, basin)

    def value(self, x, delta_keep: Optional[float] = None) -> ValueResult:
        """``u(x)`` with the minimizing boundary point and exit time.

        Parameters
        ----------
        delta_keep:
            Basins whose screened value is within this margin of the best are
            refined in addition to the top ``n_refine``; used to resolve
            near-ties.
        """
        x = np.asarray(x, dtype=float).reshape(-1)
        d, opts = self.d, self.opts
        sd = d.signed_distance(x)
        if sd > 10 * d.tau:
            raise ValueError(f"point {x.tolist()} lies outside the domain")
        if sd >= -d.tau:
            bp = d.project_to_boundary(x)
            return ValueResult(x, float(self.bd(bp.point)), bp, 0.0, None, ())
        self.require_supercritical()
        ub, lb, t, length, polys = self.screen(x)
        runs = _basins(ub)
        reps = []
        for run in runs:
            if len(run) <= 8:
                reps.extend(run)
            else:
                k = np.linspace(0, len(run) - 1, 8).round().astype(int)
                reps.extend(run[i] for i in sorted(set(k)))
        reps.sort(key=lambda j: (ub[j], j))
        best = ub[reps[0]]
        keep = 1e-9 * (1 + abs(best)) if delta_keep is None else delta_keep
        slack = 1e-3 * (1 + abs(best)) + max(self.kappa0, 0.0) * self.h_path
        chosen = []
        for j in reps:
            tied = ub[j] <= best + keep
            if tied or (len(chosen) < opts.n_refine and lb[j] <= best + slack):
                chosen.append(j)
        cands = []
        for j in chosen[: max(opts.n_refine, 8)]:
            c = self._refine(x, j, float(t[j]), float(length[j]), polys[j])
            if c.minimizer.converged:
                cands.append(c)
        if not cands:
            raise NoFeasibleCandidate(f"no boundary candidate converged for x={x.tolist()}")
        cands.sort(key=lambda c: (c.value, c.boundary.arc))
        u = cands[0].value
        tie = 10 * opts.tol_opt * (1 + abs(u))
        sel = min((c for c in cands if c.value <= u + tie), key=lambda c: c.boundary.arc)
        ordered = [sel] + [c for c in cands if c is not sel]
        return ValueResult(x, float(sel.value), sel.boundary, float(sel.t), sel.minimizer, tuple(ordered))

    def near_boundary_value(self, x) -> ValueResult:
        """``g(y) + Phi(y, x)`` with ``y`` the boundary projection; exact to first order near the boundary."""
        x = np.asarray(x, dtype=float).reshape(-1)
        bp = self.d.project_to_boundary(x)
        q = potential(self.spec, self.d, bp.point, x, self.c_hat, self.opts)
        if q.minimizer is None:
            return ValueResult(x, float(self.bd(bp.point)), bp, 0.0, None, ())
        c = Candidate(float(self.bd(bp.point)) + q.value, bp, q.t, q.minimizer, -1)
        return ValueResult(x, c.value, bp, q.t, q.minimizer, (c,))

    def exit_time(self, x) -> float:
        return self.value(x).T

    def backtrace(self, x) -> Backtrace:
        r = self.value(x)
        if r.minimizer is None:
            return Backtrace(Path(np.array([0.0]), r.x[None, :].copy()), np.zeros((1, r.x.size)), r.y_star, 0.0)
        mr = r.minimizer
        times = mr.path.times - mr.path.times[-1]
        return Backtrace(Path(times, mr.path.nodes.copy()), mr.dual.copy(), r.y_star, mr.value)


# ---------------------------------------------------------------------------
def boundary_covector(spec: LagrangianSpec, d: Domain, y: BoundaryPoint, mu_max: float = 1e8):
    """The ``mu > 0`` with ``H(y, -mu nu) = 0`` and the covector ``p = -mu nu``.

    Raises
    ------
    RootNotBracketed
        When ``H(y, 0) >= 0`` or no sign change appears below ``mu_max``.
    """
    yv = np.asarray(y.point, dtype=float)
    nu = np.asarray(y.normal, dtype=float)
    h = lambda mu: float(hamiltonian(spec, yv, -mu * nu))
    h0 = h(0.0)
    if not h0 < 0:
        raise RootNotBracketed(f"H(y, 0) = {h0:.6g} is not negative")
    hi = 1.0
    while h(hi) <= 0:
        hi *= 2.0
        if hi > mu_max:
            raise RootNotBracketed("no sign change of H(y, -mu nu) below mu_max")
    mu = brentq(h, 0.0, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    for _ in range(3):
        r = h(mu)
        if abs(r) <= 1e-14:
            break
        slope = float(hamiltonian_p(spec, yv, -mu * nu) @ (-nu))
        if slope <= 0:
            break
        mu -= r / slope
    if abs(h(mu)) > 1e-10:
        raise RootNotBracketed(f"residual {h(mu):.3g} above tolerance")
    return float(mu), -mu * nu


# ---------------------------------------------------------------------------
@dataclass
class CheckEntry:
    name: str
    applicable: bool
    passed: bool
    worst: float
    tolerance: float
    count: int
    message: str = ""

    def as_dict(self):
        return {k: getattr(self, k) for k in ("name", "applicable", "passed", "worst", "tolerance", "count", "message")}


@dataclass
class CompatibilityReport:
    entries: list = field(default_factory=list)

    def __getitem__(self, name) -> CheckEntry:
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)

    @property
    def ok(self) -> bool:
        """Standing hypotheses SH1, SH2, SH3 and SH4' hold."""
        return all(self[k].passed for k in ("SH1", "SH2", "SH3", "SH4'"))

    def first_failure(self) -> Optional[CheckEntry]:
        for k in ("SH4'", "SH3", "SH2", "SH1"):
            if not self[k].passed:
                return self[k]
        return None

    def as_dict(self):
        return {"ok": self.ok, "checks": [e.as_dict() for e in self.entries]}


def _pair_sample(d: Domain, pairs: int, seed: int):
    ring = d.boundary_sample(32)
    m = len(ring)
    rng = np.random.default_rng(seed)
    I = [j for j in range(m)] + list(rng.integers(0, m, size=max(pairs - m, 0)))
    J = [(j + m // 2) % m for j in range(m)] + list(rng.integers(0, m, size=max(pairs - m, 0)))
    out = [(ring[i], ring[j]) for i, j in zip(I[:pairs], J[:pairs]) if i != j]
    return out


def check_compatibility(spec: LagrangianSpec, d: Domain, bd: BoundaryData, pairs: int = 64,
                        opts: Options = DEFAULT, c_hat: Optional[float] = None) -> CompatibilityReport:
    """Sampled standing hypotheses and the global conditions G1, G2."""
    rep = CompatibilityReport()
    # SH1: a bounded domain with a finite quasiconvexity constant
    try:
        C = d.quasiconvexity_constant
        ok = math.isfinite(C) and C >= 1.0 and math.isfinite(d.diameter)
        rep.entries.append(CheckEntry("SH1", True, ok, C, math.inf, 1, "quasiconvexity constant"))
    except HJError as e:
        rep.entries.append(CheckEntry("SH1", True, False, math.inf, math.inf, 1, str(e)))
    # SH2: Tonelli conditions at sampled states
    lo, hi = d.bbox()
    xs = lo + (hi - lo) * np.stack(np.meshgrid(np.linspace(0, 1, 5), np.linspace(0, 1, 5)), -1).reshape(-1, 2)
    try:
        tr = tonelli_check(spec, xs, envelope=spec.envelope_for(d.bbox()))
        rep.entries.append(CheckEntry("SH2", True, tr.ok, tr.min_eigenvalue, 0.0, len(xs), "; ".join(tr.messages)))
    except HJError as e:
        rep.entries.append(CheckEntry("SH2", True, False, math.nan, 0.0, 0, str(e)))
    # SH4'
    c = critical_value(spec, d, opts.c_samples, opts) if c_hat is None else float(c_hat)
    ce = effective_critical_value(c, opts)
    rep.entries.append(CheckEntry("SH4'", True, ce < 0, ce, 0.0, opts.c_samples,
                                  f"critical value estimate {c:.6g}, with margin {ce:.6g}"))
    # SH3 and G1 over sampled boundary pairs
    smp = _pair_sample(d, pairs, opts.seed)
    worst3, worstg1 = -math.inf, -math.inf
    nu = bd.nu if bd.nu is not None else (0.0 if bd.constant is not None else None)
    tol = 3 * opts.tol_opt
    if ce < 0:
        for y1, y2 in smp:
            g1, g2 = float(bd(y1.point)), float(bd(y2.point))
            if bd.constant is not None:
                phi = 0.0
                gap = 0.0
            else:
                phi = potential(spec, d, y2.point, y1.point, c, opts).value
                gap = (g1 - g2) - phi
            worst3 = max(worst3, gap / (1 + abs(phi)))
            if nu is not None:
                worstg1 = max(worstg1, ((g1 - g2) - nu * phi) / (1 + abs(phi)))
        rep.entries.append(CheckEntry("SH3", True, worst3 <= tol, worst3, tol, len(smp), "g(y1) - g(y2) <= Phi(y2, y1)"))
    else:
        rep.entries.append(CheckEntry("SH3", True, False, math.nan, tol, 0, "not evaluated: SH4' fails"))
    if nu is None:
        rep.entries.append(CheckEntry("G1", False, False, math.nan, tol, 0, "no constant nu supplied"))
    else:
        ok = ce < 0 and worstg1 <= tol and 0 <= nu < 1
        rep.entries.append(CheckEntry("G1", True, ok, worstg1, tol, len(smp), f"nu = {nu:g}"))
    # G2: <grad G(x), x - y> <= C|x - y|^2 with a constant stable under refinement
    if bd.constant is not None:
        rep.entries.append(CheckEntry("G2", True, True, 0.0, 0.0, 0, "constant data"))
    elif bd.grad is None:
        rep.entries.append(CheckEntry("G2", False, False, math.nan, 0.0, 0, "no smooth extension supplied"))
    else:
        fits = []
        for m in (64, 128):
            P = np.array([b.point for b in d.boundary_sample(m)])
            Gx = np.asarray(bd.grad(P))
            D = P[:, None, :] - P[None, :, :]
            r2 = np.sum(D * D, axis=-1)
            num = np.einsum("ik,ijk->ij", Gx, D)
            off = r2 > 0
            fits.append(float(np.max(num[off] / r2[off])))
        ok = fits[1] <= 1.2 * max(fits[0], 0.0) + 1e-9
        rep.entries.append(CheckEntry("G2", True, ok, fits[1], 1.2 * max(fits[0], 0.0) + 1e-9, 128 * 127,
                                      f"fitted constant {fits[0]:.4g} -> {fits[1]:.4g} under doubling"))
    return rep


# ---------------------------------------------------------------------------
FIELD_HEADER = ["x1", "x2", "u", "T", "ystar_arc", "singular"]


def _fmt(v: float) -> str:
    return repr(float(v)) if math.isfinite(v) else "nan"


@dataclass(eq=False)
class ValueField:
    """Value function sampled on the lattice ``lo + h * (i, j)`` masked to the closed domain.

    ``ok`` is False where the per-point solve failed; those rows carry NaN.
    ``covector`` holds the limiting gradient of the selected candidate.
    """

    h: float
    lo: np.ndarray
    shape: tuple
    index: np.ndarray
    points: np.ndarray
    u: np.ndarray
    T: np.ndarray
    ystar_arc: np.ndarray
    singular: np.ndarray
    ok: np.ndarray
    covector: np.ndarray
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.points)

    def as_grid(self, values: Optional[np.ndarray] = None) -> np.ndarray:
        """Scatter per-point values onto the full lattice with NaN elsewhere."""
        values = self.u if values is None else values
        G = np.full(self.shape, np.nan)
        G[self.index[:, 0], self.index[:, 1]] = np.where(self.ok, values, np.nan)
        return G

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(FIELD_HEADER)
        for k in range(len(self.points)):
            w.writerow([_fmt(self.points[k, 0]), _fmt(self.points[k, 1]), _fmt(self.u[k]), _fmt(self.T[k]),
                        _fmt(self.ystar_arc[k]), int(self.singular[k])])
        return buf.getvalue()

    def save(self, csv_path, meta: Optional[dict] = None) -> str:
        """Write the CSV and a JSON sidecar ``<csv>.json``; returns the sidecar path."""
        text = self.csv_text()
        with open(csv_path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        side = dict(self.meta)
        side.update(meta or {})
        side.update({
            "h": self.h, "lo": [float(v) for v in self.lo], "shape": list(self.shape), "points": len(self.points),
            "failed": int(np.sum(~self.ok)), "sha256": hashlib.sha256(text.encode("utf-8")).hexdigest(),
        })
        path = str(csv_path) + ".json"
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(side, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return path

    @classmethod
    def load(cls, csv_path) -> "ValueField":
        """Read a field written by :meth:`save`.

        Raises
        ------
        FieldCorrupted
            Missing sidecar, checksum mismatch, or malformed rows.
        """
        try:
            with open(csv_path, "r", encoding="utf-8", newline="") as fh:
                text = fh.read()
            with open(str(csv_path) + ".json", "r", encoding="utf-8") as fh:
                meta = json.load(fh)
        except (OSError, ValueError) as e:
            raise FieldCorrupted(f"cannot read field: {e}") from e
        if hashlib.sha256(text.encode("utf-8")).hexdigest() != meta.get("sha256"):
            raise FieldCorrupted("field checksum does not match its sidecar")
        try:
            rows = list(csv.reader(io.StringIO(text)))
            if rows[0] != FIELD_HEADER:
                raise ValueError("unexpected header")
            arr = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float).reshape(-1, 6)
            h = float(meta["h"])
            lo = np.asarray(meta["lo"], dtype=float)
            shape = tuple(int(s) for s in meta["shape"])
        except (ValueError, KeyError, IndexError) as e:
            raise FieldCorrupted(f"malformed field file: {e}") from e
        pts = arr[:, :2]
        index = np.rint((pts - lo) / h).astype(int)
        ok = np.isfinite(arr[:, 2])
        n = len(arr)
        return cls(h, lo, shape, index, pts, arr[:, 2], arr[:, 3], arr[:, 4], arr[:, 5].astype(bool), ok,
                   np.full((n, 2), np.nan), meta)


def lattice(d: Domain, h: float):
    """Lattice points of spacing ``h`` over the bounding box inside the closed domain."""
    if not h > 0:
        raise ValueError("grid spacing must be positive")
    lo, hi = d.bbox()
    shape = tuple(int(math.floor((hi[i] - lo[i]) / h + 1e-9)) + 1 for i in range(2))
    I, J = np.meshgrid(np.arange(shape[0]), np.arange(shape[1]), indexing="ij")
    index = np.column_stack([I.ravel(), J.ravel()])
    pts = lo + h * index
    inside = d.signed_distance_many(pts) <= d.tau
    return lo, shape, index[inside], pts[inside]


def singular_flag(res: ValueResult, h: float, eps: float) -> bool:
    """Two distinct limiting gradients whose sheets cross within half a grid cell.

    At distance ``r`` from a crossing of two smooth sheets with gradients
    ``p_i, p_j`` the values differ by at most ``r |p_i - p_j|``.
    """
    cs = res.candidates
    for a in range(len(cs)):
        for b in range(a + 1, len(cs)):
            dp = float(np.linalg.norm(cs[a].covector - cs[b].covector))
            if dp > eps and abs(cs[a].value - cs[b].value) <= 0.5 * h * dp:
                return True
    return False


_WORKER: dict = {}


def _field_point(k: int):
    prob, h, pts = _WORKER["prob"], _WORKER["h"], _WORKER["pts"]
    x = pts[k]
    d = prob.d
    n = x.size
    try:
        sd = d.signed_distance(x)
        if sd >= -d.tau:
            r = prob.value(x)
            flag = False
        elif -sd < 0.5 * h:
            r = prob.near_boundary_value(x)
            flag = False
        else:
            r = prob.value(x, delta_keep=0.5 * h * 2 * prob.lip)
            flag = singular_flag(r, h, 1e-4 * (1 + prob.lip))
        p = r.minimizer.terminal_covector if r.minimizer is not None else np.full(n, np.nan)
        return True, r.u, r.T, r.y_star.arc, flag, p
    except (HJError, ValueError, ArithmeticError):
        return False, math.nan, math.nan, math.nan, False, np.full(n, np.nan)


def _thread_count(threads: Optional[int]) -> int:
    if threads is not None:
        return max(1, int(threads))
    env = os.environ.get("HJD_THREADS")
    if env:
        return max(1, int(env))
    return max(1, os.cpu_count() or 1)


def evaluate_points(prob: Problem, pts: np.ndarray, h: float, threads: Optional[int] = None) -> list:
    """Per-point field records, computed in order or on a fork pool."""
    _ = prob.c_hat  # fill the cache before forking
    prob.require_supercritical()
    _WORKER.update(prob=prob, h=h, pts=np.asarray(pts, dtype=float))
    nth = _thread_count(threads)
    try:
        if nth > 1 and len(pts) > 1 and "fork" in mp.get_all_start_methods():
            with mp.get_context("fork").Pool(nth) as pool:
                return pool.map(_field_point, range(len(pts)), chunksize=max(1, len(pts) // (8 * nth)))
        return [_field_point(k) for k in range(len(pts))]
    finally:
        _WORKER.clear()


def solve_field(prob: Problem, h: float, threads: Optional[int] = None) -> ValueField:
    """``u``, ``T`` and ``y*`` on the lattice of spacing ``h``.

    Lattice points closer than ``h/2`` to the boundary use their boundary
    projection as the minimizing point. Raises SupercriticalViolated before
    any work when the critical value gate fails.
    """
    lo, shape, index, pts = lattice(prob.d, h)
    recs = evaluate_points(prob, pts, h, threads)
    ok = np.array([r[0] for r in recs], dtype=bool)
    meta = {"tolerances": {"tol_opt": prob.opts.tol_opt, "h_path_frac": prob.opts.h_path_frac, "m_bd": prob.opts.m_bd},
            "c_hat": prob.c_hat}
    return ValueField(
        float(h), lo, shape, index, pts,
        np.array([r[1] for r in recs]), np.array([r[2] for r in recs]), np.array([r[3] for r in recs]),
        np.array([r[4] for r in recs], dtype=bool), ok, np.array([r[5] for r in recs]), meta,
    )


# module-level conveniences mirroring the method names
def value(spec, d, bd, x, opts: Options = DEFAULT) -> ValueResult:
    return Problem(spec, d, bd, opts).value(x)


def exit_time(spec, d, bd, x, opts: Options = DEFAULT) -> float:
    return Problem(spec, d, bd, opts).exit_time(x)


def backtrace(spec, d, bd, x, opts: Options = DEFAULT) -> Backtrace:
    return Problem(spec, d, bd, opts).backtrace(x)
