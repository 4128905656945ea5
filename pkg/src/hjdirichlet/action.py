"""Fixed-time action minimization.

``A_t(x, y)`` is the least action of Lipschitz curves in the closed domain
joining ``x`` to ``y`` in time ``t``. It is computed by direct transcription:
a piecewise-linear path on a uniform time grid, midpoint-rule quadrature, and
a projected Newton-type descent on the interior nodes (see
:mod:`hjdirichlet._pykernels`). The quadratic family on disks, boxes and
polygons runs in the compiled kernel when available.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import kernels
from ._pykernels import active_constraints
from .errors import ConstrainedEndpoint, InvalidTime, NotConverged
from .geometry import Domain, Path
from .lagrangian import LagrangianSpec
from .options import DEFAULT, Options


@dataclass(frozen=True, eq=False)
class MinimizerResult:
    """Optimal discrete path for a fixed horizon.

    ``dual`` holds the discrete costate at the nodes; ``dual[0]`` and
    ``dual[-1]`` are the exact sensitivities of the discrete action to the
    endpoints (``-dA/dx`` and ``dA/dy``). ``dadt`` is ``dA/dt``, minus the
    mean energy along the path.
    """

    value: float
    path: Path
    dual: np.ndarray
    active: np.ndarray
    converged: bool
    iterations: int
    dadt: float

    @property
    def t(self) -> float:
        return float(self.path.times[-1])

    @property
    def initial_covector(self) -> np.ndarray:
        return self.dual[0]

    @property
    def terminal_covector(self) -> np.ndarray:
        return self.dual[-1]


def action_integral(spec: LagrangianSpec, path: Path) -> float:
    """Midpoint-rule action of a piecewise-linear path."""
    X = np.asarray(path.nodes, dtype=float)
    dt = np.diff(np.asarray(path.times, dtype=float))
    if np.any(dt <= 0):
        raise InvalidTime("path times must increase")
    V = np.diff(X, axis=0) / dt[:, None]
    M = 0.5 * (X[:-1] + X[1:])
    return float(np.sum(dt * spec.L(M, V)))


def node_count(d: Domain, length: float, opts: Options = DEFAULT) -> int:
    """Number of intervals: at least ``n_min`` and one per ``h_path`` of path length."""
    h_path = opts.h_path_frac * d.diameter
    return max(opts.n_min, int(math.ceil(length / h_path - 1e-12)))


def resample(path: Path, N: int) -> np.ndarray:
    """``N + 1`` nodes equally spaced in arc length along a polyline."""
    P = np.asarray(path.nodes, dtype=float)
    seg = np.linalg.norm(np.diff(P, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    if cum[-1] <= 0:
        return np.repeat(P[:1], N + 1, axis=0)
    s = np.linspace(0.0, cum[-1], N + 1)
    return np.column_stack([np.interp(s, cum, P[:, i]) for i in range(P.shape[1])])


def _resample_nodes(X: np.ndarray, N: int) -> np.ndarray:
    """Resample nodes given on a uniform time grid to ``N`` intervals."""
    if len(X) == N + 1:
        return np.array(X, dtype=float)
    s_old = np.linspace(0.0, 1.0, len(X))
    s_new = np.linspace(0.0, 1.0, N + 1)
    return np.column_stack([np.interp(s_new, s_old, X[:, i]) for i in range(X.shape[1])])


def _domain_constraints(d: Domain):
    ks = d.kernel_spec()
    if ks is not None:
        kind, par, poly = ks
        return lambda Xi: active_constraints(Xi, kind, par, poly)

    def cons(Xi):
        idx = d.boundary_band(Xi, d.tau)
        nrm = np.array([d.project_to_boundary(Xi[i]).normal for i in idx]).reshape(len(idx), Xi.shape[1])
        return idx, nrm

    return cons


def optimize_nodes(spec: LagrangianSpec, d: Domain, X0: np.ndarray, dt: float, opts: Options = DEFAULT):
    """Run the path optimizer from ``X0``; returns ``(X, value, dadt, iters, converged)``."""
    X0 = np.ascontiguousarray(X0, dtype=float)
    ks = d.kernel_spec()
    if spec.quad is not None and ks is not None:
        kind, par, poly = ks
        A, s1, S2, v0, w, Q = spec.quad.arrays()
        return kernels.optimize_quad_path(
            X0, dt, A, s1, S2, v0, w, Q, int(kind), np.ascontiguousarray(par, dtype=float),
            np.ascontiguousarray(poly, dtype=float), opts.tol_opt, opts.maxiter,
        )
    if spec.quad is not None:
        A, s1, S2, v0, w, Q = spec.quad.arrays()
        obj = lambda X: kernels.quad_action_grad(np.ascontiguousarray(X), dt, A, s1, S2, v0, w, Q)
    else:
        obj = lambda X: kernels.generic_action_grad(X, dt, spec)
    M = 0.5 * (X0[:-1] + X0[1:])
    V = np.diff(X0, axis=0) / dt
    mass = spec.mean_vv_eigenvalue(M, V)
    return kernels.optimize_path(X0, dt, obj, d.clamp, mass, opts.tol_opt, opts.maxiter, _domain_constraints(d))


def _costate(spec: LagrangianSpec, X: np.ndarray, dt: float) -> np.ndarray:
    V = np.diff(X, axis=0) / dt
    M = 0.5 * (X[:-1] + X[1:])
    Lv = spec.L_v(M, V)
    Lx = spec.L_x(M, V)
    P = np.empty_like(X)
    P[0] = Lv[0] - 0.5 * dt * Lx[0]
    P[1:] = Lv + 0.5 * dt * Lx
    return P


def _result(spec, d, X, val, dadt, it, conv, t) -> MinimizerResult:
    N = len(X) - 1
    dt = t / N
    times = np.linspace(0.0, t, N + 1)
    active = d.signed_distance_many(X) >= -10 * d.tau
    return MinimizerResult(float(val), Path(times, X), _costate(spec, X, dt), active, bool(conv), int(it), float(dadt))


def _perturbed(X: np.ndarray, d: Domain, amp: float, rng: np.random.Generator) -> np.ndarray:
    N = len(X) - 1
    bump = np.sin(np.pi * np.arange(N + 1) / N)[:, None]
    Z = X + amp * bump * rng.normal(size=X.shape)
    Z[0], Z[-1] = X[0], X[-1]
    return d.clamp(Z)


def fundamental_solution(
    spec: LagrangianSpec,
    d: Domain,
    t: float,
    x,
    y,
    opts: Options = DEFAULT,
    init: Optional[np.ndarray] = None,
    n_starts: Optional[int] = None,
    strict: bool = True,
    n_intervals: Optional[int] = None,
) -> MinimizerResult:
    """Minimal action ``A_t(x, y)`` with the optimal discrete path.

    Parameters
    ----------
    init:
        Warm-start nodes on a uniform time grid; resampled if their count
        differs. Defaults to the domain's shortest admissible polyline at
        constant speed.
    n_starts:
        Total number of starts, the first unperturbed. Defaults to
        ``opts.n_starts``.
    strict:
        Raise :class:`NotConverged` when no start converges; otherwise return
        the best unconverged path.
    n_intervals:
        Number of time steps; defaults to one per ``h_path`` of the initial
        path length (at least ``n_min``).
    """
    if not (isinstance(t, (int, float, np.floating)) and math.isfinite(t) and t > 0):
        raise InvalidTime(f"time horizon must be positive and finite, got {t!r}")
    x = np.asarray(x, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    if init is None or n_intervals is None:
        geo = d.quasiconvex_path(x, y)
    N = node_count(d, geo.times[-1], opts) if n_intervals is None else int(n_intervals)
    if init is None:
        X0 = resample(geo, N)
    else:
        X0 = _resample_nodes(np.asarray(init, dtype=float), N)
        X0[0], X0[-1] = x, y
    dt = t / N
    starts = opts.n_starts if n_starts is None else n_starts
    rng = np.random.default_rng(opts.seed)
    amp = opts.perturb * max(float(np.linalg.norm(x - y)), opts.h_path_frac * d.diameter)
    best = None
    for k in range(max(1, starts)):
        Xs = X0 if k == 0 else _perturbed(X0, d, amp, rng)
        X, val, dadt, it, conv = optimize_nodes(spec, d, Xs, dt, opts)
        cand = (not conv, val, X, dadt, it, conv)
        if best is None or cand[:2] < best[:2]:
            best = cand
    _, val, X, dadt, it, conv = best
    if strict and not conv:
        raise NotConverged(f"path optimizer did not converge for t={t:.6g} between {x.tolist()} and {y.tolist()}")
    res = _result(spec, d, X, val, dadt, it, conv, t)
    v = _shaved_corner(d, X)
    if v is not None:
        split = _split_at_corner(spec, d, t, x, v, y, opts, strict)
        if split is not None:
            return split
    return res


def _shaved_corner(d: Domain, X: np.ndarray) -> Optional[np.ndarray]:
    """Reflex vertex cut by a chord of the discrete path, or ``None``.

    Constraints act on nodes only, so a chord between two admissible nodes can
    pass through the exterior next to a reflex corner. Returns the reflex
    vertex nearest to the first such chord, excluding the path endpoints.
    """
    reflex = getattr(d, "_reflex", None)
    if reflex is None or not np.any(reflex):
        return None
    bad = np.flatnonzero(~d.visible_many(X[:-1], X[1:]))
    if len(bad) == 0:
        return None
    R = d.vertices[reflex]
    scale = 1e-9 * (1.0 + d.diameter)
    R = R[(np.linalg.norm(R - X[0], axis=1) > scale) & (np.linalg.norm(R - X[-1], axis=1) > scale)]
    if len(R) == 0:
        return None
    a, b = X[bad[0]], X[bad[0] + 1]
    ab = b - a
    s = np.clip((R - a) @ ab / max(float(ab @ ab), 1e-300), 0.0, 1.0)
    dist = np.linalg.norm(a + s[:, None] * ab - R, axis=1)
    return R[int(np.argmin(dist))].copy()


def _split_at_corner(spec, d, t, x, v, y, opts, strict) -> Optional[MinimizerResult]:
    """``min over tau of A_tau(x, v) + A_{t - tau}(v, y)`` with the joined path.

    The root of ``dA_tau(x, v)/dtau - dA_{t-tau}(v, y)/dt`` is found by scipy
    ``brentq``; both derivatives are exact for the discrete actions, and the
    difference increases with ``tau``. Sub-paths are warm-started from the
    previous evaluation. Returns ``None`` when no interior root exists.
    """
    from scipy.optimize import brentq

    l1 = d.quasiconvex_path(x, v).times[-1]
    l2 = d.quasiconvex_path(v, y).times[-1]
    if l1 <= 0 or l2 <= 0:
        return None
    warm = {}

    def solve(tau):
        r1 = fundamental_solution(spec, d, tau, x, v, opts, init=warm.get(1), strict=strict,
                                  n_starts=1 if 1 in warm else None,
                                  n_intervals=None if 1 not in warm else len(warm[1]) - 1)
        r2 = fundamental_solution(spec, d, t - tau, v, y, opts, init=warm.get(2), strict=strict,
                                  n_starts=1 if 2 in warm else None,
                                  n_intervals=None if 2 not in warm else len(warm[2]) - 1)
        warm[1], warm[2] = r1.path.nodes, r2.path.nodes
        return r1, r2

    memo = {}

    def slope(tau):
        if tau not in memo:
            memo[tau] = solve(tau)
        r1, r2 = memo[tau]
        return r1.dadt - r2.dadt

    tau0 = t * l1 / (l1 + l2)
    lo, hi = tau0, tau0
    f0 = slope(tau0)
    if f0 == 0.0:
        lo = hi = tau0
    elif f0 > 0:
        for _ in range(40):
            lo = 0.5 * lo
            if slope(lo) <= 0:
                break
        else:
            return None
    else:
        for _ in range(40):
            hi = t - 0.5 * (t - hi)
            if slope(hi) >= 0:
                break
        else:
            return None
    if lo < hi:
        tau = brentq(slope, lo, hi, xtol=1e-12 * t, rtol=1e-12)
        slope(tau)
    else:
        tau = lo
    r1, r2 = memo[tau]
    times = np.concatenate([r1.path.times, tau + r2.path.times[1:]])
    nodes = np.vstack([r1.path.nodes, r2.path.nodes[1:]])
    dual = np.vstack([r1.dual, r2.dual[1:]])
    active = np.concatenate([r1.active, r2.active[1:]])
    return MinimizerResult(
        r1.value + r2.value, Path(times, nodes), dual, active, r1.converged and r2.converged,
        r1.iterations + r2.iterations, r2.dadt,
    )


def grad_y(spec: LagrangianSpec, d: Domain, t: float, x, y, opts: Options = DEFAULT, result=None) -> np.ndarray:
    """Gradient of ``A_t(x, .)`` at ``y``: the terminal costate ``L_v``."""
    y = np.asarray(y, dtype=float)
    if d.signed_distance(y) >= -d.tau:
        raise ConstrainedEndpoint("terminal point lies on the boundary")
    res = result if result is not None else fundamental_solution(spec, d, t, x, y, opts)
    return res.terminal_covector.copy()


def grad_x(spec: LagrangianSpec, d: Domain, t: float, x, y, opts: Options = DEFAULT, result=None) -> np.ndarray:
    """Gradient of ``A_t(., y)`` at ``x``: minus the initial costate."""
    x = np.asarray(x, dtype=float)
    if d.signed_distance(x) >= -d.tau:
        raise ConstrainedEndpoint("initial point lies on the boundary")
    res = result if result is not None else fundamental_solution(spec, d, t, x, y, opts)
    return -res.initial_covector


def lipschitz_bound(spec: LagrangianSpec, d: Domain, x, y, t: float) -> float:
    """A priori speed bound ``kappa(|x - y| / t)`` for minimizers of ``A_t(x, y)``."""
    if not (math.isfinite(t) and t > 0):
        raise InvalidTime("time horizon must be positive")
    env = spec.envelope_for(d.bbox())
    s = float(np.linalg.norm(np.asarray(x, dtype=float) - np.asarray(y, dtype=float))) / t
    return env.kappa(s, d.quasiconvexity_constant)


def write_path_csv(result: MinimizerResult, fh) -> None:
    """CSV with columns ``t, x1.., p1.., active``."""
    n = result.path.nodes.shape[1]
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["t"] + [f"x{i + 1}" for i in range(n)] + [f"p{i + 1}" for i in range(n)] + ["active"])
    for tk, xk, pk, ak in zip(result.path.times, result.path.nodes, result.dual, result.active):
        w.writerow([f"{tk:.12g}"] + [f"{v:.12g}" for v in xk] + [f"{v:.12g}" for v in pk] + [int(ak)])
