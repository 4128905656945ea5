"""Relative Mane potential and critical value.

``Phi(x, y) = inf_{t > 0} A_t(x, y)`` and ``c = -inf_{t, x} A_t(x, x) / t``.
When ``c < 0`` the infimum over ``t`` is attained below the horizon bound
``T_max = 2 C1 |x - y| / (-c)``, which makes the potential computable by a
one-dimensional search on ``(0, T_max]``.
"""
from __future__ import annotations

import math
import weakref
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import brentq, minimize_scalar
from scipy.stats import qmc

from .action import (
    MinimizerResult, _resample_nodes, _shaved_corner, _split_at_corner, fundamental_solution, node_count,
    optimize_nodes, resample,
)
from .errors import NotConverged, SupercriticalViolated
from .geometry import Domain
from .lagrangian import LagrangianSpec
from .options import DEFAULT, Options


@dataclass(frozen=True, eq=False)
class PotentialQuery:
    """Result of a potential evaluation; ``minimizer`` is None when ``x == y``."""

    x: np.ndarray
    y: np.ndarray
    value: float
    t: float
    minimizer: Optional[MinimizerResult]


@dataclass(frozen=True, eq=False)
class CriticalEstimate:
    """Sampled critical value with the grid it was computed on."""

    value: float
    points: np.ndarray
    times: np.ndarray
    argmin: tuple


_CACHE: "weakref.WeakKeyDictionary" = weakref.WeakKeyDictionary()


def base_points(d: Domain, k: int, seed: int = 0) -> np.ndarray:
    """``k`` deterministic low-discrepancy points in the domain."""
    lo, hi = d.bbox()
    sampler = qmc.Halton(d=len(lo), scramble=True, seed=seed)
    pts = []
    while len(pts) < k:
        P = lo + (hi - lo) * sampler.random(4 * k)
        inside = d.signed_distance_many(P) < -1e-3 * d.diameter
        pts.extend(P[inside])
    return np.array(pts[:k])


def critical_value_details(spec: LagrangianSpec, d: Domain, samples: int = 64, opts: Options = DEFAULT,
                           n_times: int = 8) -> CriticalEstimate:
    """Estimate ``c`` on a grid of base points and a log grid of loop times."""
    if samples < 1:
        raise ValueError("samples must be positive")
    pts = base_points(d, samples, opts.seed)
    times = d.diameter * np.geomspace(0.05, 2.0, n_times)
    best = (math.inf, None)
    # loops start from a constant path; perturb by 5% of the diameter
    loop_opts = opts.with_(perturb=0.05 / opts.h_path_frac)
    for i, x in enumerate(pts):
        for j, t in enumerate(times):
            r = fundamental_solution(spec, d, float(t), x, x, loop_opts, strict=False)
            val = r.value / t
            if val < best[0]:
                best = (val, (i, j))
    return CriticalEstimate(-best[0], pts, times, best[1])


def critical_value(spec: LagrangianSpec, d: Domain, samples: int = 64, opts: Options = DEFAULT) -> float:
    """Sampled critical value ``c_hat``, cached per (Lagrangian, domain).

    The estimate minimizes over fewer loops than the definition, and the
    optimizer returns upper bounds on each ``A_t``, so ``c_hat <= c``.
    """
    per_spec = _CACHE.setdefault(spec, weakref.WeakKeyDictionary())
    key = (samples, opts.seed)
    entry = per_spec.get(d)
    if entry is not None and key in entry:
        return entry[key]
    val = critical_value_details(spec, d, samples, opts).value
    per_spec.setdefault(d, {})[key] = val
    return val


def effective_critical_value(c_hat: float, opts: Options = DEFAULT) -> float:
    """``c_hat`` moved toward zero by the safety margin; the SH4' gate tests this."""
    return c_hat + opts.sh4_margin * abs(c_hat)


def time_horizon_bound(spec: LagrangianSpec, d: Domain, c_hat: float, x, y) -> float:
    """``T_max = 2 C1 |x - y| / (-c_hat)`` with ``C1 = theta2(1) C``.

    Raises
    ------
    SupercriticalViolated
        If ``c_hat >= 0``.
    """
    if not c_hat < 0:
        raise SupercriticalViolated(f"critical value estimate {c_hat:.6g} is not negative")
    env = spec.envelope_for(d.bbox())
    C1 = abs(env.theta2(1.0)) * d.quasiconvexity_constant
    dist = float(np.linalg.norm(np.asarray(x, dtype=float) - np.asarray(y, dtype=float)))
    return 2.0 * C1 * dist / (-c_hat)


class _TimeProfile:
    """``t -> (A_t, dA/dt)`` with warm-started nodes."""

    def __init__(self, spec, d, X, opts):
        self.spec, self.d, self.X, self.opts = spec, d, X, opts
        self.N = len(X) - 1
        self.calls = 0

    def __call__(self, t):
        X, val, dadt, _, conv = optimize_nodes(self.spec, self.d, self.X, t / self.N, self.opts)
        self.calls += 1
        if conv:
            self.X = X
            v = _shaved_corner(self.d, X)
            if v is not None:
                split = _split_at_corner(self.spec, self.d, t, X[0], v, X[-1], self.opts, False)
                if split is not None:
                    return split.value, split.dadt, split.converged
        return val, dadt, conv


def _refine_time(F: _TimeProfile, lo: float, hi: float, dlo: float, dhi: float) -> float:
    """Root of ``dA/dt`` in ``[lo, hi]``, or a bounded 1-D minimization when unbracketed."""
    if dlo < 0 < dhi:
        return brentq(lambda t: F(t)[1], lo, hi, xtol=1e-9 * hi, rtol=1e-12)
    res = minimize_scalar(lambda t: F(t)[0], bounds=(lo, hi), method="bounded", options={"xatol": 1e-9 * hi})
    return float(res.x)


def potential(
    spec: LagrangianSpec,
    d: Domain,
    x,
    y,
    c_hat: Optional[float] = None,
    opts: Options = DEFAULT,
    t_hint: Optional[float] = None,
    init: Optional[np.ndarray] = None,
    n_starts: Optional[int] = None,
) -> PotentialQuery:
    """``Phi(x, y)`` with the optimal time and minimizing path.

    Parameters
    ----------
    c_hat:
        Critical value estimate; computed and cached when omitted.
    t_hint:
        Approximate optimal time. When given, the coarse log grid is
        replaced by geometric expansion around the hint.
    init:
        Warm-start nodes.
    n_starts:
        Starts at the final time (defaults to ``opts.n_starts``).
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    if float(np.linalg.norm(x - y)) <= 1e-14 * (1 + d.diameter):
        return PotentialQuery(x, y, 0.0, 0.0, None)
    if c_hat is None:
        c_hat = critical_value(spec, d, opts.c_samples, opts)
    c_eff = effective_critical_value(c_hat, opts)
    T_max = time_horizon_bound(spec, d, c_eff, x, y)
    t_lo = 1e-3 * T_max
    geo = d.quasiconvex_path(x, y)
    N = node_count(d, geo.times[-1], opts)
    if init is None:
        X = resample(geo, N)
    else:
        X = _resample_nodes(np.asarray(init, dtype=float), N)
        X[0], X[-1] = x, y
    F = _TimeProfile(spec, d, X, opts)

    if t_hint is None:
        ts = np.geomspace(t_lo, T_max, opts.t_grid)
        vals = []
        for t in ts:
            v, dv, _ = F(t)
            vals.append((v, dv))
        i = int(np.argmin([v for v, _ in vals]))
        if i == len(ts) - 1 and vals[i][1] <= 0:
            t_star = T_max
        elif i == 0 and vals[0][1] >= 0:
            t_star = t_lo
        else:
            lo, hi = ts[max(i - 1, 0)], ts[min(i + 1, len(ts) - 1)]
            t_star = _refine_time(F, lo, hi, F(lo)[1], F(hi)[1])
    else:
        t0 = float(min(max(t_hint, t_lo), T_max))
        _, d0, _ = F(t0)
        fac = 1.25
        lo = hi = t0
        dlo = dhi = d0
        if d0 < 0:
            while dhi < 0 and hi < T_max:
                lo, dlo = hi, dhi
                hi = min(hi * fac, T_max)
                _, dhi, _ = F(hi)
                fac *= 1.5
        elif d0 > 0:
            while dlo > 0 and lo > t_lo:
                hi, dhi = lo, dlo
                lo = max(lo / fac, t_lo)
                _, dlo, _ = F(lo)
                fac *= 1.5
        if dlo < 0 < dhi:
            t_star = _refine_time(F, lo, hi, dlo, dhi)
        elif d0 == 0:
            t_star = t0
        else:
            t_star = hi if dhi <= 0 else lo
    res = fundamental_solution(spec, d, float(t_star), x, y, opts, init=F.X, n_starts=n_starts)
    return PotentialQuery(x, y, res.value, float(t_star), res)
