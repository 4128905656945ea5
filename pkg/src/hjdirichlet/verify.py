"""Sampled numerical checks of the regularity properties of ``u``.

Every check draws its samples from a generator seeded by the scenario hash,
so identical scenarios produce identical sample sets. Semiconcavity and
semiconvexity use the midpoint form ``u(x + z) + u(x - z) - 2 u(x)``.
Fitted constants are reported but not judged; a check passes when the
inequality with the constant fitted on the first half of the samples holds,
within 20%, on all of them.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .action import resample
from .errors import HypothesisUnmet
from .geometry import Disk, ImplicitDomain, Path
from .lagrangian import fenchel_young_gap, hamiltonian, inverse_legendre, legendre
from .mane import potential
from .singular import SingularChain
from .solver import Problem, ValueField, _polyline_bounds, check_compatibility


@dataclass(frozen=True)
class CheckResult:
    """One report entry; ``passed`` is ``worst <= tolerance`` for applicable checks."""

    name: str
    samples: int
    worst: float
    tolerance: float
    passed: bool
    applicable: bool = True
    details: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        out = {"name": self.name, "samples": self.samples, "worst": _num(self.worst),
               "tolerance": _num(self.tolerance), "pass": bool(self.passed), "applicable": bool(self.applicable)}
        out.update({k: _plain(v) for k, v in self.details.items()})
        return out


def _num(v):
    v = float(v)
    return v if math.isfinite(v) else repr(v)


def _plain(v):
    """Convert numpy scalars and arrays to JSON-ready Python values."""
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return _num(v)
    if isinstance(v, np.ndarray):
        return [_plain(x) for x in v.tolist()]
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    return v


@dataclass
class VerificationReport:
    checks: list
    scenario_hash: str

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks if c.applicable)

    def __getitem__(self, name) -> CheckResult:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def as_dict(self) -> dict:
        return {"scenario_hash": self.scenario_hash, "pass": self.ok,
                "checks": [c.as_dict() for c in sorted(self.checks, key=lambda c: c.name)]}

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2, sort_keys=True) + "\n"


def scenario_hash(description) -> str:
    """SHA-256 of a JSON-serializable scenario description."""
    text = json.dumps(description, sort_keys=True, default=str)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def rng_for(hash_hex: str, name: str) -> np.random.Generator:
    """Generator seeded from the scenario hash and the check name."""
    digest = hashlib.sha256((hash_hex + ":" + name).encode("utf-8")).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "little"))


def default_hash(prob: Problem) -> str:
    d = prob.d
    return scenario_hash({
        "lagrangian": prob.spec.name, "domain": type(d).__name__, "bbox": [v.tolist() for v in d.bbox()],
        "perimeter": d.perimeter, "boundary": prob.bd.name, "options": prob.opts.__dict__,
    })


# ---------------------------------------------------------------------------
def sample_interior(d, k: int, rng: np.random.Generator, margin: float = 0.0) -> np.ndarray:
    """``k`` uniform points with ``d(x) > margin``."""
    lo, hi = d.bbox()
    out = np.zeros((0, len(lo)))
    while len(out) < k:
        P = lo + (hi - lo) * rng.random((4 * k, len(lo)))
        out = np.vstack([out, P[d.signed_distance_many(P) < -max(margin, d.tau)]])
    return out[:k]


def _u(prob: Problem, x) -> float:
    return prob.value(np.asarray(x, dtype=float)).u


def _noise(prob: Problem, scale: float) -> float:
    return 3.0 * prob.opts.tol_opt * (1.0 + abs(scale))


def phi(prob: Problem, a, b) -> float:
    """``Phi(a, b)`` with the time search started at the best constant-speed time."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.linalg.norm(a - b) <= 1e-14:
        return 0.0
    poly = prob.d.geodesics_to(b, a[None, :])[0]
    _, t, length = _polyline_bounds(prob.spec, [poly])
    cum = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(poly, axis=0), axis=1))])
    X = resample(Path(cum, poly), 32)
    return potential(prob.spec, prob.d, a, b, prob.c_hat, prob.opts, t_hint=float(t[0]), init=X).value


def _midpoint_fit(D: np.ndarray, Z2: np.ndarray, noise: np.ndarray, scale: float = 1.0):
    """Fit ``C`` on the first half of ``D <= C |z|^2 / scale`` and test it, widened by 20%, on all."""
    half = len(D) // 2
    excess = np.maximum(D - noise, 0.0)
    ratio = scale * excess / Z2
    c_half = float(np.max(ratio[:half])) if half else 0.0
    c_all = float(np.max(ratio))
    viol = D - 1.2 * c_half * Z2 / scale - noise
    return c_half, c_all, float(np.max(viol))


# ---------------------------------------------------------------------------
def check_local_semiconcavity(prob: Problem, rho: float, samples: int = 2000, hash_hex: str = "") -> CheckResult:
    """``u(x + z) + u(x - z) - 2 u(x) <= (C / rho) |z|^2`` on ``d(x) > rho``, ``|z| < rho / 8``."""
    if not rho > 0:
        raise ValueError("rho must be positive")
    rng = rng_for(hash_hex, "local_semiconcavity")
    X = sample_interior(prob.d, samples, rng, rho)
    ang = rng.random(samples) * 2 * np.pi
    r = rho / 8 * np.sqrt(rng.random(samples)) + 1e-12
    Z = r[:, None] * np.column_stack([np.cos(ang), np.sin(ang)])
    u0 = np.array([_u(prob, x) for x in X])
    D = np.array([_u(prob, x + z) + _u(prob, x - z) for x, z in zip(X, Z)]) - 2 * u0
    noise = 4 * np.array([_noise(prob, v) for v in u0])
    c_half, c_all, worst = _midpoint_fit(D, r * r, noise, rho)
    return CheckResult("local_semiconcavity", samples, worst, 0.0, worst <= 0.0, True,
                       {"C_fit": c_all, "C_fit_half": c_half, "rho": rho, "max_second_difference": float(D.max())})


def semiconcavity_hypotheses(prob: Problem, samples: int = 256, rng=None) -> list[str]:
    """Premises of global semiconcavity that fail for this scenario."""
    failed = []
    if prob.d.exterior_sphere_radius() is None:
        failed.append("exterior sphere condition")
    rng = np.random.default_rng(0) if rng is None else rng
    alpha = lower_bound_alpha(prob, samples, rng)
    if not alpha > 0:
        failed.append(f"L >= alpha > 0 (sampled inf L = {alpha:.4g})")
    rep = check_compatibility(prob.spec, prob.d, prob.bd, opts=prob.opts, c_hat=prob.c_hat)
    for name in ("G1", "G2"):
        e = rep[name]
        if e.applicable and not e.passed:
            failed.append(f"compatibility {name}")
    if not rep.ok:
        failed.append("compatibility " + rep.first_failure().name)
    return failed


def lower_bound_alpha(prob: Problem, samples: int, rng) -> float:
    """Sampled ``inf_{x, v} L(x, v) = -max_x H(x, 0)``."""
    X = np.vstack([sample_interior(prob.d, samples, rng), prob.ring[1]])
    return float(-np.max(hamiltonian(prob.spec, X, np.zeros_like(X))))


def check_global_semiconcavity(prob: Problem, samples: int = 2000, hash_hex: str = "") -> CheckResult:
    """Midpoint inequality over segments in the closed domain, including boundary-touching ones.

    Raises
    ------
    HypothesisUnmet
        Listing the premises (exterior sphere, ``L >= alpha > 0``,
        compatibility) that fail.
    """
    rng = rng_for(hash_hex, "global_semiconcavity")
    failed = semiconcavity_hypotheses(prob, rng=rng)
    if failed:
        raise HypothesisUnmet("; ".join(failed))
    d = prob.d
    X, Z = _segments_in_closure(d, samples, rng, 0.25 * d.diameter, lambda P: d.signed_distance_many(P) <= d.tau)
    u0 = np.array([_u(prob, x) for x in X])
    D = np.array([_u(prob, x + z) + _u(prob, x - z) for x, z in zip(X, Z)]) - 2 * u0
    noise = 4 * np.array([_noise(prob, v) for v in u0])
    c_half, c_all, worst = _midpoint_fit(D, np.sum(Z * Z, axis=1), noise)
    return CheckResult("global_semiconcavity", samples, worst, 0.0, worst <= 0.0, True,
                       {"C_fit": c_all, "C_fit_half": c_half})


def _segments_in_closure(d, samples, rng, hmax, inside: Callable, around=None, radius=None):
    """Midpoints and half-steps with both endpoints passing ``inside``.

    A quarter of the segments end exactly on the boundary.
    """
    X, Z = [], []
    lo, hi = d.bbox()
    while len(X) < samples:
        m = 4 * samples
        if around is None:
            C = lo + (hi - lo) * rng.random((m, 2))
        else:
            ang = rng.random(m) * 2 * np.pi
            C = around + radius * np.sqrt(rng.random(m))[:, None] * np.column_stack([np.cos(ang), np.sin(ang)])
        ang = rng.random(m) * 2 * np.pi
        H = hmax * np.sqrt(rng.random(m))[:, None] * np.column_stack([np.cos(ang), np.sin(ang)])
        # snap some segments so that the forward endpoint lies on the boundary
        snap = rng.random(m) < 0.25
        for i in np.flatnonzero(snap):
            bp = d.project_to_boundary(C[i] + H[i])
            H[i] = bp.point - C[i]
        ok = inside(C) & inside(C + H) & inside(C - H) & (np.linalg.norm(H, axis=1) > 1e-9)
        X.extend(C[ok])
        Z.extend(H[ok])
    return np.array(X[:samples]), np.array(Z[:samples])


def check_boundary_semiconvexity(prob: Problem, xbar=None, samples: int = 2000, hash_hex: str = "",
                                 floor: float = 1.0 / 64) -> CheckResult:
    """``2 u(x) - u(x + h) - u(x - h) <= C |h|^2`` on ``B(xbar, eta) ∩ closure``.

    ``eta`` starts at ``0.1 diam`` and halves until the fitted constant is
    stable under sample doubling, down to ``floor * diam``.

    Raises
    ------
    HypothesisUnmet
        Unless the domain is a disk or a smooth implicit domain and ``L``
        is bounded below by a positive constant.
    """
    d = prob.d
    if not isinstance(d, (Disk, ImplicitDomain)):
        raise HypothesisUnmet("boundary is not C^2")
    rng = rng_for(hash_hex, "boundary_semiconvexity")
    alpha = lower_bound_alpha(prob, 256, rng)
    if not alpha > 0:
        raise HypothesisUnmet(f"L >= alpha > 0 fails (sampled inf L = {alpha:.4g})")
    if xbar is None:
        xbar = d.point_at(0.0).point
    xbar = np.asarray(getattr(xbar, "point", xbar), dtype=float)
    eta = 0.1 * d.diameter
    while True:
        inside = lambda P: (d.signed_distance_many(P) <= d.tau) & (np.linalg.norm(P - xbar, axis=1) <= eta)
        X, Z = _segments_in_closure(d, samples, rng, 0.5 * eta, inside, xbar, eta)
        u0 = np.array([_u(prob, x) for x in X])
        D = 2 * u0 - np.array([_u(prob, x + z) + _u(prob, x - z) for x, z in zip(X, Z)])
        noise = 4 * np.array([_noise(prob, v) for v in u0])
        c_half, c_all, worst = _midpoint_fit(D, np.sum(Z * Z, axis=1), noise)
        if worst <= 0.0 or eta <= floor * d.diameter:
            break
        eta *= 0.5
    return CheckResult("boundary_semiconvexity", samples, worst, 0.0, worst <= 0.0, True,
                       {"C_fit": c_all, "C_fit_half": c_half, "eta": eta})


def check_domination(prob: Problem, pairs: int = 2000, hash_hex: str = "") -> CheckResult:
    """``u(x') - u(x) <= Phi(x, x')`` over sampled pairs."""
    rng = rng_for(hash_hex, "domination")
    X = sample_interior(prob.d, pairs, rng)
    Y = sample_interior(prob.d, pairs, rng)
    worst = -math.inf
    for x, y in zip(X, Y):
        ux, uy = _u(prob, x), _u(prob, y)
        worst = max(worst, uy - ux - phi(prob, x, y) - _noise(prob, max(abs(ux), abs(uy))))
    return CheckResult("domination", pairs, worst, 0.0, worst <= 0.0)


def check_triangle(prob: Problem, samples: int = 2000, hash_hex: str = "") -> CheckResult:
    """``Phi(x, z) <= Phi(x, y) + Phi(y, z)``."""
    rng = rng_for(hash_hex, "triangle")
    P = sample_interior(prob.d, 3 * samples, rng).reshape(samples, 3, 2)
    worst = -math.inf
    for x, y, z in P:
        a, b, c = phi(prob, x, z), phi(prob, x, y), phi(prob, y, z)
        worst = max(worst, a - b - c - _noise(prob, b + c))
    return CheckResult("triangle_inequality", samples, worst, 0.0, worst <= 0.0)


def check_boundary_agreement(prob: Problem, samples: int = 2000, hash_hex: str = "") -> CheckResult:
    """``u = g`` on the boundary."""
    rng = rng_for(hash_hex, "boundary_agreement")
    s = rng.random(samples) * prob.d.perimeter
    P = prob.d.points_at(s)
    g = prob.bd(P)
    err = np.array([abs(_u(prob, p) - gv) for p, gv in zip(P, g)])
    tol = _noise(prob, float(np.max(np.abs(g))))
    return CheckResult("boundary_agreement", samples, float(err.max()), tol, float(err.max()) <= tol)


def check_exit_time(prob: Problem, samples: int = 2000, hash_hex: str = "") -> CheckResult:
    """``d(x) <= C2 T(x)`` and ``T(x) <= 2 C1 |y* - x| / (-c)``."""
    rng = rng_for(hash_hex, "exit_time")
    X = sample_interior(prob.d, samples, rng)
    lower, upper = -math.inf, -math.inf
    C1, C2, c = prob.C1, prob.C2, prob.c_eff
    for x in X:
        r = prob.value(x)
        dist = -prob.d.signed_distance(x)
        lower = max(lower, dist - C2 * r.T)
        upper = max(upper, r.T - 2 * C1 * float(np.linalg.norm(r.y_star.point - x)) / (-c))
    worst = max(lower, upper)
    tol = 1e-9 * prob.d.diameter
    return CheckResult("exit_time_bounds", samples, worst, tol, worst <= tol,
                       details={"distance_bound": lower, "horizon_bound": upper, "C1": C1, "C2": C2})


def check_fenchel_young(prob: Problem, samples: int = 2000, hash_hex: str = "", vmax: float = 4.0) -> list:
    """Fenchel-Young gap ``H + L - <p, v> >= 0`` with equality at ``p = L_v``, and the Legendre round trip."""
    rng = rng_for(hash_hex, "fenchel_young")
    spec = prob.spec
    X = sample_interior(prob.d, samples, rng)
    V = vmax * (2 * rng.random((samples, 2)) - 1)
    P = 2 * vmax * (2 * rng.random((samples, 2)) - 1)
    gap = fenchel_young_gap(spec, X, V, P)
    Pv = legendre(spec, X, V)
    eq = np.abs(fenchel_young_gap(spec, X, V, Pv))
    scale = 1.0 + np.abs(spec.L(X, V))
    tol = 1e-8
    worst_gap = float(max(np.max(-gap / scale), np.max(eq / scale)))
    back = inverse_legendre(spec, X, Pv)
    rt = float(np.max(np.linalg.norm(back - V, axis=1) / (1.0 + np.linalg.norm(V, axis=1))))
    return [
        CheckResult("fenchel_young", samples, worst_gap, tol, worst_gap <= tol),
        CheckResult("legendre_round_trip", samples, rt, tol, rt <= tol),
    ]


def pde_residuals(prob: Problem, fld: ValueField):
    """``|H(x, Du_h)|`` at lattice points with an interior, non-singular central stencil.

    Returns ``(residuals, points, excluded)``.
    """
    G = fld.as_grid()
    S = fld.as_grid(fld.singular.astype(float))
    h = fld.h
    nx, ny = G.shape
    d = prob.d
    res, pts, excluded = [], [], 0
    for (i, j), x, sing, ok in zip(fld.index, fld.points, fld.singular, fld.ok):
        if not ok or sing:
            excluded += 1
            continue
        if i == 0 or j == 0 or i == nx - 1 or j == ny - 1:
            excluded += 1
            continue
        nb = [(i + 1, j), (i - 1, j), (i, j + 1), (i, j - 1)]
        vals = [G[a, b] for a, b in nb]
        if not np.all(np.isfinite(vals)) or any(S[a, b] > 0 for a, b in nb) or -d.signed_distance(x) <= h:
            excluded += 1
            continue
        p = np.array([(vals[0] - vals[1]) / (2 * h), (vals[2] - vals[3]) / (2 * h)])
        res.append(abs(float(hamiltonian(prob.spec, x, p))))
        pts.append(x)
    return np.array(res), np.array(pts).reshape(-1, 2), excluded


def check_pde(prob: Problem, fld: ValueField, c_res: float = 3.0) -> CheckResult:
    """99th-percentile ``|H(x, Du_h)| <= c_res h`` on the masked lattice."""
    r, _, excluded = pde_residuals(prob, fld)
    p99 = float(np.percentile(r, 99)) if len(r) else 0.0
    tol = c_res * fld.h
    return CheckResult("pde_residual", int(len(r)), p99, tol, p99 <= tol,
                       details={"excluded": int(excluded), "max_residual": float(r.max()) if len(r) else 0.0, "h": fld.h})


def check_monotonicity(chain: SingularChain, rel: float = 0.1, tol: float = 1e-6) -> CheckResult:
    """``u`` nondecreasing along a mechanical chain and growing at rate ``<p, A^-1 p>``.

    A decrease larger than ``tol (1 + max |u|)`` fails outright. ``worst`` is
    the largest rate mismatch relative to the largest predicted rate; the
    final step, which lands on the critical point, is left out of the rate
    comparison.
    """
    if len(chain.points) < 2:
        return CheckResult("monotonicity", 0, 0.0, rel, True, details={"note": "no motion"})
    du = np.diff(chain.u_values)
    fd, pred = chain.rates()
    scale = max(float(np.max(pred)), 1e-12)
    dec = float(max(-du.min(), 0.0))
    dec_tol = tol * (1.0 + float(np.max(np.abs(chain.u_values))))
    k = max(len(fd) - 1, 1)
    mismatch = float(np.max(np.abs(fd[:k] - pred[:k]))) / scale
    return CheckResult("monotonicity", int(len(du)), mismatch, rel, mismatch <= rel and dec <= dec_tol,
                       details={"largest_decrease": dec, "decrease_tolerance": dec_tol, "rate_mismatch": mismatch})


# ---------------------------------------------------------------------------
def run_checks(prob: Problem, samples: int = 2000, hash_hex: Optional[str] = None, fld: Optional[ValueField] = None,
               chains: Optional[list] = None, rho: Optional[float] = None) -> VerificationReport:
    """Every applicable check; inapplicable ones are reported with ``applicable=False``."""
    hash_hex = default_hash(prob) if hash_hex is None else hash_hex
    rho = 0.1 * prob.d.diameter if rho is None else rho
    checks = [
        check_local_semiconcavity(prob, rho, samples, hash_hex),
        check_domination(prob, samples, hash_hex),
        check_triangle(prob, samples, hash_hex),
        check_boundary_agreement(prob, samples, hash_hex),
        check_exit_time(prob, samples, hash_hex),
    ]
    checks.extend(check_fenchel_young(prob, samples, hash_hex))
    for name, fn in (("global_semiconcavity", check_global_semiconcavity),
                     ("boundary_semiconvexity", check_boundary_semiconvexity)):
        try:
            checks.append(fn(prob, samples=samples, hash_hex=hash_hex))
        except HypothesisUnmet as e:
            checks.append(CheckResult(name, 0, math.nan, math.nan, False, False, {"hypothesis_unmet": str(e)}))
    if fld is not None:
        checks.append(check_pde(prob, fld))
    for k, ch in enumerate(chains or []):
        c = check_monotonicity(ch)
        checks.append(CheckResult(f"monotonicity_{k}", c.samples, c.worst, c.tolerance, c.passed, True, c.details))
    return VerificationReport(sorted(checks, key=lambda c: c.name), hash_hex)
