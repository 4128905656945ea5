"""Planar domains: signed distance, boundary projection, arc coordinates and
admissible polygonal paths.

Four domain kinds are supported. :class:`Disk` and :class:`Rectangle` are
analytic, :class:`Polygon` handles arbitrary simple counter-clockwise
polygons, and :class:`ImplicitDomain` covers smooth star-shaped sets given by
a level-set function (negative inside), with a small catalog of shapes.

Every domain carries an arc coordinate on its boundary, which is the
intrinsic parameter used for sampling and for deterministic tie-breaking.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .errors import InvalidDomain, PathNotFound

TAU_ANALYTIC = 1e-9
TAU_IMPLICIT = 1e-7


@dataclass(frozen=True, eq=False)
class BoundaryPoint:
    """A point of the boundary with its outward unit normal and arc coordinate."""

    point: np.ndarray
    normal: np.ndarray
    arc: float


@dataclass(frozen=True, eq=False)
class Path:
    """Piecewise-linear path sampled on an increasing time grid."""

    times: np.ndarray
    nodes: np.ndarray

    @property
    def duration(self) -> float:
        return float(self.times[-1] - self.times[0])

    def length(self) -> float:
        return float(np.sum(np.linalg.norm(np.diff(self.nodes, axis=0), axis=1)))


def _as_point(x) -> np.ndarray:
    return np.asarray(x, dtype=float).reshape(-1)


class Domain:
    """Common interface of bounded planar domains.

    Subclasses implement :meth:`signed_distance_many`, :meth:`clamp`,
    :meth:`point_at` and :meth:`project_to_boundary`.
    """

    kind = "abstract"
    tau = TAU_ANALYTIC
    dim = 2
    smooth = False  # boundary of class C^2
    convex = True

    # -- distances -------------------------------------------------------
    def signed_distance(self, x) -> float:
        return float(self.signed_distance_many(_as_point(x)[None, :])[0])

    def signed_distance_many(self, P: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def boundary_band(self, P: np.ndarray, band: float) -> np.ndarray:
        """Indices of rows of ``P`` with signed distance at least ``-band``."""
        return np.flatnonzero(self.signed_distance_many(P) >= -band)

    def contains(self, x, tol: Optional[float] = None) -> bool:
        """True when ``x`` lies in the closed domain up to ``tol``."""
        tol = self.tau if tol is None else tol
        return self.signed_distance(x) <= tol

    def clamp(self, P: np.ndarray) -> np.ndarray:
        """Metric projection of rows of ``P`` onto the closed domain."""
        raise NotImplementedError

    # -- boundary ---------------------------------------------------------
    @property
    def perimeter(self) -> float:
        raise NotImplementedError

    def point_at(self, s: float) -> BoundaryPoint:
        raise NotImplementedError

    def points_at(self, s: np.ndarray) -> np.ndarray:
        return np.array([self.point_at(si).point for si in np.atleast_1d(s)])

    def project_to_boundary(self, x) -> BoundaryPoint:
        raise NotImplementedError

    def tangent_at(self, s: float) -> np.ndarray:
        """Unit tangent in the direction of increasing arc coordinate."""
        nu = self.point_at(s).normal
        return np.array([-nu[1], nu[0]])

    def boundary_sample(self, m: int) -> list[BoundaryPoint]:
        """``m`` points equally spaced in arc coordinate, starting at arc 0."""
        if m < 1:
            raise ValueError("m must be positive")
        L = self.perimeter
        return [self.point_at(j * L / m) for j in range(m)]

    # -- global shape -----------------------------------------------------
    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    @cached_property
    def diameter(self) -> float:
        lo, hi = self.bbox()
        pts = np.array([b.point for b in self.boundary_sample(256)])
        d = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=-1)
        return float(min(d.max() * (1 + 1e-4), np.linalg.norm(hi - lo)))

    @property
    def quasiconvexity_constant(self) -> float:
        return 1.0

    def quasiconvex_path(self, x, y) -> Path:
        """Shortest admissible polyline from ``x`` to ``y``.

        Times are cumulative Euclidean length, so ``times[-1]`` is the path
        length. Convex domains return the segment.
        """
        x, y = _as_point(x), _as_point(y)
        for p in (x, y):
            if self.signed_distance(p) > 10 * self.tau:
                raise PathNotFound(f"point {p.tolist()} lies outside the domain")
        nodes = np.array([x, y])
        if not self.convex and not self._segment_inside(x, y):
            raise PathNotFound("segment leaves a non-convex implicit domain")
        return Path(times=np.array([0.0, float(np.linalg.norm(y - x))]), nodes=nodes)

    def geodesics_to(self, x, Y: np.ndarray) -> list[np.ndarray]:
        """Shortest admissible polylines from each row of ``Y`` to ``x``."""
        x = _as_point(x)
        return [np.array([y, x]) for y in np.atleast_2d(Y)]

    def _segment_inside(self, a, b, samples: int = 33) -> bool:
        s = np.linspace(0.0, 1.0, samples)[:, None]
        pts = a[None, :] * (1 - s) + b[None, :] * s
        return bool(np.all(self.signed_distance_many(pts) <= 10 * self.tau))

    def exterior_sphere_radius(self) -> Optional[float]:
        """Largest uniform exterior tangent-ball radius, capped at half the diameter.

        Returns None when some boundary point admits no exterior ball (a
        reflex corner). The value is a sampled bound.
        """
        cap = 0.5 * self.diameter
        worst = cap
        for b in self.boundary_sample(128):
            worst = min(worst, self._exterior_radius_at(b.point, b.normal, cap))
            if worst <= 1e-6 * cap:
                return None
        return float(worst)

    def _exterior_radius_at(self, y, nu, cap) -> float:
        def ok(r):
            return self.signed_distance(y + r * nu) >= r * (1 - 1e-6) - 10 * self.tau

        if ok(cap):
            return cap
        lo, hi = 0.0, cap
        for _ in range(40):
            mid = 0.5 * (lo + hi)
            if ok(mid):
                lo = mid
            else:
                hi = mid
        return lo

    def kernel_spec(self):
        """Encoding understood by the compiled path optimizer, or None."""
        return None


# ---------------------------------------------------------------------------
class Disk(Domain):
    """Closed ball ``|x - center| <= radius``."""

    kind = "disk"
    smooth = True

    def __init__(self, center=(0.0, 0.0), radius: float = 1.0):
        self.center = _as_point(center)
        self.radius = float(radius)
        if self.radius <= 0:
            raise InvalidDomain("disk radius must be positive")
        self.dim = self.center.size

    def signed_distance_many(self, P):
        P = np.atleast_2d(P)
        return np.linalg.norm(P - self.center, axis=1) - self.radius

    def clamp(self, P):
        P = np.array(P, dtype=float)
        D = P - self.center
        r = np.linalg.norm(D, axis=-1)
        out = r > self.radius
        if np.any(out):
            P[out] = self.center + D[out] * (self.radius / r[out])[:, None]
        return P

    @property
    def perimeter(self):
        return 2 * math.pi * self.radius

    def point_at(self, s):
        th = (s / self.radius) % (2 * math.pi)
        nu = np.array([math.cos(th), math.sin(th)])
        return BoundaryPoint(self.center + self.radius * nu, nu, th * self.radius)

    def points_at(self, s):
        th = np.atleast_1d(s) / self.radius
        return self.center + self.radius * np.column_stack([np.cos(th), np.sin(th)])

    def project_to_boundary(self, x):
        d = _as_point(x) - self.center
        r = float(np.linalg.norm(d))
        if r <= self.tau:
            return self.point_at(0.0)
        th = math.atan2(d[1], d[0]) % (2 * math.pi)
        return self.point_at(th * self.radius)

    def bbox(self):
        return self.center - self.radius, self.center + self.radius

    @cached_property
    def diameter(self):
        return 2 * self.radius

    def exterior_sphere_radius(self):
        return 0.5 * self.diameter

    def kernel_spec(self):
        return 0, np.array([*self.center, self.radius]), np.zeros((1, 2))


# ---------------------------------------------------------------------------
class Polygon(Domain):
    """Simple polygon with counter-clockwise vertices.

    The arc coordinate starts at the first vertex and follows the vertex
    order.
    """

    kind = "polygon"

    def __init__(self, vertices, quasiconvexity_hint: Optional[float] = None):
        V = np.asarray(vertices, dtype=float)
        if V.ndim != 2 or V.shape[1] != 2 or len(V) < 3:
            raise InvalidDomain("polygon needs at least three planar vertices")
        area = 0.5 * np.sum(V[:, 0] * np.roll(V[:, 1], -1) - np.roll(V[:, 0], -1) * V[:, 1])
        if area <= 0:
            raise InvalidDomain("polygon vertices must be counter-clockwise")
        self.vertices = V
        self._A = V
        self._B = np.roll(V, -1, axis=0)
        E = self._B - self._A
        self._len = np.linalg.norm(E, axis=1)
        if np.any(self._len <= 0):
            raise InvalidDomain("repeated polygon vertex")
        self._cum = np.concatenate([[0.0], np.cumsum(self._len)])
        self._tangent = E / self._len[:, None]
        self._enormal = np.column_stack([self._tangent[:, 1], -self._tangent[:, 0]])
        self._check_simple()
        F = np.roll(E, -1, axis=0)
        cross = E[:, 0] * F[:, 1] - E[:, 1] * F[:, 0]
        # vertex i+1 is reflex when the turn from edge i to edge i+1 is clockwise
        self._reflex = np.roll(cross < -1e-14, 1)
        self.convex = not np.any(self._reflex)
        self._qc_hint = quasiconvexity_hint

    def _check_simple(self):
        k = len(self._A)
        for i in range(k):
            for j in range(i + 1, k):
                if j == i + 1 or (i == 0 and j == k - 1):
                    continue
                if _segments_cross(self._A[i], self._B[i], self._A[j], self._B[j]):
                    raise InvalidDomain("polygon edges intersect")

    # geometry kernels
    def _closest(self, P):
        AP = P[:, None, :] - self._A[None, :, :]
        t = np.clip(np.einsum("mki,ki->mk", AP, self._tangent) / self._len, 0.0, 1.0)
        C = self._A[None] + (t * self._len)[..., None] * self._tangent[None]
        d = np.linalg.norm(P[:, None, :] - C, axis=-1)
        return d, t, C

    def _inside(self, P):
        ya, yb = self._A[:, 1], self._B[:, 1]
        px, py = P[:, 0:1], P[:, 1:2]
        straddle = (ya > py) != (yb > py)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = self._A[:, 0] + (py - ya) * (self._B[:, 0] - self._A[:, 0]) / (yb - ya)
        hits = straddle & (px < xint)
        return (np.sum(hits, axis=1) % 2) == 1

    def signed_distance_many(self, P):
        P = np.atleast_2d(np.asarray(P, dtype=float))
        d, _, _ = self._closest(P)
        dmin = d.min(axis=1)
        return np.where(self._inside(P), -dmin, dmin)

    def clamp(self, P):
        P = np.array(P, dtype=float)
        out = ~self._inside(P)
        if np.any(out):
            d, _, C = self._closest(P[out])
            j = np.argmin(d, axis=1)
            P[out] = C[np.arange(len(j)), j]
        return P

    @property
    def perimeter(self):
        return float(self._cum[-1])

    def _normal_at(self, i, t):
        if t <= 1e-12:
            n = self._enormal[i] + self._enormal[i - 1]
            return n / np.linalg.norm(n)
        if t >= 1 - 1e-12:
            n = self._enormal[i] + self._enormal[(i + 1) % len(self._A)]
            return n / np.linalg.norm(n)
        return self._enormal[i].copy()

    def point_at(self, s):
        L = self.perimeter
        s = float(s) % L
        i = int(np.searchsorted(self._cum, s, side="right") - 1)
        i = min(max(i, 0), len(self._A) - 1)
        t = (s - self._cum[i]) / self._len[i]
        p = self._A[i] + (s - self._cum[i]) * self._tangent[i]
        return BoundaryPoint(p, self._normal_at(i, t), s)

    def points_at(self, s):
        s = np.atleast_1d(np.asarray(s, dtype=float)) % self.perimeter
        i = np.clip(np.searchsorted(self._cum, s, side="right") - 1, 0, len(self._A) - 1)
        return self._A[i] + (s - self._cum[i])[:, None] * self._tangent[i]

    def tangent_at(self, s):
        s = float(s) % self.perimeter
        i = int(np.clip(np.searchsorted(self._cum, s, side="right") - 1, 0, len(self._A) - 1))
        return self._tangent[i]

    def project_to_boundary(self, x):
        x = _as_point(x)
        d, t, C = self._closest(x[None, :])
        d, t, C = d[0], t[0], C[0]
        near = np.flatnonzero(d <= d.min() + self.tau)
        arcs = (self._cum[near] + t[near] * self._len[near]) % self.perimeter
        k = int(np.argmin(arcs))
        i = int(near[k])
        p = C[i]
        nu = self._normal_at(i, t[i])
        if d[i] > self.tau and not self._inside(x[None, :])[0]:
            nu = (x - p) / d[i]
        return BoundaryPoint(p, nu, float(arcs[k]))

    def bbox(self):
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    @cached_property
    def diameter(self):
        V = self.vertices
        return float(np.max(np.linalg.norm(V[:, None] - V[None], axis=-1)))

    # paths
    def _visible(self, a, b):
        for i in range(len(self._A)):
            if _segments_cross(a, b, self._A[i], self._B[i]):
                return False
        s = np.linspace(0.0, 1.0, 17)[1:-1, None]
        pts = a[None] * (1 - s) + b[None] * s
        return bool(np.all(self.signed_distance_many(pts) <= 10 * self.tau))

    def visible_many(self, P: np.ndarray, Q: np.ndarray) -> np.ndarray:
        """Row-wise test that segment ``P[i] Q[i]`` stays in the closed polygon."""
        P, Q = np.atleast_2d(P), np.atleast_2d(Q)
        A, B = self._A[None], self._B[None]
        p, q = P[:, None, :], Q[:, None, :]

        def orient(a, b, c):
            return (b[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1]) - (b[..., 1] - a[..., 1]) * (c[..., 0] - a[..., 0])

        scale = 1e-12 * (1.0 + self.diameter**2)
        d1, d2 = orient(A, B, p), orient(A, B, q)
        d3, d4 = orient(p, q, A), orient(p, q, B)
        cross = (d1 * d2 < -scale * scale) & (d3 * d4 < -scale * scale)
        ok = ~np.any(cross, axis=1)
        s = np.linspace(0.0, 1.0, 9)[1:-1]
        pts = P[:, None, :] * (1 - s)[None, :, None] + Q[:, None, :] * s[None, :, None]
        sd = self.signed_distance_many(pts.reshape(-1, 2)).reshape(len(P), -1)
        return ok & np.all(sd <= 10 * self.tau, axis=1)

    def geodesics_to(self, x, Y):
        x = _as_point(x)
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        if self.convex:
            return [np.array([y, x]) for y in Y]
        direct = self.visible_many(Y, np.repeat(x[None], len(Y), axis=0))
        out = [np.array([y, x]) if v else None for y, v in zip(Y, direct)]
        if all(direct):
            return out
        # shortest paths from x to the reflex vertices, then one visible hop to y
        R = self.vertices[self._reflex]
        k = len(R)
        nodes = np.vstack([x[None], R])
        I, J = np.triu_indices(k + 1, 1)
        vis = np.zeros((k + 1, k + 1), dtype=bool)
        vis[I, J] = vis[J, I] = self.visible_many(nodes[I], nodes[J])
        W = np.linalg.norm(nodes[:, None] - nodes[None], axis=-1)
        dist = np.full(k + 1, math.inf)
        prev = np.full(k + 1, -1)
        dist[0] = 0.0
        done = np.zeros(k + 1, dtype=bool)
        for _ in range(k + 1):
            cand = np.where(done, math.inf, dist)
            i = int(np.argmin(cand))
            if not math.isfinite(cand[i]):
                break
            done[i] = True
            nd = dist[i] + W[i]
            better = vis[i] & ~done & (nd < dist - 1e-15)
            dist[better] = nd[better]
            prev[better] = i
        miss = [j for j, v in enumerate(direct) if not v]
        Ym = Y[miss]
        hop = self.visible_many(np.repeat(Ym, k, axis=0), np.tile(R, (len(Ym), 1))).reshape(len(Ym), k)
        tot = np.where(hop, dist[1:][None] + np.linalg.norm(Ym[:, None] - R[None], axis=-1), math.inf)
        for row, j in enumerate(miss):
            r = int(np.argmin(tot[row]))
            if not math.isfinite(tot[row, r]):
                raise PathNotFound("no visibility path between the points")
            chain = [Y[j]]
            i = r + 1
            while i > 0:
                chain.append(nodes[i])
                i = prev[i]
            chain.append(x)
            out[j] = np.array(chain)
        return out

    def quasiconvex_path(self, x, y):
        x, y = _as_point(x), _as_point(y)
        for p in (x, y):
            if self.signed_distance(p) > 10 * self.tau:
                raise PathNotFound(f"point {p.tolist()} lies outside the domain")
        if self.convex or self._visible(x, y):
            return Path(np.array([0.0, float(np.linalg.norm(y - x))]), np.array([x, y]))
        nodes = [x, y] + [v for v, r in zip(self.vertices, self._reflex) if r]
        n = len(nodes)
        dist = [math.inf] * n
        prev = [-1] * n
        dist[0] = 0.0
        heap = [(0.0, 0)]
        done = [False] * n
        while heap:
            dk, k = heapq.heappop(heap)
            if done[k]:
                continue
            done[k] = True
            if k == 1:
                break
            for j in range(n):
                if done[j] or j == k:
                    continue
                if not self._visible(nodes[k], nodes[j]):
                    continue
                nd = dk + float(np.linalg.norm(nodes[j] - nodes[k]))
                if nd < dist[j] - 1e-15:
                    dist[j] = nd
                    prev[j] = k
                    heapq.heappush(heap, (nd, j))
        if not math.isfinite(dist[1]):
            raise PathNotFound("no visibility path between the points")
        chain = [1]
        while chain[-1] != 0:
            chain.append(prev[chain[-1]])
        pts = np.array([nodes[k] for k in reversed(chain)])
        seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        return Path(np.concatenate([[0.0], np.cumsum(seg)]), pts)

    @cached_property
    def _quasiconvexity(self):
        if self.convex:
            return 1.0
        pts = [b.point for b in self.boundary_sample(48)] + list(self.vertices)
        worst = 1.0
        for i, a in enumerate(pts):
            for b in pts[i + 1:]:
                e = float(np.linalg.norm(b - a))
                if e < 1e-9:
                    continue
                worst = max(worst, self.quasiconvex_path(a, b).times[-1] / e)
        return worst

    @property
    def quasiconvexity_constant(self):
        if self._qc_hint is not None:
            return float(self._qc_hint)
        return self._quasiconvexity

    def exterior_sphere_radius(self):
        if not self.convex:
            return None
        return 0.5 * self.diameter

    def kernel_spec(self):
        return 2, np.zeros(4), np.ascontiguousarray(self.vertices)


class Rectangle(Polygon):
    """Axis-aligned box ``[lo, hi]``.

    The arc coordinate starts at the upper-left corner and runs counter-clockwise,
    so the left edge comes first.
    """

    kind = "rectangle"

    def __init__(self, lo, hi):
        lo, hi = _as_point(lo), _as_point(hi)
        if lo.shape != (2,) or hi.shape != (2,) or np.any(hi <= lo):
            raise InvalidDomain("rectangle needs lo < hi in two dimensions")
        self.lo, self.hi = lo, hi
        super().__init__([[lo[0], hi[1]], [lo[0], lo[1]], [hi[0], lo[1]], [hi[0], hi[1]]])

    def signed_distance_many(self, P):
        P = np.atleast_2d(np.asarray(P, dtype=float))
        c = 0.5 * (self.lo + self.hi)
        half = 0.5 * (self.hi - self.lo)
        q = np.abs(P - c) - half
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=1)
        inside = np.minimum(q.max(axis=1), 0.0)
        return outside + inside

    def clamp(self, P):
        return np.clip(np.asarray(P, dtype=float), self.lo, self.hi)

    def kernel_spec(self):
        return 1, np.array([*self.lo, *self.hi]), np.zeros((1, 2))


# ---------------------------------------------------------------------------
def _segments_cross(p, q, r, s, eps=1e-12) -> bool:
    """Proper crossing of segments pq and rs (touching does not count)."""
    d1 = _orient(r, s, p)
    d2 = _orient(r, s, q)
    d3 = _orient(p, q, r)
    d4 = _orient(p, q, s)
    return (d1 * d2 < -eps) and (d3 * d4 < -eps)


def _orient(a, b, c) -> float:
    return float((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))


# ---------------------------------------------------------------------------
@dataclass
class _ImplicitShape:
    phi: Callable[[np.ndarray], np.ndarray]
    grad: Callable[[np.ndarray], np.ndarray]
    center: np.ndarray
    rmax: float
    convex: bool = True


def _ellipse(center=(0.0, 0.0), axes=(1.0, 0.5)):
    c = _as_point(center)
    a = _as_point(axes)

    def phi(P):
        Z = (np.atleast_2d(P) - c) / a
        return np.sum(Z * Z, axis=1) - 1.0

    def grad(P):
        return 2 * (np.atleast_2d(P) - c) / a**2

    return _ImplicitShape(phi, grad, c, float(a.max()))


def _smoothed_square(center=(0.0, 0.0), half_width=1.0, exponent=4.0):
    c = _as_point(center)
    a = float(half_width)
    p = float(exponent)
    if p < 4:
        raise InvalidDomain("smoothed-square exponent must be at least 4")

    def phi(P):
        Z = np.abs(np.atleast_2d(P) - c) / a
        return np.sum(Z**p, axis=1) - 1.0

    def grad(P):
        Z = (np.atleast_2d(P) - c) / a
        return p * np.sign(Z) * np.abs(Z) ** (p - 1) / a

    return _ImplicitShape(phi, grad, c, a * 2 ** 0.5)


IMPLICIT_CATALOG = {"ellipse": _ellipse, "smoothed-square": _smoothed_square}


class ImplicitDomain(Domain):
    """Smooth star-shaped domain ``{phi < 0}`` with phi taken from a catalog.

    The boundary is traced by ray casting from the shape center and carries a
    tabulated arc coordinate starting on the positive first axis.
    """

    kind = "implicit"
    tau = TAU_IMPLICIT
    smooth = True

    def __init__(self, shape: str, n_table: int = 4096, **params):
        if shape not in IMPLICIT_CATALOG:
            raise InvalidDomain(f"unknown implicit shape {shape!r}")
        self.shape_name = shape
        self.params = params
        self._shape = IMPLICIT_CATALOG[shape](**params)
        self.convex = self._shape.convex
        th = np.linspace(0.0, 2 * math.pi, n_table + 1)
        R = self._radius_many(th)
        self._theta, self._R = th, R
        pts = self._shape.center + R[:, None] * np.column_stack([np.cos(th), np.sin(th)])
        seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        self._theta = th
        self._pts = pts
        self._cum = np.concatenate([[0.0], np.cumsum(seg)])

    def _radius_many(self, th):
        """Ray-cast radius by Newton; starts outside (monotone for convex level
        sets) until the table exists, then from the interpolated table radius."""
        th = np.atleast_1d(np.asarray(th, dtype=float))
        U = np.column_stack([np.cos(th), np.sin(th)])
        c = self._shape.center
        if hasattr(self, "_R"):
            r = np.interp(th % (2 * math.pi), self._theta, self._R)
        else:
            r = np.full(len(th), self._shape.rmax * 1.01)
        for _ in range(100):
            P = c + r[:, None] * U
            step = self._shape.phi(P) / np.sum(self._shape.grad(P) * U, axis=1)
            r = r - step
            if np.all(np.abs(step) <= 1e-15 * (1 + r)):
                break
        return r

    def _radius(self, th):
        return float(self._radius_many(th)[0])

    def _curve_many(self, th):
        th = np.atleast_1d(np.asarray(th, dtype=float))
        return self._shape.center + self._radius_many(th)[:, None] * np.column_stack([np.cos(th), np.sin(th)])

    def _curve(self, th):
        return self._curve_many(th)[0]

    def _normal(self, p):
        g = self._shape.grad(p[None, :])[0]
        return g / np.linalg.norm(g)

    def _nearest_many(self, P):
        """Distances to the boundary and polar parameters of the closest points.

        A table lookup gives the starting parameter; a safeguarded Newton
        iteration on the squared distance (finite-difference derivatives)
        refines it inside the neighbouring table cells.
        """
        P = np.atleast_2d(np.asarray(P, dtype=float))
        tab = self._pts[:-1]
        k = np.empty(len(P), dtype=int)
        for i0 in range(0, len(P), 256):
            blk = P[i0:i0 + 256]
            k[i0:i0 + 256] = np.argmin(np.sum((blk[:, None, :] - tab[None]) ** 2, axis=-1), axis=1)
        dth = self._theta[1] - self._theta[0]
        t = self._theta[k]
        lo, hi = t - 1.5 * dth, t + 1.5 * dth
        e = 1e-5
        f = lambda q: np.sum((self._curve_many(q) - P) ** 2, axis=1)
        for _ in range(8):
            f0, fm, fp = f(t), f(t - e), f(t + e)
            g1 = (fp - fm) / (2 * e)
            g2 = (fp - 2 * f0 + fm) / (e * e)
            step = np.where(g2 > 0, -g1 / np.where(g2 > 0, g2, 1.0), 0.0)
            t = np.clip(t + step, lo, hi)
            if np.all(np.abs(step) <= 1e-10):
                break
        return np.sqrt(np.maximum(f(t), 0.0)), t % (2 * math.pi)

    def _nearest(self, x):
        d, t = self._nearest_many(_as_point(x)[None, :])
        return float(d[0]), float(t[0])

    def boundary_band(self, P, band):
        P = np.atleast_2d(np.asarray(P, dtype=float))
        # |phi| / |grad phi| overestimates the distance by a bounded factor
        # for these convex shapes, so a generous first-order filter is safe
        est = self._shape.phi(P) / np.linalg.norm(self._shape.grad(P), axis=1)
        cand = np.flatnonzero(est >= -10 * band - 1e-3 * self.diameter)
        if len(cand) == 0:
            return cand
        return cand[self.signed_distance_many(P[cand]) >= -band]

    def signed_distance_many(self, P):
        P = np.atleast_2d(np.asarray(P, dtype=float))
        d, _ = self._nearest_many(P)
        return np.sign(self._shape.phi(P)) * d

    def clamp(self, P):
        P = np.array(P, dtype=float)
        outside = np.flatnonzero(self._shape.phi(P) > 0)
        if len(outside):
            _, th = self._nearest_many(P[outside])
            P[outside] = self._curve_many(th)
        return P

    @property
    def perimeter(self):
        return float(self._cum[-1])

    def _theta_of_arc(self, s):
        return float(np.interp(s % self.perimeter, self._cum, self._theta))

    def _arc_of_theta(self, th):
        return float(np.interp(th % (2 * math.pi), self._theta, self._cum))

    def points_at(self, s):
        s = np.atleast_1d(np.asarray(s, dtype=float)) % self.perimeter
        return self._curve_many(np.interp(s, self._cum, self._theta))

    def point_at(self, s):
        th = self._theta_of_arc(s)
        p = self._curve(th)
        return BoundaryPoint(p, self._normal(p), float(s) % self.perimeter)

    def project_to_boundary(self, x):
        x = _as_point(x)
        _, th = self._nearest(x)
        p = self._curve(th)
        return BoundaryPoint(p, self._normal(p), self._arc_of_theta(th))

    def bbox(self):
        return self._pts.min(axis=0), self._pts.max(axis=0)


def make_domain(kind: str, **kw) -> Domain:
    """Construct a domain from a kind name and keyword parameters."""
    if kind == "disk":
        return Disk(kw.get("center", (0.0, 0.0)), kw.get("radius", 1.0))
    if kind == "rectangle":
        return Rectangle(kw["lo"], kw["hi"])
    if kind == "square":
        c = _as_point(kw.get("center", (0.0, 0.0)))
        h = float(kw.get("half_width", 1.0))
        return Rectangle(c - h, c + h)
    if kind == "polygon":
        return Polygon(kw["vertices"], kw.get("quasiconvexity_hint"))
    if kind == "implicit":
        kw = dict(kw)
        shape = kw.pop("shape")
        return ImplicitDomain(shape, **kw)
    raise InvalidDomain(f"unknown domain kind {kind!r}")


def signed_distance(d: Domain, x) -> float:
    return d.signed_distance(x)


def project_to_boundary(d: Domain, x) -> BoundaryPoint:
    return d.project_to_boundary(x)


def quasiconvex_path(d: Domain, x, y) -> Path:
    return d.quasiconvex_path(x, y)


def exterior_sphere_radius(d: Domain) -> Optional[float]:
    return d.exterior_sphere_radius()


def boundary_sample(d: Domain, m: int) -> list[BoundaryPoint]:
    return d.boundary_sample(m)
