"""Compare the compiled path kernels with the numpy fallback.

Run from the repository root after an editable install::

    python3 benchmarks/bench_kernels.py [--repeat 5] [--field]

Each kernel is timed on identical inputs through both implementations and the
outputs are compared before the timings are printed. ``--field`` also times a
small value-field solve end to end in a subprocess per backend, since the
backend is fixed at import time.
"""
from __future__ import annotations

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from hjdirichlet import _pykernels
from hjdirichlet.geometry import Disk, make_domain
from hjdirichlet.lagrangian import kinetic, mechanical, ScalarField

try:
    from hjdirichlet import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def _best(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def _path(a, b, N, bulge=0.0):
    s = np.linspace(0.0, 1.0, N + 1)[:, None]
    X = (1 - s) * np.asarray(a) + s * np.asarray(b)
    n = np.array([-(b[1] - a[1]), b[0] - a[0]])
    X = X + bulge * np.sin(np.pi * s) * n / max(np.linalg.norm(n), 1e-12)
    return np.ascontiguousarray(X)


def cases():
    """Inputs ``(label, spec, domain, X0, dt)`` representative of solver calls."""
    V = ScalarField.polynomial(-1.0, None, [[-0.5, 0.0], [0.0, -0.5]])
    out = []
    for label, spec, dom in (
        ("kinetic / disk", kinetic(), Disk()),
        ("mechanical / disk", mechanical(np.eye(2), None, V), Disk()),
        ("kinetic / square", kinetic(), make_domain("square", half_width=1.0)),
        ("kinetic / polygon", kinetic(), make_domain("polygon", vertices=[[0, 0], [2, 0], [2, 1], [1, 1], [1, 2], [0, 2]])),
    ):
        for N in (32, 128):
            a, b = (np.array([-0.9, -0.3]), np.array([0.7, 0.6]))
            if "polygon" in label:
                a, b = np.array([0.2, 1.8]), np.array([1.8, 0.2])
            out.append((f"{label} N={N}", spec, dom, _path(a, b, N, 0.1), 1.5 / N))
    return out


def bench(repeat: int = 5) -> list:
    if _ckernels is None:
        raise SystemExit("compiled kernels are not built; reinstall with Cython available")
    rows = []
    for label, spec, dom, X0, dt in cases():
        A, s1, S2, v0, w, Q = spec.quad.arrays()
        kind, par, poly = dom.kernel_spec()
        par = np.ascontiguousarray(par, dtype=float)
        poly = np.ascontiguousarray(poly, dtype=float)

        grad_args = (X0, dt, A, s1, S2, v0, w, Q)
        vp = _pykernels.quad_action_grad(*grad_args)
        vc = _ckernels.quad_action_grad(*grad_args)
        assert abs(vp[0] - vc[0]) <= 1e-10 * (1 + abs(vp[0])) and np.allclose(vp[1], vc[1], atol=1e-10)
        tp = _best(lambda: _pykernels.quad_action_grad(*grad_args), repeat * 20)
        tc = _best(lambda: _ckernels.quad_action_grad(*grad_args), repeat * 20)
        rows.append((label, "action+grad", tp, tc))

        opt_args = (X0, dt, A, s1, S2, v0, w, Q, int(kind), par, poly, 1e-8, 2000)
        rp = _pykernels.optimize_quad_path(*opt_args)
        rc = _ckernels.optimize_quad_path(*opt_args)
        assert abs(rp[1] - rc[1]) <= 1e-6 * (1 + abs(rp[1])), (label, rp[1], rc[1])
        tp = _best(lambda: _pykernels.optimize_quad_path(*opt_args), repeat)
        tc = _best(lambda: _ckernels.optimize_quad_path(*opt_args), repeat)
        rows.append((label, "optimize", tp, tc))
    return rows


_FIELD_SCRIPT = """
import time, numpy as np
from hjdirichlet import BACKEND, Problem, BoundaryData, kinetic, solve_field
from hjdirichlet.geometry import Disk
prob = Problem(kinetic(), Disk(), BoundaryData.const(0.0))
prob.c_hat
t0 = time.perf_counter()
fld = solve_field(prob, 0.1, 1)
print(BACKEND, time.perf_counter() - t0, float(np.sum(fld.u)))
"""


def bench_field() -> list:
    """Wall time of a disk field solve at h = 0.1 under each backend."""
    out = []
    for pure in ("0", "1"):
        env = dict(os.environ, HJD_PURE_PYTHON=pure, HJD_THREADS="1")
        res = subprocess.run([sys.executable, "-c", _FIELD_SCRIPT], env=env, capture_output=True, text=True, check=True)
        backend, secs, total = res.stdout.split()
        out.append((backend, float(secs), float(total)))
    return out


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--field", action="store_true", help="also time a field solve per backend")
    args = ap.parse_args(argv)
    rows = bench(args.repeat)
    print(f"{'case':28s} {'kernel':12s} {'numpy [ms]':>11s} {'cython [ms]':>12s} {'speedup':>8s}")
    for label, kern, tp, tc in rows:
        print(f"{label:28s} {kern:12s} {1e3 * tp:11.3f} {1e3 * tc:12.3f} {tp / tc:8.1f}")
    if args.field:
        print()
        for backend, secs, total in bench_field():
            print(f"field solve, disk h=0.1, {backend:7s} {secs:8.2f} s   sum(u) = {total:.10f}")


if __name__ == "__main__":
    main()
