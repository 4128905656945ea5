"""Command line front end.

``hjdirichlet {solve,trace,verify,skeleton} --config FILE --out DIR``

Exit codes: 0 success, 1 a verification check failed, 2 configuration
error or seed outside the domain, 3 compatibility failure, 4 solver failure
or corrupted field file, 5 a mechanical chain hit the boundary.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from typing import Optional

import numpy as np

from . import singular, verify
from .config import Scenario, load
from .errors import ConfigError, FieldCorrupted, HJError, InvariantViolation
from .solver import ValueField, check_compatibility, solve_field

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_COMPAT, EXIT_SOLVER, EXIT_BOUNDARY = 0, 1, 2, 3, 4, 5


class CliExit(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_text(path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _threads(args, sc: Scenario) -> Optional[int]:
    if args.threads is not None:
        return args.threads
    if os.environ.get("HJD_THREADS"):
        return None  # resolved by the solver
    return sc.threads


def _gate(sc: Scenario, prob) -> dict:
    """Compatibility report; raises exit 3 when a standing hypothesis fails."""
    rep = check_compatibility(prob.spec, prob.d, prob.bd, opts=prob.opts, c_hat=prob.c_hat)
    if not rep.ok:
        e = rep.first_failure()
        raise CliExit(EXIT_COMPAT, f"compatibility failure {e.name}: {e.message}")
    return rep.as_dict()


def _field(sc: Scenario, prob, h: float, threads) -> ValueField:
    try:
        fld = solve_field(prob, h, threads)
    except HJError as e:
        raise CliExit(EXIT_SOLVER, f"solver failure: {e}") from e
    return fld


def cmd_solve(sc: Scenario, out: str, args) -> int:
    prob = sc.problem()
    compat = _gate(sc, prob)
    fld = _field(sc, prob, sc.h, _threads(args, sc))
    fld.save(os.path.join(out, "field.csv"), {"scenario": sc.name, "scenario_hash": sc.hash, "compatibility": compat})
    failed = int(np.sum(~fld.ok))
    if failed:
        raise CliExit(EXIT_SOLVER, f"solver failure at {failed} of {len(fld)} grid points")
    print(f"solve: {len(fld)} points written to {out}")
    return EXIT_OK


def _seeds(args, sc: Scenario, d) -> list:
    raw = args.seed_point or [",".join(repr(v) for v in p) for p in sc.trace.get("seed_points", [])]
    if not raw:
        raise CliExit(EXIT_CONFIG, "no seed point given")
    seeds = []
    for s in raw:
        try:
            p = np.array([float(v) for v in s.split(",")])
        except ValueError as e:
            raise CliExit(EXIT_CONFIG, f"malformed seed point {s!r}") from e
        if p.shape != (2,) or d.signed_distance(p) >= -d.tau:
            raise CliExit(EXIT_CONFIG, f"seed point {s} is not inside the domain")
        seeds.append(p)
    return seeds


def cmd_trace(sc: Scenario, out: str, args) -> int:
    prob = sc.problem()
    mode = args.mode or sc.trace.get("mode", "general")
    if mode == "mechanical" and prob.spec.mechanical is None:
        raise CliExit(EXIT_CONFIG, "mechanical mode needs a mechanical Lagrangian")
    seeds = _seeds(args, sc, prob.d)
    _gate(sc, prob)
    budget = sc.trace.get("budget", float("inf"))
    try:
        chains = singular.trace_many(prob, seeds, mode, budget, _threads(args, sc))
    except InvariantViolation as e:
        raise CliExit(EXIT_BOUNDARY, f"invariant violation: {e}") from e
    except HJError as e:
        raise CliExit(EXIT_SOLVER, f"solver failure: {e}") from e
    summary = []
    for k, ch in enumerate(chains):
        ch.save(os.path.join(out, f"chain_{k}.csv"))
        summary.append(ch.summary())
    _write_json(os.path.join(out, "trace.json"), {"scenario": sc.name, "scenario_hash": sc.hash, "mode": mode,
                                                 "chains": summary})
    print(f"trace: {len(chains)} chains, verdicts {[c.verdict for c in chains]}")
    return EXIT_OK


def cmd_verify(sc: Scenario, out: str, args) -> int:
    prob = sc.problem()
    fld = None
    if args.field:
        try:
            fld = ValueField.load(args.field)
        except FieldCorrupted as e:
            raise CliExit(EXIT_SOLVER, f"corrupted field: {e}") from e
    elif sc.verify.get("pde", True):
        fld = _field(sc, prob, sc.h, _threads(args, sc))
    prob.require_supercritical()
    samples = sc.verify.get("samples", 2000)
    try:
        rep = verify.run_checks(prob, samples, sc.hash, fld, rho=sc.verify.get("rho"))
    except HJError as e:
        raise CliExit(EXIT_SOLVER, f"solver failure: {e}") from e
    _write_text(os.path.join(out, "verify.json"), rep.to_json())
    for c in rep.checks:
        state = "n/a" if not c.applicable else ("pass" if c.passed else "FAIL")
        print(f"{c.name:24s} {state}")
    return EXIT_OK if rep.ok else EXIT_VERIFY


def cmd_skeleton(sc: Scenario, out: str, args) -> int:
    prob = sc.problem()
    compat = _gate(sc, prob)
    h = sc.skeleton.get("h", sc.h)
    fld = _field(sc, prob, h, _threads(args, sc))
    pts, stats = singular.skeleton(fld)
    _write_text(os.path.join(out, "skeleton.csv"), singular.skeleton_csv(pts))
    stats = dict(stats, h=h, scenario=sc.name, scenario_hash=sc.hash, compatibility=compat,
                 failed=int(np.sum(~fld.ok)))
    _write_json(os.path.join(out, "skeleton.json"), stats)
    print(f"skeleton: {stats['points']} flagged points in {stats['components']} components")
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "trace": cmd_trace, "verify": cmd_verify, "skeleton": cmd_skeleton}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hjdirichlet", description=__doc__.split("\n\n")[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, help="scenario YAML file")
        s.add_argument("--out", required=True, help="output directory")
        s.add_argument("--threads", type=int, default=None, help="worker processes (overrides HJD_THREADS)")
        if name == "trace":
            s.add_argument("--seed-point", action="append", default=None, metavar="X1,X2",
                           help="chain seed; repeatable")
            s.add_argument("--mode", choices=("general", "mechanical"), default=None)
        if name == "verify":
            s.add_argument("--field", default=None, help="saved field CSV to check instead of solving")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        sc = load(args.config)
        os.makedirs(args.out, exist_ok=True)
        return COMMANDS[args.command](sc, args.out, args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except CliExit as e:
        print(str(e), file=sys.stderr)
        return e.code
    except HJError as e:
        print(f"solver failure: {e}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
