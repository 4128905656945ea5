"""Scenario files.

A scenario is a YAML mapping with a schema version, a domain, a Lagrangian,
boundary data, the grid spacing and optional tolerance overrides. Unknown
keys are rejected, and every error carries the line and column of the
offending node.

Example::

    schema: 1
    name: disk
    domain: {kind: disk, radius: 1.0}
    lagrangian: {kind: kinetic}
    boundary: {kind: constant, value: 0.0}
    grid: {h: 0.05}
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, fields
from typing import Optional

import numpy as np
import yaml

from .errors import ConfigError, HJError
from .geometry import Domain, make_domain
from .lagrangian import LagrangianSpec, ScalarField, kinetic, mechanical, polynomial_kinetic, quadratic
from .options import DEFAULT, Options
from .solver import BoundaryData, Problem

SCHEMA_VERSION = 1


class _Num:
    pass


class _Int:
    pass


class _Str:
    pass


class _Vec:
    pass


class _Mat:
    pass


NUM, INT, STR, VEC, MAT = _Num(), _Int(), _Str(), _Vec(), _Mat()

_FIELD = {"c": NUM, "a": VEC, "B": MAT}
_DOMAIN_KEYS = {
    "disk": {"center": VEC, "radius": NUM},
    "rectangle": {"lo": VEC, "hi": VEC},
    "square": {"center": VEC, "half_width": NUM},
    "polygon": {"vertices": MAT, "quasiconvexity_hint": NUM},
    "implicit": {"shape": STR, "center": VEC, "axes": VEC, "half_width": NUM, "exponent": NUM, "n_table": INT},
}
_LAGRANGIAN_KEYS = {
    "kinetic": {"mass": NUM, "constant": NUM},
    "quadratic": {"A": MAT, "s1": VEC, "S2": MAT, "v0": NUM, "w": VEC, "Q": MAT},
    "mechanical": {"A": MAT, "S": _FIELD, "V": _FIELD},
    "polynomial_kinetic": {"coeffs": VEC, "V": _FIELD},
}
_BOUNDARY_KEYS = {
    "constant": {"value": NUM},
    "affine": {"c": NUM, "a": VEC, "nu": NUM},
    "quadratic": {"c": NUM, "a": VEC, "B": MAT, "nu": NUM},
}
_OPTION_TYPES = {f.name: (INT if f.type in ("int", int) else NUM) for f in fields(Options)}
_TOP = {
    "schema": INT,
    "name": STR,
    "domain": None,
    "lagrangian": None,
    "boundary": None,
    "grid": {"h": NUM},
    "tolerances": _OPTION_TYPES,
    "threads": INT,
    "trace": {"mode": STR, "seed_points": MAT, "budget": NUM, "max_steps": INT},
    "verify": {"samples": INT, "rho": NUM, "pde": None},
    "skeleton": {"h": NUM},
}


def _err(msg: str, node) -> ConfigError:
    m = getattr(node, "start_mark", None)
    if m is None:
        return ConfigError(msg)
    return ConfigError(msg, m.line + 1, m.column + 1)


def _scalar(node, kind, path):
    if not isinstance(node, yaml.ScalarNode):
        raise _err(f"{path}: expected a scalar", node)
    val = yaml.safe_load(node.value) if node.tag != "tag:yaml.org,2002:str" else node.value
    if kind is STR:
        if not isinstance(val, str):
            raise _err(f"{path}: expected a string", node)
        return val
    if kind is INT:
        if isinstance(val, bool) or not isinstance(val, int):
            raise _err(f"{path}: expected an integer", node)
        return val
    if isinstance(val, str) and node.style is None:
        try:
            val = float(val)  # YAML 1.1 reads 1e-8 as a string
        except ValueError:
            pass
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise _err(f"{path}: expected a number", node)
    return float(val)


def _bool(node, path):
    val = yaml.safe_load(node.value) if isinstance(node, yaml.ScalarNode) else None
    if not isinstance(val, bool):
        raise _err(f"{path}: expected true or false", node)
    return val


def _vector(node, path):
    if not isinstance(node, yaml.SequenceNode):
        raise _err(f"{path}: expected a list of numbers", node)
    return [_scalar(n, NUM, f"{path}[{i}]") for i, n in enumerate(node.value)]


def _matrix(node, path):
    if not isinstance(node, yaml.SequenceNode):
        raise _err(f"{path}: expected a list of rows", node)
    rows = [_vector(n, f"{path}[{i}]") for i, n in enumerate(node.value)]
    if len({len(r) for r in rows}) > 1:
        raise _err(f"{path}: rows have different lengths", node)
    return rows


def _value(node, kind, path):
    if isinstance(kind, dict):
        return _mapping(node, kind, path)
    if kind is VEC:
        return _vector(node, path)
    if kind is MAT:
        return _matrix(node, path)
    return _scalar(node, kind, path)


def _mapping(node, schema: dict, path: str, extra: Optional[dict] = None) -> dict:
    if not isinstance(node, yaml.MappingNode):
        raise _err(f"{path or 'scenario'}: expected a mapping", node)
    out = {}
    allowed = dict(schema)
    allowed.update(extra or {})
    for kn, vn in node.value:
        key = _scalar(kn, STR, path or "key")
        where = f"{path}.{key}" if path else key
        if key not in allowed:
            raise _err(f"unknown key {where!r}", kn)
        if key in out:
            raise _err(f"duplicate key {where!r}", kn)
        kind = allowed[key]
        out[key] = vn if kind is None else _value(vn, kind, where)
    return out


def _kinded(node, table: dict, path: str) -> dict:
    if not isinstance(node, yaml.MappingNode):
        raise _err(f"{path}: expected a mapping", node)
    kind_node = next((vn for kn, vn in node.value if isinstance(kn, yaml.ScalarNode) and kn.value == "kind"), None)
    if kind_node is None:
        raise _err(f"{path}: missing 'kind'", node)
    kind = _scalar(kind_node, STR, f"{path}.kind")
    if kind not in table:
        raise _err(f"{path}.kind: unknown kind {kind!r}; expected one of {sorted(table)}", kind_node)
    return _mapping(node, table[kind], path, {"kind": STR})


@dataclass
class Scenario:
    """Validated scenario; ``raw`` is the canonical nested dictionary."""

    raw: dict
    name: str = "scenario"
    h: float = 0.05
    options: Options = DEFAULT
    threads: Optional[int] = None
    trace: dict = field(default_factory=dict)
    verify: dict = field(default_factory=dict)
    skeleton: dict = field(default_factory=dict)

    @property
    def hash(self) -> str:
        text = json.dumps(self.raw, sort_keys=True)
        return hashlib.sha256(text.encode("utf-8")).hexdigest()

    def build_domain(self) -> Domain:
        kw = {k: v for k, v in self.raw["domain"].items() if k != "kind"}
        return make_domain(self.raw["domain"]["kind"], **kw)

    def build_lagrangian(self) -> LagrangianSpec:
        spec = dict(self.raw["lagrangian"])
        kind = spec.pop("kind")
        fieldof = lambda f: None if f is None else ScalarField.polynomial(f.get("c", 0.0), f.get("a"), f.get("B"))
        if kind == "kinetic":
            return kinetic(spec.get("mass", 1.0), spec.get("constant", 1.0))
        if kind == "quadratic":
            A = spec.pop("A", np.eye(2))
            return quadratic(A, **spec)
        if kind == "mechanical":
            return mechanical(spec.get("A", np.eye(2)), fieldof(spec.get("S")), fieldof(spec.get("V")))
        return polynomial_kinetic(spec["coeffs"], fieldof(spec.get("V")))

    def build_boundary(self) -> BoundaryData:
        b = self.raw["boundary"]
        if b["kind"] == "constant":
            return BoundaryData.const(b.get("value", 0.0))
        if b["kind"] == "affine":
            return BoundaryData.affine(b.get("c", 0.0), b.get("a", (0.0, 0.0)), b.get("nu"))
        G = ScalarField.polynomial(b.get("c", 0.0), b.get("a"), b.get("B"))
        return BoundaryData.from_field(G, b.get("nu"), "quadratic")

    def problem(self) -> Problem:
        return Problem(self.build_lagrangian(), self.build_domain(), self.build_boundary(), self.options)


def parse(text: str) -> Scenario:
    """Validate scenario text.

    Raises
    ------
    ConfigError
        With line and column for syntax errors, unknown keys, wrong types,
        a missing or unsupported schema version, or invalid objects.
    """
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.MarkedYAMLError as e:
        m = e.problem_mark
        raise ConfigError(f"YAML syntax error: {e.problem}", m.line + 1 if m else None, m.column + 1 if m else None) from e
    if root is None:
        raise ConfigError("empty scenario file", 1, 1)
    top = _mapping(root, _TOP, "")
    for key in ("schema", "domain", "lagrangian", "boundary"):
        if key not in top:
            raise _err(f"missing required key {key!r}", root)
    if top["schema"] != SCHEMA_VERSION:
        node = next(vn for kn, vn in root.value if kn.value == "schema")
        raise _err(f"unsupported schema {top['schema']}; expected {SCHEMA_VERSION}", node)
    nodes = {kn.value: vn for kn, vn in root.value}
    top["domain"] = _kinded(nodes["domain"], _DOMAIN_KEYS, "domain")
    top["lagrangian"] = _kinded(nodes["lagrangian"], _LAGRANGIAN_KEYS, "lagrangian")
    top["boundary"] = _kinded(nodes["boundary"], _BOUNDARY_KEYS, "boundary")
    if "verify" in top and "pde" in top["verify"]:
        top["verify"]["pde"] = _bool(top["verify"]["pde"], "verify.pde")
    trace = top.get("trace", {})
    if "mode" in trace and trace["mode"] not in ("general", "mechanical"):
        raise _err("trace.mode must be 'general' or 'mechanical'", nodes["trace"])
    h = top.get("grid", {}).get("h", 0.05)
    if not h > 0:
        raise _err("grid.h must be positive", nodes["grid"])
    try:
        opts = DEFAULT.with_(**top.get("tolerances", {}))
    except (TypeError, ValueError) as e:
        raise _err(f"tolerances: {e}", nodes.get("tolerances", root)) from e
    sc = Scenario(top, top.get("name", "scenario"), float(h), opts, top.get("threads"), trace, top.get("verify", {}),
                  top.get("skeleton", {}))
    # construct the objects once so that invalid parameters surface as config errors
    for key, build in (("domain", sc.build_domain), ("lagrangian", sc.build_lagrangian), ("boundary", sc.build_boundary)):
        try:
            build()
        except (HJError, ValueError, TypeError, KeyError, np.linalg.LinAlgError) as e:
            if isinstance(e, ConfigError):
                raise
            raise _err(f"{key}: {e}", nodes[key]) from e
    return sc


def load(path) -> Scenario:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e}") from e
    return parse(text)
