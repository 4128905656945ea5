import json
import os
import subprocess
import sys

import numpy as np
import pytest

from hjdirichlet import cli, singular
from hjdirichlet.errors import InvariantViolation
from hjdirichlet.solver import ValueField

ROOT = os.path.join(os.path.dirname(__file__), "..")
DISK = """\
schema: 1
name: small-disk
domain: {kind: disk}
lagrangian: {kind: mechanical, A: [[1.0, 0.0], [0.0, 1.0]], V: {c: -1.0}}
boundary: {kind: constant, value: 0.0}
grid: {h: 0.25}
trace: {mode: mechanical, seed_points: [[0.0, 0.0]]}
verify: {samples: 200, rho: 0.2}
"""


@pytest.fixture
def disk_cfg(tmp_path):
    p = tmp_path / "disk.yaml"
    p.write_text(DISK)
    return str(p)


def run(*argv):
    return cli.main(list(argv))


def test_solve_writes_field_and_is_reproducible(disk_cfg, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run("solve", "--config", disk_cfg, "--out", str(a), "--threads", "1") == 0
    assert run("solve", "--config", disk_cfg, "--out", str(b), "--threads", "2") == 0
    text = (a / "field.csv").read_text()
    assert text.splitlines()[0] == "x1,x2,u,T,ystar_arc,singular"
    assert text == (b / "field.csv").read_text()
    fld = ValueField.load(a / "field.csv")
    assert np.allclose(fld.u, np.sqrt(2) * (1 - np.linalg.norm(fld.points, axis=1)), atol=1e-6)
    meta = json.loads((a / "field.csv.json").read_text())
    assert meta["scenario"] == "small-disk"


def test_trace_and_skeleton(disk_cfg, tmp_path):
    out = tmp_path / "t"
    assert run("trace", "--config", disk_cfg, "--out", str(out)) == 0
    summary = json.loads((out / "trace.json").read_text())
    assert summary["chains"][0]["verdict"] == "CriticalPoint"
    assert (out / "chain_0.csv").read_text().startswith("k,s_k,x1,x2,u,pmin_norm,d_boundary,verdict")
    assert run("trace", "--config", disk_cfg, "--out", str(out), "--seed-point", "0.0,0.1", "--mode", "general") == 0
    assert run("skeleton", "--config", disk_cfg, "--out", str(out)) == 0
    stats = json.loads((out / "skeleton.json").read_text())
    row = (out / "skeleton.csv").read_text().splitlines()[1]
    assert stats["points"] == 1 and [float(v) for v in row.split(",")] == [0.0, 0.0]


def test_config_errors_exit_2(disk_cfg, tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text(DISK + "colour: red\n")
    assert run("solve", "--config", str(bad), "--out", str(tmp_path / "o")) == 2
    assert run("solve", "--config", str(tmp_path / "missing.yaml"), "--out", str(tmp_path / "o")) == 2
    assert run("trace", "--config", disk_cfg, "--out", str(tmp_path / "o"), "--seed-point", "3,0") == 2
    assert run("trace", "--config", disk_cfg, "--out", str(tmp_path / "o"), "--seed-point", "a,b") == 2


def test_compatibility_failure_exit_3(tmp_path):
    cfg = os.path.join(ROOT, "scenarios", "supercritical_fail.yaml")
    assert run("solve", "--config", cfg, "--out", str(tmp_path)) == 3
    steep = tmp_path / "steep.yaml"
    steep.write_text(DISK.replace("{kind: constant, value: 0.0}", "{kind: affine, c: 0.0, a: [2.0, 0.0]}"))
    assert run("solve", "--config", str(steep), "--out", str(tmp_path)) == 3


def test_verify_exit_codes(disk_cfg, tmp_path):
    out = tmp_path / "v"
    assert run("solve", "--config", disk_cfg, "--out", str(out)) == 0
    path = out / "field.csv"
    # a field that is not a viscosity solution, saved with a valid checksum: verify fails
    fld = ValueField.load(path)
    fld.u = 2.0 * fld.u
    bad = tmp_path / "scaled.csv"
    fld.save(bad, {})
    assert run("verify", "--config", disk_cfg, "--out", str(out), "--field", str(bad)) == 1
    rep = json.loads((out / "verify.json").read_text())
    assert not rep["pass"] and not next(c for c in rep["checks"] if c["name"] == "pde_residual")["pass"]
    # tampered bytes: corrupted field
    text = path.read_text().splitlines(keepends=True)
    text[3] = text[3].replace("0", "1", 1)
    path.write_text("".join(text))
    assert run("verify", "--config", disk_cfg, "--out", str(out), "--field", str(path)) == 4


def test_boundary_hit_exit_5(disk_cfg, tmp_path, monkeypatch):
    def hit(*a, **k):
        raise InvariantViolation("BoundaryHit", "chain reached the collar")

    monkeypatch.setattr(singular, "trace_many", hit)
    assert run("trace", "--config", disk_cfg, "--out", str(tmp_path)) == 5


def test_console_entry_point(disk_cfg, tmp_path):
    r = subprocess.run([sys.executable, "-m", "hjdirichlet.cli", "solve", "--config", disk_cfg, "--out", str(tmp_path)],
                       capture_output=True, text=True, env=dict(os.environ, HJD_THREADS="1"))
    assert r.returncode == 0, r.stderr
    r = subprocess.run([sys.executable, "-m", "hjdirichlet.cli", "solve", "--out", str(tmp_path)], capture_output=True)
    assert r.returncode == 2  # argparse usage error
