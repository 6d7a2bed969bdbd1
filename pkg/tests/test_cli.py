import csv
import json

import numpy as np
import pytest

from disentangle import cli, fock, hubbard
from disentangle.errors import ConfigError, ValidationError

BOSE_SWEEP = """
model: {statistics: boson, L: 2, t: 0.01, U: -1.0, sector: 2}
dynamics: {thermalization: low_temperature, t_max: 100}
sweep:
  control: {start: 0.0, stop: 0.2, step: 0.1}
  initial: ground
"""

FERMI_EVOLVE = """
statistics: fermion
L: 2
t: 0.001
U: 1.0
dynamics: {gamma_D: 20, dt: 0.001, t_max: 0.2, ss_tol: 1.0e-300}
initial: {state: fock, occupation: [1, 0, 0, 1]}
output: {record_every: 50}
"""


def write(tmp_path, text, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_parse_defaults_and_roundtrip():
    cfg = cli.parse_config(BOSE_SWEEP)
    assert cfg.dynamics.beta == 100.0  # 100 / |U|
    assert cfg.sweep.control == (0.0, 0.1, 0.2)
    assert "dynamics.beta" in cfg.defaults_applied
    assert cli.parse_config(cli.dump_config(cfg)) == cfg


def test_beta_default_scales_with_U():
    cfg = cli.parse_config("statistics: fermion\nL: 2\nt: 0.1\nU: 4.0\n")
    assert cfg.dynamics.beta == 25.0


def test_numeric_strings_are_coerced():
    cfg = cli.parse_config("statistics: fermion\nL: 2\nt: 0.1\nU: 1\n"
                           "dynamics: {eig_floor: 1e-14, ss_tol: '1e-11'}\n")
    assert cfg.dynamics.eig_floor == 1e-14 and cfg.dynamics.ss_tol == 1e-11


@pytest.mark.parametrize("text,err,fragment", [
    ("statistics: boson\nL: 2\nt: 1\nU: 0\nsector: 2\n", ValidationError, "U"),
    ("statistics: boson\nL: 2\nt: 1\nU: 1\nsector: 2\nbogus: 1\n", ConfigError, "bogus"),
    ("model: {statistics: boson, L: 2, t: 1, U: 1, sector: 2, x: 1}\n", ConfigError, "model.x"),
    ("statistics: boson\nL: 2\nt: 1\nU: 1\n", ValidationError, "sector"),
    ("statistics: fermion\nL: 2\nt: one\nU: 1\n", ConfigError, "model.t"),
    ("statistics: fermion\nL: 2\nt: 1\nU: 1\npairs: [[0, 9]]\n", ValidationError, "pair"),
    ("statistics: fermion\nL: 2\nt: 1\nU: 1\ninitial: {state: fock}\n", ConfigError, "occupation"),
    ("statistics: fermion\nL: 2\nt: 1\nU: 1\nsweep: {control: [0.1, 0.1]}\n", ValidationError,
     "monotone"),
    ("[1, 2]", ConfigError, "mapping"),
])
def test_config_errors(text, err, fragment):
    with pytest.raises(err, match=fragment):
        cli.parse_config(text)


def test_check_passes(capsys):
    assert cli.main(["check"]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and "checks passed" in out


def test_check_detects_broken_sign_rule(monkeypatch, capsys):
    monkeypatch.setattr(fock, "_fermion_sign", lambda occ, mode: 1)
    assert cli.main(["check"]) == 1
    assert "FAIL  fermion anticommutators" in capsys.readouterr().out


def test_check_detects_open_chain(monkeypatch, capsys):
    monkeypatch.setattr(hubbard, "_ring_bonds", lambda L: [(l, l + 1) for l in range(L - 1)])
    assert cli.main(["check"]) == 1
    assert "FAIL  two-site Bose matrix" in capsys.readouterr().out


def test_evolve_outputs(tmp_path):
    out = tmp_path / "run"
    assert cli.main(["evolve", "--config", write(tmp_path, FERMI_EVOLVE), "--out", str(out)]) == 0
    with open(out / "trajectory.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 5
    assert float(rows[0]["purity"]) == 1.0
    assert (out / "trajectory.csv").read_bytes().count(b"\r\n") == 6
    meta = json.loads((out / "meta.json").read_text())
    assert meta["termination_reason"] == "t_max"
    assert meta["config"]["initial"]["occupation"] == [1, 0, 0, 1]


def test_sweep_outputs_and_reproducible(tmp_path):
    cfg = write(tmp_path, BOSE_SWEEP)
    assert cli.main(["sweep", "--config", cfg, "--out", str(tmp_path / "a")]) == 0
    assert cli.main(["sweep", "--config", cfg, "--out", str(tmp_path / "b")]) == 0
    a = (tmp_path / "a" / "sweep.csv").read_bytes()
    assert a == (tmp_path / "b" / "sweep.csv").read_bytes()
    header = a.split(b"\r\n")[0].decode().split(",")
    assert header[:6] == ["control", "energy", "energy_over_U", "q_d_expect", "u_e", "purity"]
    meta = json.loads((tmp_path / "a" / "meta.json").read_text())
    assert meta["critical_estimate"] is None
    assert meta["converged_fraction"] == 1.0


def test_sweep_seed_override_changes_start(tmp_path):
    cfg = write(tmp_path, BOSE_SWEEP)
    cli.main(["sweep", "--config", cfg, "--out", str(tmp_path / "a"), "--seed", "1"])
    meta = json.loads((tmp_path / "a" / "meta.json").read_text())
    assert meta["config"]["sweep"]["seed"] == 1


def test_sweep_reports_unconverged(tmp_path):
    text = BOSE_SWEEP.replace("t_max: 100", "t_max: 0.01")
    assert cli.main(["sweep", "--config", write(tmp_path, text), "--out", str(tmp_path / "o")]) == 1


def test_basis_listing(tmp_path, capsys):
    cfg = write(tmp_path, BOSE_SWEEP)
    assert cli.main(["basis", "--config", cfg, "--operator", "H"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[1].split() == ["0", "|0,2>"]
    assert len(out) == 1 + 3 + 1 + 3


def test_usage_errors(tmp_path, capsys):
    assert cli.main(["evolve", "--config", str(tmp_path / "missing.yaml"), "--out", "x"]) == 2
    cfg = write(tmp_path, BOSE_SWEEP)
    assert cli.main(["evolve", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert cli.main(["basis", "--config", cfg, "--operator", "Z"]) == 2
    assert "error:" in capsys.readouterr().err


def test_fmt_shortest_roundtrip():
    assert cli.fmt(0.1) == "0.1"
    assert cli.fmt(None) == ""
    assert cli.fmt(np.float64(1 / 3)) == repr(1 / 3)
    assert cli.fmt(True) == "1"


def test_branch_occupations_sum_to_one():
    system, _ = hubbard.build_system(hubbard.ModelSpec("fermion", 2, 1e-3, 1.0))
    rho = np.eye(16) / 16
    f, c, off, mx = cli.branch_occupations(rho, system.H)
    assert f + c + off == pytest.approx(1.0)
    assert mx == pytest.approx(1 / 16)
