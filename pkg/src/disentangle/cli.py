"""Command-line front end: config parsing, oracle checks, evolve/sweep runs and basis dumps.

Configuration is one YAML document with the sections ``model``,
``dynamics``, ``initial``, ``sweep`` and ``output``.  The model keys may
also be given at the top level as a shorthand.  See README.md for the
schema and the CSV column order.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from . import dynamics, fock, hubbard, kernels, steady
from .dynamics import EvolutionParams
from .errors import ConfigError, DisentangleError, ParameterError, UsageError, ValidationError
from .fock import Statistics
from .hubbard import ModelSpec

log = logging.getLogger("disentangle")

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_CONFIG = 2
EXIT_IO = 3

BETA_U_DEFAULT = 100.0
CONVERGED_FRACTION_REQUIRED = 0.9

MODEL_KEYS = ("statistics", "L", "t", "U", "sector", "pairs")
DYNAMICS_KEYS = ("beta", "gamma_H", "gamma_D", "dt", "t_max", "eig_floor", "ss_tol",
                 "thermalization")
INITIAL_KEYS = ("state", "occupation", "perturbation", "seed")
SWEEP_KEYS = ("control", "continuation", "perturbation", "seed", "initial", "workers")
OUTPUT_KEYS = ("dir", "record_every", "formats")
SECTIONS = ("model", "dynamics", "initial", "sweep", "output")


# --------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class InitialConfig:
    state: str = "thermal"  # thermal | ground | fock
    occupation: Optional[tuple] = None
    perturbation: float = 0.0
    seed: int = 0


@dataclass(frozen=True)
class SweepConfig:
    control: tuple
    continuation: bool = True
    perturbation: float = 1e-6
    seed: int = 0
    initial: str = "thermal"
    workers: int = 1


@dataclass(frozen=True)
class OutputConfig:
    dir: Optional[str] = None
    record_every: int = 100
    formats: tuple = ("csv", "json")


@dataclass(frozen=True)
class RunConfig:
    model: ModelSpec
    dynamics: EvolutionParams
    initial: InitialConfig = InitialConfig()
    sweep: Optional[SweepConfig] = None
    output: OutputConfig = OutputConfig()
    defaults_applied: tuple = field(default=(), compare=False)


def _float(key, value, allow_none=False):
    if value is None and allow_none:
        return None
    if isinstance(value, bool):
        raise ConfigError(f"{key}: expected a number, got {value!r}")
    try:
        out = float(value)  # PyYAML reads 1e-14 as a string
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: expected a number, got {value!r}") from None
    if not math.isfinite(out):
        raise ConfigError(f"{key}: must be finite")
    return out


def _int(key, value, allow_none=False):
    if value is None and allow_none:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float, str)):
        raise ConfigError(f"{key}: expected an integer, got {value!r}")
    try:
        f = float(value)
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {value!r}") from None
    if f != int(f):
        raise ConfigError(f"{key}: expected an integer, got {value!r}")
    return int(f)


def _bool(key, value):
    if not isinstance(value, bool):
        raise ConfigError(f"{key}: expected true or false, got {value!r}")
    return value


def _section(doc, name, allowed):
    sec = doc.get(name)
    if sec is None:
        return {}
    if not isinstance(sec, dict):
        raise ConfigError(f"{name}: expected a mapping")
    unknown = sorted(set(map(str, sec)) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key {name}.{unknown[0]}")
    return sec


def _control_grid(value) -> tuple:
    if isinstance(value, dict):
        unknown = sorted(set(value) - {"start", "stop", "step"})
        if unknown:
            raise ConfigError(f"unknown key sweep.control.{unknown[0]}")
        try:
            start, stop, step = (_float(f"sweep.control.{k}", value[k])
                                 for k in ("start", "stop", "step"))
        except KeyError as exc:
            raise ConfigError(f"sweep.control needs {exc.args[0]}") from None
        if step <= 0:
            raise ConfigError("sweep.control.step must be > 0")
        n = int(math.floor((stop - start) / step + 1e-9)) + 1
        if n < 1:
            raise ConfigError("sweep.control: stop < start")
        return tuple(round(start + k * step, 12) for k in range(n))
    if isinstance(value, (int, float, str)) and not isinstance(value, bool):
        return (_float("sweep.control", value),)
    if isinstance(value, list):
        return tuple(_float(f"sweep.control[{i}]", v) for i, v in enumerate(value))
    raise ConfigError("sweep.control: expected a list or {start, stop, step}")


def parse_config(text: str) -> RunConfig:
    """Parse and validate a YAML run configuration.

    Raises
    ------
    ConfigError
        Malformed document, unknown key or wrongly typed value.
    ValidationError
        A physically invalid combination, e.g. ``U = 0``.
    """
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"not valid YAML: {exc}") from None
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigError("configuration must be a mapping")
    doc = {str(k): v for k, v in doc.items()}
    top_model = {k: doc.pop(k) for k in list(doc) if k in MODEL_KEYS}
    unknown = sorted(set(doc) - set(SECTIONS))
    if unknown:
        raise ConfigError(f"unknown key {unknown[0]}")
    if top_model and "model" in doc:
        raise ConfigError("model keys given both at top level and under 'model'")
    if top_model:
        doc["model"] = top_model
    defaults = []

    m = _section(doc, "model", MODEL_KEYS)
    for key in ("statistics", "L", "t", "U"):
        if key not in m:
            raise ConfigError(f"missing required key model.{key}")
    U = _float("model.U", m["U"])
    if U == 0:
        raise ValidationError("model.U must be nonzero (energies are reported over |U|)")
    pairs = m.get("pairs")
    if pairs is not None:
        if not isinstance(pairs, list) or not all(isinstance(p, list) and len(p) == 2 for p in pairs):
            raise ConfigError("model.pairs: expected a list of [j, k] mode pairs")
        pairs = tuple(tuple(_int("model.pairs", j) for j in p) for p in pairs)
    else:
        defaults.append("model.pairs")
    if "sector" not in m:
        defaults.append("model.sector")
    try:
        model = ModelSpec(statistics=m["statistics"], sites=_int("model.L", m["L"]),
                          t=_float("model.t", m["t"]), U=U,
                          sector=_int("model.sector", m.get("sector"), allow_none=True),
                          pairs=pairs)
        modes = model.modes
        for p in model.pairs or ():
            if not all(0 <= j < modes for j in p):
                raise ParameterError(f"model.pairs: pair {list(p)} out of range for {modes} modes")
    except ParameterError as exc:
        raise ValidationError(str(exc)) from None

    d = _section(doc, "dynamics", DYNAMICS_KEYS)
    base = EvolutionParams()
    kw = {}
    for key in DYNAMICS_KEYS:
        if key not in d:
            defaults.append(f"dynamics.{key}")
            continue
        val = d[key]
        if key == "thermalization":
            kw[key] = str(val)
        elif key in ("dt", "ss_tol"):
            kw[key] = _float(f"dynamics.{key}", val, allow_none=True)
        else:
            kw[key] = _float(f"dynamics.{key}", val)
    if "beta" not in kw:
        kw["beta"] = BETA_U_DEFAULT / abs(U)
    try:
        params = replace(base, **kw)
    except ParameterError as exc:
        raise ValidationError(f"dynamics: {exc}") from None

    i = _section(doc, "initial", INITIAL_KEYS)
    ikw = {}
    for key in INITIAL_KEYS:
        if key not in i:
            defaults.append(f"initial.{key}")
    if "state" in i:
        ikw["state"] = str(i["state"])
        if ikw["state"] not in ("thermal", "ground", "fock"):
            raise ConfigError("initial.state must be thermal, ground or fock")
    if "occupation" in i and i["occupation"] is not None:
        if not isinstance(i["occupation"], list):
            raise ConfigError("initial.occupation: expected a list (n_1, ..., n_M)")
        ikw["occupation"] = tuple(_int("initial.occupation", v) for v in i["occupation"])
    if "perturbation" in i:
        ikw["perturbation"] = _float("initial.perturbation", i["perturbation"])
    if "seed" in i:
        ikw["seed"] = _int("initial.seed", i["seed"])
    initial = InitialConfig(**ikw)
    if initial.state == "fock" and initial.occupation is None:
        raise ConfigError("initial.occupation is required for state 'fock'")
    if not 0 <= initial.perturbation <= 1e-3:
        raise ValidationError("initial.perturbation must lie in [0, 1e-3]")

    sweep_cfg = None
    if "sweep" in doc and doc["sweep"] is not None:
        s = _section(doc, "sweep", SWEEP_KEYS)
        if "control" not in s:
            raise ConfigError("missing required key sweep.control")
        skw = {"control": _control_grid(s["control"])}
        for key in SWEEP_KEYS[1:]:
            if key not in s:
                defaults.append(f"sweep.{key}")
        if "continuation" in s:
            skw["continuation"] = _bool("sweep.continuation", s["continuation"])
        if "perturbation" in s:
            skw["perturbation"] = _float("sweep.perturbation", s["perturbation"])
        if "seed" in s:
            skw["seed"] = _int("sweep.seed", s["seed"])
        if "initial" in s:
            skw["initial"] = str(s["initial"])
        if "workers" in s:
            skw["workers"] = _int("sweep.workers", s["workers"])
        sweep_cfg = SweepConfig(**skw)
        try:
            _sweep_spec(sweep_cfg, params)
        except ParameterError as exc:
            raise ValidationError(f"sweep: {exc}") from None
        if sweep_cfg.workers < 1:
            raise ValidationError("sweep.workers must be >= 1")

    o = _section(doc, "output", OUTPUT_KEYS)
    okw = {}
    for key in OUTPUT_KEYS:
        if key not in o:
            defaults.append(f"output.{key}")
    if o.get("dir") is not None:
        okw["dir"] = str(o["dir"])
    if "record_every" in o:
        okw["record_every"] = _int("output.record_every", o["record_every"])
        if okw["record_every"] < 1:
            raise ValidationError("output.record_every must be >= 1")
    if "formats" in o:
        fmts = o["formats"]
        if not isinstance(fmts, list) or not set(fmts) <= {"csv", "json"}:
            raise ConfigError("output.formats: expected a subset of [csv, json]")
        okw["formats"] = tuple(fmts)
    output = OutputConfig(**okw)

    return RunConfig(model, params, initial, sweep_cfg, output, tuple(defaults))


def resolved_config(cfg: RunConfig) -> dict:
    """Plain-data form of a parsed config with every default written out."""
    m = cfg.model
    out = {
        "model": {"statistics": m.statistics.value, "L": m.sites, "t": m.t, "U": m.U,
                  "sector": m.sector,
                  "pairs": [list(p) for p in m.pairs] if m.pairs is not None else None},
        "dynamics": {k: getattr(cfg.dynamics, k) for k in DYNAMICS_KEYS},
        "initial": {"state": cfg.initial.state,
                    "occupation": list(cfg.initial.occupation) if cfg.initial.occupation else None,
                    "perturbation": cfg.initial.perturbation, "seed": cfg.initial.seed},
        "output": {"dir": cfg.output.dir, "record_every": cfg.output.record_every,
                   "formats": list(cfg.output.formats)},
    }
    if cfg.sweep is not None:
        sw = asdict(cfg.sweep)
        sw["control"] = list(cfg.sweep.control)
        out["sweep"] = sw
    return out


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(resolved_config(cfg), sort_keys=False)


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    return parse_config(text)


# --------------------------------------------------------------------------
# output helpers


def fmt(value) -> str:
    """Shortest round-trip text for CSV cells; ``None`` becomes empty."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(type(obj).__name__)


def write_meta(path: Path, meta: dict) -> None:
    path.write_text(json.dumps(meta, indent=2, default=_json_default) + "\n")


def _out_dir(cfg: RunConfig, out: Optional[str]) -> Path:
    target = out or cfg.output.dir
    if target is None:
        raise UsageError("no output directory: pass --out or set output.dir")
    p = Path(target)
    p.mkdir(parents=True, exist_ok=True)
    return p


# --------------------------------------------------------------------------
# runs


def _sweep_spec(sw: SweepConfig, params: EvolutionParams) -> steady.SweepSpec:
    return steady.SweepSpec(control=sw.control, params=params, continuation=sw.continuation,
                            perturbation=sw.perturbation, seed=sw.seed, initial=sw.initial,
                            workers=sw.workers)


def initial_density(cfg: RunConfig, system, basis) -> np.ndarray:
    ini = cfg.initial
    if ini.state == "fock":
        occ = tuple(ini.occupation)
        if occ not in basis.index:
            raise ValidationError(f"initial.occupation {list(occ)} is not in the model basis")
        rho = np.zeros((basis.dim, basis.dim), dtype=complex)
        k = basis.index[occ]
        rho[k, k] = 1.0
    else:
        beta = np.inf if ini.state == "ground" else cfg.dynamics.beta
        rho = steady.thermal_state(system.H, beta, system.conserved)
    if ini.perturbation > 0:
        rng = np.random.default_rng(ini.seed)
        rho = steady.perturb(rho, ini.perturbation, rng,
                             steady.block_mask(system.conserved, system.dim))
    return rho


def branch_vectors(H):
    """Lowest and highest eigenvectors of ``H`` (floor and ceiling)."""
    w, v = np.linalg.eigh(H)
    return v[:, 0], v[:, -1], v


def branch_occupations(rho, H):
    """``(floor, ceiling, off_branch_total, off_branch_max)`` populations."""
    _, _, v = branch_vectors(H)
    pops = np.real(np.einsum("ij,ik,kj->j", v.conj(), rho, v))
    off = pops[1:-1]
    return (float(pops[0]), float(pops[-1]), float(1.0 - pops[0] - pops[-1]),
            float(off.max()) if off.size else 0.0)


TRAJECTORY_COLUMNS = ("time", "trace", "purity", "energy", "energy_over_U", "total_number",
                      "number_up", "number_down", "q_d_expect", "log_rho_expect", "u_e",
                      "min_eigenvalue")


def cmd_evolve(cfg: RunConfig, out: Optional[str] = None) -> int:
    if cfg.sweep is not None:
        raise UsageError("config has a sweep section; use the sweep command")
    system, basis = hubbard.build_system(cfg.model)
    target = _out_dir(cfg, out)
    rho0 = initial_density(cfg, system, basis)
    params = cfg.dynamics
    t0 = time.perf_counter()
    res = dynamics.evolve(rho0, system, params, record_every=cfg.output.record_every)
    wall = time.perf_counter() - t0
    modes = system.number_ops.shape[0]
    header = list(TRAJECTORY_COLUMNS) + [f"n_{i}" for i in range(modes)] + \
        [f"pair_corr_{i}" for i in range(len(system.pairs))]
    rows = []
    for rec in res.records:
        row = rec.as_row()
        rows.append([row.get(k) for k in header])
    if "csv" in cfg.output.formats:
        write_csv(target / "trajectory.csv", header, rows)
    if "json" in cfg.output.formats:
        write_meta(target / "meta.json", {
            "command": "evolve",
            "config": resolved_config(cfg),
            "defaults_applied": list(cfg.defaults_applied),
            "resolved_dt": res.params.dt,
            "resolved_ss_tol": res.params.ss_tol,
            "termination_reason": res.reason,
            "final_residual": res.residual,
            "final_time": res.time,
            "steps": res.steps,
            "max_trace_drift": res.max_trace_drift,
            "max_hermitian_residual": res.max_hermitian_residual,
            "backend": kernels.BACKEND,
            "wall_time_s": wall,
            "columns": header,
        })
    print(f"evolve: {res.reason} at t={res.time:g} (residual {res.residual:.3e}); "
          f"{len(rows)} rows -> {target}")
    return EXIT_OK


SWEEP_COLUMNS = ("control", "energy", "energy_over_U", "q_d_expect", "u_e", "purity")
SWEEP_TAIL = ("max_off_branch", "residual", "converged", "gamma_D", "floor_occupation",
              "ceiling_occupation", "off_branch_total", "time")


def run_sweep(cfg: RunConfig, seed: Optional[int] = None,
              continuation: Optional[bool] = None):
    sw = cfg.sweep
    if seed is not None:
        sw = replace(sw, seed=seed)
    if continuation is not None:
        sw = replace(sw, continuation=continuation)
    system, basis = hubbard.build_system(cfg.model)
    spec = _sweep_spec(sw, cfg.dynamics)
    ground = float(np.linalg.eigvalsh(system.H)[0])
    result = steady.sweep(spec, system, ground_energy=ground)
    return replace(cfg, sweep=sw), system, result


def sweep_rows(system, result):
    modes = system.number_ops.shape[0]
    header = list(SWEEP_COLUMNS) + [f"n_{i}" for i in range(modes)] + list(SWEEP_TAIL)
    rows = []
    for p in result.points:
        r = p.record
        f, c, off, mx = branch_occupations(p.rho, system.H)
        rows.append([p.control, r.energy, r.energy_over_U, r.q_d_expect, r.u_e, r.purity,
                     *r.per_mode_occupations, mx, p.residual, p.converged, p.gamma_D, f, c,
                     off, p.time])
    return header, rows


def cmd_sweep(cfg: RunConfig, out: Optional[str] = None, seed: Optional[int] = None,
              continuation: Optional[bool] = None) -> int:
    if cfg.sweep is None:
        raise UsageError("config has no sweep section")
    target = _out_dir(cfg, out)
    t0 = time.perf_counter()
    cfg, system, result = run_sweep(cfg, seed, continuation)
    wall = time.perf_counter() - t0
    header, rows = sweep_rows(system, result)
    frac = result.converged_fraction()
    if "csv" in cfg.output.formats:
        write_csv(target / "sweep.csv", header, rows)
    if "json" in cfg.output.formats:
        write_meta(target / "meta.json", {
            "command": "sweep",
            "config": resolved_config(cfg),
            "defaults_applied": list(cfg.defaults_applied),
            "critical_estimate": result.critical_estimate,
            "converged_fraction": frac,
            "reasons": [p.reason for p in result.points],
            "backend": kernels.BACKEND,
            "wall_time_s": wall,
            "columns": header,
        })
    crit = result.critical_estimate
    print(f"sweep: {len(rows)} points, {frac:.0%} converged, critical estimate "
          f"{'none' if crit is None else format(crit, '.4g')} -> {target}")
    if frac < CONVERGED_FRACTION_REQUIRED:
        print(f"sweep: fewer than {CONVERGED_FRACTION_REQUIRED:.0%} of points converged",
              file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def operator_matrix(name: str, cfg: RunConfig, basis) -> np.ndarray:
    if name == "H":
        return hubbard.build_hamiltonian(cfg.model, basis)
    if name.startswith("N") and name[1:].lstrip("_").isdigit():
        return fock.number_matrix(basis, int(name[1:].lstrip("_")))
    raise UsageError(f"unknown operator {name!r} (use H or N<mode>)")


def cmd_basis(cfg: RunConfig, operator: Optional[str] = None, stream=None) -> int:
    stream = stream or sys.stdout
    basis = hubbard.model_basis(cfg.model)
    print(f"# {cfg.model.statistics.value} basis, {basis.modes} modes, dim {basis.dim}",
          file=stream)
    for k, occ in enumerate(basis.states):
        print(f"{k:4d}  {fock.format_state(occ)}", file=stream)
    if operator:
        mat = operator_matrix(operator, cfg, basis)
        print(f"# {operator} (rows/columns in basis order)", file=stream)
        for row in mat:
            cells = []
            for z in row:
                cells.append(fmt(z.real) if z.imag == 0 else f"{fmt(z.real)}{z.imag:+}j")
            print(" ".join(cells), file=stream)
    return EXIT_OK


# --------------------------------------------------------------------------
# oracle checks


@dataclass
class CheckResult:
    name: str
    value: float
    tol: float
    passed: bool


def _check(name, value, tol, exact=False):
    value = float(value)
    ok = value == 0 if exact else value <= tol
    return CheckResult(name, value, tol, bool(ok and math.isfinite(value)))


def _checks_fock():
    out = []
    fb = fock.enumerate_basis(4, Statistics.FERMION)
    out.append(_check("fermion anticommutators exact (16-dim)", fock.check_algebra(fb)["max"],
                      0.0, exact=True))
    bb = fock.enumerate_basis(2, Statistics.BOSON, cap=4)
    out.append(_check("boson commutators, cap 4 projected", fock.check_algebra(bb)["max"], 1e-12))
    dims = (len(fock.enumerate_basis(2, "boson", cap=2, sector=2)) == 3
            and len(fb) == 16 and len(fock.enumerate_basis(4, "fermion", sector=2)) == 6)
    out.append(_check("basis sizes 3 / 16 / 6", 0.0 if dims else 1.0, 0.0, exact=True))
    return out


def _checks_hubbard():
    out = []
    worst_m = worst_e = worst_u = 0.0
    for ratio in (-1e-2, -1.0, -10.0):
        U = -1.0
        t = ratio * U
        spec = ModelSpec("boson", 2, t, U, sector=2)
        H = hubbard.build_bose_hubbard(spec, hubbard.model_basis(spec))
        ref = hubbard.two_site_bose_reference(t, U)
        worst_m = max(worst_m, np.abs(H - ref.matrix()).max())
        w = np.sort(np.linalg.eigvalsh(H))
        e = np.sort(ref.energies)
        worst_e = max(worst_e, (np.abs(w - e) / np.abs(e).max()).max())
        d = ref.unitary.T @ H @ ref.unitary
        worst_u = max(worst_u, np.abs(d - np.diag(np.diag(d))).max() / np.linalg.norm(H))
    out.append(_check("two-site Bose matrix (ring closure)", worst_m, 1e-12))
    out.append(_check("Bose closed-form spectrum, relative", worst_e, 1e-12))
    out.append(_check("u diagonalizes H_B", worst_u, 1e-12))
    spec = ModelSpec("boson", 2, 0.01, -1.0, sector=2)
    H = hubbard.build_bose_hubbard(spec, hubbard.model_basis(spec))
    out.append(_check("U<0 ground energy is E_3",
                      abs(np.linalg.eigvalsh(H)[0] - hubbard.two_site_bose_reference(0.01, -1).energies[2]),
                      1e-12))
    fspec = ModelSpec("fermion", 2, 0.0, 1.0)
    w = np.linalg.eigvalsh(hubbard.build_fermi_hubbard(fspec, hubbard.model_basis(fspec)))
    groups = (np.isclose(w, -0.5).sum(), np.isclose(w, 0).sum(), np.isclose(w, 0.5).sum())
    out.append(_check("Fermi t=0 spectrum 4/8/4", 0.0 if groups == (4, 8, 4) else 1.0, 0.0,
                      exact=True))
    fspec = ModelSpec("fermion", 2, 1e-3, 1.0)
    fbasis = hubbard.model_basis(fspec)
    H = hubbard.build_fermi_hubbard(fspec, fbasis)
    ref = hubbard.two_site_fermi_reference(1e-3, 1.0)
    w = np.linalg.eigvalsh(H)
    res_f = np.linalg.norm(H @ ref.floor_state - w[0] * ref.floor_state)
    res_c = np.linalg.norm(H @ ref.ceiling_state - w[-1] * ref.ceiling_state)
    out.append(_check("floor/ceiling are extremal eigenvectors", max(res_f, res_c), 1e-10))
    out.append(_check("floor energy -U/(2 cos 2alpha)", abs(w[0] - ref.floor_energy), 1e-12))
    comm = 0.0
    for sp in (spec, fspec):
        b = hubbard.model_basis(sp)
        Hm = hubbard.build_hamiltonian(sp, b)
        for diag in hubbard.conserved_number_diagonals(sp, b).values():
            Nm = np.diag(diag)
            comm = max(comm, np.abs(Hm @ Nm - Nm @ Hm).max())
    out.append(_check("[H, N] = 0 for conserved numbers", comm, 1e-12))
    return out


def _checks_dynamics():
    out = []
    worst = 0.0
    null = 0.0
    for sp in (ModelSpec("boson", 2, 0.01, -1.0, sector=2), ModelSpec("fermion", 2, 1e-3, 1.0)):
        system, basis = hubbard.build_system(sp)
        params = EvolutionParams(beta=BETA_U_DEFAULT / abs(sp.U))
        rho0 = steady.thermal_state(system.H, params.beta)
        rhs = dynamics.mme_rhs(rho0, system.H, params, system.pairs, system.number_ops)
        worst = max(worst, np.linalg.norm(rhs) / params.gamma_H)
        for k in range(basis.dim):
            rho = np.zeros((basis.dim, basis.dim), dtype=complex)
            rho[k, k] = 1
            null = max(null, np.abs(dynamics.disentanglement_operator(
                rho, system.pairs, system.number_ops)).max())
    out.append(_check("thermal fixed point |rhs| / gamma_H", worst, 1e-10))
    out.append(_check("Q_D vanishes on Fock states", null, 1e-14))

    spec = ModelSpec("boson", 2, 0.01, -1.0, sector=2)
    system, _ = hubbard.build_system(replace(spec, pairs=((0, 0), (1, 1), (0, 1))))
    ref = hubbard.two_site_bose_reference(spec.t, spec.U)
    err = 0.0
    for x in np.linspace(-0.7, 0.7, 5):
        for phi in np.linspace(0, np.pi / 2, 5):
            a, b, c = 0.3 + 0.2j, -0.1 + 0.4j, 0.2 - 0.1j
            rho = hubbard.bose_parametrized_rho(x, phi, a, b, c)
            e = dynamics.expect(system.H, rho) / spec.U
            q = dynamics.pair_correlations(rho, system.pairs, system.number_ops)
            target = hubbard.bose_q11_closed_form(x, phi)
            err = max(err, abs(e - hubbard.bose_energy_closed_form(ref.tau, phi, a, b)),
                      abs(q[0] - target), abs(q[1] - target), abs(-q[2] - target))
    out.append(_check("Bose <H_B>/U and <Q_11> closed forms", err, 1e-12))

    fsys, _ = hubbard.build_system(ModelSpec("fermion", 2, 1e-3, 1.0))
    fref = hubbard.two_site_fermi_reference(1e-3, 1.0)
    err = 0.0
    for phi in np.linspace(0, np.pi / 2, 5):
        for vphi in np.linspace(0, np.pi / 2, 5):
            rho = dynamics.pure_state(hubbard.fermi_superposition(fref, phi, vphi))
            e = dynamics.expect(fsys.H, rho)
            nu = dynamics.pair_correlations(rho, fsys.pairs, fsys.number_ops)
            err = max(err, abs(e - hubbard.fermi_energy_closed_form(fref.alpha, phi)),
                      np.abs(nu - hubbard.fermi_nu_closed_form(fref.alpha, phi, vphi)).max())
    out.append(_check("Fermi superposition energy and nu (corrected forms)", err, 1e-12))
    return out


CHECK_GROUPS: dict = {"fock": _checks_fock, "hubbard": _checks_hubbard,
                      "dynamics": _checks_dynamics}


def run_checks() -> list:
    results = []
    for group, fn in CHECK_GROUPS.items():
        try:
            results.extend(fn())
        except Exception as exc:  # a crashing oracle is a failed oracle
            results.append(CheckResult(f"{group}: {type(exc).__name__}: {exc}",
                                       float("nan"), 0.0, False))
    return results


def cmd_check(stream=None) -> int:
    stream = stream or sys.stdout
    results = run_checks()
    width = max(len(r.name) for r in results)
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{status}  {r.name:<{width}}  {r.value:.3e}  (tol {r.tol:.0e})", file=stream)
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} checks passed", file=stream)
    return EXIT_FAIL if failed else EXIT_OK


# --------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="disentangle",
                                description="Nonlinear disentanglement master equation for "
                                            "two-site Hubbard rings.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("check", help="run the closed-form oracle suite")
    e = sub.add_parser("evolve", help="integrate one trajectory")
    e.add_argument("--config", required=True)
    e.add_argument("--out")
    s = sub.add_parser("sweep", help="steady states over a control grid")
    s.add_argument("--config", required=True)
    s.add_argument("--out")
    s.add_argument("--seed", type=int)
    s.add_argument("--no-continuation", action="store_true")
    b = sub.add_parser("basis", help="list the model basis")
    b.add_argument("--config", required=True)
    b.add_argument("--operator", help="also print an operator matrix (H or N<mode>)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "check":
            return cmd_check()
        cfg = load_config(args.config)
        if args.command == "evolve":
            return cmd_evolve(cfg, args.out)
        if args.command == "sweep":
            return cmd_sweep(cfg, args.out, args.seed,
                             False if args.no_continuation else None)
        return cmd_basis(cfg, args.operator)
    except (ConfigError, ValidationError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except DisentangleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
