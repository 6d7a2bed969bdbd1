"""Nonlinear master equation with thermalization and disentanglement.

The equation of motion is ::

    d rho / dt = (i / hbar) [rho, H] - Theta rho - rho Theta + 2 <Theta> rho
    Theta      = gamma_H Q_H + gamma_D Q_D

with ``Q_H = beta H + log rho`` (``thermalization="full"``) or
``Q_H = beta H`` (``thermalization="low_temperature"``), and
``Q_D = sum_pairs Q_p <Q_p>``, ``Q_p = N_j N_k - <N_j><N_k>``.

Units: ``hbar = k_B = 1``.  The rate called ``gamma_T`` on the figure axes
of the source model is the thermalization rate ``gamma_H``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from . import kernels
from .errors import IntegrationError, NumericError, ParameterError, ValidationError

log = logging.getLogger(__name__)

THERMALIZATION_MODES = ("full", "low_temperature")

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-9
PSD_FLOOR = -1e-9
# evolve() aborts on these
TRACE_DRIFT_LIMIT = 1e-6


@dataclass(frozen=True)
class EvolutionParams:
    """Rates, temperature and integrator settings.

    ``dt=None`` and ``ss_tol=None`` select the scale-aware defaults from
    :meth:`resolve`.
    """

    beta: float = 100.0
    gamma_H: float = 1.0
    gamma_D: float = 0.0
    dt: Optional[float] = None
    t_max: float = 200.0
    eig_floor: float = 1e-14
    ss_tol: Optional[float] = None
    thermalization: str = "full"
    hbar: float = 1.0

    def __post_init__(self):
        if self.beta < 0:
            raise ParameterError("beta must be >= 0")
        if self.gamma_H < 0 or self.gamma_D < 0:
            raise ParameterError("rates must be >= 0")
        if self.dt is not None and not self.dt > 0:
            raise ParameterError("dt must be > 0")
        if self.t_max < 0:
            raise ParameterError("t_max must be >= 0")
        if not 0 < self.eig_floor <= 1e-6:
            raise ParameterError("eig_floor must lie in (0, 1e-6]")
        if self.ss_tol is not None and not self.ss_tol > 0:
            raise ParameterError("ss_tol must be > 0")
        if self.thermalization not in THERMALIZATION_MODES:
            raise ParameterError(f"thermalization must be one of {THERMALIZATION_MODES}")
        if self.hbar != 1.0:
            raise ParameterError("hbar is fixed to 1")

    def default_dt(self, H) -> float:
        hnorm = np.linalg.norm(H)
        dt = 0.01 / max(self.gamma_H, self.gamma_D, 1.0)
        if hnorm > 0:
            dt = min(dt, 0.05 / hnorm)
        return dt

    def resolve(self, H, rho0) -> "EvolutionParams":
        """Copy with ``dt`` and ``ss_tol`` filled in."""
        dt = self.dt if self.dt is not None else self.default_dt(H)
        ss_tol = self.ss_tol
        if ss_tol is None:
            ss_tol = 1e-10 * max(self.gamma_H, 1.0) * np.linalg.norm(rho0)
        return replace(self, dt=dt, ss_tol=ss_tol)


@dataclass(frozen=True)
class System:
    """Hamiltonian plus the operators the dissipator needs.

    ``number_ops`` holds the diagonals of the mode number operators as an
    array of shape ``(modes, dim)``; ``conserved`` maps names to diagonals
    of conserved particle numbers.
    """

    H: np.ndarray
    number_ops: np.ndarray
    pairs: tuple
    U: Optional[float] = None
    conserved: dict = field(default_factory=dict)
    labels: Optional[tuple] = None

    def __post_init__(self):
        H = np.ascontiguousarray(self.H, dtype=complex)
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "number_ops", number_diagonals(self.number_ops, H.shape[0]))
        pairs = tuple((int(a), int(b)) for a, b in self.pairs)
        m = self.number_ops.shape[0]
        for a, b in pairs:
            if not (0 <= a < m and 0 <= b < m):
                raise ParameterError(f"pair {(a, b)} out of range for {m} modes")
        object.__setattr__(self, "pairs", pairs)

    @property
    def dim(self) -> int:
        return self.H.shape[0]

    @property
    def pair_array(self) -> np.ndarray:
        return np.array(self.pairs, dtype=np.intp).reshape(-1, 2)


def number_diagonals(number_ops, dim: Optional[int] = None) -> np.ndarray:
    """Coerce number operators (matrices or diagonals) to a real ``(modes, dim)`` array."""
    ops = [np.asarray(op) for op in number_ops]
    rows = []
    for op in ops:
        if op.ndim == 2:
            if np.abs(op - np.diag(np.diag(op))).max(initial=0) > 0:
                raise ParameterError("number operators must be diagonal in the working basis")
            op = np.diag(op)
        rows.append(np.real(op).astype(float))
    arr = np.array(rows, dtype=float)
    if dim is not None and arr.size and arr.shape[1] != dim:
        raise ParameterError("number operator dimension does not match H")
    return np.ascontiguousarray(arr)


# --------------------------------------------------------------------------
# density-matrix helpers


def check_density_matrix(rho, herm_tol=HERMITIAN_TOL, trace_tol=TRACE_TOL,
                         psd_floor=PSD_FLOOR) -> np.ndarray:
    """Validate ``rho`` and return it as a complex array."""
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValidationError("density matrix must be square")
    if not np.isfinite(rho).all():
        raise ValidationError("density matrix has non-finite entries")
    if np.abs(rho - rho.conj().T).max() > herm_tol:
        raise ValidationError("density matrix is not Hermitian")
    if abs(np.trace(rho) - 1) > trace_tol:
        raise ValidationError(f"trace {np.trace(rho).real!r} differs from 1")
    if np.linalg.eigvalsh(rho).min() < psd_floor:
        raise ValidationError("density matrix is not positive semidefinite")
    return rho


def pure_state(psi) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    psi = psi / np.linalg.norm(psi)
    return np.outer(psi, psi.conj())


def _eigh(mat):
    try:
        return np.linalg.eigh(mat)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"eigendecomposition failed: {exc}") from exc


def clamped_log(rho, eig_floor: float) -> np.ndarray:
    """``log rho`` with eigenvalues raised to ``eig_floor`` first."""
    w, v = _eigh(rho)
    return (v * np.log(np.maximum(w, eig_floor))) @ v.conj().T


def expect(op, rho) -> float:
    """``Tr(op rho)``; a 1-D ``op`` is read as a diagonal."""
    op = np.asarray(op)
    if op.ndim == 1:
        return float(np.real(op @ np.diag(rho)))
    return float(np.real(np.sum(op.T * rho)))


# --------------------------------------------------------------------------
# operators


def thermalization_operator(rho, H, beta, eig_floor=1e-14, mode="full") -> np.ndarray:
    """``beta H + log rho`` (or ``beta H`` in the low-temperature mode)."""
    out = beta * np.asarray(H, dtype=complex)
    if mode == "full":
        out = out + clamped_log(rho, eig_floor)
    elif mode != "low_temperature":
        raise ParameterError(f"unknown thermalization mode {mode!r}")
    return 0.5 * (out + out.conj().T)


def pair_correlations(rho, pairs, number_ops) -> np.ndarray:
    """``<N_j N_k> - <N_j><N_k>`` for each pair."""
    n = number_diagonals(number_ops)
    p = np.real(np.diag(rho))
    occ = n @ p
    return np.array([(n[a] * n[b]) @ p - occ[a] * occ[b] for a, b in pairs])


def disentanglement_diagonal(rho, pairs, number_ops) -> np.ndarray:
    """Diagonal of ``Q_D``; the operator is diagonal in the occupation basis."""
    n = number_diagonals(number_ops)
    p = np.real(np.diag(rho))
    occ = n @ p
    out = np.zeros(rho.shape[0])
    for a, b in pairs:
        if not (0 <= a < len(n) and 0 <= b < len(n)):
            raise ParameterError(f"pair {(a, b)} out of range")
        prod = n[a] * n[b]
        q = prod @ p - occ[a] * occ[b]
        out += q * (prod - occ[a] * occ[b])
    return out


def disentanglement_operator(rho, pairs, number_ops) -> np.ndarray:
    """``Q_D = sum_p Q_p <Q_p>`` with unit weights."""
    return np.diag(disentanglement_diagonal(rho, pairs, number_ops)).astype(complex)


def theta(rho, H, params: EvolutionParams, pairs, number_ops) -> np.ndarray:
    d = np.asarray(H).shape[0]
    out = np.zeros((d, d), dtype=complex)
    if params.gamma_H:
        out += params.gamma_H * thermalization_operator(
            rho, H, params.beta, params.eig_floor, params.thermalization)
    if params.gamma_D:
        out += params.gamma_D * np.diag(disentanglement_diagonal(rho, pairs, number_ops))
    return out


def mme_rhs(rho, H, params: EvolutionParams, pairs, number_ops) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    H = np.asarray(H, dtype=complex)
    th = theta(rho, H, params, pairs, number_ops)
    comm = rho @ H - H @ rho
    th_rho = th @ rho
    mean = np.real(np.trace(th_rho))
    return (1j / params.hbar) * comm - th_rho - rho @ th + 2 * mean * rho


def frozen_theta_rhs(rho, H, th, hbar: float = 1.0) -> np.ndarray:
    """Right-hand side with a fixed operator ``th`` in place of the state-dependent one."""
    th_rho = th @ rho
    mean = np.real(np.trace(th_rho))
    return (1j / hbar) * (rho @ H - H @ rho) - th_rho - rho @ th + 2 * mean * rho


def rk4(f, rho, dt: float) -> np.ndarray:
    """Plain RK4 step of ``drho/dt = f(rho)``, Hermitized and trace-renormalized."""
    k1 = f(rho)
    k2 = f(rho + 0.5 * dt * k1)
    k3 = f(rho + 0.5 * dt * k2)
    k4 = f(rho + dt * k3)
    out = rho + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    out = 0.5 * (out + out.conj().T)
    return out / np.real(np.trace(out))


def step_rk4(rho, H, params: EvolutionParams, pairs, number_ops, dt=None) -> np.ndarray:
    """One classical Runge-Kutta step, re-Hermitized and trace-renormalized."""
    dt = params.dt if dt is None else dt
    if dt is None or not dt > 0:
        raise ParameterError("dt must be > 0")
    system = System(H, number_ops, pairs)
    out = kernels.run_steps(np.asarray(rho, dtype=complex), system, params, dt, 1, 0.0)
    if out.status == kernels.STATUS_NONFINITE:
        raise IntegrationError(f"non-finite state after one step; try dt < {dt:g}")
    return out.rho


# --------------------------------------------------------------------------
# observables


@dataclass
class ObservableRecord:
    time: float
    trace: float
    purity: float
    energy: float
    energy_over_U: Optional[float]
    total_number: float
    number_up: Optional[float]
    number_down: Optional[float]
    q_d_expect: float
    log_rho_expect: float
    u_e: Optional[float]
    per_mode_occupations: tuple
    pair_correlations: tuple
    min_eigenvalue: float
    populations: tuple = ()

    def as_row(self) -> dict:
        row = {k: getattr(self, k) for k in (
            "time", "trace", "purity", "energy", "energy_over_U", "total_number",
            "number_up", "number_down", "q_d_expect", "log_rho_expect", "u_e",
            "min_eigenvalue")}
        for i, v in enumerate(self.per_mode_occupations):
            row[f"n_{i}"] = v
        for i, v in enumerate(self.pair_correlations):
            row[f"pair_corr_{i}"] = v
        return row


def effective_free_energy_value(energy, log_rho_expect, q_d, params: EvolutionParams,
                                low_temperature: Optional[bool] = None) -> float:
    """``<U_H> + beta^-1 (gamma_D / gamma_H) <Q_D>``."""
    if params.gamma_H <= 0:
        raise ParameterError("effective free energy needs gamma_H > 0")
    if low_temperature is None:
        low_temperature = params.thermalization == "low_temperature"
    helmholtz = energy
    if not low_temperature:
        helmholtz = energy + log_rho_expect / params.beta
    return helmholtz + (params.gamma_D / params.gamma_H) * q_d / params.beta


def observables(rho, system: System, params: EvolutionParams, time: float = 0.0) -> ObservableRecord:
    rho = np.asarray(rho, dtype=complex)
    n = system.number_ops
    p = np.real(np.diag(rho))
    occ = n @ p
    corr = pair_correlations(rho, system.pairs, n)
    q_d = float(np.sum(corr ** 2))
    w, v = _eigh(0.5 * (rho + rho.conj().T))
    log_rho = float(np.sum(w * np.log(np.maximum(w, params.eig_floor))))
    energy = expect(system.H, rho)
    e_over_u = energy / abs(system.U) if system.U else None
    u_e = None
    if params.gamma_H > 0 and params.beta > 0:
        u_e = effective_free_energy_value(energy, log_rho, q_d, params)
    up = down = None
    if "N_up" in system.conserved:
        up = float(system.conserved["N_up"] @ p)
        down = float(system.conserved["N_down"] @ p)
    return ObservableRecord(
        time=float(time),
        trace=float(np.real(np.trace(rho))),
        purity=float(np.real(np.vdot(rho, rho))),
        energy=energy,
        energy_over_U=e_over_u,
        total_number=float(occ.sum()),
        number_up=up,
        number_down=down,
        q_d_expect=q_d,
        log_rho_expect=log_rho,
        u_e=u_e,
        per_mode_occupations=tuple(float(x) for x in occ),
        pair_correlations=tuple(float(x) for x in corr),
        min_eigenvalue=float(w.min()),
        populations=tuple(float(x) for x in p),
    )


# --------------------------------------------------------------------------
# integration


@dataclass
class EvolveResult:
    records: list
    rho: np.ndarray
    reason: str  # "steady_state" or "t_max"
    residual: float
    time: float
    steps: int
    max_trace_drift: float
    max_hermitian_residual: float
    params: EvolutionParams

    @property
    def converged(self) -> bool:
        return self.reason == "steady_state"


def _monitor(rho, time, dim):
    purity = float(np.real(np.vdot(rho, rho)))
    if not (1.0 / dim - 1e-9 <= purity <= 1 + 1e-9):
        raise IntegrationError(f"purity {purity!r} left [1/dim, 1] at t={time:g}", time)
    wmin = np.linalg.eigvalsh(rho).min()
    if wmin < PSD_FLOOR:
        raise IntegrationError(f"negative eigenvalue {wmin:.3e} at t={time:g}", time)


def evolve(rho0, system: System, params: EvolutionParams, record_every: int = 100,
           callback: Optional[Callable[[ObservableRecord], None]] = None,
           record: bool = True) -> EvolveResult:
    """Integrate until ``t_max`` or until ``||rhs||_F < ss_tol``.

    Observables are recorded at t=0, every ``record_every`` steps, and at
    the final state.  Raises :class:`IntegrationError` if the trace drifts
    by more than 1e-6 within a step, the purity leaves ``[1/dim, 1]``, an
    eigenvalue drops below -1e-9, or the state becomes non-finite.
    """
    if record_every < 1:
        raise ParameterError("record_every must be >= 1")
    rho = check_density_matrix(rho0, herm_tol=1e-10).copy()
    params = params.resolve(system.H, rho)
    dt = params.dt
    total_steps = int(np.floor(params.t_max / dt + 1e-9))
    records = []

    def emit(state, time):
        rec = observables(state, system, params, time)
        if record:
            records.append(rec)
        if callback is not None:
            callback(rec)

    if total_steps == 0:
        res = float(np.linalg.norm(mme_rhs(rho, system.H, params, system.pairs, system.number_ops)))
        reason = "steady_state" if res < params.ss_tol else "t_max"
        return EvolveResult(records, rho, reason, res, 0.0, 0, 0.0, 0.0, params)

    emit(rho, 0.0)
    steps = 0
    max_drift = max_herm = 0.0
    reason = "t_max"
    residual = float("nan")
    while steps < total_steps:
        chunk = min(record_every, total_steps - steps)
        out = kernels.run_steps(rho, system, params, dt, chunk, params.ss_tol)
        steps += out.steps
        time = steps * dt
        max_drift = max(max_drift, out.max_trace_drift)
        max_herm = max(max_herm, out.max_hermitian_residual)
        residual = out.residual
        if out.status == kernels.STATUS_NONFINITE:
            raise IntegrationError(f"non-finite state at t={time:g}; try a smaller dt", time)
        if out.max_trace_drift > TRACE_DRIFT_LIMIT:
            raise IntegrationError(f"trace drift {out.max_trace_drift:.3e} at t={time:g}", time)
        rho = out.rho
        _monitor(rho, time, system.dim)
        if out.status == kernels.STATUS_CONVERGED:
            reason = "steady_state"
            break
        if steps < total_steps:
            emit(rho, time)
    if reason == "t_max":
        residual = float(np.linalg.norm(mme_rhs(rho, system.H, params, system.pairs,
                                                system.number_ops)))
        if residual < params.ss_tol:
            reason = "steady_state"
    emit(rho, steps * dt)
    log.debug("evolve stopped after %d steps (%s), residual %.3e", steps, reason, residual)
    return EvolveResult(records, rho, reason, residual, steps * dt, steps,
                        max_drift, max_herm, params)
