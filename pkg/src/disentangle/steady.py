"""Thermal states, steady-state search, control sweeps and transition detection."""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.linalg import expm

from . import dynamics
from .dynamics import EvolutionParams, ObservableRecord, System
from .errors import IntegrationError, NumericError, ParameterError

log = logging.getLogger(__name__)


def sector_labels(conserved: dict, dim: int) -> np.ndarray:
    """Integer label per basis state; equal labels share all conserved numbers."""
    if not conserved:
        return np.zeros(dim, dtype=int)
    keys = np.stack([np.round(np.asarray(d, dtype=float), 9) for d in conserved.values()], axis=1)
    _, labels = np.unique(keys, axis=0, return_inverse=True)
    return labels.reshape(-1)


def thermal_state(H, beta: float, conserved: Optional[dict] = None) -> np.ndarray:
    """Gibbs state ``exp(-beta H) / Tr exp(-beta H)``.

    ``beta = inf`` gives the normalized projector onto the ground space.
    With ``conserved`` (name -> diagonal) each number sector is
    diagonalized on its own, so the result is exactly block-diagonal.
    """
    if beta < 0:
        raise ParameterError("beta must be >= 0")
    H = np.asarray(H, dtype=complex)
    H = 0.5 * (H + H.conj().T)
    labels = sector_labels(conserved or {}, H.shape[0])
    blocks = []
    try:
        for lab in np.unique(labels):
            idx = np.flatnonzero(labels == lab)
            w, v = np.linalg.eigh(H[np.ix_(idx, idx)])
            blocks.append((idx, w, v))
    except np.linalg.LinAlgError as exc:
        raise NumericError(str(exc)) from exc
    w_all = np.concatenate([b[1] for b in blocks])
    wmin = w_all.min()
    tol = 1e-12 * max(1.0, np.abs(w_all).max())
    rho = np.zeros_like(H)
    total = 0.0
    for idx, w, v in blocks:
        shifted = w - wmin
        if np.isinf(beta):
            weights = (shifted <= tol).astype(float)
        else:
            weights = np.exp(-beta * shifted)
        total += weights.sum()
        rho[np.ix_(idx, idx)] = (v * weights) @ v.conj().T
    rho /= total
    return 0.5 * (rho + rho.conj().T)


def block_mask(conserved: dict, dim: int) -> np.ndarray:
    """Boolean mask of matrix elements between states with equal conserved numbers."""
    mask = np.ones((dim, dim), dtype=bool)
    for diag in conserved.values():
        diag = np.asarray(diag)
        mask &= np.isclose(diag[:, None], diag[None, :])
    return mask


def perturb(rho, scale: float, rng: np.random.Generator,
            mask: Optional[np.ndarray] = None) -> np.ndarray:
    """Add a random Hermitian, trace-free, block-preserving kick of norm ``scale``.

    A direct additive kick would push zero eigenvalues negative, so for
    rank-deficient states the kick is realized as a unitary rotation
    ``exp(-iK) rho exp(iK)`` scaled to the same Frobenius norm; this keeps
    the spectrum and therefore positivity.
    """
    rho = np.asarray(rho, dtype=complex)
    d = rho.shape[0]
    if scale == 0:
        return rho.copy()
    if mask is None:
        mask = np.ones((d, d), dtype=bool)
    a = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    k = 0.5 * (a + a.conj().T) * mask
    k -= np.trace(k) / d * np.eye(d)
    if np.linalg.eigvalsh(rho).min() > 2 * scale:
        kick = k * (scale / np.linalg.norm(k))
        return rho + kick
    comm = k @ rho - rho @ k
    cnorm = np.linalg.norm(comm)
    if cnorm < 1e-300:
        return rho.copy()
    k *= scale / cnorm
    u = expm(-1j * k)
    out = u @ rho @ u.conj().T
    out = 0.5 * (out + out.conj().T)
    return np.where(mask, out, 0.0)


@dataclass
class SteadyState:
    rho: np.ndarray
    record: ObservableRecord
    residual: float
    reason: str
    time: float

    @property
    def converged(self) -> bool:
        return self.reason == "steady_state"


def find_steady_state(rho0, system: System, params: EvolutionParams,
                      chunk: int = 2000) -> SteadyState:
    """Integrate until the right-hand side vanishes to ``ss_tol`` or ``t_max``."""
    res = dynamics.evolve(rho0, system, params, record_every=chunk, record=False)
    rec = dynamics.observables(res.rho, system, res.params, res.time)
    return SteadyState(res.rho, rec, res.residual, res.reason, res.time)


@dataclass(frozen=True)
class SweepSpec:
    """Grid of ``gamma_D / (beta |U| gamma_H)`` values plus sweep protocol."""

    control: tuple
    params: EvolutionParams = EvolutionParams()
    continuation: bool = True
    perturbation: float = 1e-6
    seed: int = 0
    initial: str = "thermal"  # or "ground"
    workers: int = 1

    def __post_init__(self):
        c = np.asarray(self.control, dtype=float)
        object.__setattr__(self, "control", tuple(float(x) for x in c))
        if c.size == 0:
            raise ParameterError("control grid is empty")
        if c.size > 1 and not (np.all(np.diff(c) > 0) or np.all(np.diff(c) < 0)):
            raise ParameterError("control grid must be strictly monotone")
        if np.any(c < 0):
            raise ParameterError("control values must be >= 0")
        if not 0 <= self.perturbation <= 1e-3:
            raise ParameterError("perturbation scale must lie in [0, 1e-3]")
        if self.initial not in ("thermal", "ground"):
            raise ParameterError("initial must be 'thermal' or 'ground'")

    def gamma_D(self, control: float, U: float) -> float:
        p = self.params
        return control * p.beta * abs(U) * p.gamma_H


@dataclass
class SweepPoint:
    control: float
    gamma_D: float
    record: ObservableRecord
    reason: str
    residual: float
    time: float
    rho: np.ndarray = field(repr=False)

    @property
    def converged(self) -> bool:
        return self.reason == "steady_state"


@dataclass
class SweepResult:
    points: list
    critical_estimate: Optional[float] = None

    @property
    def control(self) -> np.ndarray:
        return np.array([p.control for p in self.points])

    @property
    def energy(self) -> np.ndarray:
        return np.array([p.record.energy for p in self.points])

    def converged_fraction(self) -> float:
        return float(np.mean([p.converged for p in self.points]))


def initial_state(system: System, spec: SweepSpec) -> np.ndarray:
    beta = np.inf if spec.initial == "ground" else spec.params.beta
    return thermal_state(system.H, beta, system.conserved)


def _solve_point(rho0, system, spec, control):
    if system.U is None:
        raise ParameterError("sweeps need the interaction scale U on the system")
    gd = spec.gamma_D(control, system.U)
    params = replace(spec.params, gamma_D=gd)
    try:
        ss = find_steady_state(rho0, system, params)
    except IntegrationError as exc:
        log.warning("control %g: %s", control, exc)
        rec = dynamics.observables(rho0, system, params, exc.time)
        return SweepPoint(control, gd, rec, f"error: {exc}", float("nan"), exc.time, rho0)
    log.info("control %.4g: %s after t=%.3g (residual %.2e), E=%.8g",
             control, ss.reason, ss.time, ss.residual, ss.record.energy)
    return SweepPoint(control, gd, ss.record, ss.reason, ss.residual, ss.time, ss.rho)


def sweep(spec: SweepSpec, system: System, ground_energy: Optional[float] = None,
          threshold_fraction: float = 0.05) -> SweepResult:
    """Steady states along the control grid.

    With continuation each point starts from the previous steady state plus
    a seeded random kick; otherwise every point starts from the kicked
    initial state and points may run on ``spec.workers`` threads.
    """
    rng = np.random.default_rng(spec.seed)
    mask = block_mask(system.conserved, system.dim)
    # exactly block-diagonal: above a transition the flow amplifies even
    # ~1e-17 weight in other number sectors
    base = initial_state(system, spec)
    points = []
    if spec.continuation:
        rho = base
        for c in spec.control:
            rho0 = perturb(rho, spec.perturbation, rng, mask)
            pt = _solve_point(rho0, system, spec, c)
            points.append(pt)
            rho = pt.rho
    else:
        starts = [perturb(base, spec.perturbation, rng, mask) for _ in spec.control]
        if spec.workers > 1:
            with ThreadPoolExecutor(spec.workers) as pool:
                points = list(pool.map(lambda a: _solve_point(a[0], system, spec, a[1]),
                                       zip(starts, spec.control)))
        else:
            points = [_solve_point(r, system, spec, c) for r, c in zip(starts, spec.control)]
    result = SweepResult(points)
    if ground_energy is None:
        ground_energy = float(np.linalg.eigvalsh(system.H)[0])
    result.critical_estimate = detect_transition(result, ground_energy, system.U,
                                                 threshold_fraction)
    return result


def detect_transition(result: SweepResult, ground_energy: float, U: float,
                      threshold_fraction: float = 0.05) -> Optional[float]:
    """First control value where ``|<H> - E_ground|`` exceeds ``fraction * |U|``.

    The crossing is linearly interpolated between the bracketing grid points.
    """
    if not result.points:
        raise ParameterError("empty sweep result")
    thr = threshold_fraction * abs(U)
    xs = [p.control for p in result.points]
    dev = [abs(p.record.energy - ground_energy) for p in result.points]
    for k, (x, e) in enumerate(zip(xs, dev)):
        if e > thr:
            if k == 0:
                return x
            x0, e0 = xs[k - 1], dev[k - 1]
            return x0 + (thr - e0) * (x - x0) / (e - e0)
    return None


def effective_free_energy(record: ObservableRecord, params: EvolutionParams,
                          low_temperature: Optional[bool] = None) -> float:
    """``<U_e> = <U_H> + beta^-1 (gamma_D / gamma_H) <Q_D>`` for a recorded state.

    ``low_temperature=True`` uses ``<U_H> = <H>``; the default follows
    ``params.thermalization``.
    """
    return dynamics.effective_free_energy_value(record.energy, record.log_rho_expect,
                                                record.q_d_expect, params, low_temperature)
