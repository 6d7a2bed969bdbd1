"""Bose- and Fermi-Hubbard ring Hamiltonians and two-site closed forms.

Fermionic modes are indexed ``m = 2*l + s`` for site ``l`` (0-based) and
spin ``s`` (0 = up, 1 = down).  The periodic hopping sum runs over
``l = 1..L`` with wraparound, so for ``L = 2`` the single bond is counted
twice (effective hopping ``2t``).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import fock
from .errors import ParameterError
from .fock import OccupationBasis, Statistics


@dataclass(frozen=True)
class ModelSpec:
    statistics: Statistics
    sites: int
    t: float
    U: float
    sector: Optional[int] = None
    pairs: Optional[tuple] = None  # override for interaction_pairs, 0-based modes

    def __post_init__(self):
        object.__setattr__(self, "statistics", Statistics.parse(self.statistics))
        if self.sites < 2:
            raise ParameterError("the ring needs at least 2 sites")
        if not (np.isfinite(self.t) and np.isfinite(self.U)):
            raise ParameterError("t and U must be finite")
        if self.statistics is Statistics.BOSON and self.sector is None:
            raise ParameterError("Bose-Hubbard needs a particle-number sector")
        if self.statistics is Statistics.FERMION and self.sector is not None:
            raise ParameterError("Fermi-Hubbard uses the full Fock space (sector must be None)")
        if self.pairs is not None:
            object.__setattr__(self, "pairs", tuple(tuple(int(m) for m in p) for p in self.pairs))

    @property
    def modes(self) -> int:
        return self.sites if self.statistics is Statistics.BOSON else 2 * self.sites


def fermi_mode(site: int, spin: int) -> int:
    """Mode index for 0-based ``site`` and ``spin`` (0 up, 1 down)."""
    return 2 * site + spin


def model_basis(spec: ModelSpec, cap: Optional[int] = None) -> OccupationBasis:
    """Working basis for a model; boson cap defaults to the sector size."""
    if spec.statistics is Statistics.BOSON:
        return fock.enumerate_basis(spec.sites, Statistics.BOSON,
                                    cap=cap or max(spec.sector, 1), sector=spec.sector)
    return fock.enumerate_basis(2 * spec.sites, Statistics.FERMION)


def _ring_bonds(L):
    return [(l, (l + 1) % L) for l in range(L)]


def _check_basis(spec, basis):
    if basis.statistics is not spec.statistics or basis.modes != spec.modes:
        raise ParameterError("basis does not match the model")


def build_bose_hubbard(spec: ModelSpec, basis: OccupationBasis) -> np.ndarray:
    if spec.statistics is not Statistics.BOSON:
        raise ParameterError("build_bose_hubbard needs boson statistics")
    _check_basis(spec, basis)
    H = np.zeros((basis.dim, basis.dim), dtype=complex)
    for l, r in _ring_bonds(spec.sites):
        H -= spec.t * (fock.hopping_matrix(basis, l, r) + fock.hopping_matrix(basis, r, l))
    n = basis.occupations.astype(float)
    H += np.diag(0.5 * spec.U * (n * (n - 1)).sum(axis=1))
    return H


def build_fermi_hubbard(spec: ModelSpec, basis: OccupationBasis) -> np.ndarray:
    if spec.statistics is not Statistics.FERMION:
        raise ParameterError("build_fermi_hubbard needs fermion statistics")
    _check_basis(spec, basis)
    H = np.zeros((basis.dim, basis.dim), dtype=complex)
    for s in (0, 1):
        for l, r in _ring_bonds(spec.sites):
            i, j = fermi_mode(l, s), fermi_mode(r, s)
            H -= spec.t * (fock.hopping_matrix(basis, i, j) + fock.hopping_matrix(basis, j, i))
    n = basis.occupations.astype(float)
    up, dn = n[:, 0::2], n[:, 1::2]
    H += np.diag(spec.U * ((up - 0.5) * (dn - 0.5)).sum(axis=1))
    return H


def build_hamiltonian(spec: ModelSpec, basis: OccupationBasis) -> np.ndarray:
    if spec.statistics is Statistics.BOSON:
        return build_bose_hubbard(spec, basis)
    return build_fermi_hubbard(spec, basis)


def interaction_pairs(spec: ModelSpec) -> list:
    """Mode pairs ``(j', j'')`` whose number products appear in the interaction.

    Bosons: on-site ``(l, l)``; fermions: ``(l up, l down)``.  A ``pairs``
    override on the model is returned verbatim.
    """
    if spec.pairs is not None:
        return [tuple(p) for p in spec.pairs]
    if spec.statistics is Statistics.BOSON:
        return [(l, l) for l in range(spec.sites)]
    return [(fermi_mode(l, 0), fermi_mode(l, 1)) for l in range(spec.sites)]


def conserved_number_diagonals(spec: ModelSpec, basis: OccupationBasis) -> dict:
    """Diagonals of the conserved number operators (``N``, or ``N_up``/``N_down``)."""
    n = basis.occupations.astype(float)
    if spec.statistics is Statistics.BOSON:
        return {"N": n.sum(axis=1)}
    return {"N_up": n[:, 0::2].sum(axis=1), "N_down": n[:, 1::2].sum(axis=1)}


# --------------------------------------------------------------------------
# two-site references


@dataclass(frozen=True)
class TwoSiteBoseReference:
    t: float
    U: float
    tau: float
    alpha: float
    energies: tuple
    unitary: np.ndarray

    def matrix(self) -> np.ndarray:
        """The 3x3 two-boson Hamiltonian in the ``|0,2>, |1,1>, |2,0>`` basis."""
        tau = self.tau
        return self.U * np.array([[1.0, -tau, 0.0], [-tau, 0.0, -tau], [0.0, -tau, 1.0]])


def two_site_bose_reference(t: float, U: float) -> TwoSiteBoseReference:
    """Closed-form spectrum and eigenvector matrix of the two-site, two-boson model.

    ``alpha`` is taken on the branch ``atan2(-2^(3/2) tau, 1)`` so that the
    columns of ``unitary`` line up with ``E_1, E_2, E_3`` for either sign of U.
    """
    if U == 0:
        raise ParameterError("U must be nonzero")
    tau = 2 ** 1.5 * t / U
    alpha = np.arctan2(-(2 ** 1.5) * tau, 1.0)
    root = np.sqrt(1.0 + (8.0 * t / U) ** 2)
    energies = (U * (1 - root) / 2, U, U * (1 + root) / 2)
    s, c = np.sin(alpha / 2), np.cos(alpha / 2)
    r2 = np.sqrt(2.0)
    u = np.array([[s / r2, 1 / r2, c / r2],
                  [-c, 0.0, s],
                  [s / r2, -1 / r2, c / r2]])
    return TwoSiteBoseReference(t, U, tau, alpha, energies, u)


def bose_parametrized_rho(x: float, phi: float, a: complex = 0, b: complex = 0,
                          c: complex = 0) -> np.ndarray:
    """The 3x3 matrix with diagonal ``cos^2(x+pi/4) cos^2 phi, sin^2 phi,
    sin^2(x+pi/4) cos^2 phi`` and off-diagonals ``a/2, b/2, c/2``.

    Unit trace and Hermitian for any arguments; positivity is not enforced
    since the closed forms below are linear in the entries.
    """
    d1 = np.cos(x + np.pi / 4) ** 2 * np.cos(phi) ** 2
    d3 = np.sin(x + np.pi / 4) ** 2 * np.cos(phi) ** 2
    return np.array([[d1, a / 2, c / 2],
                     [np.conj(a) / 2, np.sin(phi) ** 2, b / 2],
                     [np.conj(c) / 2, np.conj(b) / 2, d3]], dtype=complex)


def bose_energy_closed_form(tau, phi, a, b) -> float:
    """``<H_B>/U = cos^2 phi - tau Re(a + b)``."""
    return float(np.cos(phi) ** 2 - tau * np.real(a + b))


def bose_q11_closed_form(x, phi) -> float:
    """``<Q_11> = <Q_22> = -<Q_12> = (1 - sin^2(2x) cos^2 phi) cos^2 phi``."""
    return float((1 - np.sin(2 * x) ** 2 * np.cos(phi) ** 2) * np.cos(phi) ** 2)


# Fermi floor/ceiling states are built from the two singly-occupied
# configurations (1 up + 2 down, 1 down + 2 up) and the two doublon
# configurations (both on site 1, both on site 2).  Signs are chosen so the
# hopping element between the two combinations is +4t, which makes the
# mixing angle alpha = atan(-8t/U)/2 produce exact eigenvectors.
_SINGLES = ((0, 3), (1, 2))
_DOUBLONS = ((0, 1), (2, 3))


@dataclass(frozen=True)
class TwoSiteFermiReference:
    t: float
    U: float
    alpha: float
    floor_state: np.ndarray
    ceiling_state: np.ndarray

    @property
    def floor_energy(self) -> float:
        return -self.U / (2 * np.cos(2 * self.alpha))

    @property
    def ceiling_energy(self) -> float:
        return self.U / (2 * np.cos(2 * self.alpha))


def _pair_vector(basis, modes_pairs, signs):
    v = np.zeros(basis.dim, dtype=complex)
    for (i, j), sgn in zip(modes_pairs, signs):
        occ = [0] * basis.modes
        occ[i] = occ[j] = 1
        v[basis.index[tuple(occ)]] = sgn
    return v / np.sqrt(2.0)


def fermi_pair_states(basis: Optional[OccupationBasis] = None):
    """Normalized symmetric single-occupancy and doublon vectors ``(S, D)``."""
    if basis is None:
        basis = fock.enumerate_basis(4, Statistics.FERMION)
    # the singlet needs opposite signs on the two single-occupancy states;
    # the doublon sign fixes <D|H|S> = +4t
    single = _pair_vector(basis, _SINGLES, (1, -1))
    doublon = _pair_vector(basis, _DOUBLONS, (-1, -1))
    return single, doublon


def two_site_fermi_reference(t: float, U: float) -> TwoSiteFermiReference:
    if U == 0:
        raise ParameterError("U must be nonzero")
    alpha = 0.5 * np.arctan(-8.0 * t / U)
    single, doublon = fermi_pair_states()
    floor = np.cos(alpha) * single + np.sin(alpha) * doublon
    ceiling = np.sin(alpha) * single - np.cos(alpha) * doublon
    return TwoSiteFermiReference(t, U, alpha, floor, ceiling)


def fermi_superposition(ref: TwoSiteFermiReference, phi: float, varphi: float) -> np.ndarray:
    """``e^{i varphi} cos(phi)|f> + e^{-i varphi} sin(phi)|c>``."""
    return (np.exp(1j * varphi) * np.cos(phi) * ref.floor_state
            + np.exp(-1j * varphi) * np.sin(phi) * ref.ceiling_state)


def fermi_energy_closed_form(alpha, phi) -> float:
    """``<psi|H_F|psi>/U = -cos(2 phi) / (2 cos(2 alpha))`` for the superposition.

    At ``phi = 0`` this is the floor energy ``-U / (2 cos 2alpha)``.
    """
    return float(-np.cos(2 * phi) / (2 * np.cos(2 * alpha)))


def fermi_nu_closed_form(alpha, phi, varphi) -> float:
    """On-site pair correlation of the superposition (same on both sites).

    ``nu = (1/4) cos(2 alpha) (-tan(2 alpha) sin(2 phi) cos(2 varphi) - cos(2 phi))``
    with the floor and ceiling states of :func:`two_site_fermi_reference`.
    """
    return float(0.25 * np.cos(2 * alpha) * (-np.tan(2 * alpha) * np.sin(2 * phi)
                                             * np.cos(2 * varphi) - np.cos(2 * phi)))


def compact_label(occ: Sequence[int]) -> str:
    """Occupation string ``n_M ... n_1`` without separators."""
    return "".join(str(n) for n in reversed(occ))


def build_system(spec: ModelSpec):
    """Hamiltonian, number operators and interaction pairs bundled for dynamics."""
    from .dynamics import System

    basis = model_basis(spec)
    return System(
        H=build_hamiltonian(spec, basis),
        number_ops=fock.number_diagonals(basis),
        pairs=tuple(interaction_pairs(spec)),
        U=spec.U,
        conserved=conserved_number_diagonals(spec, basis),
        labels=tuple(fock.format_state(s) for s in basis.states),
    ), basis
