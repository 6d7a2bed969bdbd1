"""Occupation-number bases and ladder operators for bosons and fermions.

Occupation vectors are stored as tuples ``(n_1, ..., n_M)`` indexed from
mode 0.  Basis states are ordered lexicographically in ``(n_M, ..., n_1)``,
and :func:`format_state` prints them in that order, so the two-boson
two-mode basis reads ``|0,2>, |1,1>, |2,0>``.

Fermionic signs follow ``a_i^dag |n> = (-1)^(sum_{k<i} n_k) |n + e_i>``.
All matrices are dense ``complex128`` arrays.
"""
from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from math import comb
from typing import Optional, Sequence

import numpy as np

from .errors import ParameterError, UsageError, ValidationError


class Statistics(enum.Enum):
    BOSON = "boson"
    FERMION = "fermion"

    @classmethod
    def parse(cls, value) -> "Statistics":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ParameterError(f"unknown statistics {value!r}") from None


@dataclass(frozen=True)
class OccupationBasis:
    """Enumerated many-particle occupation states.

    Use :func:`enumerate_basis` rather than constructing this directly.
    """

    modes: int
    statistics: Statistics
    cap: int
    states: tuple
    sector: Optional[int] = None
    index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "index", {s: k for k, s in enumerate(self.states)})

    @property
    def dim(self) -> int:
        return len(self.states)

    @property
    def occupations(self) -> np.ndarray:
        """Integer array of shape ``(dim, modes)``."""
        return np.array(self.states, dtype=np.int64).reshape(self.dim, self.modes)

    def __len__(self):
        return len(self.states)


def _check_mode(basis: OccupationBasis, mode: int) -> None:
    if not 0 <= mode < basis.modes:
        raise ParameterError(f"mode {mode} out of range for {basis.modes} modes")


def enumerate_basis(modes: int, statistics, cap: int = 1,
                    sector: Optional[int] = None) -> OccupationBasis:
    """Enumerate all occupation vectors with ``0 <= n_i <= cap``.

    Parameters
    ----------
    modes : int
        Number of single-particle modes ``M``.
    statistics : Statistics or str
        Fermions force ``cap = 1``.
    cap : int
        Per-mode occupancy cap for bosons.
    sector : int, optional
        Restrict to states with ``sum(n) == sector``.
    """
    statistics = Statistics.parse(statistics)
    if modes < 1:
        raise ParameterError("modes must be >= 1")
    if statistics is Statistics.FERMION:
        cap = 1
    elif cap < 1:
        raise ParameterError("boson cap must be >= 1")
    if sector is not None and not 0 <= sector <= modes * cap:
        raise ParameterError(f"sector {sector} outside [0, {modes * cap}]")

    states = []
    for rev in itertools.product(range(cap + 1), repeat=modes):
        # rev = (n_M, ..., n_1) in lexicographic order
        occ = tuple(reversed(rev))
        if sector is None or sum(occ) == sector:
            states.append(occ)
    return OccupationBasis(modes, statistics, cap, tuple(states), sector)


def expected_dimension(modes: int, statistics, cap: int = 1,
                       sector: Optional[int] = None) -> int:
    """Closed-form basis size (binomials / bounded compositions)."""
    statistics = Statistics.parse(statistics)
    if statistics is Statistics.FERMION:
        cap = 1
    if sector is None:
        return (cap + 1) ** modes
    # inclusion-exclusion over modes exceeding the cap
    total = 0
    for k in range(modes + 1):
        rest = sector - k * (cap + 1)
        if rest < 0:
            break
        total += (-1) ** k * comb(modes, k) * comb(rest + modes - 1, modes - 1)
    return total


def format_state(occ: Sequence[int]) -> str:
    """Ket label ``|n_M,...,n_1>``."""
    return "|" + ",".join(str(n) for n in reversed(occ)) + ">"


def _fermion_sign(occ, mode) -> int:
    return -1 if sum(occ[:mode]) % 2 else 1


def creation_matrix(basis: OccupationBasis, mode: int,
                    target: Optional[OccupationBasis] = None) -> np.ndarray:
    """Matrix of ``a_mode^dag``.

    On a sector-restricted basis the operator leaves the sector, so the
    destination basis has to be passed explicitly as ``target``; the
    result is then the rectangular ``target.dim x basis.dim`` block.
    """
    _check_mode(basis, mode)
    if target is None:
        if basis.sector is not None:
            raise UsageError("creation leaves the particle-number sector; pass target=")
        target = basis
    out = np.zeros((target.dim, basis.dim), dtype=complex)
    fermion = basis.statistics is Statistics.FERMION
    for col, occ in enumerate(basis.states):
        n = occ[mode]
        if n >= basis.cap:
            continue
        new = occ[:mode] + (n + 1,) + occ[mode + 1:]
        row = target.index.get(new)
        if row is None:
            continue
        out[row, col] = _fermion_sign(occ, mode) if fermion else np.sqrt(n + 1)
    return out


def annihilation_matrix(basis: OccupationBasis, mode: int,
                        target: Optional[OccupationBasis] = None) -> np.ndarray:
    """Matrix of ``a_mode``; the adjoint of :func:`creation_matrix`."""
    if target is None:
        return creation_matrix(basis, mode).conj().T
    return creation_matrix(target, mode, target=basis).conj().T


def number_matrix(basis: OccupationBasis, mode: int) -> np.ndarray:
    _check_mode(basis, mode)
    return np.diag(basis.occupations[:, mode].astype(complex))


def number_diagonals(basis: OccupationBasis) -> np.ndarray:
    """Real array ``(modes, dim)`` holding the diagonal of every ``N_i``."""
    return basis.occupations.T.astype(float).copy()


def hopping_matrix(basis: OccupationBasis, i: int, j: int) -> np.ndarray:
    """Matrix of ``a_i^dag a_j``, built directly so it works inside a sector."""
    _check_mode(basis, i)
    _check_mode(basis, j)
    if i == j:
        return number_matrix(basis, i)
    out = np.zeros((basis.dim, basis.dim), dtype=complex)
    fermion = basis.statistics is Statistics.FERMION
    for col, occ in enumerate(basis.states):
        nj = occ[j]
        if nj == 0 or occ[i] >= basis.cap:
            continue
        mid = list(occ)
        mid[j] -= 1
        amp = _fermion_sign(occ, j) if fermion else np.sqrt(nj)
        amp = amp * (_fermion_sign(mid, i) if fermion else np.sqrt(mid[i] + 1))
        mid[i] += 1
        out[basis.index[tuple(mid)], col] = amp
    return out


def apply_single_particle_unitary(basis: OccupationBasis, coeffs) -> list:
    """Transformed creation operators ``b_j^dag = sum_i coeffs[i, j] a_i^dag``.

    ``coeffs[i, j]`` is the overlap of old mode ``i`` with new mode ``j``.
    """
    coeffs = np.asarray(coeffs, dtype=complex)
    m = basis.modes
    if coeffs.shape != (m, m):
        raise ParameterError(f"coeffs must be {m}x{m}")
    if np.abs(coeffs.conj().T @ coeffs - np.eye(m)).max() > 1e-12:
        raise ValidationError("coefficient matrix is not unitary to 1e-12")
    creators = [creation_matrix(basis, i) for i in range(m)]
    return [sum(coeffs[i, j] * creators[i] for i in range(m)) for j in range(m)]


def _bracket(a, b, fermion):
    return a @ b + b @ a if fermion else a @ b - b @ a


def check_algebra(basis: OccupationBasis, project: bool = True) -> dict:
    """Residuals of the canonical (anti)commutation relations.

    Returns the largest absolute entry of ``[a_i, a_j]``, ``[a_i^dag,
    a_j^dag]`` and ``[a_i, a_j^dag] - delta_ij`` over all mode pairs.  For
    bosons with ``project=True`` the identities are evaluated only on
    states where every mode is strictly below the cap, since truncation
    breaks them on the boundary.
    """
    if basis.sector is not None:
        raise UsageError("check_algebra needs a basis without sector restriction")
    fermion = basis.statistics is Statistics.FERMION
    creators = [creation_matrix(basis, i) for i in range(basis.modes)]
    annihilators = [c.conj().T for c in creators]
    if fermion or not project:
        keep = np.arange(basis.dim)
    else:
        keep = np.flatnonzero((basis.occupations < basis.cap).all(axis=1))
    sub = np.ix_(keep, keep)
    eye = np.eye(len(keep))
    res = {"a_a": 0.0, "adag_adag": 0.0, "a_adag": 0.0}
    for i in range(basis.modes):
        for j in range(basis.modes):
            r_aa = np.abs(_bracket(annihilators[i], annihilators[j], fermion)[sub]).max(initial=0)
            r_cc = np.abs(_bracket(creators[i], creators[j], fermion)[sub]).max(initial=0)
            r_ac = np.abs(_bracket(annihilators[i], creators[j], fermion)[sub]
                          - (i == j) * eye).max(initial=0)
            res["a_a"] = max(res["a_a"], float(r_aa))
            res["adag_adag"] = max(res["adag_adag"], float(r_cc))
            res["a_adag"] = max(res["a_adag"], float(r_ac))
    res["max"] = max(res.values())
    return res
