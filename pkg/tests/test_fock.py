import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from disentangle import fock
from disentangle.errors import ParameterError
from disentangle.fock import Statistics


def test_statistics_parse():
    assert Statistics.parse("Boson") is Statistics.BOSON
    assert Statistics.parse(Statistics.FERMION) is Statistics.FERMION
    with pytest.raises(ParameterError):
        Statistics.parse("anyon")


@pytest.mark.parametrize("modes,stats,cap,sector,dim", [
    (2, "boson", 2, 2, 3),
    (2, "boson", 4, None, 25),
    (4, "fermion", 1, None, 16),
    (4, "fermion", 1, 2, 6),
    (3, "boson", 3, 3, 10),
])
def test_dimensions(modes, stats, cap, sector, dim):
    b = fock.enumerate_basis(modes, stats, cap=cap, sector=sector)
    assert b.dim == dim == fock.expected_dimension(modes, stats, cap=cap, sector=sector)
    assert len(set(b.states)) == dim
    assert all(b.index[s] == k for k, s in enumerate(b.states))


def test_fermion_basis_order_is_lexicographic_in_reversed_modes():
    b = fock.enumerate_basis(4, "fermion")
    keys = [tuple(reversed(s)) for s in b.states]
    assert keys == sorted(keys)
    assert fock.format_state(b.states[1]) == "|0,0,0,1>"


def test_pauli_exclusion():
    b = fock.enumerate_basis(4, "fermion")
    for m in range(4):
        c = fock.creation_matrix(b, m)
        assert np.abs(c @ c).max() == 0


def test_fermion_sign_counts_lower_modes():
    assert fock._fermion_sign((1, 1, 0, 0), 2) == 1
    assert fock._fermion_sign((1, 0, 0, 0), 2) == -1
    assert fock._fermion_sign((0, 1, 1, 0), 3) == 1


def test_fermion_algebra_exact():
    res = fock.check_algebra(fock.enumerate_basis(4, "fermion"))
    assert res["max"] == 0


def test_boson_algebra_projected():
    b = fock.enumerate_basis(2, "boson", cap=4)
    assert fock.check_algebra(b)["max"] <= 1e-12
    # without projection the truncation shows up on the top rung
    assert fock.check_algebra(b, project=False)["max"] > 1


def test_number_matrix_matches_diagonal():
    b = fock.enumerate_basis(3, "boson", cap=2)
    diags = fock.number_diagonals(b)
    for m in range(3):
        assert np.array_equal(np.diag(fock.number_matrix(b, m)), diags[m])


def test_out_of_range_mode():
    b = fock.enumerate_basis(2, "boson", cap=2)
    with pytest.raises(ParameterError):
        fock.creation_matrix(b, 2)


def test_hopping_hermitian_pair():
    b = fock.enumerate_basis(4, "fermion")
    h01 = fock.hopping_matrix(b, 0, 2)
    h10 = fock.hopping_matrix(b, 2, 0)
    assert np.array_equal(h01.T, h10)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 15), st.integers(0, 3), st.integers(0, 3))
def test_fermion_operators_on_random_states(k, i, j):
    b = fock.enumerate_basis(4, "fermion")
    ci, cj = fock.creation_matrix(b, i), fock.creation_matrix(b, j)
    ai = ci.T
    vec = np.zeros(16)
    vec[k] = 1
    anti = (ai @ cj + cj @ ai) @ vec
    assert np.array_equal(anti, vec * (i == j))
    assert np.array_equal((ci @ cj + cj @ ci) @ vec, np.zeros(16))


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(0, 3), min_size=3, max_size=3))
def test_boson_number_eigenvalues(occ):
    b = fock.enumerate_basis(3, "boson", cap=3)
    k = b.index[tuple(occ)]
    for m in range(3):
        assert fock.number_matrix(b, m)[k, k] == occ[m]


def test_single_particle_unitary_keeps_fermion_algebra():
    b = fock.enumerate_basis(4, "fermion")
    th = 0.3
    u = np.eye(4, dtype=complex)
    u[np.ix_([0, 2], [0, 2])] = [[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]]
    new = fock.apply_single_particle_unitary(b, u)
    for i, ci in enumerate(new):
        for j, cj in enumerate(new):
            anti = ci.conj().T @ cj + cj @ ci.conj().T
            assert np.abs(anti - np.eye(16) * (i == j)).max() < 1e-12


def test_all_fermion_states_present():
    b = fock.enumerate_basis(4, "fermion")
    assert set(b.states) == set(itertools.product((0, 1), repeat=4))
