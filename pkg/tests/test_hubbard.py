import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from disentangle import dynamics, fock, hubbard
from disentangle.errors import ParameterError
from disentangle.hubbard import ModelSpec


def test_spec_validation():
    with pytest.raises(ParameterError):
        ModelSpec("boson", 2, 0.1, -1.0)  # no sector
    with pytest.raises(ParameterError):
        ModelSpec("fermion", 2, 0.1, 1.0, sector=2)
    with pytest.raises(ParameterError):
        ModelSpec("boson", 1, 0.1, -1.0, sector=2)
    assert ModelSpec("fermion", 2, 0.1, 1.0).modes == 4


def test_ring_closure_doubles_two_site_hopping():
    spec = ModelSpec("boson", 2, 0.25, -1.0, sector=1)
    H = hubbard.build_hamiltonian(spec, hubbard.model_basis(spec))
    # one particle: the bond is counted twice on the L=2 ring
    assert np.isclose(abs(H[0, 1]), 2 * 0.25)


def test_bose_matrix_matches_reference():
    for t, U in ((0.01, -1.0), (1.0, -1.0), (-0.3, 2.0)):
        spec = ModelSpec("boson", 2, t, U, sector=2)
        H = hubbard.build_hamiltonian(spec, hubbard.model_basis(spec))
        assert np.abs(H - hubbard.two_site_bose_reference(t, U).matrix()).max() < 1e-14


@settings(max_examples=25, deadline=None)
@given(st.floats(-10, 10).filter(lambda r: abs(r) > 1e-3))
def test_bose_spectrum_closed_form(ratio):
    U = -1.0
    t = ratio * U
    spec = ModelSpec("boson", 2, t, U, sector=2)
    H = hubbard.build_hamiltonian(spec, hubbard.model_basis(spec))
    ref = hubbard.two_site_bose_reference(t, U)
    w = np.linalg.eigvalsh(H)
    e = np.sort(ref.energies)
    assert np.allclose(w, e, rtol=1e-12, atol=1e-12 * np.abs(e).max())
    u = ref.unitary
    assert np.allclose(u.T @ u, np.eye(3), atol=1e-13)


def test_fermi_atomic_limit():
    spec = ModelSpec("fermion", 2, 0.0, 1.0)
    w = np.linalg.eigvalsh(hubbard.build_hamiltonian(spec, hubbard.model_basis(spec)))
    vals, counts = np.unique(np.round(w, 12), return_counts=True)
    assert list(vals) == [-0.5, 0.0, 0.5]
    assert list(counts) == [4, 8, 4]


@pytest.mark.parametrize("t", [1e-3, 0.1, 1.0])
def test_fermi_floor_and_ceiling(t):
    spec = ModelSpec("fermion", 2, t, 1.0)
    H = hubbard.build_hamiltonian(spec, hubbard.model_basis(spec))
    ref = hubbard.two_site_fermi_reference(t, 1.0)
    w = np.linalg.eigvalsh(H)
    assert np.isclose(w[0], ref.floor_energy, atol=1e-12)
    assert np.isclose(w[-1], ref.ceiling_energy, atol=1e-12)
    assert np.linalg.norm(H @ ref.floor_state - w[0] * ref.floor_state) < 1e-10
    assert np.linalg.norm(H @ ref.ceiling_state - w[-1] * ref.ceiling_state) < 1e-10
    assert abs(np.vdot(ref.floor_state, ref.ceiling_state)) < 1e-14


def test_conserved_numbers_commute():
    for spec in (ModelSpec("boson", 3, 0.2, -1.0, sector=3), ModelSpec("fermion", 2, 0.4, 1.0)):
        b = hubbard.model_basis(spec)
        H = hubbard.build_hamiltonian(spec, b)
        for diag in hubbard.conserved_number_diagonals(spec, b).values():
            assert np.abs(H * (diag[None, :] - diag[:, None])).max() < 1e-14


def test_interaction_pairs():
    assert hubbard.interaction_pairs(ModelSpec("boson", 2, 0.1, -1, sector=2)) == [(0, 0), (1, 1)]
    assert hubbard.interaction_pairs(ModelSpec("fermion", 2, 0.1, 1)) == [(0, 1), (2, 3)]
    spec = ModelSpec("boson", 2, 0.1, -1, sector=2, pairs=[[0, 1]])
    assert hubbard.interaction_pairs(spec) == [(0, 1)]


def test_fermi_closed_forms_corrected():
    spec = ModelSpec("fermion", 2, 0.05, 1.0)
    system, _ = hubbard.build_system(spec)
    ref = hubbard.two_site_fermi_reference(0.05, 1.0)
    for phi in np.linspace(0, np.pi / 2, 4):
        for vphi in np.linspace(0, np.pi / 2, 4):
            rho = dynamics.pure_state(hubbard.fermi_superposition(ref, phi, vphi))
            e = dynamics.expect(system.H, rho)
            nu = dynamics.pair_correlations(rho, system.pairs, system.number_ops)
            assert abs(e - hubbard.fermi_energy_closed_form(ref.alpha, phi)) < 1e-12
            assert np.allclose(nu, hubbard.fermi_nu_closed_form(ref.alpha, phi, vphi), atol=1e-12)


def test_bose_parametrized_rho_is_density_matrix():
    rho = hubbard.bose_parametrized_rho(0.2, 0.4)
    assert np.isclose(np.trace(rho).real, 1)
    assert np.linalg.eigvalsh(rho).min() > -1e-15


def test_labels_follow_format():
    system, basis = hubbard.build_system(ModelSpec("fermion", 2, 0.1, 1.0))
    assert system.labels[3] == fock.format_state(basis.states[3])
    assert hubbard.compact_label((1, 0, 0, 1)) == "1001"
