import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from disentangle import _kernels_py, dynamics, hubbard, kernels, steady
from disentangle.dynamics import EvolutionParams
from disentangle.errors import IntegrationError, ParameterError, ValidationError
from disentangle.hubbard import ModelSpec

BOSE = ModelSpec("boson", 2, 0.01, -1.0, sector=2)
FERMI = ModelSpec("fermion", 2, 1e-3, 1.0)


def random_density(dim, rng, rank=None):
    rank = rank or dim
    a = rng.standard_normal((dim, rank)) + 1j * rng.standard_normal((dim, rank))
    rho = a @ a.conj().T
    return rho / np.real(np.trace(rho))


@pytest.fixture(scope="module")
def fermi():
    return hubbard.build_system(FERMI)[0]


@pytest.fixture(scope="module")
def bose():
    return hubbard.build_system(BOSE)[0]


def test_params_validation():
    with pytest.raises(ParameterError):
        EvolutionParams(thermalization="hot")
    with pytest.raises(ParameterError):
        EvolutionParams(eig_floor=0.0)
    with pytest.raises(ParameterError):
        EvolutionParams(dt=-1.0)
    with pytest.raises(ParameterError):
        EvolutionParams(hbar=2.0)


def test_default_dt_scales_with_rates(fermi):
    p = EvolutionParams(gamma_D=400.0)
    assert p.default_dt(fermi.H) == pytest.approx(0.01 / 400)
    r = p.resolve(fermi.H, np.eye(16) / 16)
    assert r.dt > 0 and r.ss_tol > 0


def test_check_density_matrix():
    with pytest.raises(ValidationError):
        dynamics.check_density_matrix(np.diag([1.2, -0.2]))
    with pytest.raises(ValidationError):
        dynamics.check_density_matrix(np.array([[0.5, 0.1], [0.2, 0.5]]))
    dynamics.check_density_matrix(np.eye(2) / 2)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.floats(0, 50), st.sampled_from(["full", "low_temperature"]))
def test_rhs_hermitian_and_traceless(seed, gamma_D, mode):
    system = hubbard.build_system(FERMI)[0]
    rho = random_density(16, np.random.default_rng(seed))
    p = EvolutionParams(gamma_D=gamma_D, thermalization=mode)
    rhs = dynamics.mme_rhs(rho, system.H, p, system.pairs, system.number_ops)
    assert np.abs(rhs - rhs.conj().T).max() < 1e-10 * max(1, np.abs(rhs).max())
    assert abs(np.trace(rhs)) < 1e-10 * max(1, np.abs(rhs).max())


def test_qd_diagonal_matches_definition(bose):
    rng = np.random.default_rng(2)
    rho = random_density(3, rng)
    n = bose.number_ops
    p = np.real(np.diag(rho))
    expected = np.zeros(3)
    for a, b in bose.pairs:
        prod = n[a] * n[b]
        q = prod - (n[a] @ p) * (n[b] @ p)
        expected += q * (q @ p)
    assert np.allclose(dynamics.disentanglement_diagonal(rho, bose.pairs, n), expected)


def test_low_temperature_drops_log(fermi):
    rho = random_density(16, np.random.default_rng(0))
    full = dynamics.thermalization_operator(rho, fermi.H, 100.0, mode="full")
    low = dynamics.thermalization_operator(rho, fermi.H, 100.0, mode="low_temperature")
    assert np.allclose(full - low, dynamics.clamped_log(rho, 1e-14))


@pytest.mark.skipif("compiled" not in kernels.BACKENDS, reason="extension not built")
@pytest.mark.parametrize("mode", ["full", "low_temperature"])
@pytest.mark.parametrize("which", ["bose", "fermi"])
def test_backends_agree(which, mode, request):
    system = request.getfixturevalue(which)
    rng = np.random.default_rng(5)
    rho = random_density(system.dim, rng)
    p = EvolutionParams(beta=100.0, gamma_H=1.0, gamma_D=30.0, thermalization=mode)
    outs = [kernels.run_steps(rho, system, p, 1e-3, 200, 0.0, backend=b) for b in ("python", "compiled")]
    assert outs[0].status == outs[1].status == kernels.STATUS_RAN
    assert np.abs(outs[0].rho - outs[1].rho).max() < 1e-11
    assert outs[0].residual == pytest.approx(outs[1].residual, rel=1e-6)


@pytest.mark.skipif("compiled" not in kernels.BACKENDS, reason="extension not built")
def test_backends_agree_rank_deficient(fermi):
    rng = np.random.default_rng(6)
    rho = random_density(16, rng, rank=2)
    p = EvolutionParams(gamma_D=5.0)
    a = kernels.run_steps(rho, fermi, p, 1e-3, 100, 0.0, backend="python")
    b = kernels.run_steps(rho, fermi, p, 1e-3, 100, 0.0, backend="compiled")
    assert np.abs(a.rho - b.rho).max() < 1e-10


def test_lift_spectrum_raises_floor():
    rho = np.diag([1.0, 0.0, -1e-13]).astype(complex)
    out = _kernels_py.lift_spectrum(rho, 1e-14)
    w = np.linalg.eigvalsh(out)
    assert w.min() >= 1e-14 * (1 - 1e-6)
    assert np.trace(out).real == pytest.approx(1.0, abs=1e-15)


def test_step_matches_exact_unitary_for_small_dt(fermi):
    from scipy.linalg import expm

    rng = np.random.default_rng(1)
    rho = random_density(16, rng)
    p = EvolutionParams(gamma_H=0.0, gamma_D=0.0)
    out = dynamics.step_rk4(rho, fermi.H, p, fermi.pairs, fermi.number_ops, dt=0.01)
    u = expm(-1j * fermi.H * 0.01)
    assert np.abs(out - u @ rho @ u.conj().T).max() < 1e-12


def test_evolve_reaches_thermal_state(bose):
    beta = 100.0
    rho_th = steady.thermal_state(bose.H, beta)
    rng = np.random.default_rng(3)
    rho0 = steady.perturb(rho_th, 1e-4, rng)
    res = dynamics.evolve(rho0, bose, EvolutionParams(beta=beta, t_max=100.0), record_every=500)
    assert res.converged
    assert np.abs(res.rho - rho_th).max() < 1e-8
    assert res.records[0].time == 0 and res.records[-1].time == pytest.approx(res.time)


def test_evolve_records_and_callback(fermi):
    seen = []
    rho0 = steady.thermal_state(fermi.H, np.inf, fermi.conserved)
    p = EvolutionParams(gamma_D=10.0, dt=1e-3, t_max=0.5, ss_tol=1e-300,
                        thermalization="low_temperature")
    res = dynamics.evolve(rho0, fermi, p, record_every=100, callback=seen.append)
    assert len(res.records) == len(seen) == 6
    assert res.steps == 500
    row = res.records[-1].as_row()
    assert {"n_0", "pair_corr_1", "number_up"} <= set(row)


def test_evolve_blows_up_with_huge_dt(fermi):
    rho0 = random_density(16, np.random.default_rng(0))
    with pytest.raises(IntegrationError):
        dynamics.evolve(rho0, fermi, EvolutionParams(gamma_D=1e3, dt=1.0, t_max=50.0))


def test_evolve_rejects_invalid_state(fermi):
    with pytest.raises(ValidationError):
        dynamics.evolve(np.eye(16), fermi, EvolutionParams())


def test_effective_free_energy(bose):
    p = EvolutionParams(beta=50.0, gamma_D=5.0, thermalization="low_temperature")
    rho = random_density(3, np.random.default_rng(1))
    rec = dynamics.observables(rho, bose, p)
    expected = rec.energy + (5.0 / 1.0) * rec.q_d_expect / 50.0
    assert rec.u_e == pytest.approx(expected)
    assert steady.effective_free_energy(rec, p, low_temperature=False) == pytest.approx(
        expected + rec.log_rho_expect / 50.0)


def test_frozen_theta_decreases_expectation():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((4, 4))
    th = a @ a.T
    rho = random_density(4, rng)
    vals = []
    for _ in range(50):
        vals.append(dynamics.expect(th, rho))
        rho = dynamics.rk4(lambda r: dynamics.frozen_theta_rhs(r, np.zeros((4, 4)), th), rho, 0.01)
    assert np.all(np.diff(vals) <= 0)
