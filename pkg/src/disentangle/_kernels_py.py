"""Pure-numpy RK4 loop; used when the compiled core is unavailable."""
import numpy as np

STATUS_RAN = 0
STATUS_CONVERGED = 1
STATUS_NONFINITE = 2


def _make_rhs(H, ndiag, pairs, beta, gamma_H, gamma_D, eig_floor, full):
    H = np.asarray(H, dtype=complex)
    base = gamma_H * beta * H
    if len(pairs):
        prods = ndiag[pairs[:, 0]] * ndiag[pairs[:, 1]]
    else:
        prods = np.zeros((0, H.shape[0]))
    use_log = bool(full) and gamma_H != 0.0

    def rhs(rho):
        rho = 0.5 * (rho + rho.conj().T)
        th = base.copy()
        if use_log:
            w, v = np.linalg.eigh(rho)
            th += gamma_H * ((v * np.log(np.maximum(w, eig_floor))) @ v.conj().T)
        if gamma_D != 0.0 and len(prods):
            p = rho.diagonal().real
            occ = ndiag @ p
            means = occ[pairs[:, 0]] * occ[pairs[:, 1]]
            q = prods @ p - means
            th[np.diag_indices_from(th)] += gamma_D * (q @ prods - q @ means)
        th_rho = th @ rho
        mean = np.trace(th_rho).real
        return 1j * (rho @ H - H @ rho) - th_rho - th_rho.conj().T + 2.0 * mean * rho

    return rhs


def lift_spectrum(rho, eig_floor):
    """Raise eigenvalues below ``eig_floor`` to it and restore unit trace.

    The clamped logarithm already treats such eigenvalues as ``eig_floor``;
    lifting the state itself stops RK4 truncation error in near-null
    directions from seeding negative eigenvalues.
    """
    w, v = np.linalg.eigh(rho)
    if w[0] >= eig_floor:
        return rho
    w = np.maximum(w, eig_floor)
    out = (v * (w / w.sum())) @ v.conj().T
    return 0.5 * (out + out.conj().T)


def run_steps(rho, H, ndiag, pairs, beta, gamma_H, gamma_D, dt, eig_floor, full,
              nsteps, ss_tol):
    """Advance ``rho`` by up to ``nsteps`` RK4 steps.

    Returns ``(rho, status, steps, residual, max_trace_drift, max_herm_residual)``.
    The loop stops early, before stepping, once ``||rhs||_F < ss_tol``.
    With the full log term each step starts from the spectrum-lifted state.
    """
    # overflow is reported as STATUS_NONFINITE, not as a warning
    with np.errstate(over="ignore", invalid="ignore"):
        return _run(rho, H, ndiag, pairs, beta, gamma_H, gamma_D, dt, eig_floor, full,
                    nsteps, ss_tol)


def _run(rho, H, ndiag, pairs, beta, gamma_H, gamma_D, dt, eig_floor, full, nsteps, ss_tol):
    rhs = _make_rhs(H, ndiag, np.asarray(pairs, dtype=np.intp).reshape(-1, 2),
                    beta, gamma_H, gamma_D, eig_floor, full)
    rho = np.array(rho, dtype=complex)
    status = STATUS_RAN
    residual = np.nan
    max_drift = max_herm = 0.0
    steps = 0
    half = 0.5 * dt
    lift = bool(full) and gamma_H != 0.0
    rho = 0.5 * (rho + rho.conj().T)
    for _ in range(nsteps):
        if lift:
            rho = lift_spectrum(rho, eig_floor)
        k1 = rhs(rho)
        residual = float(np.linalg.norm(k1))
        if not np.isfinite(residual):
            status = STATUS_NONFINITE
            break
        if residual < ss_tol:
            status = STATUS_CONVERGED
            break
        k2 = rhs(rho + half * k1)
        k3 = rhs(rho + half * k2)
        k4 = rhs(rho + dt * k3)
        new = rho + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.isfinite(new).all():
            status = STATUS_NONFINITE
            break
        max_herm = max(max_herm, float(np.abs(new - new.conj().T).max()))
        new = 0.5 * (new + new.conj().T)
        tr = np.trace(new).real
        drift = abs(tr - 1.0)
        max_drift = max(max_drift, drift)
        if drift > 1e-12:
            new /= tr
        rho = new
        steps += 1
    return rho, status, steps, residual, max_drift, max_herm
