# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled RK4 loop for the nonlinear master equation.

Mirrors ``_kernels_py.run_steps``, including the spectral lift that
starts every full-mode step.  Matrices are small (dim <= a few
dozen), so plain loops beat BLAS call overhead; the clamped matrix
logarithm goes through LAPACK ``zheev``.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport log, sqrt, fabs, isfinite
from scipy.linalg.cython_lapack cimport zheev

cnp.import_array()

ctypedef double complex cplx

cdef enum:
    STATUS_RAN = 0
    STATUS_CONVERGED = 1
    STATUS_NONFINITE = 2


cdef class _Workspace:
    cdef int n, lwork
    cdef cplx[:, ::1] th, g, x, stage, evec
    cdef cplx[::1] work
    cdef double[::1] w, rwork, thdiag, p, occ, q, means
    cdef cplx[:, ::1] k1, k2, k3, k4

    def __init__(self, int n, int npairs, int nmodes):
        self.n = n
        self.lwork = max(1, 64 * n)
        self.th = np.zeros((n, n), dtype=np.complex128)
        self.g = np.zeros((n, n), dtype=np.complex128)
        self.x = np.zeros((n, n), dtype=np.complex128)
        self.stage = np.zeros((n, n), dtype=np.complex128)
        self.evec = np.zeros((n, n), dtype=np.complex128)
        self.k1 = np.zeros((n, n), dtype=np.complex128)
        self.k2 = np.zeros((n, n), dtype=np.complex128)
        self.k3 = np.zeros((n, n), dtype=np.complex128)
        self.k4 = np.zeros((n, n), dtype=np.complex128)
        self.work = np.zeros(self.lwork, dtype=np.complex128)
        self.w = np.zeros(n)
        self.rwork = np.zeros(max(1, 3 * n - 2))
        self.thdiag = np.zeros(n)
        self.p = np.zeros(n)
        self.occ = np.zeros(max(nmodes, 1))
        self.q = np.zeros(max(npairs, 1))
        self.means = np.zeros(max(npairs, 1))


cdef int _rhs(cplx[:, ::1] rho, cplx[:, ::1] out, cplx[:, ::1] H, cplx[:, ::1] base,
              double[:, ::1] ndiag, double[:, ::1] prods, Py_ssize_t[:, ::1] pairs,
              double gamma_H, double gamma_D, double eig_floor, bint use_log,
              _Workspace ws) noexcept nogil:
    """out = i[rho,H] - Theta rho - rho Theta + 2<Theta> rho for Hermitian rho.

    With G = -iH - Theta and X = G rho the right-hand side is X + X^dag +
    2<Theta> rho.  Returns LAPACK's info (0 on success).
    """
    cdef Py_ssize_t n = rho.shape[0], i, j, k, a
    cdef Py_ssize_t nmodes = ndiag.shape[0], npairs = pairs.shape[0]
    cdef int info = 0, nn = <int>n, lwork = ws.lwork
    cdef char jobz = b'V'
    cdef char uplo = b'L'
    cdef cplx acc, z
    cdef double s, mean, lw
    cdef cplx[:, ::1] th = ws.th
    cdef cplx[:, ::1] g = ws.g
    cdef cplx[:, ::1] x = ws.x
    cdef cplx[:, ::1] ev = ws.evec

    for i in range(n):
        for j in range(n):
            th[i, j] = base[i, j]

    if use_log:
        # row-major rho read column-major is conj(rho); eigenvectors Z of
        # conj(rho) give log(rho)[i,j] = sum_k log(w_k) conj(Z[i,k]) Z[j,k]
        for i in range(n):
            for j in range(n):
                ev[i, j] = rho[i, j]
        zheev(&jobz, &uplo, &nn, &ev[0, 0], &nn, &ws.w[0], &ws.work[0], &lwork,
              &ws.rwork[0], &info)
        if info != 0:
            return info
        for k in range(n):
            lw = ws.w[k]
            if lw < eig_floor:
                lw = eig_floor
            lw = gamma_H * log(lw)
            for i in range(n):
                z = ev[k, i].conjugate() * lw
                for j in range(n):
                    th[i, j] = th[i, j] + z * ev[k, j]

    if gamma_D != 0.0 and npairs > 0:
        for i in range(n):
            ws.p[i] = rho[i, i].real
            ws.thdiag[i] = 0.0
        for a in range(nmodes):
            s = 0.0
            for i in range(n):
                s += ndiag[a, i] * ws.p[i]
            ws.occ[a] = s
        mean = 0.0
        for a in range(npairs):
            s = 0.0
            for i in range(n):
                s += prods[a, i] * ws.p[i]
            ws.means[a] = ws.occ[pairs[a, 0]] * ws.occ[pairs[a, 1]]
            ws.q[a] = s - ws.means[a]
            mean += ws.q[a] * ws.means[a]
        for a in range(npairs):
            for i in range(n):
                ws.thdiag[i] += ws.q[a] * prods[a, i]
        for i in range(n):
            th[i, i] = th[i, i] + gamma_D * (ws.thdiag[i] - mean)

    for i in range(n):
        for j in range(n):
            g[i, j] = -1j * H[i, j] - th[i, j]
    mean = 0.0
    for i in range(n):
        for j in range(n):
            x[i, j] = 0.0
    # G is sparse for lattice models; skip its zeros
    for i in range(n):
        for k in range(n):
            z = g[i, k]
            if z.real == 0.0 and z.imag == 0.0:
                continue
            for j in range(n):
                x[i, j] = x[i, j] + z * rho[k, j]
    # <Theta> = Tr(Theta rho) = -Re Tr(X)
    for i in range(n):
        mean -= x[i, i].real
    for i in range(n):
        for j in range(n):
            out[i, j] = x[i, j] + x[j, i].conjugate() + 2.0 * mean * rho[i, j]
    return 0


cdef inline void _hermitize(cplx[:, ::1] m) noexcept nogil:
    cdef Py_ssize_t n = m.shape[0], i, j
    cdef cplx z
    for i in range(n):
        m[i, i] = m[i, i].real
        for j in range(i + 1, n):
            z = 0.5 * (m[i, j] + m[j, i].conjugate())
            m[i, j] = z
            m[j, i] = z.conjugate()


cdef int _lift_spectrum(cplx[:, ::1] rho, double eig_floor, _Workspace ws) noexcept nogil:
    """Raise eigenvalues below ``eig_floor`` to it and restore unit trace."""
    cdef Py_ssize_t n = rho.shape[0], i, j, k
    cdef int info = 0, nn = <int>n, lwork = ws.lwork
    cdef char jobz = b'V'
    cdef char uplo = b'L'
    cdef cplx[:, ::1] ev = ws.evec
    cdef double total = 0.0, lw
    cdef cplx z
    for i in range(n):
        for j in range(n):
            ev[i, j] = rho[i, j]
    zheev(&jobz, &uplo, &nn, &ev[0, 0], &nn, &ws.w[0], &ws.work[0], &lwork,
          &ws.rwork[0], &info)
    if info != 0 or ws.w[0] >= eig_floor:
        return info
    for k in range(n):
        if ws.w[k] < eig_floor:
            ws.w[k] = eig_floor
        total += ws.w[k]
    for i in range(n):
        for j in range(n):
            rho[i, j] = 0.0
    # same conj layout as in _rhs
    for k in range(n):
        lw = ws.w[k] / total
        for i in range(n):
            z = ev[k, i].conjugate() * lw
            for j in range(n):
                rho[i, j] = rho[i, j] + z * ev[k, j]
    _hermitize(rho)
    return 0


def run_steps(rho_in, H_in, ndiag_in, pairs_in, double beta, double gamma_H,
              double gamma_D, double dt, double eig_floor, bint full,
              long nsteps, double ss_tol):
    """Advance ``rho`` by up to ``nsteps`` RK4 steps.

    Returns ``(rho, status, steps, residual, max_trace_drift, max_herm_residual)``.
    """
    cdef cplx[:, ::1] rho = np.array(rho_in, dtype=np.complex128, order="C")
    cdef cplx[:, ::1] H = np.ascontiguousarray(H_in, dtype=np.complex128)
    cdef double[:, ::1] ndiag = np.ascontiguousarray(ndiag_in, dtype=np.float64)
    pairs_arr = np.ascontiguousarray(np.asarray(pairs_in, dtype=np.intp).reshape(-1, 2))
    cdef Py_ssize_t[:, ::1] pairs = pairs_arr
    cdef Py_ssize_t n = rho.shape[0], npairs = pairs.shape[0], i, j, a
    if npairs:
        prods_arr = np.ascontiguousarray(ndiag_in[pairs_arr[:, 0]] * ndiag_in[pairs_arr[:, 1]],
                                         dtype=np.float64)
    else:
        prods_arr = np.zeros((0, n))
    cdef double[:, ::1] prods = prods_arr
    cdef cplx[:, ::1] base = np.ascontiguousarray(gamma_H * beta * np.asarray(H_in),
                                                  dtype=np.complex128)
    cdef _Workspace ws = _Workspace(n, npairs, ndiag.shape[0])
    cdef cplx[:, ::1] k1 = ws.k1
    cdef cplx[:, ::1] k2 = ws.k2
    cdef cplx[:, ::1] k3 = ws.k3
    cdef cplx[:, ::1] k4 = ws.k4
    cdef cplx[:, ::1] st = ws.stage
    cdef bint use_log = full and gamma_H != 0.0
    cdef int status = STATUS_RAN, info
    cdef long steps = 0, it
    cdef double residual = float("nan"), max_drift = 0.0, max_herm = 0.0
    cdef double half = 0.5 * dt, sixth = dt / 6.0, s, tr, drift, h
    cdef cplx z

    with nogil:
        _hermitize(rho)
        for it in range(nsteps):
            if use_log:
                info = _lift_spectrum(rho, eig_floor, ws)
                if info != 0:
                    status = STATUS_NONFINITE
                    break
            info = _rhs(rho, k1, H, base, ndiag, prods, pairs, gamma_H, gamma_D,
                        eig_floor, use_log, ws)
            s = 0.0
            for i in range(n):
                for j in range(n):
                    s += k1[i, j].real * k1[i, j].real + k1[i, j].imag * k1[i, j].imag
            residual = sqrt(s)
            if info != 0 or not isfinite(residual):
                status = STATUS_NONFINITE
                break
            if residual < ss_tol:
                status = STATUS_CONVERGED
                break
            for i in range(n):
                for j in range(n):
                    st[i, j] = rho[i, j] + half * k1[i, j]
            _hermitize(st)
            info = info | _rhs(st, k2, H, base, ndiag, prods, pairs, gamma_H, gamma_D,
                               eig_floor, use_log, ws)
            for i in range(n):
                for j in range(n):
                    st[i, j] = rho[i, j] + half * k2[i, j]
            _hermitize(st)
            info = info | _rhs(st, k3, H, base, ndiag, prods, pairs, gamma_H, gamma_D,
                               eig_floor, use_log, ws)
            for i in range(n):
                for j in range(n):
                    st[i, j] = rho[i, j] + dt * k3[i, j]
            _hermitize(st)
            info = info | _rhs(st, k4, H, base, ndiag, prods, pairs, gamma_H, gamma_D,
                               eig_floor, use_log, ws)
            if info != 0:
                status = STATUS_NONFINITE
                break
            for i in range(n):
                for j in range(n):
                    st[i, j] = rho[i, j] + sixth * (k1[i, j] + 2.0 * k2[i, j]
                                                    + 2.0 * k3[i, j] + k4[i, j])
            s = 0.0
            tr = 0.0
            for i in range(n):
                tr += st[i, i].real
                for j in range(i, n):
                    z = st[i, j] - st[j, i].conjugate()
                    h = z.real * z.real + z.imag * z.imag
                    if h > s:
                        s = h
            if not isfinite(tr) or not isfinite(s):
                status = STATUS_NONFINITE
                break
            s = sqrt(s)
            if s > max_herm:
                max_herm = s
            _hermitize(st)
            drift = fabs(tr - 1.0)
            if drift > max_drift:
                max_drift = drift
            if drift > 1e-12:
                for i in range(n):
                    for j in range(n):
                        st[i, j] = st[i, j] / tr
            for i in range(n):
                for j in range(n):
                    rho[i, j] = st[i, j]
            steps += 1

    return np.asarray(rho).copy(), status, steps, residual, max_drift, max_herm
