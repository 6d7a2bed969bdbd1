"""Backend selection for the RK4 hot loop.

The compiled core (``_core``, Cython) is used when it imports; otherwise
the numpy implementation in ``_kernels_py`` takes over.  Setting the
environment variable ``DISENTANGLE_BACKEND=python`` forces the fallback.
"""
import os
from dataclasses import dataclass

import numpy as np

from . import _kernels_py

STATUS_RAN = _kernels_py.STATUS_RAN
STATUS_CONVERGED = _kernels_py.STATUS_CONVERGED
STATUS_NONFINITE = _kernels_py.STATUS_NONFINITE

_compiled = None
if os.environ.get("DISENTANGLE_BACKEND", "").lower() != "python":
    try:
        from . import _core as _compiled
    except ImportError:  # extension not built
        _compiled = None

BACKENDS = {"python": _kernels_py.run_steps}
if _compiled is not None:
    BACKENDS["compiled"] = _compiled.run_steps

BACKEND = "compiled" if _compiled is not None else "python"


@dataclass
class StepResult:
    rho: np.ndarray
    status: int
    steps: int
    residual: float
    max_trace_drift: float
    max_hermitian_residual: float


def run_steps(rho, system, params, dt, nsteps, ss_tol, backend=None) -> StepResult:
    """Advance ``rho`` by up to ``nsteps`` RK4 steps of size ``dt``.

    Stops early (status ``STATUS_CONVERGED``) when the right-hand-side
    Frobenius norm drops below ``ss_tol``.
    """
    fn = BACKENDS[backend or BACKEND]
    out = fn(rho, system.H, system.number_ops, system.pair_array, float(params.beta),
             float(params.gamma_H), float(params.gamma_D), float(dt),
             float(params.eig_floor), params.thermalization == "full", int(nsteps),
             float(ss_tol))
    return StepResult(*out)
