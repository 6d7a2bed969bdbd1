"""Compiled versus numpy RK4 kernel timings.

Usage::

    python benchmarks/bench_kernels.py [--steps 2000] [--repeat 3]

Times ``kernels.run_steps`` on both model sizes (dim 3 and 16) in both
thermalization modes, checks the two backends agree, and prints a table.
"""
import argparse
import time

import numpy as np

from disentangle import hubbard, kernels, steady
from disentangle.dynamics import EvolutionParams
from disentangle.hubbard import ModelSpec

MODELS = {
    "bose dim 3": ModelSpec("boson", 2, 0.01, -1.0, sector=2),
    "fermi dim 16": ModelSpec("fermion", 2, 1e-3, 1.0),
}


def best_of(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=2000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    if "compiled" not in kernels.BACKENDS:
        print("compiled extension not built; only the python backend is available")
    print(f"{'model':<14}{'mode':<17}{'backend':<10}{'us/step':>10}{'speedup':>9}  max |diff|")
    for name, spec in MODELS.items():
        system, _ = hubbard.build_system(spec)
        rng = np.random.default_rng(0)
        rho0 = steady.perturb(steady.thermal_state(system.H, 1.0, system.conserved), 1e-4, rng)
        for mode in ("full", "low_temperature"):
            params = EvolutionParams(beta=100.0, gamma_D=30.0, thermalization=mode)
            timings = {}
            results = {}
            for backend in kernels.BACKENDS:
                t, out = best_of(lambda: kernels.run_steps(rho0, system, params, 1e-3, args.steps,
                                                           0.0, backend=backend), args.repeat)
                timings[backend] = t / args.steps * 1e6
                results[backend] = out.rho
            ref = timings["python"]
            diff = (np.abs(results["python"] - results["compiled"]).max()
                    if "compiled" in results else 0.0)
            for backend, us in timings.items():
                print(f"{name:<14}{mode:<17}{backend:<10}{us:>10.2f}{ref / us:>8.1f}x  {diff:.1e}")


if __name__ == "__main__":
    main()
