"""Compare the compiled and pure-Python closed-loop kernels.

Usage: python3 benchmarks/bench_kernel.py [--periods N] [--repeat R]
"""

import argparse
import time

import numpy as np

from hover_es.esc import EscConfig
from hover_es.kernel import BACKENDS
from hover_es.sim import STEPS_PER_PERIOD, kernel_params
from hover_es.species import load_species


def time_backend(fn, params, dt, n_steps, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        start = time.perf_counter()
        out, done = fn((0.0, 0.0, 0.2, 0.0, 0.0), 0.0, dt, n_steps, params)
        best = min(best, time.perf_counter() - start)
    return best, out


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--species", default="bumblebee")
    parser.add_argument("--periods", type=int, default=600)
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()

    sp = load_species(args.species)
    cfg = EscConfig.for_species(sp, "altitude")
    dt = cfg.period / STEPS_PER_PERIOD
    n_steps = args.periods * STEPS_PER_PERIOD
    params = kernel_params(cfg, sp.coefficients)

    results = {}
    for name, fn in sorted(BACKENDS.items()):
        results[name] = time_backend(fn, params, dt, n_steps, args.repeat)
        secs = results[name][0]
        print(f"{name:<8} {n_steps} steps  {secs * 1e3:9.1f} ms  {n_steps / secs / 1e6:7.2f} Msteps/s")
    if len(results) == 2:
        (t_c, out_c), (t_py, out_py) = results["cython"], results["python"]
        print(f"speedup {t_py / t_c:.1f}x, identical output: {np.array_equal(out_c, out_py)}")


if __name__ == "__main__":
    main()
