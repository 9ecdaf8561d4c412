"""Benchmark the compiled EP sweep against the pure-numpy fallback.

Run:  python benchmarks/bench_ep.py [--sizes 20,40,80,120] [--sweeps 40]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from bads.backend import backends
from bads.ep import _refresh_posterior
from bads.kernels import DEFAULT_HYPERPARAMS, SameFunctionKernel, gram
from bads.stimuli import ToneStimulus


def make_problem(n: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    stim = tuple(
        ToneStimulus(
            float(125.0 * 2 ** rng.uniform(0, 6)), float(rng.uniform(-10, 110)), 1
        )
        for _ in range(n)
    )
    K = gram(stim, SameFunctionKernel(DEFAULT_HYPERPARAMS))
    m = np.zeros(n)
    z = np.where(rng.random(n) < 0.5, -1.0, 1.0)
    return K, m, z


def time_backend(sweep_fn, K, m, z, sweeps: int) -> tuple[float, np.ndarray]:
    n = len(m)
    tau = np.zeros(n)
    nu = np.zeros(n)
    mu, Sigma, _ = _refresh_posterior(K, m, tau, nu)
    order = np.arange(n, dtype=np.int64)
    start = time.perf_counter()
    for _ in range(sweeps):
        sweep_fn(K, mu, Sigma, tau, nu, z, order, 0.8)
    elapsed = time.perf_counter() - start
    return elapsed / sweeps, tau


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--sizes", default="20,40,80,120")
    parser.add_argument("--sweeps", type=int, default=40)
    args = parser.parse_args()
    sizes = [int(s) for s in args.sizes.split(",")]

    table = backends()
    if "compiled" not in table:
        print("compiled extension not available; benchmarking fallback only")
    print(f"{'n':>5s}  " + "".join(f"{name:>14s}" for name in table) + f"{'speedup':>10s}")
    for n in sizes:
        K, m, z = make_problem(n)
        per_sweep = {}
        results = {}
        for name, fn in table.items():
            per_sweep[name], results[name] = time_backend(fn, K, m, z, args.sweeps)
        row = f"{n:5d}  " + "".join(f"{per_sweep[v] * 1e3:11.3f} ms" for v in table)
        if len(table) == 2:
            row += f"{per_sweep['python'] / per_sweep['compiled']:9.1f}x"
            agree = np.max(np.abs(results["python"] - results["compiled"]))
            row += f"   (max site diff {agree:.2e})"
        print(row)


if __name__ == "__main__":
    main()
