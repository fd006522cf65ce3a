"""Compare the compiled and numpy barrier kernels.

Times one Newton step and one merit evaluation on the packed data of the
benchmark control problem, then full solves from random measured states.

    python3 benchmarks/bench_kernels.py [--solves 200] [--seed 0]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from mssmpc import benchmark_design, build_ocp, socp
from mssmpc.controller import _interior_start
from mssmpc.socp import get_kernels
from mssmpc.socp.solver import pack


def _per_call(fn, reps: int) -> float:
    fn()
    t0 = time.perf_counter()
    for _ in range(reps):
        fn()
    return (time.perf_counter() - t0) / reps


def kernel_times(art, x, reps: int):
    problem = build_ocp(art, x, "C")
    data = pack(problem)
    y = _interior_start(art, x, "C")
    out = {}
    for name in ("python", "cython"):
        try:
            k = get_kernels(name)
        except ImportError:
            continue
        args = data.args()
        dy, _, _ = k.newton_step(y, 1e3, *args)
        out[name] = (
            _per_call(lambda: k.newton_step(y, 1e3, *args), reps),
            _per_call(lambda: k.merit_delta(y, dy, 0.5, 1e3, *args), reps),
        )
    return out


def solve_times(art, xs, backend: str):
    t0 = time.perf_counter()
    steps = 0
    for x in xs:
        res = socp.solve(build_ocp(art, x, "C"), y0=_interior_start(art, x, "C"),
                         backend=backend)
        steps += res.newton_steps
    return (time.perf_counter() - t0) / len(xs), steps / len(xs)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--solves", type=int, default=200)
    ap.add_argument("--reps", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    art = benchmark_design()
    x = np.array([-40.0, 40.0])
    print(f"{'backend':8s} {'newton_step':>14s} {'merit_delta':>14s}")
    kt = kernel_times(art, x, args.reps)
    for name, (tn, tm) in kt.items():
        print(f"{name:8s} {tn * 1e6:11.1f} us {tm * 1e6:11.1f} us")

    rng = np.random.default_rng(args.seed)
    xs = rng.uniform(-40.0, 40.0, size=(args.solves, art.n))
    print(f"\nfull solves (strategy C, {args.solves} random states in the state box)")
    results = {}
    for name in kt:
        results[name] = solve_times(art, xs, name)
        per, steps = results[name]
        print(f"{name:8s} {per * 1e3:8.2f} ms/solve  {steps:6.1f} Newton steps")
    if len(results) == 2:
        print(f"\nspeed-up {results['python'][0] / results['cython'][0]:.2f}x")


if __name__ == "__main__":
    main()
