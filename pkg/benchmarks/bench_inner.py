"""Time the compiled and numpy path-following cores on identical subproblems.

Usage: python3 benchmarks/bench_inner.py [--repeat N]

Subproblems are captured from a short AO run on a seeded channel for each
configuration, so both cores see exactly the same inputs.  The script
reports mean milliseconds per inner solve, the speed-up and the largest
difference between the two cores' surrogate objectives.
"""

import argparse
import time

import numpy as np

from misobc import _inner_py, kernels
from misobc.channel import sample_channels
from misobc.initpoint import mrt_svd_init
from misobc.strategy import StrategyConfig
from misobc.wmmse import SolveOptions, ao_solve, build_problem

CASES = [
    ("NOMA", 3, "sum", 3),
    ("NOMA", 1, "maxmin", 6),
    ("RS1", None, "sum", 6),
    ("RS1", None, "maxmin", 4),
]


def capture(kind, G, objective, M, P=10 ** 3.5, seed=5):
    cs = sample_channels(6, M, np.ones(6), seed)
    cfg = StrategyConfig(kind, 6, num_groups=G).with_orders(cs)
    res = ao_solve(cs, cfg, objective, mrt_svd_init(cs, cfg, P), SolveOptions(max_iterations=5))
    problem = build_problem(cs.true_channels, cfg, objective, P)
    X = res.precoders.matrix()
    A, b, c = problem.surrogate(X)
    return problem, X, (A, b, c)


def run(core, problem, X, abc):
    A, b, c = abc
    return _inner_py.inner_solve(A, b, c, problem.link_stream, problem.smask, problem.pmax, problem.mode,
                                 block_ptr=problem.block_ptr, kind=problem.kind, x0=X, core=core,
                                 method="barrier")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if kernels.BACKEND != "cython":
        print("compiled core not available; only the numpy core will be timed")
    cores = {"python": _inner_py.barrier_core}
    if kernels.BACKEND == "cython":
        cores["cython"] = kernels.barrier_core
    print(f"{'case':<22}{'core':<8}{'ms/solve':>10}{'newton':>8}{'objective':>16}")
    for kind, G, objective, M in CASES:
        problem, X, abc = capture(kind, G, objective, M)
        label = f"{kind}{'-G%d' % G if G else ''} {objective} M={M}"
        times, objs = {}, {}
        for name, core in cores.items():
            run(core, problem, X, abc)  # warm up
            t0 = time.perf_counter()
            for _ in range(args.repeat):
                out = run(core, problem, X, abc)
            times[name] = (time.perf_counter() - t0) / args.repeat * 1e3
            objs[name] = out["primal"]
            print(f"{label:<22}{name:<8}{times[name]:>10.2f}{out['iterations']:>8}{out['primal']:>16.10f}")
        if len(cores) == 2:
            print(f"{'':<22}speed-up {times['python'] / times['cython']:.1f}x, "
                  f"objective difference {abs(objs['python'] - objs['cython']):.1e}")


if __name__ == "__main__":
    main()
