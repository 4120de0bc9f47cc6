"""Compare the compiled and the NumPy kernel backends.

Times every dispatched kernel on random inputs, then three end-to-end solves
(transportation simplex, doubly regularized Newton, one continuation level of
the identification problem), once per backend.

    python benchmarks/bench_kernels.py [--n 50] [--repeat 5] [--json out.json]
"""

import argparse
import json
import sys
import timeit

import numpy as np

from otbl import kernels
from otbl.bilevel import ContinuationSchedule, continuation_solve, generate_random_instance, identification_problem
from otbl.core import ProblemData, RegParams
from otbl.dualeps import solve_dual_eps
from otbl.lp_oracle import solve_hitchcock
from otbl.trsolver import TRConfig


def kernel_cases(n, rng):
    cost = np.abs(np.subtract.outer(np.arange(n), np.arange(n))).astype(float) ** 2 / n
    a1, a2 = rng.standard_normal(n), rng.standard_normal(n)
    mask = rng.random((n, n)) < 0.3
    u, v = rng.standard_normal(n), rng.standard_normal(n)
    basis = np.zeros((n, n), dtype=bool)
    basis[np.arange(n), np.arange(n)] = True
    y = rng.standard_normal(n * n)
    return {
        "positive_part_sums": lambda: kernels.positive_part_sums(a1, a2, cost),
        "newton_matrix": lambda: kernels.newton_matrix(a1, a2, cost, 1e-4),
        "system_matrix_from_mask": lambda: kernels.system_matrix_from_mask(mask, 1e-4),
        "project_simplex": lambda: kernels.project_simplex(y, 1.0),
        "bland_entering": lambda: kernels.bland_entering(cost, u, v, basis, 1e-12),
    }


def solve_cases(n, seed):
    inst = generate_random_instance(n, n, 0.5, 2.0, seed=seed)
    data = ProblemData(inst.mu1_star, inst.mu2_d, inst.cost)
    small = generate_random_instance(10, 10, 0.5, 2.0, seed=seed)
    prob = identification_problem(small)
    schedule = ContinuationSchedule.tied([1e-2])
    return {
        "solve_hitchcock": lambda: solve_hitchcock(data),
        "solve_dual_eps": lambda: solve_dual_eps(data, RegParams(1e-2, 1e-2), max_iter=1000),
        "continuation_level_10x10": lambda: continuation_solve(prob, schedule, TRConfig(max_iter=50)),
    }


def best_time(fn, repeat, number):
    return min(timeit.repeat(fn, repeat=repeat, number=number)) / number


def run(n, repeat, seed=0):
    rows = []
    backends = kernels.available_backends()
    for label, cases, number in (("kernel", kernel_cases(n, np.random.default_rng(seed)), 50),
                                 ("solve", solve_cases(n, seed), 1)):
        for name, fn in cases.items():
            row = {"group": label, "case": name}
            for backend in backends:
                with kernels.use_backend(backend):
                    fn()  # warm up
                    row[backend] = best_time(fn, repeat, number)
            rows.append(row)
    return backends, rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--n", type=int, default=50, help="grid size for kernels and the large solves")
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--json", help="also write the timings as JSON")
    args = ap.parse_args(argv)
    backends, rows = run(args.n, args.repeat, args.seed)
    header = f"{'group':<7}{'case':<28}" + "".join(f"{b + ' [s]':>14}" for b in backends)
    if "cython" in backends:
        header += f"{'speedup':>10}"
    print(header)
    for r in rows:
        line = f"{r['group']:<7}{r['case']:<28}" + "".join(f"{r[b]:>14.3e}" for b in backends)
        if "cython" in backends:
            line += f"{r['python'] / r['cython']:>9.1f}x"
        print(line)
    if "cython" not in backends:
        print("compiled backend not built; only the NumPy fallback was timed", file=sys.stderr)
    if args.json:
        with open(args.json, "w") as fh:
            json.dump({"n": args.n, "backends": backends, "rows": rows}, fh, indent=2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
