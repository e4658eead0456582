#!/usr/bin/env python3
"""Compare the numba and numpy kernel backends.

Times the binomial tail, the expected-violation integral, the dual
active-set QP on the two-state benchmark program and the batched
condensation. Prints a table and optionally writes JSON.

Usage::

    python benchmarks/bench_kernels.py --runs 5 --json bench.json
"""

import argparse
import json
import platform
import time

import numpy as np

from scmpc import kernels
from scmpc.complexity import QUAD_TOL, log_choose
from scmpc.model import StageCost, example_sets, example_system, sample_scenarios
from scmpc.scenario_program import FEAS_TOL, assemble

WARMUP_RUNS = 1


def timed(func, runs):
    for _ in range(WARMUP_RUNS):
        out = func()
    times = []
    for _ in range(runs):
        start = time.perf_counter()
        out = func()
        times.append(time.perf_counter() - start)
    return {"min": min(times), "mean": sum(times) / len(times), "runs": times}, out


def cases(K_qp):
    """Workloads as ``name -> (callable(backend), checksum(result))``."""
    model = example_system()
    X1, X2, U = example_sets()
    scen = sample_scenarios(model, K_qp, 5, 0, 0)
    program = assemble(np.array([1.0, 1.0]), scen, StageCost(np.eye(2), np.eye(2)),
                       [X1.intersect(X2)], U)
    fac = program.factor
    mask = np.ones(program.n_rows, dtype=bool)
    big = sample_scenarios(model, 1000, 20, 0, 1)
    nus = np.linspace(1e-4, 0.5, 200)

    def tail(be):
        return sum(be.log_binomial_tail(nu, 1295, 101) for nu in nus)

    def integral(be):
        return be.bound_integral(log_choose(101, 100), 1295, 101, QUAD_TOL, 60)[0]

    def qp(be):
        return be.dual_active_set(fac.C, fac.b, fac.d, mask, FEAS_TOL, 10_000)[0].sum()

    def cond(be):
        gains, offsets = be.condense_batch(big.A, big.B, big.w, np.array([1.0, 1.0]))
        return gains.sum() + offsets.sum()

    return {
        "log_binomial_tail (200 points, K=1295)": tail,
        "bound_integral (K=1295, R=100)": integral,
        f"dual_active_set ({program.n_vars} vars, {program.n_rows} rows)": qp,
        "condense_batch (1000 scenarios, N=20)": cond,
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--runs", type=int, default=5)
    ap.add_argument("--K", type=int, default=702, help="scenarios in the QP workload")
    ap.add_argument("--json", help="write results to this file")
    args = ap.parse_args()

    backends = kernels.backends()
    if "numba" not in backends:
        print("numba backend unavailable (SCMPC_NUMBA disables it); timing numpy only")
    results = {"python": platform.python_version(), "runs": args.runs, "cases": {}}
    print(f"{'case':48s} {'backend':8s} {'min [ms]':>10s} {'mean [ms]':>10s}")
    for name, fn in cases(args.K).items():
        entry = {}
        for bname, be in backends.items():
            stats, out = timed(lambda: fn(be), args.runs)
            stats["checksum"] = float(out)
            entry[bname] = stats
            print(f"{name:48s} {bname:8s} {1e3 * stats['min']:10.3f} {1e3 * stats['mean']:10.3f}")
        if len(entry) == 2:
            entry["speedup"] = entry["numpy"]["min"] / entry["numba"]["min"]
            agree = np.isclose(entry["numpy"]["checksum"], entry["numba"]["checksum"],
                               rtol=1e-9, atol=1e-12)
            entry["checksums_agree"] = bool(agree)
            print(f"{'':48s} speedup x{entry['speedup']:.1f}, results agree: {agree}")
        results["cases"][name] = entry
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(results, fh, indent=2)


if __name__ == "__main__":
    main()
