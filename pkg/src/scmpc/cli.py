"""Command-line front end.

Subcommands
-----------
complexity
    Minimal sample size per removal count, or ``(K, bound)`` curves as CSV.
simulate
    Closed-loop run from a JSON configuration; writes ``trajectory.csv``
    and ``stats.json``.
validate-bound
    Empirical mean first-step violation of the scalar additive toy problem
    against the theoretical bound.

Exit codes: 0 success, 2 invalid input or configuration, 3 infeasible
scenario program with soft constraints disabled. ``SCMPC_LOG`` sets the
log level (default ``WARNING``).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import complexity
from .config import load_config
from .controller import admissibility_check
from .errors import ConfigurationError, InfeasibleProgramError, SCMPCError, UsageError
from .model import Normal
from .simulator import AdditiveToy, bound_validation_experiment, simulate

log = logging.getLogger("scmpc")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_INFEASIBLE = 3


def _int_list(text: str) -> list:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _sweep(text: str) -> range:
    parts = text.split(":")
    try:
        lo, hi, step = (int(p) for p in (parts + ["1"])[:3]) if len(parts) in (2, 3) else (0, 0, 0)
    except ValueError:
        lo = hi = step = 0
    if step < 1 or lo < 1 or hi < lo:
        raise argparse.ArgumentTypeError(f"sweep must be KMIN:KMAX[:STEP], got {text!r}")
    return range(lo, hi + 1, step)


# -- complexity -----------------------------------------------------------------


def cmd_complexity(args) -> int:
    if not 0.0 < args.eps < 0.5:
        raise UsageError(f"--eps must lie in (0, 0.5), got {args.eps}")
    if args.rho1 < 1 or any(r < 0 for r in args.removals):
        raise UsageError("--rho1 must be >= 1 and removals >= 0")
    if args.sweep is not None:
        out = open(args.output, "w", newline="") if args.output else sys.stdout
        try:
            w = csv.writer(out)
            w.writerow(["R", "K", "bound"])
            for R in args.removals:
                Ks = list(args.sweep)
                for K, v in zip(Ks, complexity.bound_curve(Ks, R, args.rho1)):
                    w.writerow([R, K, repr(float(v))])
        finally:
            if out is not sys.stdout:
                out.close()
        return EXIT_OK
    rows = []
    for R in args.removals:
        K = complexity.min_sample_size(R, args.rho1, args.eps)
        rows.append({"R": R, "K": K, "bound": complexity.expected_violation_bound(K, R, args.rho1)})
    if args.json:
        print(json.dumps({"rho1": args.rho1, "epsilon": args.eps, "pairs": rows}, indent=2))
    else:
        print(f"{'R':>6} {'K':>8} {'bound':>12}")
        for r in rows:
            print(f"{r['R']:>6} {r['K']:>8} {r['bound']:>12.8f}")
    return EXIT_OK


# -- simulate -------------------------------------------------------------------


def _write_trajectory(path: Path, record) -> None:
    n, m, J = record.x.shape[1], record.u.shape[1], record.violations.shape[1]
    header = (["t"] + [f"x{i + 1}" for i in range(n)] + [f"u{i + 1}" for i in range(m)]
              + [f"violation{j + 1}" for j in range(J)] + ["stage_cost", "solver_status"])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for t in range(record.T):
            w.writerow([t] + [repr(float(v)) for v in record.x[t]]
                       + [repr(float(v)) for v in record.u[t]]
                       + [int(v) for v in record.violations[t]]
                       + [repr(float(record.stage_cost[t])), record.status[t]])


def _run_one(cfg_path: str, out_dir: str, T: int, c_seed: int, p_seed: int, force: bool,
             removal: str | None) -> dict:
    exp = load_config(cfg_path)
    if removal is not None:
        exp = _with_removal(exp, removal)
    ctrl = exp.controller(force=force, seed=c_seed)
    start = time.perf_counter()
    rec = simulate(ctrl, exp.model, exp.x0, T, sim_seed=p_seed)
    wall = time.perf_counter() - start
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_trajectory(out / "trajectory.csv", rec)
    checks = admissibility_check(ctrl)
    stats = {
        "constraints": [
            {"K": c.samples, "R": c.removals, "epsilon": c.epsilon, "rho1": c.rho1_bound,
             "bound": v, "admissible": ok, "V_avg": float(rec.V_avg[j])}
            for (j, ok, v), c in zip(checks, ctrl.constraints)],
        "l_avg": rec.l_avg,
        "l_std": rec.l_std,
        "soft_activations": rec.soft_activations,
        "removal": ctrl.removal_algorithm,
        "T": T,
        "steps_completed": rec.T,
        "failure_step": rec.failure_step,
        "seeds": {"controller": c_seed, "plant": p_seed},
        "wall_time": wall,
    }
    (out / "stats.json").write_text(json.dumps(stats, indent=2, sort_keys=True) + "\n")
    return stats


def _with_removal(exp, removal):
    return replace(exp, removal=removal)


def cmd_simulate(args) -> int:
    exp = load_config(args.config)
    if args.removal is not None:
        exp = _with_removal(exp, args.removal)
    ctrl = exp.controller(force=True)
    bad = [(j, v) for j, ok, v in admissibility_check(ctrl) if not ok]
    for j, v in bad:
        c = ctrl.constraints[j]
        msg = (f"constraint {j}: (K, R) = ({c.samples}, {c.removals}) has bound {v:.4g} "
               f"> epsilon {c.epsilon:g}")
        if not args.force:
            print(f"error: {msg}; rerun with --force to simulate anyway", file=sys.stderr)
            return EXIT_INPUT
        log.warning("%s (forced)", msg)
    T = args.T if args.T is not None else exp.T
    if T < 1:
        raise UsageError(f"T must be >= 1, got {T}")
    c_seed = exp.controller_seed if args.controller_seed is None else args.controller_seed
    p_seed = exp.plant_seed if args.plant_seed is None else args.plant_seed
    out = Path(args.out or exp.output_dir or "scmpc-run")
    P = args.replications
    if P <= 1:
        stats = _run_one(args.config, str(out), T, c_seed, p_seed, args.force, args.removal)
        runs = [stats]
    else:
        jobs = [(args.config, str(out / f"rep{i:03d}"), T, c_seed + i, p_seed + i, args.force,
                 args.removal) for i in range(P)]
        with ProcessPoolExecutor(max_workers=args.jobs or os.cpu_count()) as pool:
            runs = list(pool.map(_run_one, *zip(*jobs)))
        V = np.array([[c["V_avg"] for c in r["constraints"]] for r in runs])
        summary = {
            "replications": P,
            "V_avg_mean": V.mean(axis=0).tolist(),
            "V_avg_std": V.std(axis=0).tolist(),
            "l_avg_mean": float(np.mean([r["l_avg"] for r in runs])),
            "l_std_mean": float(np.mean([r["l_std"] for r in runs])),
            "failures": [i for i, r in enumerate(runs) if r["failure_step"] is not None],
            "seeds": [r["seeds"] for r in runs],
        }
        out.mkdir(parents=True, exist_ok=True)
        (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    for i, r in enumerate(runs):
        vs = ", ".join(f"{c['V_avg']:.4f}" for c in r["constraints"])
        print(f"run {i}: V_avg = [{vs}]  l_avg = {r['l_avg']:.4f}  l_std = {r['l_std']:.4f}")
    failed = [r["failure_step"] for r in runs if r["failure_step"] is not None]
    if failed:
        print(f"error: scenario program infeasible at step {failed[0]}", file=sys.stderr)
        return EXIT_INFEASIBLE
    print(f"wrote {out}")
    return EXIT_OK


# -- validate-bound -------------------------------------------------------------


def cmd_validate_bound(args) -> int:
    if args.K < 1 or args.R < 0 or args.R >= args.K or args.rho1 < 1 or args.draws < 1:
        raise UsageError("need K >= 1, 0 <= R < K, rho1 >= 1 and draws >= 1")
    toy = AdditiveToy(threshold=None if args.unconstrained else args.threshold,
                      noise=Normal(0.0, args.sigma ** 2), horizon=args.horizon)
    res = bound_validation_experiment(toy, args.K, args.R, args.rho1, args.draws, args.seed,
                                      args.removal)
    print(json.dumps({"K": args.K, "R": args.R, "rho1": args.rho1, "draws": args.draws,
                      "seed": args.seed, "mean_violation": res.mean, "stderr": res.stderr,
                      "bound": res.bound, "below_bound": bool(res.mean <= res.bound)},
                     indent=2, sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="scmpc", description="Scenario-based stochastic MPC.")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("complexity", help="admissible sample sizes")
    c.add_argument("--rho1", type=int, required=True, help="support-rank bound")
    c.add_argument("--eps", type=float, required=True, help="violation level in (0, 0.5)")
    c.add_argument("--removals", type=_int_list, default=[0], help="comma-separated R values")
    c.add_argument("--sweep", type=_sweep, default=None, metavar="KMIN:KMAX[:STEP]",
                   help="emit bound curves as CSV instead of minimal K")
    c.add_argument("--output", "-o", default=None, help="CSV path for --sweep (default stdout)")
    c.add_argument("--json", action="store_true", help="print the table as JSON")
    c.set_defaults(func=cmd_complexity)

    s = sub.add_parser("simulate", help="closed-loop simulation from a JSON config")
    s.add_argument("config", help="experiment configuration (JSON)")
    s.add_argument("--out", default=None, help="output directory")
    s.add_argument("--T", type=int, default=None, help="number of closed-loop steps")
    s.add_argument("--controller-seed", type=int, default=None)
    s.add_argument("--plant-seed", type=int, default=None)
    s.add_argument("--removal", choices=["optimal", "greedy", "marginal"], default=None)
    s.add_argument("--force", action="store_true", help="run inadmissible (K, R) pairs")
    s.add_argument("--replications", type=int, default=1,
                   help="seed-shifted replications run in parallel")
    s.add_argument("--jobs", type=int, default=None, help="worker processes")
    s.set_defaults(func=cmd_simulate)

    v = sub.add_parser("validate-bound", help="check the violation bound on a scalar toy")
    v.add_argument("--K", type=int, required=True)
    v.add_argument("--R", type=int, default=0)
    v.add_argument("--rho1", type=int, default=1)
    v.add_argument("--draws", type=int, default=1000)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--sigma", type=float, default=1.0, help="noise standard deviation")
    v.add_argument("--threshold", type=float, default=1.0, help="constraint x+ >= threshold")
    v.add_argument("--unconstrained", action="store_true", help="drop the state constraint")
    v.add_argument("--horizon", type=int, default=1)
    v.add_argument("--removal", choices=["optimal", "greedy", "marginal"], default="greedy")
    v.set_defaults(func=cmd_validate_bound)
    return p


def _setup_logging() -> None:
    level = os.environ.get("SCMPC_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InfeasibleProgramError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ConfigurationError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SCMPCError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
