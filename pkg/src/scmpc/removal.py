"""A-posteriori scenario removal.

A removal discards *all* state rows that one scenario contributes to one
constraint (a block ``(j, k)``); input rows are never removable. Each
constraint ``j`` of a program has its own budget ``R_j`` and removals for
different constraints are chosen on that constraint's blocks only.

Three rules are provided:

``optimal``
    exhaustive search over every combination of removed blocks; the lowest
    objective wins and ties go to the lexicographically smallest choice.
``greedy``
    ``R`` passes, each tentatively dropping every remaining block and
    keeping the drop with the largest improvement of the chosen metric.
``marginal``
    ``R`` passes, each dropping the block with the largest summed
    multiplier of the current solution.

All rules are deterministic: ties are resolved by the smallest scenario
index.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InfeasibleProgramError, RemovalGuardError, UsageError
from .scenario_program import OPTIMAL, QPSolution, ScenarioProgram, solve

log = logging.getLogger(__name__)

MAX_COMBINATIONS = 10**6
TIE_RTOL = 1e-12
METRICS = ("total_cost", "first_stage_cost")


@dataclass(frozen=True, eq=False)
class RemovalOutcome:
    """Result of a removal run.

    ``solve_count`` is the number of scenario programs the rule evaluates
    by definition; ``qp_calls`` counts the solver invocations actually made,
    which is lower for greedy removal because dropping a block whose
    multipliers are all zero provably leaves the optimum unchanged.
    """

    removed_blocks: tuple
    kept_blocks: tuple
    solve_count: int
    final: QPSolution
    qp_calls: int
    objectives: tuple = field(default=())  # objective after each removal step

    @property
    def removed(self) -> list:
        return [k for _, k in self.removed_blocks]

    @property
    def kept(self) -> list:
        return [k for _, k in self.kept_blocks]

    @property
    def objective(self) -> float:
        return self.final.objective


def _budgets(program: ScenarioProgram, R) -> tuple:
    J = program.n_groups
    budgets = (int(R),) * min(J, 1) if np.isscalar(R) else tuple(int(r) for r in R)
    if np.isscalar(R) and J > 1:
        raise UsageError(f"program has {J} constraints; pass one budget per constraint")
    if len(budgets) != J:
        raise UsageError(f"need {J} budgets, got {len(budgets)}")
    for j, r in enumerate(budgets):
        K = len(program.group_scenarios[j])
        if not 0 <= r < K:
            raise UsageError(f"constraint {j}: need 0 <= R < K, got R={r}, K={K}")
    return budgets


def _outcome(program, removed, solve_count, final, qp_calls, objectives=()):
    removed = tuple(removed)
    gone = set(removed)
    kept = tuple(b for j in range(program.n_groups) for b in program.blocks(j) if b not in gone)
    return RemovalOutcome(removed, kept, int(solve_count), final, int(qp_calls), tuple(objectives))


def _try_solve(program, removed):
    try:
        return solve(program, program.mask(removed))
    except InfeasibleProgramError:
        return None


def _better(value, best):
    """Strict improvement beyond a relative tie band."""
    return value < best - TIE_RTOL * (1.0 + abs(best))


def remove_optimal(program: ScenarioProgram, R, max_combinations: int = MAX_COMBINATIONS
                   ) -> RemovalOutcome:
    """Exhaustive removal: solve every combination and keep the cheapest."""
    budgets = _budgets(program, R)
    count = math.prod(math.comb(len(program.group_scenarios[j]), r)
                      for j, r in enumerate(budgets))
    if count > max_combinations:
        raise RemovalGuardError(
            f"optimal removal needs {count} solves (limit {max_combinations}); use greedy removal")
    choices = [list(itertools.combinations(program.blocks(j), r)) for j, r in enumerate(budgets)]
    best, best_sol = None, None
    calls = 0
    for combo in itertools.product(*choices):
        removed = tuple(itertools.chain.from_iterable(combo))
        sol = _try_solve(program, removed)
        calls += 1
        if sol is None:
            continue
        if best_sol is None or _better(sol.objective, best_sol.objective):
            best, best_sol = removed, sol
    if best_sol is None:
        raise InfeasibleProgramError("every removal combination is infeasible")
    return _outcome(program, best, count, best_sol, calls, (best_sol.objective,))


def _metric_value(program, sol, metric):
    if metric == "total_cost":
        return sol.objective
    m = program.n_inputs
    u0 = sol.u_stack[:m]
    W = program.hessian[:m, :m] if program.first_stage_weight is None \
        else program.first_stage_weight
    return float(u0 @ W @ u0)


def remove_greedy(program: ScenarioProgram, R, metric: str = "total_cost",
                  shortcut: bool = True) -> RemovalOutcome:
    """Sequential best-improvement removal.

    ``shortcut=False`` solves every tentative program explicitly; the
    result is identical and only ``qp_calls`` differs.
    """
    if metric not in METRICS:
        raise UsageError(f"unknown greedy metric {metric!r}; choose from {METRICS}")
    budgets = _budgets(program, R)
    removed: list = []
    calls = 0
    current = _try_solve(program, ())
    calls += 1
    objectives = []
    count = 0
    for j, r_j in enumerate(budgets):
        for r in range(r_j):
            cand = [b for b in program.blocks(j) if b not in removed]
            count += len(cand)
            inert = set()
            if shortcut and current is not None and current.status == OPTIMAL:
                scores = program.block_duals(current.dual, j)
                pos = {b: p for p, b in enumerate(program.blocks(j))}
                inert = {b for b in cand if scores[pos[b]] == 0.0}
            best_b, best_sol, best_v = None, None, math.inf
            for b in cand:
                if b in inert:
                    sol = current
                else:
                    sol = _try_solve(program, tuple(removed) + (b,))
                    calls += 1
                    if sol is None:
                        continue
                v = _metric_value(program, sol, metric)
                if best_sol is None or _better(v, best_v):
                    best_b, best_sol, best_v = b, sol, v
            if best_sol is None:
                raise InfeasibleProgramError("every greedy candidate is infeasible")
            removed.append(best_b)
            current = best_sol
            objectives.append(current.objective)
    if current is None:
        raise InfeasibleProgramError("scenario program is infeasible")
    return _outcome(program, removed, max(count, 1), current, calls, objectives)


def remove_marginal(program: ScenarioProgram, R) -> RemovalOutcome:
    """Drop the block with the largest summed multiplier, re-solve, repeat."""
    budgets = _budgets(program, R)
    removed: list = []
    current = solve(program, program.mask(()))
    objectives = []
    for j, r_j in enumerate(budgets):
        blocks = program.blocks(j)
        for _ in range(r_j):
            scores = program.block_duals(current.dual, j)
            live = [(p, b) for p, b in enumerate(blocks) if b not in removed]
            p_best, b_best = live[0]
            for p, b in live[1:]:
                if scores[p] > scores[p_best]:
                    p_best, b_best = p, b
            if scores[p_best] <= 0.0:
                log.info("all multipliers of constraint %d are zero; removing scenario %d",
                         j, b_best[1])
            removed.append(b_best)
            current = solve(program, program.mask(removed))
            objectives.append(current.objective)
    calls = 1 + len(removed)
    return _outcome(program, removed, calls, current, calls, objectives)


ALGORITHMS = {"optimal": remove_optimal, "greedy": remove_greedy, "marginal": remove_marginal}


def remove(program: ScenarioProgram, R, algorithm: str = "greedy", **options) -> RemovalOutcome:
    """Dispatch to one of ``optimal``, ``greedy`` or ``marginal``."""
    try:
        rule = ALGORITHMS[algorithm]
    except KeyError:
        raise UsageError(f"unknown removal algorithm {algorithm!r}") from None
    return rule(program, R, **options)
