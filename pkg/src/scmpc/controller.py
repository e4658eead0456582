"""Receding-horizon scenario MPC feedback law.

At every time step the controller draws a fresh pool of scenarios, builds
the scenario program, discards scenarios with the configured removal rule
and applies the first input of the resulting plan.

With several chance constraints one pool of ``max_j K_j`` scenarios is
drawn; constraint ``j`` is imposed on the first ``K_j`` of them and may
drop ``R_j`` of those. The cost is averaged over the whole pool.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import complexity
from .errors import InadmissiblePairError, InfeasibleProgramError, UsageError
from .model import ChanceConstraintSpec, Polytope, StageCost, SystemModel, sample_scenarios
from .removal import ALGORITHMS, METRICS, remove
from .scenario_program import SOFT_ACTIVE, assemble, solve

log = logging.getLogger(__name__)

INPUT_TOL = 1e-6


def resolve_constraint(spec: ChanceConstraintSpec, model: SystemModel, N: int
                       ) -> ChanceConstraintSpec:
    """Fill in a missing support-rank bound and sample size.

    The rank bound defaults to :func:`complexity.support_rank_bound`; the
    sample size to the smallest admissible ``K`` for ``(R, rho1, epsilon)``.
    """
    rho1 = spec.rho1_bound
    if rho1 is None:
        rho1 = complexity.support_rank_bound(model, spec.polytope, N)
    K = spec.samples
    if K is None:
        K = complexity.min_sample_size(spec.removals, rho1, spec.epsilon)
    return replace(spec, rho1_bound=int(rho1), samples=int(K))


@dataclass(frozen=True, eq=False)
class ControllerConfig:
    """Everything the feedback law needs.

    Constraints are resolved on construction and every ``(K_j, R_j)`` is
    checked for admissibility; ``force=True`` downgrades a failed check to
    a warning. ``slack_penalty=None`` picks the default soft-constraint
    weight and ``0`` disables soft constraints.
    """

    model: SystemModel
    N: int
    constraints: tuple
    U: Polytope
    cost: StageCost
    removal_algorithm: str = "greedy"
    slack_penalty: float | None = None
    seed: int = 0
    greedy_metric: str = "total_cost"
    force: bool = False

    def __post_init__(self):
        if self.N < 1:
            raise UsageError(f"horizon must be >= 1, got {self.N}")
        if self.removal_algorithm not in ALGORITHMS:
            raise UsageError(f"unknown removal algorithm {self.removal_algorithm!r}")
        if self.greedy_metric not in METRICS:
            raise UsageError(f"unknown greedy metric {self.greedy_metric!r}")
        if self.U.dim != self.model.m:
            raise UsageError(f"input set has dimension {self.U.dim}, expected {self.model.m}")
        if self.slack_penalty is not None and self.slack_penalty < 0:
            raise UsageError("slack_penalty must be nonnegative")
        specs = (self.constraints,) if isinstance(self.constraints, ChanceConstraintSpec) \
            else tuple(self.constraints)
        specs = tuple(resolve_constraint(c, self.model, self.N) for c in specs)
        for j, c in enumerate(specs):
            if c.removals >= c.samples:
                raise UsageError(f"constraint {j}: R={c.removals} must be below K={c.samples}")
        object.__setattr__(self, "constraints", specs)
        failed = [(j, v) for j, ok, v in admissibility_check(self) if not ok]
        for j, v in failed:
            c = specs[j]
            msg = (f"constraint {j}: (K, R) = ({c.samples}, {c.removals}) has expected "
                   f"violation bound {v:.4g} > epsilon = {c.epsilon:g}")
            if not self.force:
                raise InadmissiblePairError(msg)
            log.warning("%s (forced)", msg)

    @property
    def pool_size(self) -> int:
        return max(c.samples for c in self.constraints)

    @property
    def budgets(self) -> tuple:
        return tuple(c.removals for c in self.constraints)


def admissibility_check(config: ControllerConfig) -> list:
    """``(j, admissible, bound)`` for every constraint of ``config``."""
    out = []
    for j, c in enumerate(config.constraints):
        v = complexity.expected_violation_bound(c.samples, c.removals, c.rho1_bound)
        out.append((j, bool(v <= c.epsilon), float(v)))
    return out


@dataclass(frozen=True)
class StepDiagnostics:
    t: int
    objective: float
    removed: tuple  # (constraint, scenario) blocks in removal order
    status: str
    solve_time: float
    solve_count: int
    qp_calls: int
    u_stack: np.ndarray = field(repr=False, default=None)

    @property
    def soft_active(self) -> bool:
        return self.status == SOFT_ACTIVE


def step(config: ControllerConfig, x_t, t: int):
    """Apply the scenario MPC law at state ``x_t`` and time ``t``.

    Returns ``(u_t, diagnostics)``. Scenarios come from the substream
    ``(config.seed, t)`` so every time step sees fresh draws.
    """
    x_t = np.asarray(x_t, dtype=np.float64)
    if x_t.shape != (config.model.n,):
        raise UsageError(f"state has shape {x_t.shape}, expected ({config.model.n},)")
    start = time.perf_counter()
    scen = sample_scenarios(config.model, config.pool_size, config.N, config.seed, t)
    X_specs = [(c.polytope, c.samples) for c in config.constraints]
    program = assemble(x_t, scen, config.cost, X_specs, config.U, config.slack_penalty)
    try:
        if any(config.budgets):
            options = {"metric": config.greedy_metric} \
                if config.removal_algorithm == "greedy" else {}
            out = remove(program, config.budgets, config.removal_algorithm, **options)
            sol, removed, count, calls = out.final, out.removed_blocks, out.solve_count, \
                out.qp_calls
        else:
            sol, removed, count, calls = solve(program), (), 1, 1
    except InfeasibleProgramError as exc:
        raise InfeasibleProgramError(f"step {t}: {exc}", step=t) from exc
    u = sol.u_stack[:config.model.m].copy()
    if not config.U.contains(u, INPUT_TOL):
        log.warning("step %d: input leaves U by more than %g", t, INPUT_TOL)
    diag = StepDiagnostics(t, sol.objective, tuple(removed), sol.status,
                           time.perf_counter() - start, count, calls, sol.u_stack)
    return u, diag


class ScenarioMPC:
    """Stateful wrapper around :func:`step` for closed-loop use."""

    def __init__(self, config: ControllerConfig):
        self.config = config

    def step(self, x_t, t: int):
        return step(self.config, x_t, t)

    __call__ = step
