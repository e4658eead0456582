"""Closed-loop Monte Carlo for the scenario MPC law.

The plant draws its uncertainty from the ``PLANT`` stream of ``sim_seed``,
independent of the controller's scenario streams, so changing one seed
never perturbs the other source of randomness.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import complexity
from .controller import ControllerConfig, step
from .errors import InfeasibleProgramError, UsageError
from .model import (ESTIMATE_STREAM, PLANT_STREAM, Distribution, Normal, Polytope,
                    StageCost, SystemModel, draw_uncertainty, sample_scenarios, stream)
from .removal import remove
from .scenario_program import assemble, solve

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class ClosedLoopRecord:
    """Trajectory of a closed-loop run.

    ``x`` has ``T + 1`` rows (initial state included); the per-step arrays
    have ``T`` rows. ``violations[t, j]`` flags ``x_{t+1}`` outside
    constraint ``j``. A run stopped by hard infeasibility is truncated and
    carries ``failure_step``.
    """

    x: np.ndarray
    u: np.ndarray
    theta: np.ndarray
    noise: np.ndarray
    violations: np.ndarray
    stage_cost: np.ndarray
    status: tuple
    solve_time: np.ndarray
    controller_seed: int
    sim_seed: int
    failure_step: int | None = None
    removed: tuple = field(default=(), repr=False)

    @property
    def T(self) -> int:
        return self.u.shape[0]

    @property
    def V_avg(self) -> np.ndarray:
        """Fraction of steps that violate each constraint."""
        if self.T == 0:
            return np.zeros(self.violations.shape[1])
        return self.violations.mean(axis=0)

    @property
    def l_avg(self) -> float:
        return float(self.stage_cost.mean()) if self.T else math.nan

    @property
    def l_std(self) -> float:
        """Population standard deviation of the stage costs."""
        return float(self.stage_cost.std()) if self.T else math.nan

    @property
    def soft_activations(self) -> int:
        return sum(s == "soft_active" for s in self.status)

    def running_average(self, T_prime: int | None = None) -> np.ndarray:
        """``(1/T') sum_{t<T'} M_t`` per constraint, for all ``T'`` or one."""
        if T_prime is not None:
            if not 1 <= T_prime <= self.T:
                raise UsageError(f"T' must lie in [1, {self.T}], got {T_prime}")
            return self.violations[:T_prime].mean(axis=0)
        c = np.cumsum(self.violations, axis=0)
        return c / np.arange(1, self.T + 1)[:, None]


def simulate(config: ControllerConfig, model: SystemModel, x0, T: int, sim_seed: int = 1,
             progress: int = 0) -> ClosedLoopRecord:
    """Run the closed loop for ``T`` steps from ``x0``.

    ``model`` is the true plant; it may differ from ``config.model``.
    ``progress > 0`` logs every ``progress`` steps.
    """
    if T < 1:
        raise UsageError(f"need T >= 1, got {T}")
    x0 = np.asarray(x0, dtype=np.float64)
    if x0.shape != (model.n,):
        raise UsageError(f"x0 has shape {x0.shape}, expected ({model.n},)")
    theta, noise = draw_uncertainty(model, (T,), stream(sim_seed, PLANT_STREAM))
    A, B, w = model.realize_batch(theta, noise)
    polys = [c.polytope for c in config.constraints]
    xs = np.empty((T + 1, model.n))
    us = np.empty((T, model.m))
    viol = np.zeros((T, len(polys)), dtype=bool)
    cost = np.empty(T)
    times = np.empty(T)
    status, removed = [], []
    xs[0] = x0
    failure = None
    for t in range(T):
        try:
            u, diag = step(config, xs[t], t)
        except InfeasibleProgramError as exc:
            log.error("closed loop stopped at step %d: %s", t, exc)
            failure = t
            break
        us[t] = u
        xs[t + 1] = A[t] @ xs[t] + B[t] @ u + w[t]
        for j, P in enumerate(polys):
            viol[t, j] = not P.contains(xs[t + 1])
        cost[t] = config.cost(xs[t], u)
        times[t] = diag.solve_time
        status.append(diag.status)
        removed.append(diag.removed)
        if progress and (t + 1) % progress == 0:
            log.info("step %d/%d  V_avg=%s", t + 1, T, np.round(viol[:t + 1].mean(axis=0), 4))
    n = T if failure is None else failure
    return ClosedLoopRecord(
        x=xs[:n + 1], u=us[:n], theta=theta[:n], noise=noise[:n], violations=viol[:n],
        stage_cost=cost[:n], status=tuple(status), solve_time=times[:n],
        controller_seed=config.seed, sim_seed=sim_seed, failure_step=failure,
        removed=tuple(removed))


def estimate_violation_probability(model: SystemModel, x_t, u, X: Polytope, M: int,
                                   seed: int = 0) -> float:
    """Monte Carlo estimate of ``P[A x_t + B u + w not in X]`` from ``M`` draws."""
    if M < 1:
        raise UsageError(f"need M >= 1, got {M}")
    theta, noise = draw_uncertainty(model, (M,), stream(seed, ESTIMATE_STREAM))
    A, B, w = model.realize_batch(theta, noise)
    x_next = A @ np.asarray(x_t, dtype=np.float64) + B @ np.asarray(u, dtype=np.float64) + w
    return float(X.violated(x_next).mean())


@dataclass(frozen=True)
class AdditiveToy:
    """Scalar plant ``x+ = x + u + w`` with constraint ``x+ >= threshold``.

    ``threshold=None`` leaves the state unconstrained. The cost is
    ``x^2 + u^2`` and ``|u| <= input_bound``. The first-step violation
    probability of an input is ``P[w < threshold - x - u]``, available in
    closed form through the noise CDF.
    """

    x0: float = 0.0
    threshold: float | None = 1.0
    noise: Distribution = field(default_factory=lambda: Normal(0.0, 1.0))
    horizon: int = 1
    input_bound: float = 100.0

    @property
    def model(self) -> SystemModel:
        return SystemModel(A0=[[1.0]], B0=[[1.0]], noise=(self.noise,))

    @property
    def constraint(self) -> Polytope:
        if self.threshold is None:
            return Polytope.full_space(1)
        return Polytope([[-1.0]], [-self.threshold])

    @property
    def cost(self) -> StageCost:
        return StageCost([[1.0]], [[1.0]])

    @property
    def input_set(self) -> Polytope:
        return Polytope.box([-self.input_bound], [self.input_bound])

    def violation_probability(self, u0: float) -> float:
        if self.threshold is None:
            return 0.0
        return float(self.noise.cdf(self.threshold - self.x0 - u0))


@dataclass(frozen=True)
class BoundValidationResult:
    mean: float
    bound: float
    stderr: float
    values: np.ndarray = field(repr=False)

    def __iter__(self):
        return iter((self.mean, self.bound))


def bound_validation_experiment(toy: AdditiveToy, K: int, R: int, rho1: int, draws: int,
                                seed: int = 0, algorithm: str = "greedy"
                                ) -> BoundValidationResult:
    """Average the exact first-step violation over ``draws`` scenario sets.

    Unpacks as ``(empirical mean, theoretical bound)``; the standard error
    and per-draw values are attached.
    """
    if draws < 1:
        raise UsageError(f"need draws >= 1, got {draws}")
    if R >= K:
        raise UsageError(f"need R < K, got R={R}, K={K}")
    model = toy.model
    x = np.array([toy.x0])
    V = np.empty(draws)
    for d in range(draws):
        scen = sample_scenarios(model, K, toy.horizon, seed, t=d)
        prog = assemble(x, scen, toy.cost, [toy.constraint], toy.input_set, slack_penalty=0.0)
        sol = remove(prog, R, algorithm).final if R else solve(prog)
        V[d] = toy.violation_probability(sol.u_stack[0])
    bound = complexity.expected_violation_bound(K, R, rho1) if K >= R + rho1 else 1.0
    se = float(V.std(ddof=1) / math.sqrt(draws)) if draws > 1 else math.nan
    return BoundValidationResult(float(V.mean()), float(bound), se, V)
