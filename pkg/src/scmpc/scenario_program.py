"""Finite-horizon scenario program in condensed form.

Predicted states are eliminated by forward substitution, leaving the
stacked input ``u = (u_0, ..., u_{N-1})`` as the only decision variable.
The objective averages the quadratic stage cost over the sampled
trajectories (stages ``0..N-1``); state constraints are imposed on every
predicted state ``x_1..x_N`` of every scenario assigned to a constraint,
and input constraints on every ``u_i``.

Rows of the assembled inequality system are grouped into *blocks*: all
rows of constraint ``j`` under scenario ``k`` form block ``(j, k)``, the
unit that removal algorithms add or drop. Input rows carry group ``-1``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy import linalg

from . import kernels
from .errors import InfeasibleProgramError, NumericalError, UsageError
from .model import Polytope, ScenarioSet, StageCost

log = logging.getLogger(__name__)

INPUT_GROUP = -1
FEAS_TOL = 1e-10
SOFT_PENALTY_SCALE = 1e6

OPTIMAL = "optimal"
SOFT_ACTIVE = "soft_active"
INFEASIBLE = "infeasible"


@dataclass(frozen=True, eq=False)
class CondensedTrajectory:
    """``x_i^(k) = gains[k, i] @ u + offsets[k, i]`` for ``i = 0..N``."""

    gains: np.ndarray  # (K, N+1, n, N*m)
    offsets: np.ndarray  # (K, N+1, n)

    def state_gain(self, k: int, i: int) -> np.ndarray:
        return self.gains[k, i]

    def state_offset(self, k: int, i: int) -> np.ndarray:
        return self.offsets[k, i]

    def predict(self, u) -> np.ndarray:
        """Predicted states, shape ``(K, N+1, n)``."""
        return self.gains @ np.asarray(u, dtype=np.float64) + self.offsets


def condense(x_t, scenarios: ScenarioSet) -> CondensedTrajectory:
    if len(scenarios) == 0:
        raise UsageError("need at least one scenario")
    x_t = np.ascontiguousarray(x_t, dtype=np.float64)
    if x_t.shape != (scenarios.A.shape[-1],):
        raise UsageError(f"state has shape {x_t.shape}, scenarios expect ({scenarios.A.shape[-1]},)")
    gains, offsets = kernels.condense_batch(
        np.ascontiguousarray(scenarios.A), np.ascontiguousarray(scenarios.B),
        np.ascontiguousarray(scenarios.w), x_t)
    return CondensedTrajectory(gains, offsets)


@dataclass(frozen=True)
class _Factor:
    L: np.ndarray
    C: np.ndarray  # whitened rows of -A
    b: np.ndarray  # -b
    d: np.ndarray  # L^-1 g
    regularization: float


@dataclass(frozen=True, eq=False)
class ScenarioProgram:
    """``min 0.5 u'Hu + g'u + c  s.t.  A u <= b`` with tagged rows."""

    hessian: np.ndarray
    gradient: np.ndarray
    constant: float
    A: np.ndarray
    b: np.ndarray
    row_group: np.ndarray
    row_scenario: np.ndarray
    row_stage: np.ndarray
    row_halfspace: np.ndarray
    group_scenarios: tuple  # per group: scenario indices carrying its rows
    group_offsets: tuple  # per group: first row
    group_block_rows: tuple  # per group: rows per scenario (N * q_j)
    n_inputs: int
    horizon: int
    slack_penalty: float = 0.0
    first_stage_weight: np.ndarray | None = None  # R'R; first-stage cost up to a constant
    _block_pos: dict = field(default=None, repr=False)

    def __post_init__(self):
        pos = []
        for scen in self.group_scenarios:
            pos.append({int(k): p for p, k in enumerate(scen)})
        object.__setattr__(self, "_block_pos", pos)

    @classmethod
    def from_qp(cls, H, g, A, b, row_scenario=None, constant: float = 0.0,
                slack_penalty: float = 0.0) -> "ScenarioProgram":
        """Wrap a plain QP ``min 0.5 u'Hu + g'u s.t. Au <= b``.

        ``row_scenario`` tags each row with a scenario index (``-1`` for
        fixed rows, which must come last); scenario rows must form
        contiguous blocks of equal size, in increasing scenario order.
        """
        H = np.atleast_2d(np.asarray(H, dtype=np.float64))
        g = np.atleast_1d(np.asarray(g, dtype=np.float64))
        A = np.asarray(A, dtype=np.float64).reshape(-1, H.shape[0])
        b = np.atleast_1d(np.asarray(b, dtype=np.float64))
        rows = A.shape[0]
        scen = np.full(rows, -1, dtype=np.int64) if row_scenario is None else \
            np.asarray(row_scenario, dtype=np.int64)
        if scen.shape != (rows,) or b.shape != (rows,):
            raise UsageError("A, b and row_scenario must agree in length")
        n_state = int(np.sum(scen >= 0))
        if np.any(scen[n_state:] >= 0):
            raise UsageError("fixed rows must follow all scenario rows")
        groups, offsets, sizes = (), (), ()
        halfspace = np.zeros(rows, dtype=np.int64)
        if n_state:
            ks, counts = np.unique(scen[:n_state], return_counts=True)
            if np.any(counts != counts[0]) or np.any(np.diff(scen[:n_state]) < 0):
                raise UsageError("scenario rows must form sorted blocks of equal size")
            size = int(counts[0])
            groups, offsets, sizes = (ks,), (0,), (size,)
            halfspace[:n_state] = np.tile(np.arange(size), len(ks))
        group = np.where(scen >= 0, 0, INPUT_GROUP)
        return cls(hessian=H, gradient=g, constant=float(constant), A=A, b=b,
                   row_group=group, row_scenario=scen,
                   row_stage=np.where(scen >= 0, 1, 0), row_halfspace=halfspace,
                   group_scenarios=groups, group_offsets=offsets, group_block_rows=sizes,
                   n_inputs=H.shape[0], horizon=1, slack_penalty=float(slack_penalty))

    @property
    def n_vars(self) -> int:
        return self.hessian.shape[0]

    @property
    def n_rows(self) -> int:
        return self.A.shape[0]

    @property
    def n_groups(self) -> int:
        return len(self.group_scenarios)

    def objective(self, u) -> float:
        u = np.asarray(u, dtype=np.float64)
        return float(0.5 * u @ self.hessian @ u + self.gradient @ u + self.constant)

    def blocks(self, group: int = 0) -> list:
        return [(group, int(k)) for k in self.group_scenarios[group]]

    def block_slice(self, group: int, scenario: int) -> slice:
        p = self._block_pos[group][scenario]
        size = self.group_block_rows[group]
        start = self.group_offsets[group] + p * size
        return slice(start, start + size)

    def mask(self, removed=()) -> np.ndarray:
        """Row mask keeping everything except the rows of the ``removed`` blocks."""
        keep = np.ones(self.n_rows, dtype=bool)
        for j, k in removed:
            keep[self.block_slice(j, k)] = False
        return keep

    def block_duals(self, dual: np.ndarray, group: int) -> np.ndarray:
        """Sum of multipliers over each block of ``group``, in scenario order."""
        scen = self.group_scenarios[group]
        size = self.group_block_rows[group]
        start = self.group_offsets[group]
        seg = dual[start:start + len(scen) * size]
        return seg.reshape(len(scen), size).sum(axis=1)

    def violation(self, u, mask=None) -> float:
        """Largest constraint violation ``max(A u - b)^+`` over masked rows."""
        r = self.A @ np.asarray(u, dtype=np.float64) - self.b
        if mask is not None:
            r = r[mask]
        return float(max(r.max(initial=0.0), 0.0))

    @cached_property
    def factor(self) -> _Factor:
        H = self.hessian
        reg = 0.0
        try:
            L = np.linalg.cholesky(H)
        except np.linalg.LinAlgError:
            reg = 1e-10 * max(1.0, float(np.abs(np.diag(H)).max(initial=0.0)))
            log.warning("hessian not positive definite; adding %.1e * I", reg)
            L = np.linalg.cholesky(H + reg * np.eye(H.shape[0]))
        C = -linalg.solve_triangular(L, self.A.T, lower=True).T
        d = linalg.solve_triangular(L, self.gradient, lower=True)
        return _Factor(L, np.ascontiguousarray(C), np.ascontiguousarray(-self.b), d, reg)


@dataclass(frozen=True, eq=False)
class QPSolution:
    u_stack: np.ndarray
    objective: float
    dual: np.ndarray
    status: str
    iterations: int = 0
    slack: np.ndarray | None = None


def _as_group(spec, K):
    poly, subset = (spec, None) if isinstance(spec, Polytope) else spec
    if subset is None:
        idx = np.arange(K)
    elif np.isscalar(subset):
        if not 1 <= int(subset) <= K:
            raise UsageError(f"constraint asks for {subset} scenarios, only {K} drawn")
        idx = np.arange(int(subset))
    else:
        idx = np.asarray(subset, dtype=np.int64)
        if idx.size == 0 or idx.min() < 0 or idx.max() >= K:
            raise UsageError("scenario subset out of range")
    return poly, idx


def assemble(x_t, scenarios: ScenarioSet, cost: StageCost, X_specs: Sequence,
             U: Polytope | None, slack_penalty: float | None = None,
             condensed: CondensedTrajectory | None = None) -> ScenarioProgram:
    """Build the condensed scenario QP.

    ``X_specs`` holds one entry per state constraint: a :class:`Polytope`
    (imposed on all scenarios) or a pair ``(Polytope, subset)`` where
    ``subset`` is a count (first scenarios) or an index array.
    ``slack_penalty=None`` selects ``1e6`` times the largest cost eigenvalue;
    ``0`` makes every state constraint hard.

    The cost is averaged over scenarios rather than summed, which leaves the
    minimiser unchanged.
    """
    ct = condensed if condensed is not None else condense(x_t, scenarios)
    K, Np1, n, nv = ct.gains.shape
    N = Np1 - 1
    m = nv // N
    if isinstance(X_specs, (Polytope, tuple)) and not isinstance(X_specs, list):
        X_specs = [X_specs]

    Ql = cost.Q
    Sx = np.einsum("ab,kibu->kiau", Ql, ct.gains[:, :N]).reshape(-1, nv)
    ox = np.einsum("ab,kib->kia", Ql, ct.offsets[:, :N]).reshape(-1)
    H = (2.0 / K) * (Sx.T @ Sx) + 2.0 * np.kron(np.eye(N), cost.input_weight)
    H = 0.5 * (H + H.T)
    g = (2.0 / K) * (Sx.T @ ox)
    const = float(ox @ ox) / K

    rows, rhs, tags = [], [], []
    group_scen, group_off, group_size = [], [], []
    offset = 0
    for j, spec in enumerate(X_specs):
        poly, idx = _as_group(spec, K)
        if poly.dim != n:
            raise UsageError(f"state constraint {j} has dimension {poly.dim}, expected {n}")
        q = poly.n_rows
        Aj = np.einsum("rn,kinu->kiru", poly.H, ct.gains[idx, 1:]).reshape(-1, nv)
        bj = (poly.h - np.einsum("rn,kin->kir", poly.H, ct.offsets[idx, 1:])).reshape(-1)
        kk, ii, rr = np.meshgrid(idx, np.arange(1, N + 1), np.arange(q), indexing="ij")
        rows.append(Aj)
        rhs.append(bj)
        tags.append(np.stack([np.full(Aj.shape[0], j), kk.ravel(), ii.ravel(), rr.ravel()]))
        group_scen.append(idx)
        group_off.append(offset)
        group_size.append(N * q)
        offset += Aj.shape[0]
    if U is not None and U.n_rows:
        if U.dim != m:
            raise UsageError(f"input set has dimension {U.dim}, expected {m}")
        qu = U.n_rows
        Au = np.zeros((N * qu, nv))
        for i in range(N):
            Au[i * qu:(i + 1) * qu, i * m:(i + 1) * m] = U.H
        rows.append(Au)
        rhs.append(np.tile(U.h, N))
        tags.append(np.stack([np.full(N * qu, INPUT_GROUP), np.full(N * qu, -1),
                              np.repeat(np.arange(N), qu), np.tile(np.arange(qu), N)]))
    A = np.vstack(rows) if rows else np.zeros((0, nv))
    b = np.concatenate(rhs) if rhs else np.zeros(0)
    tag = np.hstack(tags) if tags else np.zeros((4, 0), dtype=np.int64)

    if slack_penalty is None:
        slack_penalty = SOFT_PENALTY_SCALE * max(cost.max_eigenvalue(), 1.0)
    return ScenarioProgram(
        hessian=H, gradient=g, constant=const, A=A, b=b,
        row_group=tag[0].astype(np.int64), row_scenario=tag[1].astype(np.int64),
        row_stage=tag[2].astype(np.int64), row_halfspace=tag[3].astype(np.int64),
        group_scenarios=tuple(group_scen), group_offsets=tuple(group_off),
        group_block_rows=tuple(group_size), n_inputs=m, horizon=N,
        slack_penalty=float(slack_penalty), first_stage_weight=cost.input_weight,
    )


def _max_iter(n_rows, n_vars):
    return 50 * (n_vars + 10) + 4 * n_rows


def solve(program: ScenarioProgram, mask: np.ndarray | None = None,
          tol: float = FEAS_TOL) -> QPSolution:
    """Solve the program restricted to the rows selected by ``mask``.

    Hard-infeasible programs are retried with shared per-(constraint, stage,
    halfspace) slacks when ``program.slack_penalty > 0``; otherwise
    :class:`InfeasibleProgramError` is raised.
    """
    fac = program.factor
    if mask is None:
        mask = np.ones(program.n_rows, dtype=bool)
    y, mult, status, iters = kernels.dual_active_set(
        fac.C, fac.b, fac.d, mask, tol, _max_iter(program.n_rows, program.n_vars))
    if status == kernels.QP_OPTIMAL:
        u = linalg.solve_triangular(fac.L.T, y, lower=False)
        return QPSolution(u, program.objective(u), mult, OPTIMAL, int(iters))
    if status == kernels.QP_MAX_ITER:
        raise NumericalError(f"dual active-set did not converge in {iters} iterations")
    if program.slack_penalty > 0:
        return _solve_soft(program, mask, tol)
    raise InfeasibleProgramError("scenario program is infeasible and soft constraints are off")


def _solve_soft(program: ScenarioProgram, mask: np.ndarray, tol: float) -> QPSolution:
    nv, N = program.n_vars, program.horizon
    state = program.row_group >= 0
    # one slack per (group, stage, halfspace), shared by all scenarios
    n_half = [size // N for size in program.group_block_rows]
    base = np.concatenate([[0], np.cumsum([N * q for q in n_half])]).astype(np.int64)
    ns = int(base[-1])
    slack_of_row = np.full(program.n_rows, -1, dtype=np.int64)
    g_ = program.row_group[state]
    slack_of_row[state] = (base[g_] + (program.row_stage[state] - 1) * np.asarray(n_half)[g_]
                           + program.row_halfspace[state])

    A = np.zeros((program.n_rows + ns, nv + ns))
    A[:program.n_rows, :nv] = program.A
    sr = np.nonzero(state)[0]
    A[sr, nv + slack_of_row[sr]] = -1.0
    A[program.n_rows:, nv:] = -np.eye(ns)
    b = np.concatenate([program.b, np.zeros(ns)])
    mu = 1e-6 * max(1.0, float(np.linalg.eigvalsh(program.hessian).max()))
    H = np.zeros((nv + ns, nv + ns))
    H[:nv, :nv] = program.hessian
    H[nv:, nv:] = mu * np.eye(ns)
    g = np.concatenate([program.gradient, np.full(ns, program.slack_penalty)])

    L = np.linalg.cholesky(H)
    C = np.ascontiguousarray(-linalg.solve_triangular(L, A.T, lower=True).T)
    d = linalg.solve_triangular(L, g, lower=True)
    full_mask = np.concatenate([mask, np.ones(ns, dtype=bool)])
    y, mult, status, iters = kernels.dual_active_set(
        C, np.ascontiguousarray(-b), d, full_mask, tol, _max_iter(A.shape[0], nv + ns))
    if status != kernels.QP_OPTIMAL:
        raise InfeasibleProgramError(
            "soft-constrained program failed; the input constraints alone are infeasible"
            if status == kernels.QP_INFEASIBLE else "soft-constrained solve did not converge")
    z = linalg.solve_triangular(L.T, y, lower=False)
    u, s = z[:nv], np.maximum(z[nv:], 0.0)
    obj = program.objective(u) + program.slack_penalty * s.sum() + 0.5 * mu * s @ s
    log.warning("scenario program infeasible; soft constraints active (max slack %.3g)", s.max())
    return QPSolution(u, float(obj), mult[:program.n_rows], SOFT_ACTIVE, int(iters), s)


def kkt_residuals(program: ScenarioProgram, sol: QPSolution,
                  mask: np.ndarray | None = None) -> dict:
    """Stationarity, primal/dual feasibility and complementarity residuals (inf-norms)."""
    if mask is None:
        mask = np.ones(program.n_rows, dtype=bool)
    lam = np.where(mask, sol.dual, 0.0)
    u = sol.u_stack
    slack = program.A @ u - program.b
    stat = program.hessian @ u + program.gradient + program.A.T @ lam
    return {
        "stationarity": float(np.abs(stat).max(initial=0.0)),
        "primal": float(np.maximum(slack[mask], 0.0).max(initial=0.0)),
        "dual": float(np.maximum(-lam, 0.0).max(initial=0.0)),
        "complementarity": float(np.abs(lam * slack).max(initial=0.0)),
    }
