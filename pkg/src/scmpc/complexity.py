"""Sample complexity of the scenario program.

For a sample-removal pair ``(K, R)`` and support-rank bound ``rho1`` the
first-step violation probability ``V`` satisfies

    P[V > nu] <= U(nu) = min(1, C(R+rho1-1, R) * B(nu; K, R+rho1-1)),

with ``B`` the binomial lower tail, so ``E[V] <= int_0^1 U(nu) dnu``. A pair
is *admissible* for a level ``epsilon`` when that integral is at most
``epsilon``. Everything is evaluated in log space; the binomial
coefficient for ``R = 500`` alone is far beyond double range.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import NumericalError, UsageError
from .model import Polytope, SystemModel

log = logging.getLogger(__name__)

QUAD_TOL = 1e-8
QUAD_MAX_DEPTH = 60
RANK_RTOL = 1e-10


def _check_counts(K, q):
    if K < 0 or q < 0:
        raise UsageError(f"counts must be nonnegative, got K={K}, q={q}")
    if q > K:
        raise UsageError(f"need q <= K, got q={q} > K={K}")


def log_choose(n: int, k: int) -> float:
    return math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)


def beta_tail(nu: float, K: int, q: int) -> float:
    """Binomial lower tail ``sum_{j=0}^{q} C(K, j) nu^j (1-nu)^(K-j)``."""
    _check_counts(K, q)
    if not 0.0 <= nu <= 1.0:
        raise UsageError(f"nu must lie in [0, 1], got {nu}")
    return min(1.0, math.exp(kernels.log_binomial_tail(float(nu), int(K), int(q))))


def _check_pair(K, R, rho1):
    if rho1 < 1 or R < 0:
        raise UsageError(f"need rho1 >= 1 and R >= 0, got rho1={rho1}, R={R}")
    if K < R + rho1:
        raise UsageError(f"need K >= R + rho1, got K={K}, R={R}, rho1={rho1}")


def violation_bound(nu: float, K: int, R: int, rho1: int) -> float:
    """Saturated tail bound ``U(nu)`` on the distribution of the violation probability."""
    _check_pair(K, R, rho1)
    if not 0.0 <= nu <= 1.0:
        raise UsageError(f"nu must lie in [0, 1], got {nu}")
    q = R + rho1 - 1
    logu = log_choose(q, R) + kernels.log_binomial_tail(float(nu), int(K), int(q))
    return math.exp(min(0.0, logu))


def expected_violation_bound(K: int, R: int, rho1: int, method: str = "auto",
                             tol: float = QUAD_TOL, max_depth: int = QUAD_MAX_DEPTH) -> float:
    """Upper bound on the expected first-step violation probability.

    ``method="quadrature"`` always integrates ``U`` numerically (adaptive
    Simpson after splitting at the saturation point). ``"closed_form"`` is
    only valid for ``R == 0`` where the integral equals ``rho1 / (K + 1)``;
    ``"auto"`` picks the closed form whenever it applies.
    """
    _check_pair(K, R, rho1)
    if method not in ("auto", "quadrature", "closed_form"):
        raise UsageError(f"unknown method {method!r}")
    if method == "closed_form" or (method == "auto" and R == 0):
        if R != 0:
            raise UsageError("the closed form only holds without removals")
        return rho1 / (K + 1.0)
    q = R + rho1 - 1
    value, evals, capped = kernels.bound_integral(log_choose(q, R), int(K), int(q),
                                                  float(tol), int(max_depth))
    if capped:
        raise NumericalError(
            f"adaptive Simpson hit depth {max_depth} for K={K}, R={R}, rho1={rho1} "
            f"after {evals} evaluations (tol={tol:g})")
    return float(value)


@dataclass(frozen=True)
class SampleRemovalPair:
    K: int
    R: int
    rho1: int
    epsilon: float
    expected_violation_bound: float

    @classmethod
    def evaluate(cls, K: int, R: int, rho1: int, epsilon: float) -> "SampleRemovalPair":
        return cls(K, R, rho1, epsilon, expected_violation_bound(K, R, rho1))

    @property
    def admissible(self) -> bool:
        return self.expected_violation_bound <= self.epsilon


def is_admissible(K: int, R: int, rho1: int, epsilon: float) -> bool:
    return expected_violation_bound(K, R, rho1) <= epsilon


def min_sample_size(R: int, rho1: int, epsilon: float) -> int:
    """Smallest admissible ``K`` for fixed ``R``, by doubling then bisection.

    Relies on the bound decreasing monotonically in ``K``.
    """
    if not 0.0 < epsilon < 0.5:
        raise UsageError(f"epsilon must lie in (0, 0.5), got {epsilon}")
    if rho1 < 1 or R < 0:
        raise UsageError(f"need rho1 >= 1 and R >= 0, got rho1={rho1}, R={R}")
    lo = R + rho1 - 1  # known (or assumed) inadmissible: program too small
    hi = R + rho1
    while not is_admissible(hi, R, rho1, epsilon):
        lo = hi
        hi *= 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if is_admissible(mid, R, rho1, epsilon):
            hi = mid
        else:
            lo = mid
    log.debug("min_sample_size(R=%d, rho1=%d, eps=%g) = %d", R, rho1, epsilon, hi)
    return hi


def bound_curve(Ks, R: int, rho1: int) -> np.ndarray:
    """Expected-violation bound for each ``K`` in ``Ks`` (values below ``R + rho1`` give 1)."""
    out = np.empty(len(Ks))
    for i, K in enumerate(Ks):
        out[i] = 1.0 if K < R + rho1 else expected_violation_bound(int(K), R, rho1)
    return out


def constraint_rank(constraint: Polytope) -> int:
    """Co-dimension of the largest subspace left free by ``constraint``."""
    if constraint.n_rows == 0:
        return 0
    sv = np.linalg.svd(constraint.H, compute_uv=False)
    if sv.size == 0 or sv[0] == 0.0:
        return 0
    return int(np.sum(sv > RANK_RTOL * sv[0]))


def support_rank_bound(model: SystemModel, constraint: Polytope, N: int) -> int:
    """Bound on the support rank of the first-step state constraint.

    The first predicted state depends on the inputs only through ``B u_0``,
    and on the state space only through the ``rank(H)`` directions the
    constraint sees, so the bound is ``min(rank(H), m)`` with or without
    multiplicative uncertainty. A vacuous constraint still gets ``1``.
    """
    if constraint.dim != model.n:
        raise UsageError(f"constraint dimension {constraint.dim} != state dimension {model.n}")
    if N < 1:
        raise UsageError(f"horizon must be >= 1, got {N}")
    rank = constraint_rank(constraint)
    if rank == 0:
        log.info("constraint leaves the whole state space free; using rho1 = 1")
        return 1
    return min(rank, model.m)
