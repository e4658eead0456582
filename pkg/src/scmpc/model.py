"""Uncertain linear system, constraint sets, stage cost and scenario sampling.

The transition map is ``x+ = A(theta) x + B(theta) u + w`` with matrices
affine in a parameter vector ``theta`` of independent scalar random
variables, and an additive disturbance ``w`` with independent components.

Randomness is addressed by ``(seed, stream, t)``: every time step of every
stream gets its own Philox generator derived through
:class:`numpy.random.SeedSequence`, so a draw never depends on how many
draws were made before it. Within one draw, uniforms are generated in
C order over ``(scenario, stage, coordinate)`` and mapped through inverse
CDFs, hence scenario ``k`` at time ``t`` is the same whatever the total
number of scenarios requested.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np
from scipy import special

from .errors import ConfigurationError, UsageError

MEMBERSHIP_TOL = 1e-9

# stream identifiers for (seed, stream, t) addressing
SCENARIO_STREAM = 0
PLANT_STREAM = 1
ESTIMATE_STREAM = 2

_TINY = 2.0 ** -54


def _frozen(a, ndim=None, name="array"):
    arr = np.array(a, dtype=np.float64)
    if ndim is not None and arr.ndim != ndim:
        raise ConfigurationError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


# -- scalar distributions ----------------------------------------------------


@dataclass(frozen=True)
class Uniform:
    """Uniform distribution on ``[low, high]`` (``low == high`` is a point mass)."""

    low: float = 0.0
    high: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.low) and np.isfinite(self.high)) or self.low > self.high:
            raise ConfigurationError(f"uniform bounds must satisfy low <= high, got {self}")

    def ppf(self, u):
        return self.low + (self.high - self.low) * u

    def cdf(self, x):
        x = np.asarray(x, dtype=np.float64)
        if self.high == self.low:
            return (x >= self.low).astype(np.float64)
        return np.clip((x - self.low) / (self.high - self.low), 0.0, 1.0)

    @property
    def mean(self):
        return 0.5 * (self.low + self.high)

    @property
    def var(self):
        return (self.high - self.low) ** 2 / 12.0

    def to_dict(self):
        return {"dist": "uniform", "low": self.low, "high": self.high}


@dataclass(frozen=True)
class Normal:
    """Normal distribution parameterised by mean and *variance*."""

    mean: float = 0.0
    var: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.mean) and np.isfinite(self.var)) or self.var < 0:
            raise ConfigurationError(f"normal variance must be >= 0, got {self}")

    @property
    def std(self):
        return float(np.sqrt(self.var))

    def ppf(self, u):
        if self.var == 0:
            return np.full(np.shape(u), self.mean)
        return self.mean + self.std * special.ndtri(u)

    def cdf(self, x):
        x = np.asarray(x, dtype=np.float64)
        if self.var == 0:
            return (x >= self.mean).astype(np.float64)
        return special.ndtr((x - self.mean) / self.std)

    def to_dict(self):
        return {"dist": "normal", "mean": self.mean, "var": self.var}


Distribution = Union[Uniform, Normal]


def distribution_from_dict(spec: dict) -> Distribution:
    kind = spec.get("dist")
    if kind == "uniform":
        return Uniform(float(spec.get("low", 0.0)), float(spec.get("high", 1.0)))
    if kind == "normal":
        return Normal(float(spec.get("mean", 0.0)), float(spec.get("var", 1.0)))
    raise ConfigurationError(f"unknown distribution {kind!r}")


# -- sets and cost -------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Polytope:
    """Halfspace representation ``{xi : H xi <= h}``."""

    H: np.ndarray
    h: np.ndarray

    def __post_init__(self):
        H = np.array(self.H, dtype=np.float64)
        if H.ndim == 1:
            H = H.reshape(0, H.size) if H.size == 0 else H.reshape(1, -1)
        h = np.array(self.h, dtype=np.float64).reshape(-1)
        if H.ndim != 2 or H.shape[0] != h.shape[0]:
            raise ConfigurationError(
                f"polytope needs H rows == len(h), got H{H.shape} and h{h.shape}")
        H.setflags(write=False)
        h.setflags(write=False)
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "h", h)

    @classmethod
    def full_space(cls, dim: int) -> "Polytope":
        return cls(np.zeros((0, dim)), np.zeros(0))

    @classmethod
    def box(cls, lower, upper) -> "Polytope":
        lower = np.asarray(lower, dtype=np.float64)
        upper = np.asarray(upper, dtype=np.float64)
        eye = np.eye(lower.size)
        return cls(np.vstack([eye, -eye]), np.concatenate([upper, -lower]))

    @property
    def dim(self) -> int:
        return self.H.shape[1]

    @property
    def n_rows(self) -> int:
        return self.H.shape[0]

    @property
    def is_unconstrained(self) -> bool:
        return self.n_rows == 0 or not np.any(self.H)

    def intersect(self, other: "Polytope") -> "Polytope":
        if other.dim != self.dim:
            raise UsageError("cannot intersect polytopes of different dimension")
        return Polytope(np.vstack([self.H, other.H]), np.concatenate([self.h, other.h]))

    def contains(self, point, tol: float = MEMBERSHIP_TOL) -> bool:
        return membership(self, point, tol)

    def violated(self, points, tol: float = MEMBERSHIP_TOL) -> np.ndarray:
        """Boolean mask of points (rows) lying strictly outside the tolerance band."""
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        if pts.shape[-1] != self.dim:
            raise UsageError(f"points have dimension {pts.shape[-1]}, polytope {self.dim}")
        if self.n_rows == 0:
            return np.zeros(pts.shape[:-1], dtype=bool)
        return np.any(pts @ self.H.T > self.h + tol, axis=-1)

    def to_dict(self):
        return {"H": self.H.tolist(), "h": self.h.tolist()}

    def __eq__(self, other):
        return (isinstance(other, Polytope) and self.H.shape == other.H.shape
                and np.array_equal(self.H, other.H) and np.array_equal(self.h, other.h))

    def __hash__(self):
        return hash((self.H.tobytes(), self.h.tobytes()))


def membership(poly: Polytope, point, tol: float = MEMBERSHIP_TOL) -> bool:
    """True iff ``H @ point <= h + tol`` componentwise."""
    x = np.asarray(point, dtype=np.float64).reshape(-1)
    if x.size != poly.dim:
        raise UsageError(f"point has dimension {x.size}, polytope has {poly.dim}")
    if poly.n_rows == 0:
        return True
    return bool(np.all(poly.H @ x <= poly.h + tol))


@dataclass(frozen=True, eq=False)
class StageCost:
    """Quadratic stage cost ``|Q xi|^2 + |R upsilon|^2``.

    ``Q`` and ``R`` are the weights *inside* the norms; the induced
    quadratic forms are ``Q^T Q`` and ``R^T R``.
    """

    Q: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        for name in ("Q", "R"):
            M = _frozen(getattr(self, name), 2, name)
            if M.shape[0] != M.shape[1]:
                raise ConfigurationError(f"{name} must be square, got {M.shape}")
            if not np.allclose(M, M.T, atol=1e-12):
                raise ConfigurationError(f"{name} must be symmetric")
            if M.size and np.linalg.eigvalsh(M).min() < -1e-10:
                raise ConfigurationError(f"{name} must be positive semidefinite")
            object.__setattr__(self, name, M)

    @property
    def state_weight(self) -> np.ndarray:
        return self.Q.T @ self.Q

    @property
    def input_weight(self) -> np.ndarray:
        return self.R.T @ self.R

    def __call__(self, x, u) -> float:
        qx = self.Q @ np.asarray(x, dtype=np.float64)
        ru = self.R @ np.asarray(u, dtype=np.float64)
        return float(qx @ qx + ru @ ru)

    def max_eigenvalue(self) -> float:
        return float(max(np.linalg.eigvalsh(self.state_weight).max(initial=0.0),
                         np.linalg.eigvalsh(self.input_weight).max(initial=0.0)))


@dataclass(frozen=True)
class ChanceConstraintSpec:
    """One chance constraint ``P[x+ not in polytope] <= epsilon``.

    ``rho1_bound`` is the support-rank bound used for sample sizing;
    ``samples`` and ``removals`` form the sample-removal pair ``(K, R)``.
    ``None`` entries are resolved by :func:`scmpc.controller.resolve_constraint`.
    """

    polytope: Polytope
    epsilon: float
    rho1_bound: int | None = None
    samples: int | None = None
    removals: int = 0

    def __post_init__(self):
        if not 0.0 < self.epsilon < 0.5:
            raise ConfigurationError(f"epsilon must lie in (0, 0.5), got {self.epsilon}")
        if self.rho1_bound is not None and self.rho1_bound < 1:
            raise ConfigurationError(f"rho1_bound must be >= 1, got {self.rho1_bound}")
        if self.removals < 0:
            raise ConfigurationError(f"removals must be >= 0, got {self.removals}")
        if self.samples is not None and self.samples < 1:
            raise ConfigurationError(f"samples must be >= 1, got {self.samples}")


# -- system ----------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SystemRealization:
    A: np.ndarray
    B: np.ndarray
    w: np.ndarray

    def step(self, x, u):
        return self.A @ x + self.B @ u + self.w


@dataclass(frozen=True, eq=False)
class UncertaintySample:
    theta: np.ndarray
    noise: np.ndarray


@dataclass(frozen=True, eq=False)
class SystemModel:
    """Affine-in-parameter templates ``A(theta) = A0 + sum_j theta_j A_j`` (same for B).

    ``parameters`` lists one scalar distribution per ``theta_j`` and
    ``noise`` one per component of the additive disturbance.
    """

    A0: np.ndarray
    B0: np.ndarray
    A_terms: np.ndarray = None
    B_terms: np.ndarray = None
    parameters: tuple = ()
    noise: tuple = ()

    def __post_init__(self):
        A0 = _frozen(self.A0, 2, "A")
        B0 = _frozen(self.B0, 2, "B")
        n, m = B0.shape
        if A0.shape != (n, n):
            raise ConfigurationError(f"A must be {n}x{n}, got {A0.shape}")
        p = len(self.parameters)
        A_terms = np.zeros((p, n, n)) if self.A_terms is None else np.array(self.A_terms, float)
        B_terms = np.zeros((p, n, m)) if self.B_terms is None else np.array(self.B_terms, float)
        if A_terms.size == 0:
            A_terms = np.zeros((p, n, n))
        if B_terms.size == 0:
            B_terms = np.zeros((p, n, m))
        if A_terms.shape != (p, n, n) or B_terms.shape != (p, n, m):
            raise ConfigurationError(
                f"need one A/B term per parameter: A_terms{A_terms.shape}, "
                f"B_terms{B_terms.shape}, {p} parameters")
        noise = tuple(self.noise) if self.noise else tuple(Normal(0.0, 0.0) for _ in range(n))
        if len(noise) != n:
            raise ConfigurationError(f"need {n} noise distributions, got {len(noise)}")
        A_terms.setflags(write=False)
        B_terms.setflags(write=False)
        object.__setattr__(self, "A0", A0)
        object.__setattr__(self, "B0", B0)
        object.__setattr__(self, "A_terms", A_terms)
        object.__setattr__(self, "B_terms", B_terms)
        object.__setattr__(self, "parameters", tuple(self.parameters))
        object.__setattr__(self, "noise", noise)

    @property
    def n(self) -> int:
        return self.A0.shape[0]

    @property
    def m(self) -> int:
        return self.B0.shape[1]

    @property
    def n_params(self) -> int:
        return len(self.parameters)

    @property
    def is_multiplicative(self) -> bool:
        return bool(np.any(self.A_terms) or np.any(self.B_terms))

    def realize(self, theta, noise) -> SystemRealization:
        theta = np.asarray(theta, dtype=np.float64)
        A = self.A0 + np.tensordot(theta, self.A_terms, axes=1)
        B = self.B0 + np.tensordot(theta, self.B_terms, axes=1)
        return SystemRealization(A, B, np.asarray(noise, dtype=np.float64).copy())

    def realize_batch(self, theta, noise):
        """Vectorised :meth:`realize` over leading axes of ``theta``/``noise``."""
        A = self.A0 + np.tensordot(theta, self.A_terms, axes=1)
        B = self.B0 + np.tensordot(theta, self.B_terms, axes=1)
        return A, B, np.asarray(noise, dtype=np.float64)

    def transform(self, u):
        """Map uniforms ``(..., p + n)`` to ``(theta, noise)`` via inverse CDFs."""
        u = np.where(u == 0.0, _TINY, u)
        p = self.n_params
        theta = np.empty(u.shape[:-1] + (p,))
        for j, dist in enumerate(self.parameters):
            theta[..., j] = dist.ppf(u[..., j])
        noise = np.empty(u.shape[:-1] + (self.n,))
        for j, dist in enumerate(self.noise):
            noise[..., j] = dist.ppf(u[..., p + j])
        return theta, noise

    def to_dict(self):
        return {
            "n": self.n,
            "m": self.m,
            "A": self.A0.tolist(),
            "B": self.B0.tolist(),
            "A_terms": self.A_terms.tolist(),
            "B_terms": self.B_terms.tolist(),
            "parameters": [d.to_dict() for d in self.parameters],
            "noise": [d.to_dict() for d in self.noise],
        }


def example_system(noise_variance: float = 0.01) -> SystemModel:
    """Two-state benchmark with a uniform parameter in A and Gaussian noise.

    ``A(theta) = [[0.7, -0.1(2+theta)], [-0.1(3+2 theta), 0.9]]``, ``B = I``,
    ``theta ~ U[0, 1]`` and independent ``w_i ~ N(0, noise_variance)``.

    The benchmark's noise is usually quoted as ``N(0, 0.1)``. Reading 0.1 as
    the standard deviation (the default variance 0.01) reproduces the
    reference closed-loop stage costs; pass ``noise_variance=0.1`` for the
    literal variance reading.
    """
    if noise_variance < 0:
        raise ConfigurationError(f"noise variance must be >= 0, got {noise_variance}")
    return SystemModel(
        A0=[[0.7, -0.2], [-0.3, 0.9]],
        B0=np.eye(2),
        A_terms=[[[0.0, -0.1], [-0.2, 0.0]]],
        parameters=(Uniform(0.0, 1.0),),
        noise=(Normal(0.0, noise_variance), Normal(0.0, noise_variance)),
    )


def example_sets():
    """State constraints ``X1 = {x1 >= 1}``, ``X2 = {x2 >= 1}`` and input box ``|u_i| <= 5``."""
    X1 = Polytope([[-1.0, 0.0]], [-1.0])
    X2 = Polytope([[0.0, -1.0]], [-1.0])
    U = Polytope.box([-5.0, -5.0], [5.0, 5.0])
    return X1, X2, U


# -- sampling --------------------------------------------------------------------


def stream(seed: int, stream_id: int, t: int = 0) -> np.random.Generator:
    """Counter-based generator for ``(seed, stream_id, t)``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(stream_id), int(t)))
    return np.random.Generator(np.random.Philox(ss))


def draw_uncertainty(model: SystemModel, shape, rng: np.random.Generator):
    """Draw ``(theta, noise)`` with leading ``shape`` from ``rng``."""
    shape = tuple(np.atleast_1d(shape)) if not isinstance(shape, tuple) else shape
    u = rng.random(shape + (model.n_params + model.n,))
    return model.transform(u)


@dataclass(frozen=True, eq=False)
class ScenarioSet(Sequence):
    """``K`` full-horizon scenarios stored as stacked arrays.

    Indexing yields a tuple of :class:`SystemRealization`, one per stage.
    """

    theta: np.ndarray  # (K, N, p)
    noise: np.ndarray  # (K, N, n)
    A: np.ndarray = field(repr=False)  # (K, N, n, n)
    B: np.ndarray = field(repr=False)  # (K, N, n, m)

    @property
    def w(self) -> np.ndarray:
        return self.noise

    @property
    def horizon(self) -> int:
        return self.A.shape[1]

    def __len__(self):
        return self.A.shape[0]

    def __getitem__(self, k):
        if isinstance(k, slice):
            return ScenarioSet(self.theta[k], self.noise[k], self.A[k], self.B[k])
        return tuple(SystemRealization(self.A[k, i], self.B[k, i], self.noise[k, i])
                     for i in range(self.horizon))

    def head(self, K: int) -> "ScenarioSet":
        return self[:K]


def sample_scenarios(model: SystemModel, K: int, N: int, seed: int, t: int = 0,
                     stream_id: int = SCENARIO_STREAM) -> ScenarioSet:
    """``K`` scenarios of ``N`` i.i.d. stages drawn from stream ``(seed, stream_id, t)``."""
    if K < 1 or N < 1:
        raise UsageError(f"need K >= 1 and N >= 1, got K={K}, N={N}")
    theta, noise = draw_uncertainty(model, (K, N), stream(seed, stream_id, t))
    A, B, w = model.realize_batch(theta, noise)
    return ScenarioSet(theta, w, A, B)
