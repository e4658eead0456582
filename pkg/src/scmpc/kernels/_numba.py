"""Numba backend: loop kernels compiled with ``@njit``."""

import math

import numpy as np
from numba import njit

from . import _source
from ._numpy import _LOG_SQRT_2PI, _S0, _S1, _S2, _S3, _S4, _SMALL

_SMALL_TABLE = _SMALL.copy()

_jit = njit(cache=True)
_qp = _source.specialise(["_back_substitute", "_rebuild_qr", "dual_active_set"], {}, _jit)
dual_active_set = _qp["dual_active_set"]


@njit(cache=True)
def _stirlerr(n):
    if n <= 15.0:
        return _SMALL_TABLE[int(n)]
    nn = n * n
    return (_S0 - (_S1 - (_S2 - (_S3 - _S4 / nn) / nn) / nn) / nn) / n


@njit(cache=True)
def _bd0(x, M):
    if abs(x - M) < 0.1 * (x + M):
        v = (x - M) / (x + M)
        s = (x - M) * v
        ej = 2.0 * x * v
        v2 = v * v
        for j in range(1, 1000):
            ej *= v2
            s1 = s + ej / (2 * j + 1)
            if s1 == s:
                return s1
            s = s1
        return s
    return x * math.log(x / M) + M - x


@njit(cache=True)
def _log_pmf(j, K, p, q):
    if j == 0:
        if p < 0.1:
            return -_bd0(K, K * q) - K * p
        return K * math.log(q)
    if j == K:
        if q < 0.1:
            return -_bd0(K, K * p) - K * q
        return K * math.log(p)
    lc = _stirlerr(K) - _stirlerr(j) - _stirlerr(K - j) - _bd0(j, K * p) - _bd0(K - j, K * q)
    lf = 2.0 * _LOG_SQRT_2PI + math.log(j) + math.log1p(-j / K)
    return lc - 0.5 * lf


@njit(cache=True)
def log_binomial_tail(nu, K, q):
    if q >= K or nu <= 0.0:
        return 0.0
    if nu >= 1.0:
        return -np.inf
    Kf = float(K)
    p = nu
    r = 1.0 - nu
    lt = np.empty(q + 1)
    top = -np.inf
    for j in range(q + 1):
        lt[j] = _log_pmf(float(j), Kf, p, r)
        if lt[j] > top:
            top = lt[j]
    total = 0.0
    comp = 0.0
    for j in range(q + 1):
        term = math.exp(lt[j] - top)
        t = total + term
        if abs(total) >= abs(term):
            comp += (total - t) + term
        else:
            comp += (term - t) + total
        total = t
    return top + math.log(total + comp)


_bound = _source.specialise(
    ["_log_violation_bound", "saturation_point", "bound_integral"],
    {"log_binomial_tail": log_binomial_tail},
    _jit,
)
saturation_point = _bound["saturation_point"]
bound_integral = _bound["bound_integral"]


@njit(cache=True)
def condense_batch(A, B, w, x0):
    K, N, n, m = B.shape
    nu = N * m
    gains = np.zeros((K, N + 1, n, nu))
    offsets = np.empty((K, N + 1, n))
    for k in range(K):
        for a in range(n):
            offsets[k, 0, a] = x0[a]
        for i in range(N):
            for a in range(n):
                acc = w[k, i, a]
                for c in range(n):
                    acc += A[k, i, a, c] * offsets[k, i, c]
                offsets[k, i + 1, a] = acc
                # only the first i*m columns of the previous gain are nonzero
                for col in range(i * m):
                    g = 0.0
                    for c in range(n):
                        g += A[k, i, a, c] * gains[k, i, c, col]
                    gains[k, i + 1, a, col] = g
                for c in range(m):
                    gains[k, i + 1, a, i * m + c] = B[k, i, a, c]
    return gains, offsets

