"""Pure-numpy backend (selected with ``SCMPC_NUMBA=0``)."""

import math

import numpy as np

from . import _source

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
# Stirling series coefficients 1/12, 1/360, 1/1260, 1/1680, 1/1188
_S0, _S1, _S2, _S3, _S4 = 1 / 12, 1 / 360, 1 / 1260, 1 / 1680, 1 / 1188
_SMALL = np.array(
    [math.lgamma(k + 1.0) - (k + 0.5) * math.log(k) + k - _LOG_SQRT_2PI if k else 0.0
     for k in range(16)]
)


def stirlerr(n):
    """``log(n!) - log(sqrt(2 pi n) (n/e)^n)`` for integer arrays ``n >= 0``."""
    n = np.asarray(n, dtype=np.float64)
    small = n <= 15
    out = np.empty_like(n)
    out[small] = _SMALL[n[small].astype(np.int64)]
    big = n[~small]
    nn = big * big
    out[~small] = (_S0 - (_S1 - (_S2 - (_S3 - _S4 / nn) / nn) / nn) / nn) / big
    return out


def bd0(x, M):
    """Deviance term ``x log(x/M) + M - x`` without cancellation."""
    x = np.asarray(x, dtype=np.float64)
    M = np.broadcast_to(np.asarray(M, dtype=np.float64), x.shape)
    out = np.empty_like(x)
    near = np.abs(x - M) < 0.1 * (x + M)
    far = ~near
    out[far] = x[far] * np.log(x[far] / M[far]) + M[far] - x[far]
    if near.any():
        xn, Mn = x[near], M[near]
        v = (xn - Mn) / (xn + Mn)
        s = (xn - Mn) * v
        ej = 2.0 * xn * v
        v2 = v * v
        for j in range(1, 1000):
            ej = ej * v2
            s_new = s + ej / (2 * j + 1)
            if np.array_equal(s_new, s):
                break
            s = s_new
        out[near] = s
    return out


def log_binomial_pmf(j, K, p, q):
    """Log of ``C(K, j) p^j q^(K-j)`` for an integer array ``j`` in ``[0, K]``."""
    j = np.asarray(j, dtype=np.float64)
    out = np.empty_like(j)
    lo = j == 0
    hi = j == K
    mid = ~(lo | hi)
    if lo.any():
        out[lo] = (-bd0(np.array([K]), K * q)[0] - K * p) if p < 0.1 else K * math.log(q)
    if hi.any():
        out[hi] = (-bd0(np.array([K]), K * p)[0] - K * q) if q < 0.1 else K * math.log(p)
    if mid.any():
        jm = j[mid]
        lc = (stirlerr(np.array([K]))[0] - stirlerr(jm) - stirlerr(K - jm)
              - bd0(jm, K * p) - bd0(K - jm, K * q))
        lf = 2.0 * _LOG_SQRT_2PI + np.log(jm) + np.log1p(-jm / K)
        out[mid] = lc - 0.5 * lf
    return out


def log_binomial_tail(nu, K, q):
    """``log sum_{j<=q} C(K,j) nu^j (1-nu)^(K-j)``, vectorised over ``j``."""
    if q >= K or nu <= 0.0:
        return 0.0
    if nu >= 1.0:
        return -math.inf
    lt = log_binomial_pmf(np.arange(q + 1), K, nu, 1.0 - nu)
    top = lt.max()
    return top + math.log(math.fsum(np.exp(lt - top)))


_bound = _source.specialise(
    ["_log_violation_bound", "saturation_point", "bound_integral"],
    {"log_binomial_tail": log_binomial_tail},
)
saturation_point = _bound["saturation_point"]
bound_integral = _bound["bound_integral"]


def condense_batch(A, B, w, x0):
    """Stacked-input gains and affine offsets for every scenario and stage.

    ``A``: (K, N, n, n), ``B``: (K, N, n, m), ``w``: (K, N, n).
    Returns ``gains`` (K, N+1, n, N*m) and ``offsets`` (K, N+1, n) with
    ``x_i = gains[:, i] @ u + offsets[:, i]``.
    """
    K, N, n, m = B.shape
    gains = np.zeros((K, N + 1, n, N * m))
    offsets = np.empty((K, N + 1, n))
    offsets[:, 0] = x0
    for i in range(N):
        gains[:, i + 1] = A[:, i] @ gains[:, i]
        gains[:, i + 1, :, i * m:(i + 1) * m] += B[:, i]
        offsets[:, i + 1] = (A[:, i] @ offsets[:, i, :, None])[..., 0] + w[:, i]
    return gains, offsets


dual_active_set = _source.dual_active_set
