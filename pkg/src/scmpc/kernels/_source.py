"""Kernel sources shared by both backends.

Everything here is written in the numba ``nopython`` subset so that
:mod:`scmpc.kernels._numba` can compile it unchanged, while
:mod:`scmpc.kernels._numpy` runs the very same functions under the
interpreter. ``log_binomial_tail`` is deliberately left unbound: each
backend supplies its own through :func:`specialise`.
"""

import math
from types import FunctionType

import numpy as np

# status codes returned by dual_active_set
QP_OPTIMAL = 0
QP_INFEASIBLE = 1
QP_MAX_ITER = 2
# subdivision levels forced before the Simpson error estimate is trusted
QUAD_MIN_DEPTH = 5


def _back_substitute(R, v, k):
    # solve R[:k, :k] x = v[:k] for upper-triangular R
    x = np.zeros(k)
    for i in range(k - 1, -1, -1):
        acc = v[i]
        for j in range(i + 1, k):
            acc -= R[i, j] * x[j]
        x[i] = acc / R[i, i]
    return x


def _rebuild_qr(C, active, na, Qb, Rt):
    # modified Gram-Schmidt with one reorthogonalisation pass
    n = C.shape[1]
    for c in range(na):
        col = C[active[c]].copy()
        for j in range(c):
            Rt[j, c] = 0.0
        for _ in range(2):
            for j in range(c):
                proj = 0.0
                for i in range(n):
                    proj += Qb[i, j] * col[i]
                Rt[j, c] += proj
                for i in range(n):
                    col[i] -= proj * Qb[i, j]
        nrm = math.sqrt(np.dot(col, col))
        Rt[c, c] = nrm
        for i in range(n):
            Qb[i, c] = col[i] / nrm


def dual_active_set(C, b, d, mask, tol, max_iter):
    """Goldfarb-Idnani dual active-set method on a whitened QP.

    Solves ``min 0.5*|y|^2 + d.y  s.t.  C[j] . y >= b[j]`` for every ``j``
    with ``mask[j]`` true. Starting from the unconstrained minimiser, the
    most violated row is added at each major iteration; rows whose
    multipliers would turn negative are dropped.

    Returns ``(y, mult, status, iterations)`` where ``mult`` holds one
    nonnegative multiplier per row (zero for rows never in the active set).
    """
    q, n = C.shape
    y = -d.copy()
    mult = np.zeros(q)
    active = np.zeros(n, dtype=np.int64)
    ua = np.zeros(n + 1)
    Qb = np.zeros((n, n))
    Rt = np.zeros((n, n))
    na = 0
    it = 0
    status = QP_OPTIMAL
    big = np.inf
    while True:
        if it >= max_iter:
            status = QP_MAX_ITER
            break
        s = C @ y - b
        p = -1
        worst = 0.0
        for j in range(q):
            if mask[j]:
                scaled = s[j] / (1.0 + abs(b[j]))
                if scaled < worst:
                    worst = scaled
                    p = j
        if p < 0 or worst >= -tol:
            break
        npl = C[p].copy()
        nn = np.dot(npl, npl)
        uplus = np.zeros(n + 1)
        for j in range(na):
            uplus[j] = ua[j]
        added = False
        while not added:
            it += 1
            if it > max_iter:
                status = QP_MAX_ITER
                break
            v = np.zeros(na)
            z = npl.copy()
            for _ in range(2):
                for j in range(na):
                    proj = 0.0
                    for i in range(n):
                        proj += Qb[i, j] * z[i]
                    v[j] += proj
                    for i in range(n):
                        z[i] -= proj * Qb[i, j]
            r = _back_substitute(Rt, v, na)
            t1 = big
            drop = -1
            for j in range(na):
                if r[j] > 0.0:
                    ratio = uplus[j] / r[j]
                    if ratio < t1:
                        t1 = ratio
                        drop = j
            zz = np.dot(z, z)
            t2 = big
            if zz > 1e-24 * nn:
                t2 = -(np.dot(npl, y) - b[p]) / zz
            if t1 == big and t2 == big:
                status = QP_INFEASIBLE
                break
            if t2 < big:
                t = t2 if t2 <= t1 else t1
                for i in range(n):
                    y[i] += t * z[i]
            else:
                t = t1
            for j in range(na):
                uplus[j] -= t * r[j]
            uplus[na] += t
            if t2 <= t1:
                # full step: p joins the active set; z is already the new QR column
                active[na] = p
                for j in range(na):
                    Rt[j, na] = v[j]
                zn = math.sqrt(zz)
                Rt[na, na] = zn
                for i in range(n):
                    Qb[i, na] = z[i] / zn
                for j in range(na + 1):
                    ua[j] = uplus[j]
                na += 1
                added = True
            else:
                # partial step: drop the blocking constraint and retry p
                for j in range(drop, na - 1):
                    active[j] = active[j + 1]
                    uplus[j] = uplus[j + 1]
                uplus[na - 1] = uplus[na]
                uplus[na] = 0.0
                na -= 1
                _rebuild_qr(C, active, na, Qb, Rt)
        if status != QP_OPTIMAL:
            break
    for j in range(na):
        mult[active[j]] = max(ua[j], 0.0)
    return y, mult, status, it


def specialise(names, overrides, decorate=None):
    """Copies of the named functions bound to ``globals() | overrides``.

    With ``decorate`` (e.g. ``numba.njit``) every copy is wrapped and the
    wrapped objects are what the other copies see, so helpers resolve to
    compiled code inside compiled callers.
    """
    ns = dict(globals())
    ns.update(overrides)
    out = {}
    for name in names:
        fn = globals()[name]
        fresh = FunctionType(fn.__code__, ns, name, fn.__defaults__)
        fresh.__doc__ = fn.__doc__
        ns[name] = out[name] = decorate(fresh) if decorate is not None else fresh
    return out


def _log_violation_bound(log_choose, nu, K, q):
    return log_choose + log_binomial_tail(nu, K, q)  # noqa: F821 - bound by specialise()


def saturation_point(log_choose, K, q):
    """Largest ``nu`` with ``log_choose + log B(nu; K, q) >= 0`` (bisection)."""
    if log_choose <= 0.0:
        return 0.0
    lo = 0.0
    hi = 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if _log_violation_bound(log_choose, mid, K, q) >= 0.0:
            lo = mid
        else:
            hi = mid
    return lo


def bound_integral(log_choose, K, q, tol, max_depth):
    """Integrate ``min(1, C * B(nu; K, q))`` over ``[0, 1]``.

    The saturated stretch ``[0, nu*]`` contributes ``nu*`` exactly; the
    remainder is handled by adaptive Simpson with an explicit stack.

    Returns ``(value, evaluations, worst_depth_hit)``; the last entry is
    ``True`` when some subinterval was accepted only because the depth cap
    was reached.
    """
    a0 = saturation_point(log_choose, K, q)
    b0 = 1.0
    if a0 >= b0:
        return 1.0, 0, False
    fa0 = min(1.0, math.exp(_log_violation_bound(log_choose, a0, K, q)))
    fb0 = math.exp(_log_violation_bound(log_choose, b0, K, q))
    m0 = 0.5 * (a0 + b0)
    fm0 = math.exp(_log_violation_bound(log_choose, m0, K, q))
    evals = 3
    size = 2 * max_depth + 8
    st_a = np.empty(size)
    st_b = np.empty(size)
    st_fa = np.empty(size)
    st_fm = np.empty(size)
    st_fb = np.empty(size)
    st_s = np.empty(size)
    st_tol = np.empty(size)
    st_depth = np.empty(size, dtype=np.int64)
    top = 0
    st_a[0] = a0
    st_b[0] = b0
    st_fa[0] = fa0
    st_fm[0] = fm0
    st_fb[0] = fb0
    st_s[0] = (b0 - a0) / 6.0 * (fa0 + 4.0 * fm0 + fb0)
    st_tol[0] = tol
    st_depth[0] = 0
    top = 1
    total = 0.0
    comp = 0.0
    capped = False
    while top > 0:
        top -= 1
        a = st_a[top]
        b = st_b[top]
        fa = st_fa[top]
        fm = st_fm[top]
        fb = st_fb[top]
        whole = st_s[top]
        eps = st_tol[top]
        depth = st_depth[top]
        m = 0.5 * (a + b)
        lm = 0.5 * (a + m)
        rm = 0.5 * (m + b)
        flm = math.exp(_log_violation_bound(log_choose, lm, K, q))
        frm = math.exp(_log_violation_bound(log_choose, rm, K, q))
        evals += 2
        left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
        right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
        delta = left + right - whole
        if (abs(delta) <= 15.0 * eps and depth >= QUAD_MIN_DEPTH) or depth >= max_depth:
            if depth >= max_depth and abs(delta) > 15.0 * eps:
                capped = True
            piece = left + right + delta / 15.0
            # Neumaier compensated accumulation
            tsum = total + piece
            if abs(total) >= abs(piece):
                comp += (total - tsum) + piece
            else:
                comp += (piece - tsum) + total
            total = tsum
        else:
            st_a[top] = m
            st_b[top] = b
            st_fa[top] = fm
            st_fm[top] = frm
            st_fb[top] = fb
            st_s[top] = right
            st_tol[top] = 0.5 * eps
            st_depth[top] = depth + 1
            top += 1
            st_a[top] = a
            st_b[top] = m
            st_fa[top] = fa
            st_fm[top] = flm
            st_fb[top] = fm
            st_s[top] = left
            st_tol[top] = 0.5 * eps
            st_depth[top] = depth + 1
            top += 1
    value = a0 + total + comp
    return min(max(value, 0.0), 1.0), evals, capped
