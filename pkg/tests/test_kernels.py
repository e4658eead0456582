import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scmpc import kernels
from scmpc.complexity import log_choose

from oracles import exact_bound, log_binomial_tail_mp, qp_enumerate


@pytest.mark.parametrize("nu,K,q", [
    (0.3, 10, 3), (0.01, 1295, 100), (0.08, 1295, 101), (1e-6, 5723, 501),
    (0.5, 200, 0), (0.9, 50, 49), (1e-3, 10**6, 5), (0.2, 10**5, 20000),
])
def test_log_binomial_tail_matches_mpmath(backend, nu, K, q):
    got = backend.log_binomial_tail(nu, K, q)
    want = log_binomial_tail_mp(nu, K, q)
    assert got == pytest.approx(want, rel=1e-12, abs=1e-12)


def test_log_binomial_tail_edges(backend):
    assert backend.log_binomial_tail(0.0, 10, 2) == 0.0
    assert backend.log_binomial_tail(0.4, 10, 10) == 0.0
    assert backend.log_binomial_tail(1.0, 10, 2) == -math.inf


@settings(max_examples=60, deadline=None)
@given(K=st.integers(1, 400), frac=st.floats(0, 1), nu=st.floats(1e-4, 1 - 1e-4))
def test_log_binomial_tail_property(K, frac, nu):
    q = int(frac * K)
    want = log_binomial_tail_mp(nu, K, q, dps=40)
    for mod in kernels.backends().values():
        assert mod.log_binomial_tail(nu, K, q) == pytest.approx(want, rel=1e-10, abs=1e-11)


@pytest.mark.parametrize("K,R,rho1", [(1295, 100, 2), (702, 50, 2), (40, 3, 4), (9, 0, 1),
                                      (5723, 500, 2), (20, 17, 2)])
def test_bound_integral_matches_closed_form_oracle(backend, K, R, rho1):
    q = R + rho1 - 1
    value, evals, capped = backend.bound_integral(log_choose(q, R), K, q, 1e-8, 60)
    assert not capped
    assert value == pytest.approx(exact_bound(K, R, rho1), abs=5e-9)


def test_backends_agree_on_condensation():
    rng = np.random.default_rng(3)
    A = rng.normal(size=(7, 4, 3, 3))
    B = rng.normal(size=(7, 4, 3, 2))
    w = rng.normal(size=(7, 4, 3))
    x0 = rng.normal(size=3)
    outs = [mod.condense_batch(A, B, w, x0) for mod in kernels.backends().values()]
    for g, o in outs[1:]:
        np.testing.assert_allclose(g, outs[0][0], atol=1e-12)
        np.testing.assert_allclose(o, outs[0][1], atol=1e-12)


def _whiten(H, g, A, b):
    L = np.linalg.cholesky(H)
    C = -np.linalg.solve(L, A.T).T
    return L, np.ascontiguousarray(C), -b, np.linalg.solve(L, g)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(1, 4), rows=st.integers(0, 8))
def test_dual_active_set_matches_enumeration(seed, n, rows):
    rng = np.random.default_rng(seed)
    M = rng.normal(size=(n, n))
    H = M @ M.T + 0.1 * np.eye(n)
    g = rng.normal(size=n)
    A = rng.normal(size=(rows, n))
    b = rng.uniform(0.1, 1.0, size=rows)  # u = 0 is strictly feasible
    ref = qp_enumerate(H, g, A, b)
    for mod in kernels.backends().values():
        L, C, bw, d = _whiten(H, g, A, b)
        y, mult, status, _ = mod.dual_active_set(C, bw, d, np.ones(rows, bool), 1e-10, 500)
        assert status == kernels.QP_OPTIMAL
        u = np.linalg.solve(L.T, y)
        np.testing.assert_allclose(u, ref[0], atol=1e-6)
        assert np.all(mult >= 0)
        np.testing.assert_allclose(H @ u + g + A.T @ mult, 0, atol=1e-8)


def test_dual_active_set_reports_infeasibility(backend):
    H = np.eye(1)
    A = np.array([[1.0], [-1.0]])
    b = np.array([-1.0, -1.0])  # u <= -1 and u >= 1
    L, C, bw, d = _whiten(H, np.zeros(1), A, b)
    _, _, status, _ = backend.dual_active_set(C, bw, d, np.ones(2, bool), 1e-10, 100)
    assert status == kernels.QP_INFEASIBLE


def test_dual_active_set_respects_mask(backend):
    H = 2 * np.eye(1)
    A = np.array([[-1.0], [-1.0]])
    b = np.array([-1.0, -2.0])  # u >= 1, u >= 2
    L, C, bw, d = _whiten(H, np.zeros(1), A, b)
    y, mult, status, _ = backend.dual_active_set(C, bw, d, np.array([True, False]), 1e-10, 100)
    assert np.linalg.solve(L.T, y)[0] == pytest.approx(1.0)
    assert mult[1] == 0.0
