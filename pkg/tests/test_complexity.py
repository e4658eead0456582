import math
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scmpc import complexity as cx
from scmpc.errors import NumericalError, UsageError
from scmpc.model import Polytope, SystemModel, example_sets, example_system

from oracles import exact_bound


def direct_tail(nu, K, q):
    return sum(math.comb(K, j) * nu**j * (1 - nu) ** (K - j) for j in range(q + 1))


def test_beta_tail_examples():
    assert cx.beta_tail(0.0, 19, 1) == 1.0
    assert cx.beta_tail(0.5, 2, 1) == pytest.approx(0.75, abs=1e-15)
    assert cx.beta_tail(0.1, 19, 0) == pytest.approx(0.9**19, rel=1e-13)
    with pytest.raises(UsageError):
        cx.beta_tail(0.5, 3, 4)


@settings(max_examples=200, deadline=None)
@given(K=st.integers(0, 30), data=st.data(), nu=st.floats(0, 1))
def test_beta_tail_matches_direct_sum(K, data, nu):
    q = data.draw(st.integers(0, K))
    assert cx.beta_tail(nu, K, q) == pytest.approx(direct_tail(nu, K, q), abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(K=st.integers(1, 300), data=st.data(), a=st.floats(0, 1), b=st.floats(0, 1))
def test_beta_tail_monotone(K, data, a, b):
    q = data.draw(st.integers(0, K - 1))
    lo, hi = min(a, b), max(a, b)
    assert cx.beta_tail(lo, K, q) >= cx.beta_tail(hi, K, q) - 1e-15
    assert cx.beta_tail(lo, K, q + 1) >= cx.beta_tail(lo, K, q) - 1e-15
    assert cx.beta_tail(lo, K, K) == 1.0


def test_violation_bound_examples():
    for nu in (0.0, 0.01, 0.3, 0.9):
        assert cx.violation_bound(nu, 25, 0, 1) == pytest.approx((1 - nu) ** 25, rel=1e-12)
    assert cx.violation_bound(0.0, 19, 0, 2) == 1.0
    assert cx.violation_bound(0.5, 10, 1, 1) == pytest.approx(11 / 1024, rel=1e-12)
    with pytest.raises(UsageError):
        cx.violation_bound(0.5, 2, 2, 1)


def test_expected_violation_bound_examples():
    assert cx.expected_violation_bound(19, 0, 2) == pytest.approx(0.1)
    assert cx.expected_violation_bound(9, 0, 1) == pytest.approx(0.1)
    assert cx.expected_violation_bound(19, 0, 2, method="quadrature") == pytest.approx(0.1, abs=1e-8)
    assert cx.expected_violation_bound(1295, 100, 2) <= 0.1
    assert cx.expected_violation_bound(1280, 100, 2) > 0.1
    with pytest.raises(UsageError):
        cx.expected_violation_bound(20, 3, 2, method="closed_form")


@pytest.mark.parametrize("K,R,rho1,value", [
    (1295, 100, 2, 0.09998662347),
    (702, 50, 2, 0.09990222517),
    (1280, 100, 2, 0.10114404920),
])
def test_expected_violation_bound_frozen(K, R, rho1, value):
    # values frozen from the binomial-CDF closed form of the integral
    assert exact_bound(K, R, rho1) == pytest.approx(value, abs=1e-10)
    assert cx.expected_violation_bound(K, R, rho1) == pytest.approx(exact_bound(K, R, rho1), abs=1e-8)


def test_quadrature_depth_cap_reported():
    with pytest.raises(NumericalError, match="depth"):
        cx.expected_violation_bound(1295, 100, 2, tol=1e-300, max_depth=3)


@settings(max_examples=40, deadline=None)
@given(K=st.integers(2, 3000), rho1=st.integers(1, 6), data=st.data())
def test_quadrature_matches_exact_integral(K, rho1, data):
    R = data.draw(st.integers(0, max(0, min(200, K - rho1))))
    if K < R + rho1:
        return
    got = cx.expected_violation_bound(K, R, rho1, method="quadrature")
    assert got == pytest.approx(exact_bound(K, R, rho1), abs=2e-8)


@pytest.mark.parametrize("K, rho1", [(35, 4), (4, 4), (1000, 5)])
def test_quadrature_no_early_acceptance(K, rho1, backend):
    # (35, 4) once fooled the Simpson error estimate on the first interval
    got, _, capped = backend.bound_integral(0.0, K, rho1 - 1, cx.QUAD_TOL, 60)
    assert not capped
    assert got == pytest.approx(rho1 / (K + 1), abs=1e-7)


def test_min_sample_size_table_values():
    assert cx.min_sample_size(0, 2, 0.1) == 19
    assert cx.min_sample_size(0, 1, 0.05) == 19
    assert cx.min_sample_size(0, 1, 0.1) == 9
    assert cx.min_sample_size(50, 2, 0.1) == 702
    assert cx.min_sample_size(100, 2, 0.1) == 1295


@pytest.mark.parametrize("R,eps,K", [(50, 0.05, 1020), (50, 0.1, 510),
                                      (100, 0.05, 2020), (100, 0.1, 1010)])
def test_individual_constraint_sample_sizes(R, eps, K):
    # with rho1 = 1 the integral is exactly (R+1)/(K+1), so K-1 meets epsilon with
    # equality; within the quadrature tolerance either side of the tie is correct
    assert (R + 1) / K == pytest.approx(eps, abs=1e-15)
    assert exact_bound(K - 1, R, 1) == pytest.approx(eps, abs=1e-12)
    assert cx.min_sample_size(R, 1, eps) in (K - 1, K)
    assert cx.expected_violation_bound(K - 2, R, 1) > eps + cx.QUAD_TOL
    assert cx.expected_violation_bound(K - 1, R, 1) == pytest.approx(eps, abs=1e-8)


@settings(max_examples=30, deadline=None)
@given(R=st.integers(0, 60), rho1=st.integers(1, 4), eps=st.floats(0.02, 0.3))
def test_min_sample_size_is_minimal(R, rho1, eps):
    K = cx.min_sample_size(R, rho1, eps)
    assert cx.is_admissible(K, R, rho1, eps)
    if K - 1 >= R + rho1:
        assert not cx.is_admissible(K - 1, R, rho1, eps)


@settings(max_examples=20, deadline=None)
@given(R=st.integers(0, 40), rho1=st.integers(1, 4), eps=st.floats(0.03, 0.3),
       dR=st.integers(0, 10), drho=st.integers(0, 2), deps=st.floats(0, 0.15))
def test_min_sample_size_monotone(R, rho1, eps, dR, drho, deps):
    K = cx.min_sample_size(R, rho1, eps)
    assert cx.min_sample_size(R + dR, rho1, eps) >= K
    assert cx.min_sample_size(R, rho1 + drho, eps) >= K
    assert cx.min_sample_size(R, rho1, min(eps + deps, 0.49)) <= K


def test_min_sample_size_argument_checks():
    with pytest.raises(UsageError):
        cx.min_sample_size(0, 2, 0.5)
    with pytest.raises(UsageError):
        cx.min_sample_size(0, 0, 0.1)


def test_sample_removal_pair():
    p = cx.SampleRemovalPair.evaluate(18, 0, 2, 0.1)
    assert not p.admissible
    assert p.expected_violation_bound == pytest.approx(2 / 19)
    assert cx.SampleRemovalPair.evaluate(19, 0, 2, 0.1).admissible


def test_bound_curve():
    Ks = [1, 2, 10, 100]
    curve = cx.bound_curve(Ks, 0, 2)
    assert curve[0] == 1.0
    np.testing.assert_allclose(curve[1:], [2 / 3, 2 / 11, 2 / 101])


def test_support_rank_bound_examples():
    X1, X2, _ = example_sets()
    m = example_system()
    assert cx.support_rank_bound(m, X1.intersect(X2), 5) == 2
    assert cx.support_rank_bound(m, X1, 5) == 1
    assert cx.support_rank_bound(m, Polytope.full_space(2), 5) == 1
    scalar_input = SystemModel(np.eye(3), np.ones((3, 1)))
    assert cx.support_rank_bound(scalar_input, Polytope.box([0, 0, 0], [1, 1, 1]), 3) == 1
    with pytest.raises(UsageError):
        cx.support_rank_bound(m, Polytope.box([0], [1]), 5)


def test_min_sample_size_runtime():
    start = time.perf_counter()
    cx.min_sample_size(500, 2, 0.1)
    assert time.perf_counter() - start < 10.0
