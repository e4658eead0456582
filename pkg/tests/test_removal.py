import logging
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scmpc.errors import RemovalGuardError, UsageError
from scmpc.model import StageCost, example_sets, example_system, sample_scenarios
from scmpc.removal import remove, remove_greedy, remove_marginal, remove_optimal
from scmpc.scenario_program import ScenarioProgram, assemble, solve


def lower_bounds(a):
    """min u^2 s.t. u >= a_k: scenario k contributes the single row -u <= -a_k."""
    a = np.asarray(a, dtype=float)
    return ScenarioProgram.from_qp([[2.0]], [0.0], -np.ones((a.size, 1)), -a,
                                   row_scenario=np.arange(a.size))


def random_instance(seed, K):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 4))
    q = int(rng.integers(1, 3))
    M = rng.normal(size=(n, n))
    H = M @ M.T + 0.1 * np.eye(n)
    g = rng.normal(size=n)
    A = rng.normal(size=(K * q, n))
    b = rng.uniform(-1.0, 0.5, size=K * q)
    box = np.vstack([np.eye(n), -np.eye(n)])
    return ScenarioProgram.from_qp(H, g, np.vstack([A, box]),
                                   np.concatenate([b, np.full(2 * n, 5.0)]),
                                   row_scenario=np.concatenate([np.repeat(np.arange(K), q),
                                                                np.full(2 * n, -1)]),
                                   slack_penalty=1e4)


def test_optimal_identity_for_zero_removals():
    out = remove_optimal(lower_bounds([0.3, 0.8]), 0)
    assert out.removed == [] and out.kept == [0, 1] and out.solve_count == 1


def test_optimal_removes_unique_binding_scenario():
    out = remove_optimal(lower_bounds([0.2, 0.9, 0.5]), 1)
    assert out.removed == [1]
    assert out.final.u_stack[0] == pytest.approx(0.5)
    assert out.solve_count == 3


def test_optimal_solve_count():
    assert remove_optimal(lower_bounds([0.1, 0.4, 0.3, 0.9, 0.6]), 2).solve_count == 10


def test_optimal_guard():
    prog = lower_bounds(np.linspace(0, 1, 60))
    with pytest.raises(RemovalGuardError, match="greedy"):
        remove_optimal(prog, 10)


def test_optimal_ties_take_lexicographically_smallest():
    out = remove_optimal(lower_bounds([0.5, 0.5, 0.2]), 1)
    assert out.removed == [0]  # removing 0 or 1 leaves the same optimum


def test_greedy_solve_count_and_binding_first():
    out = remove_greedy(lower_bounds([0.1, 0.4, 0.3, 0.9, 0.6]), 2)
    assert out.solve_count == 5 * 2 - 1
    assert out.removed[0] == 3


def test_greedy_shortcut_is_exact():
    for seed in range(30):
        prog = random_instance(seed, 6)
        a = remove_greedy(prog, 2)
        b = remove_greedy(prog, 2, shortcut=False)
        assert a.removed == b.removed
        assert a.objective == pytest.approx(b.objective, abs=1e-9)
        assert b.qp_calls == 1 + b.solve_count
        assert a.qp_calls <= b.qp_calls


def test_greedy_first_stage_metric_runs():
    X1, X2, U = example_sets()
    prog = assemble([1.0, 1.0], sample_scenarios(example_system(), 8, 3, seed=2),
                    StageCost(np.eye(2), np.eye(2)), [X1.intersect(X2)], U)
    out = remove_greedy(prog, 2, metric="first_stage_cost")
    assert len(out.removed) == 2
    with pytest.raises(UsageError):
        remove_greedy(prog, 1, metric="max_cost")


def test_marginal_examples():
    assert remove_marginal(lower_bounds([0.3, 0.7]), 0).removed == []
    out = remove_marginal(lower_bounds([-1.0, 0.7]), 1)
    assert out.removed == [1] and out.solve_count == 2


def test_marginal_degenerate_duals_remove_smallest_index(caplog):
    with caplog.at_level(logging.INFO, logger="scmpc.removal"):
        out = remove_marginal(lower_bounds([-1.0, -2.0, -0.5]), 1)
    assert out.removed == [0]
    assert "zero" in caplog.text


def test_budget_validation():
    with pytest.raises(UsageError):
        remove_greedy(lower_bounds([0.1, 0.2]), 2)
    with pytest.raises(UsageError):
        remove(lower_bounds([0.1, 0.2]), 1, algorithm="random")


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10**6), K=st.integers(2, 8), data=st.data())
def test_removal_hierarchy_and_partition(seed, K, data):
    R = data.draw(st.integers(0, min(2, K - 1)))
    prog = random_instance(seed, K)
    opt = remove_optimal(prog, R)
    gr = remove_greedy(prog, R)
    mg = remove_marginal(prog, R)
    tol = 1e-9 * (1 + abs(opt.objective))
    assert opt.objective <= gr.objective + tol
    assert opt.objective <= mg.objective + tol
    assert opt.solve_count == math.comb(K, R)
    if R:
        assert gr.solve_count == K * R - R * (R - 1) // 2
    assert mg.solve_count == R + 1
    for out in (opt, gr, mg):
        assert sorted(out.kept + out.removed) == list(range(K))
        assert len(out.removed) == R
        if out.final.status == "optimal":
            assert prog.violation(out.final.u_stack, prog.mask(out.removed_blocks)) <= 1e-6
    for out in (gr, mg):
        objs = (solve(prog).objective,) + out.objectives if solve(prog).status == "optimal" \
            else out.objectives
        assert all(b <= a + 1e-9 * (1 + abs(a)) for a, b in zip(objs, objs[1:]))


def test_determinism():
    prog = random_instance(5, 8)
    for rule in (remove_optimal, remove_greedy, remove_marginal):
        a, b = rule(prog, 2), rule(prog, 2)
        assert a.removed_blocks == b.removed_blocks
        np.testing.assert_array_equal(a.final.u_stack, b.final.u_stack)


def test_per_constraint_budgets():
    X1, X2, U = example_sets()
    scen = sample_scenarios(example_system(), 10, 3, seed=0)
    prog = assemble([1.0, 1.0], scen, StageCost(np.eye(2), np.eye(2)), [(X1, 10), (X2, 6)], U)
    for algorithm in ("optimal", "greedy", "marginal"):
        out = remove(prog, (1, 2), algorithm)
        groups = [j for j, _ in out.removed_blocks]
        assert groups.count(0) == 1 and groups.count(1) == 2
        assert all(k < 6 for j, k in out.removed_blocks if j == 1)
    with pytest.raises(UsageError):
        remove(prog, 1, "greedy")
