import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from scmpc.errors import ConfigurationError, UsageError
from scmpc.model import (ChanceConstraintSpec, Normal, Polytope, StageCost, SystemModel,
                         Uniform, distribution_from_dict, draw_uncertainty, example_system,
                         membership, sample_scenarios, stream)


def test_polytope_membership_basic():
    P = Polytope.box([-1, -1], [1, 1])
    assert membership(P, [0.5, -0.5])
    assert not membership(P, [1.5, 0.0])
    assert membership(P, [1.0 + 1e-10, 0.0])  # inside the tolerance band
    assert membership(Polytope.full_space(3), [1e9, -1e9, 0])


def test_polytope_dimension_mismatch():
    with pytest.raises(UsageError):
        membership(Polytope.box([0], [1]), [0.0, 0.0])
    with pytest.raises(ConfigurationError):
        Polytope([[1.0, 0.0]], [1.0, 2.0])


@settings(max_examples=50, deadline=None)
@given(pts=hnp.arrays(np.float64, (20, 2), elements=st.floats(-3, 3)))
def test_violated_agrees_with_membership(pts):
    X = Polytope([[-1.0, 0.0], [0.0, -1.0]], [-1.0, -1.0])
    flags = X.violated(pts)
    assert list(flags) == [not X.contains(p) for p in pts]


def test_polytope_intersect_and_equality():
    X1 = Polytope([[-1.0, 0.0]], [-1.0])
    X2 = Polytope([[0.0, -1.0]], [-1.0])
    X = X1.intersect(X2)
    assert X == Polytope([[-1.0, 0.0], [0.0, -1.0]], [-1.0, -1.0])
    assert hash(X) == hash(Polytope([[-1.0, 0.0], [0.0, -1.0]], [-1.0, -1.0]))
    assert not X.contains([2.0, 0.5]) and X.contains([2.0, 1.5])


def test_stage_cost_uses_weights_inside_norms():
    c = StageCost(2 * np.eye(2), np.eye(1))
    assert c([1.0, 1.0], [3.0]) == pytest.approx(8.0 + 9.0)
    with pytest.raises(ConfigurationError):
        StageCost(np.array([[1.0, 2.0], [0.0, 1.0]]), np.eye(1))


def test_chance_constraint_validation():
    X = Polytope.box([0], [1])
    with pytest.raises(ConfigurationError):
        ChanceConstraintSpec(X, 0.6)
    with pytest.raises(ConfigurationError):
        ChanceConstraintSpec(X, 0.1, rho1_bound=0)
    spec = ChanceConstraintSpec(X, 0.1)
    assert spec.rho1_bound is None and spec.removals == 0


def test_distributions():
    assert distribution_from_dict({"dist": "uniform", "low": 0, "high": 2}) == Uniform(0, 2)
    assert distribution_from_dict({"dist": "normal", "var": 0.1}).std == pytest.approx(0.1**0.5)
    with pytest.raises(ConfigurationError):
        distribution_from_dict({"dist": "cauchy"})
    with pytest.raises(ConfigurationError):
        Uniform(1.0, 0.0)


def test_sample_moments():
    rng = stream(123, 0)
    u = Uniform(0, 1).ppf(rng.random(10**5))
    assert 0.497 <= u.mean() <= 0.503
    w = Normal(0.0, 0.1).ppf(stream(123, 1).random(10**5))
    assert 0.097 <= w.var() <= 0.103


def test_example_system_matrices():
    m = example_system()
    real = m.realize([0.5], [0.0, 0.0])
    np.testing.assert_allclose(real.A, [[0.7, -0.25], [-0.4, 0.9]])
    np.testing.assert_allclose(real.B, np.eye(2))
    assert m.noise[0].var == pytest.approx(0.01)
    assert example_system(0.1).noise[1].var == pytest.approx(0.1)


def test_realization_step():
    m = SystemModel([[1.0]], [[2.0]], [[[0.5]]], None, (Uniform(0, 1),), (Normal(0, 0),))
    r = m.realize([1.0], [0.25])
    assert r.step([2.0], [1.0])[0] == pytest.approx(1.5 * 2 + 2 + 0.25)


def test_sampling_is_deterministic_and_prefix_stable():
    m = example_system()
    a = sample_scenarios(m, 30, 5, seed=7, t=3)
    b = sample_scenarios(m, 30, 5, seed=7, t=3)
    c = sample_scenarios(m, 10, 5, seed=7, t=3)
    np.testing.assert_array_equal(a.A, b.A)
    np.testing.assert_array_equal(a.w[:10], c.w)
    d = sample_scenarios(m, 30, 5, seed=7, t=4)
    assert not np.allclose(a.w, d.w)


def test_scenario_set_sequence_protocol():
    s = sample_scenarios(example_system(), 4, 3, seed=0)
    assert len(s) == 4 and s.horizon == 3
    stages = s[2]
    assert len(stages) == 3
    np.testing.assert_array_equal(stages[1].w, s.w[2, 1])
    assert len(s.head(2)) == 2


def test_draw_uncertainty_shapes():
    theta, noise = draw_uncertainty(example_system(), (5, 2), stream(0, 2))
    assert theta.shape == (5, 2, 1) and noise.shape == (5, 2, 2)
    assert np.all((theta >= 0) & (theta <= 1))


def test_membership_examples(sets):
    X1, X2, _ = sets
    assert X1.contains([1.5, 0.0])
    assert X1.contains([0.999999999, 0.0])
    assert not X1.intersect(X2).contains([2.0, 0.5])


def test_degenerate_model_scenarios():
    m = SystemModel(np.eye(2), np.eye(2))
    s = sample_scenarios(m, 3, 2, seed=0)
    np.testing.assert_array_equal(s.A, np.broadcast_to(np.eye(2), s.A.shape))
    np.testing.assert_array_equal(s.w, 0.0)


def test_example_scenarios_parameter_range(system):
    s = sample_scenarios(system, 19, 5, seed=11)
    assert s.A.shape == (19, 5, 2, 2)
    assert np.all((s.theta >= 0) & (s.theta <= 1))
    assert np.all((s.A[..., 0, 1] >= -0.3) & (s.A[..., 0, 1] <= -0.2))
