import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from budgetcmdp.corpus import random_model
from budgetcmdp.criteria import SrCriterion, make_almost_sure, make_expectation
from budgetcmdp.errors import EmptySample, MissingPolicyEntry, NonFiniteValue, ValidationError
from budgetcmdp.model import (NEG_INF, AugmentedPolicy, ExtendedValue, TabularCaMDP, evaluate_policy, rollout,
                              validate_camdp)
from budgetcmdp.oracle import path_distribution
from budgetcmdp.reduction import solve_exact

from conftest import branching_model


def fixed_policy(model, choose):
    """Budget-free policy (every budget key is ``(0,)``) picking ``choose(h, s)``."""
    pol = AugmentedPolicy(initial_budget=(0,))
    for h in range(model.horizon):
        for s in range(model.num_states):
            a = choose(h, s)
            succ = model.support(h, s, a)[0]
            pol.set(h, s, (0,), a, {int(t): (0,) for t in succ})
    return pol


def test_validate_trivial_model():
    m = TabularCaMDP(np.ones((1, 1, 1, 1)), np.zeros((1, 1, 1)), np.zeros((1, 1, 1, 1)))
    assert validate_camdp(m) is m


def test_validate_row_sum():
    m = TabularCaMDP(np.full((1, 1, 1, 1), 0.9), np.zeros((1, 1, 1)), np.zeros((1, 1, 1, 1)))
    with pytest.raises(ValidationError) as err:
        validate_camdp(m)
    assert err.value.invariant == "row-sum"


def test_validate_empty_horizon():
    m = TabularCaMDP(np.ones((0, 1, 1, 1)), np.zeros((0, 1, 1)), np.zeros((0, 1, 1, 1)))
    with pytest.raises(ValidationError) as err:
        validate_camdp(m)
    assert err.value.invariant == "horizon"


def test_validate_rejects_nan_reward():
    r = np.array([[[np.nan]]])
    with pytest.raises(ValidationError):
        validate_camdp(TabularCaMDP(np.ones((1, 1, 1, 1)), r, np.zeros((1, 1, 1, 1))))


def test_extended_value_arithmetic():
    assert NEG_INF < ExtendedValue(-1e300)
    assert (NEG_INF + 5.0).is_neg_inf
    assert ExtendedValue(2.0) + ExtendedValue(3.0) == 5.0
    assert NEG_INF.scale(0.5).is_neg_inf
    with pytest.raises(ValueError):
        NEG_INF.scale(0.0)
    with pytest.raises(NonFiniteValue):
        ExtendedValue(float("inf"))
    with pytest.raises(NonFiniteValue):
        ExtendedValue(1e308) + ExtendedValue(1e308)


def test_single_step_value():
    m = TabularCaMDP(np.ones((1, 1, 1, 1)), np.ones((1, 1, 1)), np.zeros((1, 1, 1, 1)))
    ev = evaluate_policy(m, SrCriterion([make_expectation(0.0)]), fixed_policy(m, lambda h, s: 0))
    assert ev.value == 1.0
    assert ev.cost.tolist() == [0.0]


def test_t1_matches_path_enumeration(t1):
    crit = SrCriterion([make_expectation(1.5)])
    pol = fixed_policy(t1, lambda h, s: 1)
    ev = evaluate_policy(t1, crit, pol)
    paths = path_distribution(t1, pol)
    assert sum(p for p, _ in paths) == pytest.approx(1.0)
    val = sum(p * sum(t1.rewards[h, s, a] for h, s, a in path) for p, path in paths)
    cost = sum(p * sum(t1.costs[h, s, a, 0] for h, s, a in path) for p, path in paths)
    assert ev.value == pytest.approx(val, abs=1e-12)
    assert ev.cost[0] == pytest.approx(cost, abs=1e-12)


def test_almost_sure_takes_worst_branch():
    m = branching_model(c0=0.0, down=(1.0, 3.0))
    ev = evaluate_policy(m, SrCriterion([make_almost_sure(5.0)]), fixed_policy(m, lambda h, s: 0))
    assert ev.cost.tolist() == [3.0]


def test_truncated_costs(t1):
    crit = SrCriterion([make_expectation(1.5)])
    ev = evaluate_policy(t1, crit, fixed_policy(t1, lambda h, s: 1), truncated=True)
    assert ev.truncated_costs.shape == (2, 1)
    assert ev.truncated_costs[0, 0] == 1.0
    assert ev.truncated_costs[-1, 0] == pytest.approx(ev.cost[0])


def test_missing_entry(t1):
    with pytest.raises(MissingPolicyEntry):
        evaluate_policy(t1, SrCriterion([make_expectation(1.0)]), AugmentedPolicy(initial_budget=(0,)))


def test_rollout_deterministic_chain(chain):
    crit = SrCriterion([make_almost_sure(2.0)])
    res = solve_exact(chain, crit)
    ev = evaluate_policy(chain, crit, res.policy)
    for seed in (0, 1, 17):
        summary = rollout(chain, res.policy, seed, 50)
        assert summary.value_mean == ev.value
        assert summary.value_stderr == 0.0


def test_rollout_t1_within_three_stderr(t1):
    crit = SrCriterion([make_expectation(1.5)])
    res = solve_exact(t1, crit)
    ev = evaluate_policy(t1, crit, res.policy)
    summary = rollout(t1, res.policy, seed=3, episodes=100_000)
    assert abs(summary.value_mean - ev.value) <= 3 * summary.value_stderr
    assert abs(summary.cost_mean[0] - ev.cost[0]) < 0.02


def test_rollout_reproducible(t1):
    res = solve_exact(t1, SrCriterion([make_expectation(1.5)]))
    a = rollout(t1, res.policy, 1, 1000).to_json()
    b = rollout(t1, res.policy, 1, 1000).to_json()
    assert json.dumps(a) == json.dumps(b)


def test_rollout_needs_episodes(t1):
    res = solve_exact(t1, SrCriterion([make_expectation(1.5)]))
    with pytest.raises(EmptySample):
        rollout(t1, res.policy, 0, 0)


def test_policy_json_round_trip(t1):
    res = solve_exact(t1, SrCriterion([make_expectation(1.5)]))
    rows = json.loads(json.dumps(res.policy.to_json()))
    back = AugmentedPolicy.from_json(rows)
    assert set(back) == set(res.policy)
    for key in back:
        assert back[key].action == res.policy[key].action


def test_policy_json_errors():
    with pytest.raises(ValidationError):
        AugmentedPolicy.from_json({"h": 0})
    with pytest.raises(ValidationError) as err:
        AugmentedPolicy.from_json([{"h": 0}])
    assert err.value.index == "$[0]"


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10**6), alpha=st.floats(0.0, 10.0))
def test_value_linear_in_rewards(seed, alpha):
    m = random_model(np.random.default_rng(seed))
    crit = SrCriterion([make_expectation(1.0)])
    pol = fixed_policy(m, lambda h, s: (h + s) % m.num_actions)
    base = evaluate_policy(m, crit, pol)
    scaled = evaluate_policy(m.with_rewards(alpha * m.rewards), crit, pol)
    assert scaled.value == pytest.approx(alpha * base.value, abs=1e-9)
    np.testing.assert_array_equal(scaled.cost, base.cost)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_serialization_round_trip(seed):
    m = random_model(np.random.default_rng(seed))
    back = validate_camdp(TabularCaMDP.from_dict(json.loads(json.dumps(m.to_dict()))))
    np.testing.assert_array_equal(back.transitions, m.transitions)
    np.testing.assert_array_equal(back.rewards, m.rewards)
    np.testing.assert_array_equal(back.costs, m.costs)
    assert back.initial_state == m.initial_state


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_rollout_exact_on_deterministic_models(seed):
    rng = np.random.default_rng(seed)
    m = random_model(rng)
    P = np.zeros_like(m.transitions)
    nxt = rng.integers(0, m.num_states, m.transitions.shape[:3])
    np.put_along_axis(P, nxt[..., None], 1.0, axis=-1)
    m = TabularCaMDP(P, m.rewards, m.costs, 0)
    pol = fixed_policy(m, lambda h, s: 0)
    ev = evaluate_policy(m, SrCriterion([make_expectation(1.0)]), pol)
    assert rollout(m, pol, seed, 7).value_mean == ev.value
