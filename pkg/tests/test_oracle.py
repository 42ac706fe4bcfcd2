import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from budgetcmdp.corpus import KINDS, random_model
from budgetcmdp.criteria import SrCriterion, make_expectation
from budgetcmdp.errors import TooManyPolicies
from budgetcmdp.model import TabularCaMDP
from budgetcmdp.oracle import (brute_force_optimum, count_policies, enumerate_achievable_costs, history_tree,
                               unconstrained_value)


def test_two_action_oracle(simple):
    res = brute_force_optimum(simple, SrCriterion([make_expectation(0.0)]))
    assert res.value == 1.0
    assert res.witness == {"action": 0, "next": {}}
    assert res.policies == 2


def test_unconstrained_oracle(t1):
    res = brute_force_optimum(t1, SrCriterion([make_expectation(1e9)]))
    assert res.value.value == pytest.approx(unconstrained_value(t1))


def test_infeasible_oracle(t1):
    res = brute_force_optimum(t1, SrCriterion([make_expectation(-0.5)]))
    assert not res.feasible and res.witness is None


def test_achievable_costs(simple):
    sets = enumerate_achievable_costs(simple, SrCriterion([make_expectation(0.0)]))
    assert sets[0][0].tolist() == [[0.0], [1.0]]
    zero = simple.with_costs(np.zeros_like(simple.costs))
    assert enumerate_achievable_costs(zero, SrCriterion([make_expectation(0.0)]))[0][0].tolist() == [[0.0]]


def test_policy_cap(t1):
    assert count_policies(t1)[0, 0] > 4
    with pytest.raises(TooManyPolicies):
        brute_force_optimum(t1, SrCriterion([make_expectation(1.0)]), cap=4)


def permute(model, sp, ap):
    """Relabel states by ``sp`` (new index of old state) and actions by ``ap``."""
    P = np.empty_like(model.transitions)
    r = np.empty_like(model.rewards)
    c = np.empty_like(model.costs)
    for s in range(model.num_states):
        for a in range(model.num_actions):
            P[:, sp[s], ap[a], :] = model.transitions[:, s, a, :][:, np.argsort(sp)]
            r[:, sp[s], ap[a]] = model.rewards[:, s, a]
            c[:, sp[s], ap[a]] = model.costs[:, s, a]
    return TabularCaMDP(P, r, c, int(sp[model.initial_state]))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6), kind=st.sampled_from(list(KINDS)), B=st.sampled_from([0.0, 1.0, 2.0]))
def test_permutation_symmetry(seed, kind, B):
    rng = np.random.default_rng(seed)
    m = random_model(rng)
    sp, ap = rng.permutation(m.num_states), rng.permutation(m.num_actions)
    crit = SrCriterion([KINDS[kind](B)])
    a, b = brute_force_optimum(m, crit), brute_force_optimum(permute(m, sp, ap), crit)
    assert a.feasible == b.feasible
    if a.feasible:
        assert a.value.value == pytest.approx(b.value.value, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6), kind=st.sampled_from(list(KINDS)))
def test_feasibility_monotone_in_budget(seed, kind):
    m = random_model(np.random.default_rng(seed))
    crit = SrCriterion([KINDS[kind](0.0)])
    prev = None
    for B in (0.0, 0.5, 1.0, 2.0, 4.0):
        res = brute_force_optimum(m, crit, B=B)
        if prev is not None:
            assert not (prev.feasible and not res.feasible)
            if prev.feasible:
                assert res.value.value >= prev.value.value - 1e-12
        prev = res


def test_history_tree_sums(t1):
    tree = history_tree(t1)
    for hist, (h, s, pr) in tree.nodes.items():
        if h == t1.horizon:
            continue
        for a in t1.actions(h, s):
            kids = tree.children(hist, a)
            assert sum(tree.nodes[k][2] for k in kids) == pytest.approx(pr)
