import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from budgetcmdp.corpus import KINDS, corpus, random_model, size_bound
from budgetcmdp.criteria import SrCriterion, make_almost_sure, make_expectation, sr_cost
from budgetcmdp.errors import BudgetSpaceTooLarge
from budgetcmdp.model import TabularCaMDP
from budgetcmdp.oracle import brute_force_optimum, enumerate_achievable_costs
from budgetcmdp.reduction import build_reduced_mdp, enumerate_budget_space, solve_exact



def test_budget_space_two_actions(simple):
    space = enumerate_budget_space(simple, SrCriterion([make_expectation(0.0)]))
    assert space.at(1, 0).tolist() == [[0.0]]
    assert space.at(0, 0).tolist() == [[0.0], [1.0]]


def test_budget_space_zero_costs(t1):
    space = enumerate_budget_space(t1.with_costs(np.zeros_like(t1.costs)), SrCriterion([make_expectation(0.0)]))
    for layer in space.layers:
        for arr in layer:
            assert arr.tolist() == [[0.0]]


def test_budget_space_size_bound():
    rng = np.random.default_rng(5)
    for _ in range(20):
        P = rng.dirichlet(np.ones(2), (2, 2, 2))
        c = rng.uniform(0, 3, (2, 2, 2, 1))
        m = TabularCaMDP(P, np.zeros((2, 2, 2)), c, 0)
        space = enumerate_budget_space(m, SrCriterion([make_expectation(1.0)]))
        for s in range(2):
            assert len(space.at(0, s)) <= 8
    assert size_bound(2, 2, 2, 0) == 8


def test_budget_space_cap(t1):
    with pytest.raises(BudgetSpaceTooLarge) as err:
        enumerate_budget_space(t1, SrCriterion([make_expectation(1.0)]), cap=2)
    assert err.value.cap == 2


@pytest.mark.parametrize("B,value,action", [(0.0, 1.0, 0), (1.0, 5.0, 1)])
def test_solve_exact_examples(simple, B, value, action):
    res = solve_exact(simple, SrCriterion([make_expectation(B)]))
    assert res.feasible
    assert res.value == value
    assert res.policy.lookup(0, 0, res.policy.initial_budget).action == action


def test_solve_exact_infeasible(simple):
    res = solve_exact(simple, SrCriterion([make_expectation(-1.0)]))
    assert not res.feasible and res.policy is None


def test_reduced_admissibility(simple):
    red = build_reduced_mdp(simple, SrCriterion([make_expectation(1.0)]))
    assert red.admissible(0, 0, 1, (1.0,), {0: (0.0,)})
    assert not red.admissible(0, 0, 1, (0.5,), {0: (0.0,)})
    assert red.terminal_value((0.0,)) == 0.0
    assert red.terminal_value((-1.0,)).is_neg_inf
    assert (0.0,) in red.budget_set() and (1.0,) in red.budget_set()


@pytest.mark.parametrize("kind", list(KINDS))
def test_exact_matches_oracle(kind):
    for item in corpus(seed=11, count=40):
        crit = SrCriterion([KINDS[kind](item.budget)])
        res = solve_exact(item.model, crit)
        orc = brute_force_optimum(item.model, crit)
        assert res.feasible == orc.feasible
        if res.feasible:
            assert res.value.value == pytest.approx(orc.value.value, abs=1e-9)
            assert np.all(sr_cost(item.model, crit, res.policy) <= crit.budgets + 1e-9)


def test_two_dims_exact_matches_oracle():
    rng = np.random.default_rng(2)
    for _ in range(20):
        m = random_model(rng, max_h=2, max_s=2)
        c = np.concatenate([m.costs, rng.integers(0, 3, m.costs.shape).astype(float)], axis=-1)
        m = m.with_costs(c)
        crit = SrCriterion([make_expectation(1.0), make_almost_sure(2.0)])
        res, orc = solve_exact(m, crit), brute_force_optimum(m, crit)
        assert res.feasible == orc.feasible
        if res.feasible:
            assert res.value.value == pytest.approx(orc.value.value, abs=1e-9)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6), kind=st.sampled_from(list(KINDS)))
def test_budget_space_equals_achievable(seed, kind):
    m = random_model(np.random.default_rng(seed))
    crit = SrCriterion([KINDS[kind](1.0)])
    space = enumerate_budget_space(m, crit)
    ach = enumerate_achievable_costs(m, crit)
    for h in range(m.horizon + 1):
        for s in range(m.num_states):
            np.testing.assert_allclose(space.at(h, s), ach[h][s], atol=1e-12)
