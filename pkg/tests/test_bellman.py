import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from budgetcmdp.bellman import (RoundingScheme, approx_dp_update, approximate_backward_induction, compose,
                                exact_dp_update, pareto_front)
from budgetcmdp.bicriteria import BudgetGrid
from budgetcmdp.corpus import (exact_partial, random_model, rounded_partial, check_adp_optimization,
                               check_rounding_bounds)
from budgetcmdp.criteria import MAX_INDICATOR, SUM_IDENTITY, SrCriterion, make_almost_sure, make_expectation
from budgetcmdp.errors import GridTooLarge, PartialCostSetTooLarge
from budgetcmdp.model import NEG_INF, ExtendedValue, TabularCaMDP
from budgetcmdp.oracle import unconstrained_value
from budgetcmdp.reduction import solve_exact


class Reduced:
    def __init__(self, model, criterion, budgets):
        self.model, self.criterion, self._b = model, criterion, budgets

    def budget_set(self):
        return [tuple(b) for b in self._b]


def split_model(probs=(0.6, 0.4), cost=0.0):
    """State 0 moves to states 1 and 2 with ``probs``."""
    P = np.zeros((2, 3, 1, 3))
    P[0, :, 0, 1:] = probs
    P[1, :, 0, 0] = 1.0
    c = np.zeros((2, 3, 1, 1))
    c[0, 0, 0, 0] = cost
    return TabularCaMDP(P, np.zeros((2, 3, 1)), c, 0)


NEXT = {(1, 0): 0.0, (1, 1): 2.0, (2, 0): 0.0, (2, 1): 1.0}


def next_value(t, b):
    v = NEXT.get((t, int(round(b[0]))))
    return NEG_INF if v is None else ExtendedValue(v)


@pytest.mark.parametrize("ell,x,k", [(0.5, 1.2, 3), (0.25, 1.0, 4), (0.5, -1.2, -2)])
def test_round_up_examples(ell, x, k):
    scheme = RoundingScheme(ell, 1)
    assert scheme.round_up(x) == k
    assert scheme.round_value(x) == pytest.approx(k * ell)


def test_round_up_rejects_nonfinite():
    with pytest.raises(ValueError):
        RoundingScheme(0.5, 1).round_up(float("nan"))
    with pytest.raises(ValueError):
        RoundingScheme(0.0, 1)


def test_identity_scheme():
    s = RoundingScheme.identity()
    assert s.kappa(1.25) == 1.25
    assert s.round_value(0.1 + 0.2) == 0.3


@settings(max_examples=200, deadline=None)
@given(x=st.floats(-1e4, 1e4), ell=st.sampled_from([0.5, 0.25, 0.1, 1 / 3, 0.01]))
def test_rounding_sandwich(x, ell):
    v = RoundingScheme(ell, 1).round_value(x)
    assert x - 1e-9 <= v <= x + ell + 1e-9


def test_exact_update_example():
    m = split_model()
    red = Reduced(m, SrCriterion([make_expectation(1.0)]), [(0.0,), (1.0,)])
    up = exact_dp_update(red, 0, 0, (1.0,), 0, next_value)
    assert up.value == pytest.approx(1.6)
    assert up.successors == {1: (1.0,), 2: (1.0,)}


def test_exact_update_negative_budget():
    red = Reduced(split_model(), SrCriterion([make_expectation(-1.0)]), [(0.0,), (1.0,)])
    assert exact_dp_update(red, 0, 0, (-1.0,), 0, next_value).value.is_neg_inf


@pytest.mark.parametrize("c,b,feasible", [(0.0, 0.0, True), (1.0, 0.0, False), (1.0, 1.0, True)])
def test_exact_update_single_successor(c, b, feasible):
    P = np.zeros((2, 2, 1, 2))
    P[:, :, 0, 1] = 1.0
    cost = np.zeros((2, 2, 1, 1))
    cost[0, 0, 0, 0] = c
    m = TabularCaMDP(P, np.zeros((2, 2, 1)), cost, 0)
    red = Reduced(m, SrCriterion([make_expectation(b)]), [(0.0,)])
    up = exact_dp_update(red, 0, 0, (b,), 0, lambda t, bt: ExtendedValue(7.0))
    assert (up.value == 7.0) if feasible else up.value.is_neg_inf


def test_approx_identity_matches_exact():
    m = split_model()
    crit = SrCriterion([make_expectation(1.0)])
    up = approx_dp_update(m, crit, 0, 0, (1.0,), 0, RoundingScheme.identity(2), next_value, [(0.0,), (1.0,)])
    assert up.value == pytest.approx(1.6)
    assert up.successors == {1: (1.0,), 2: (1.0,)}


def test_approx_rounded_is_superoptimal():
    m = split_model()
    crit = SrCriterion([make_expectation(1.0)])
    scheme = RoundingScheme(0.5, 2)
    # multipliers: 0 -> 0.0 and 2 -> 1.0
    nv = lambda t, b: next_value(t, (b[0] / 2,))
    up = approx_dp_update(m, crit, 0, 0, (2,), 0, scheme, nv, [(0,), (2,)])
    assert float(up.value) >= 1.6


def test_approx_zero_cost_unconstrained():
    m = split_model()
    crit = SrCriterion([make_expectation(0.0)])
    up = approx_dp_update(m, crit, 0, 0, (0,), 0, RoundingScheme(0.5, 2), next_value, [(0,), (1,)])
    assert up.value == pytest.approx(0.6 * 2 + 0.4 * 1)


def test_partial_cost_sets_within_range():
    m = split_model()
    crit = SrCriterion([make_expectation(1.0)])
    grid = [(0,), (1,), (2,)]
    up = approx_dp_update(m, crit, 0, 0, (2,), 0, RoundingScheme(0.5, 2), next_value, grid)
    for layer in up.partial_costs:
        for F in layer:
            assert 0 <= F[0] <= 2 + 2


def test_engine_t1_identity_matches_exact(t1):
    crit = SrCriterion([make_expectation(1.5)])
    pol, table = approximate_backward_induction(t1, crit, RoundingScheme.identity(2))
    assert table.value(0, 0, (1.5,)) == pytest.approx(solve_exact(t1, crit).value.value)


def test_engine_unconstrained(t1):
    crit = SrCriterion([make_expectation(100.0)])
    pol, table = approximate_backward_induction(t1, crit, RoundingScheme.identity(2))
    assert table.value(0, 0, (100.0,)) == pytest.approx(unconstrained_value(t1))


def test_engine_infeasible(t1):
    crit = SrCriterion([make_almost_sure(-1.0)])
    ell = 0.1
    pol, table = approximate_backward_induction(t1, crit, RoundingScheme(ell, 2), BudgetGrid.for_model(t1, ell))
    assert pol is None
    assert table.value(0, 0, (-10,)).is_neg_inf


def test_unreachable_cells_refuse_queries():
    P = np.zeros((1, 2, 1, 2))
    P[0, :, 0, 0] = 1.0
    m = TabularCaMDP(P, np.zeros((1, 2, 1)), np.zeros((1, 2, 1, 1)), 0)
    crit = SrCriterion([make_expectation(0.0)])
    _, table = approximate_backward_induction(m, crit, RoundingScheme.identity(1))
    assert not table.computed(0, 1)
    with pytest.raises(KeyError):
        table.value(0, 1, (0.0,))
    _, full = approximate_backward_induction(m, crit, RoundingScheme.identity(1), reachable_only=False)
    assert full.value(0, 1, (0.0,)) == 0.0


def test_pareto_front_one_dim():
    F = np.array([[2.0], [1.0], [1.0], [3.0]])
    D = np.array([5.0, 4.0, 4.0, 5.0])
    assert pareto_front(F, D).tolist() == [1, 0]


def test_caps(t1):
    crit = SrCriterion([make_expectation(1.5)])
    ell = 0.01
    grid = BudgetGrid.for_model(t1, ell)
    with pytest.raises(PartialCostSetTooLarge):
        approximate_backward_induction(t1, crit, RoundingScheme(ell, 2), grid, partial_cap=3)
    with pytest.raises(GridTooLarge) as err:
        approximate_backward_induction(t1, crit, RoundingScheme(ell, 2), grid, table_cap=1)
    assert err.value.required > 1


def solve_grid(model, crit, ell, prune):
    grid = BudgetGrid.for_model(model, ell)
    scheme = RoundingScheme(ell, max(1, model.max_branching()))
    return approximate_backward_induction(model, crit, scheme, grid, prune=prune, reachable_only=False)[1], grid


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10**6), kind=st.sampled_from(["e", "a"]), ell=st.sampled_from([0.5, 0.4, 1.0]))
def test_pruned_equals_unpruned(seed, kind, ell):
    m = random_model(np.random.default_rng(seed), max_h=2, max_s=3)
    crit = SrCriterion([make_expectation(1.0) if kind == "e" else make_almost_sure(1.0)])
    a, grid = solve_grid(m, crit, ell, True)
    b, _ = solve_grid(m, crit, ell, False)
    pts = list(grid.points())
    for h in range(m.horizon + 1):
        for s in range(m.num_states):
            np.testing.assert_array_equal(a.grid_values(h, s, pts), b.grid_values(h, s, pts))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10**6), kind=st.sampled_from(["e", "a"]))
def test_engine_matches_cell_update(seed, kind):
    """The whole-model solver agrees with the literal per-cell update on every grid point."""
    m = random_model(np.random.default_rng(seed), max_h=2, max_s=3)
    crit = SrCriterion([make_expectation(1.0) if kind == "e" else make_almost_sure(1.0)])
    ell = 0.5
    table, grid = solve_grid(m, crit, ell, True)
    scheme = table.scheme
    pts = list(grid.points())
    h = 0
    for s in range(m.num_states):
        for b in pts:
            best = NEG_INF
            for a in m.actions(h, s):
                up = approx_dp_update(m, crit, h, s, b, a, scheme, lambda t, bt: table.value(h + 1, t, bt), pts)
                if up.value.is_finite:
                    best = max(best, up.value + m.rewards[h, s, a])
            assert float(table.value(h, s, b)) == pytest.approx(float(best), abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_value_monotone_in_budget(seed):
    m = random_model(np.random.default_rng(seed))
    table, grid = solve_grid(m, SrCriterion([make_expectation(1.0)]), 0.5, True)
    pts = list(grid.points())
    for s in range(m.num_states):
        v = table.grid_values(0, s, pts)
        assert np.all(v[1:] >= v[:-1])


@settings(max_examples=100, deadline=None)
@given(data=st.data(), S=st.integers(1, 6), comb=st.sampled_from([SUM_IDENTITY, MAX_INDICATOR]),
       ell=st.sampled_from([0.5, 0.25, 0.1]))
def test_space_error_sandwich(data, S, comb, ell):
    probs = np.asarray(data.draw(st.lists(st.floats(0.01, 1.0), min_size=S, max_size=S)))
    probs /= probs.sum()
    b = np.asarray(data.draw(st.lists(st.integers(-6, 12), min_size=S, max_size=S)), dtype=float)
    scheme = RoundingScheme(ell, S)
    budgets = (b * ell)[:, None, None]
    exact = exact_partial([comb], 0.0, probs, budgets)
    rounded = rounded_partial([comb], 0.0, probs, budgets, scheme)
    assert np.all(exact <= rounded + 1e-9)
    assert np.all(rounded <= exact + S * ell + 1e-9)


def test_compose_shape():
    out = compose([SUM_IDENTITY], np.zeros((3, 1)), np.arange(4.0)[:, None], 0.5, RoundingScheme(0.5, 2))
    assert out.shape == (3, 4, 1)


def test_rounding_and_update_suites():
    assert check_rounding_bounds(seed=1, samples=20_000).passed
    assert check_adp_optimization(seed=1, trials=20).passed
