import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from budgetcmdp.knapsack import (KnapsackInstance, benchmark_rows, knapsack_bicriteria, knapsack_bruteforce,
                                 knapsack_fptas, knapsack_to_cmdp, random_instance, rows_to_csv)
from budgetcmdp.errors import TooLarge, ValidationError
from budgetcmdp.oracle import brute_force_optimum
from budgetcmdp.reduction import solve_exact

EXAMPLE = KnapsackInstance([6, 10, 12], [2, 4, 6], 8)


def test_single_item():
    inst = KnapsackInstance([7], [3], 3)
    model, crit = knapsack_to_cmdp(inst)
    assert solve_exact(model, crit).value == 7.0


def test_cmdp_example():
    model, crit = knapsack_to_cmdp(EXAMPLE)
    assert model.horizon == 3 and model.num_states == 4
    assert solve_exact(model, crit).value == 18.0
    assert brute_force_optimum(*knapsack_to_cmdp(EXAMPLE, "expectation")).value == 18.0


def test_zero_budget():
    model, crit = knapsack_to_cmdp(KnapsackInstance([6, 10], [2, 4], 0))
    assert solve_exact(model, crit).value == 0.0


def test_bruteforce_examples():
    assert knapsack_bruteforce(EXAMPLE) == (18.0, frozenset({0, 2}))
    assert knapsack_bruteforce(KnapsackInstance([6, 10], [9, 9], 8)) == (0.0, frozenset())
    assert knapsack_bruteforce(KnapsackInstance([6, 10], [2, 4], 6))[0] == 16.0


def test_bruteforce_limit():
    with pytest.raises(TooLarge):
        knapsack_bruteforce(KnapsackInstance(np.ones(26), np.ones(26), 3))


def test_fptas_examples():
    val, sub = knapsack_fptas(EXAMPLE, 0.1)
    assert val >= 16.2 and EXAMPLE.evaluate(sub)[1] <= 8
    assert knapsack_fptas(EXAMPLE, 1e-6)[0] == 18.0
    assert knapsack_fptas(KnapsackInstance([5], [1], 1), 0.5) == (5.0, frozenset({0}))


def test_invalid_instances():
    with pytest.raises(ValidationError):
        KnapsackInstance([1, 2], [1], 1)
    with pytest.raises(ValidationError):
        KnapsackInstance([1], [-1], 1)


def test_bicriteria_example():
    rep, sub = knapsack_bicriteria(EXAMPLE, 0.1)
    val, wt = EXAMPLE.evaluate(sub)
    assert val >= 18.0 and wt <= 1.1 * 8
    assert rep.value == pytest.approx(val)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(1, 8))
def test_three_way(seed, n):
    inst = random_instance(np.random.default_rng(seed), n)
    opt, _ = knapsack_bruteforce(inst)
    fv, fs = knapsack_fptas(inst, 0.1)
    assert opt >= fv >= 0.9 * opt - 1e-9
    assert inst.evaluate(fs)[1] <= inst.budget
    for mode, limit in (("relative", 1.1 * inst.budget), ("additive", inst.budget + 0.1)):
        _, sub = knapsack_bicriteria(inst, 0.1, mode)
        val, wt = inst.evaluate(sub)
        assert val >= opt - 1e-9 and wt <= limit + 1e-9


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(1, 5))
def test_cmdp_round_trip(seed, n):
    inst = random_instance(np.random.default_rng(seed), n)
    model, crit = knapsack_to_cmdp(inst)
    assert brute_force_optimum(model, crit).value == knapsack_bruteforce(inst)[0]


def test_csv_rows():
    rows = benchmark_rows(EXAMPLE, 0.1)
    text = rows_to_csv(rows)
    lines = text.splitlines()
    assert lines[0] == "method,value,weight,violation,wall_time_ms"
    assert [l.split(",")[0] for l in lines[1:]] == ["bruteforce", "fptas", "bicriteria-relative"]
    assert "wall_time_ms" not in rows_to_csv(rows, timings=False)
