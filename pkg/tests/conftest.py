import numpy as np
import pytest

from budgetcmdp.corpus import chain_instance, t1_instance
from budgetcmdp.model import TabularCaMDP


def two_action_model(r=(1.0, 5.0), c=(0.0, 1.0)) -> TabularCaMDP:
    """One step, one state, two actions."""
    P = np.ones((1, 1, 2, 1))
    rew = np.array(r, dtype=float).reshape(1, 1, 2)
    cost = np.array(c, dtype=float).reshape(1, 1, 2, 1)
    return TabularCaMDP(P, rew, cost, 0)


def branching_model(c0=0.0, down=(1.0, 3.0), probs=(0.5, 0.5)) -> TabularCaMDP:
    """Step 0 branches to states 1 and 2; step 1 charges ``down`` there."""
    P = np.zeros((2, 3, 1, 3))
    P[0, :, 0, 1:] = probs
    P[1, :, 0, 0] = 1.0
    r = np.zeros((2, 3, 1))
    c = np.zeros((2, 3, 1, 1))
    c[0, 0, 0, 0] = c0
    c[1, 1, 0, 0], c[1, 2, 0, 0] = down
    return TabularCaMDP(P, r, c, 0)


@pytest.fixture
def t1():
    return t1_instance()


@pytest.fixture
def chain():
    return chain_instance()


@pytest.fixture
def simple():
    return two_action_model()


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for num in sorted(results):
            terminalreporter.write_line(results[num])
