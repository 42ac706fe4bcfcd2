"""Exact reduction to an MDP over (state, budget) pairs, for tiny instances."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bellman import FEAS_TOL, RoundingScheme, approximate_backward_induction, canonical
from .criteria import SrCriterion, check_criterion
from .errors import BudgetSpaceTooLarge
from .model import NEG_INF, AugmentedPolicy, ExtendedValue, TabularCaMDP

DEFAULT_BUDGET_CAP = 10**5


def _dedup(rows: np.ndarray) -> np.ndarray:
    if len(rows) == 0:
        return rows
    return np.unique(canonical(rows), axis=0)


@dataclass(frozen=True)
class BudgetSpace:
    """Achievable criterion costs per ``(h, s)``; layer ``H`` is ``{0}``.

    ``layers[h][s]`` is a sorted ``(n, m)`` array of distinct vectors.
    """

    layers: tuple
    sizes: tuple

    def at(self, h: int, s: int) -> np.ndarray:
        return self.layers[h][s]

    def union(self) -> np.ndarray:
        return _dedup(np.vstack([arr for layer in self.layers for arr in layer]))

    def total(self) -> int:
        return int(sum(self.sizes))


def enumerate_budget_space(model: TabularCaMDP, criterion: SrCriterion, cap: int = DEFAULT_BUDGET_CAP) -> BudgetSpace:
    """Backward induction over every action and every successor budget assignment.

    The fold over successors is incremental: partial compositions are
    deduplicated after each successor, which is what keeps the enumeration
    tractable.  Raises :class:`BudgetSpaceTooLarge` when a layer (summed over
    states) exceeds ``cap``.
    """
    check_criterion(model, criterion)
    H, S, m = model.horizon, model.num_states, criterion.m
    combs = criterion.combinators
    layers = [None] * (H + 1)
    layers[H] = tuple(np.zeros((1, m)) for _ in range(S))
    sizes = [0] * (H + 1)
    sizes[H] = S
    for h in reversed(range(H)):
        nxt = layers[h + 1]
        layer, total = [], 0
        for s in range(S):
            found = []
            for a in model.actions(h, s):
                succ, probs = model.support(h, s, a)
                F = np.zeros((1, m))
                for t, p in zip(succ, probs):
                    Bt = nxt[int(t)]
                    out = np.empty((len(F), len(Bt), m))
                    for k, comb in enumerate(combs):
                        out[:, :, k] = comb.f(F[:, None, k], float(comb.g(p)) * Bt[None, :, k])
                    F = _dedup(out.reshape(-1, m))
                    if total + len(F) > cap:
                        raise BudgetSpaceTooLarge(cap, total + len(F), h)
                found.append(model.costs[h, s, a] + F)
            arr = _dedup(np.vstack(found)) if found else np.zeros((0, m))
            total += len(arr)
            if total > cap:
                raise BudgetSpaceTooLarge(cap, total, h)
            layer.append(arr)
        layers[h] = tuple(layer)
        sizes[h] = total
    return BudgetSpace(tuple(layers), tuple(sizes))


@dataclass(frozen=True)
class ReducedMdp:
    """The MDP over augmented states ``(s, b)`` with ``b`` drawn from the budget space."""

    model: TabularCaMDP
    criterion: SrCriterion
    space: BudgetSpace

    def budget_set(self) -> list[tuple]:
        return [tuple(float(x) for x in row) for row in self.space.union()]

    def admissible(self, h: int, s: int, a: int, b, successors) -> bool:
        """``c_h(s, a) + f_{s'} g(P) b_{s'} <= b`` with no rounding and no slack."""
        succ, probs = self.model.support(h, s, a)
        vals = np.array([successors[int(t)] for t in succ], dtype=float).reshape(len(succ), self.criterion.m)
        cost = self.model.costs[h, s, a] + self.criterion.combine(probs, vals)
        return bool(np.all(cost <= np.asarray(b, dtype=float) + FEAS_TOL))

    def terminal_value(self, b) -> ExtendedValue:
        return ExtendedValue(0.0) if np.all(np.asarray(b, dtype=float) >= -FEAS_TOL) else NEG_INF


def build_reduced_mdp(model, criterion, cap: int = DEFAULT_BUDGET_CAP) -> ReducedMdp:
    return ReducedMdp(model, criterion, enumerate_budget_space(model, criterion, cap))


@dataclass
class ExactResult:
    status: str                      # "solved" | "infeasible"
    value: ExtendedValue
    policy: AugmentedPolicy | None
    reduced: ReducedMdp
    table: object = None

    @property
    def feasible(self) -> bool:
        return self.status == "solved"


def solve_exact(model: TabularCaMDP, criterion: SrCriterion, cap: int = DEFAULT_BUDGET_CAP) -> ExactResult:
    """Optimal deterministic policy under the criterion, or ``infeasible``.

    The budget space is enumerated first (so oversize instances fail early
    with a pointer to the bicriteria solver), then the Bellman engine runs
    with identity rounding.  Policy budgets are real vectors.
    """
    reduced = build_reduced_mdp(model, criterion, cap)
    scheme = RoundingScheme.identity(max(1, model.max_branching()))
    start = scheme.key(criterion.budgets)
    policy, table = approximate_backward_induction(model, criterion, scheme, start=start)
    value = table.value(0, model.initial_state, start)
    if policy is None:
        return ExactResult("infeasible", NEG_INF, None, reduced, table)
    return ExactResult("solved", value, policy, reduced, table)
