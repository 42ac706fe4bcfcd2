"""Brute-force ground truth for tiny instances.

Deterministic history-dependent policies are enumerated compositionally: a
policy from a history ending in ``(h, s)`` is an action plus one independent
sub-policy per successor, so the outcomes from ``(h, s)`` are the product of
the successors' outcome lists.  Nothing is deduplicated or pruned.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bellman import FEAS_TOL, canonical
from .criteria import CHANCE_TIE_TOL, CostAugmentedModel, SrCriterion
from .errors import TooManyPolicies
from .model import NEG_INF, AugmentedPolicy, ExtendedValue, TabularCaMDP

DEFAULT_POLICY_CAP = 10**6
DEFAULT_HISTORY_CAP = 10**5


def count_policies(model: TabularCaMDP) -> np.ndarray:
    """``N[h, s]``: deterministic history-dependent policies from a history ending in ``(h, s)``."""
    H, S = model.horizon, model.num_states
    N = np.ones((H + 1, S), dtype=object)
    for h in reversed(range(H)):
        for s in range(S):
            total = 0
            for a in model.actions(h, s):
                prod = 1
                for t in model.support(h, s, a)[0]:
                    prod *= N[h + 1, int(t)]
                total += prod
            N[h, s] = total
    return N


@dataclass
class _Outcomes:
    values: np.ndarray        # (n,)
    costs: np.ndarray         # (n, m)
    actions: np.ndarray       # (n,)
    children: np.ndarray      # (n, k) child outcome indices, aligned with succ[action]


def _outcomes(model, criterion, cap, states=None):
    H, S, m = model.horizon, model.num_states, criterion.m
    N = count_policies(model)
    need = [N[0, s] for s in (range(S) if states is None else states)]
    if max(need) > cap:
        raise TooManyPolicies(int(max(need)), cap)
    layers = [None] * (H + 1)
    layers[H] = [_Outcomes(np.zeros(1), np.zeros((1, m)), np.zeros(1, dtype=np.int64), np.zeros((1, 0), dtype=np.int64))
                 for _ in range(S)]
    for h in reversed(range(H)):
        row = []
        for s in range(S):
            vals, costs, acts, kids = [], [], [], []
            width = 0
            for a in model.actions(h, s):
                succ, probs = model.support(h, s, a)
                subs = [layers[h + 1][int(t)] for t in succ]
                grids = np.indices([len(o.values) for o in subs]).reshape(len(subs), -1)
                v = model.rewards[h, s, a] + sum(p * o.values[g] for p, o, g in zip(probs, subs, grids))
                # successor-major (k, n, m) so the shared fold runs over successors
                stacked = np.stack([o.costs[g] for o, g in zip(subs, grids)])
                c = np.stack([comb.fold(probs, stacked[:, :, k]) for k, comb in enumerate(criterion.combinators)],
                             axis=-1).reshape(-1, m)
                c = model.costs[h, s, a] + c
                vals.append(np.asarray(v, dtype=float).reshape(-1))
                costs.append(c)
                acts.append(np.full(len(c), a))
                kids.append(grids.T)
                width = max(width, len(subs))
            pad = [np.pad(k, ((0, 0), (0, width - k.shape[1])), constant_values=-1) for k in kids]
            row.append(_Outcomes(np.concatenate(vals), np.vstack(costs), np.concatenate(acts), np.vstack(pad)))
        layers[h] = row
    return layers


@dataclass(frozen=True)
class OracleResult:
    value: ExtendedValue
    witness: dict | None          # nested {"action", "next": {state: ...}}
    cost: np.ndarray | None
    policies: int

    @property
    def feasible(self) -> bool:
        return self.value.is_finite

    def to_json(self) -> dict:
        return {
            "feasible": self.feasible,
            "value": self.value.value if self.feasible else None,
            "cost": None if self.cost is None else self.cost.tolist(),
            "policies": self.policies,
            "witness": self.witness,
        }


def _witness(model, layers, h, s, i):
    if h == model.horizon:
        return None
    o = layers[h][s]
    a = int(o.actions[i])
    succ = model.support(h, s, a)[0]
    nxt = {str(int(t)): _witness(model, layers, h + 1, int(t), int(o.children[i, j])) for j, t in enumerate(succ)}
    return {"action": a, "next": {k: v for k, v in nxt.items() if v is not None}}


def brute_force_optimum(model: TabularCaMDP, criterion: SrCriterion, B=None,
                        cap: int = DEFAULT_POLICY_CAP) -> OracleResult:
    """Best value over every deterministic history-dependent policy with cost ``<= B``."""
    B = criterion.budgets if B is None else np.atleast_1d(np.asarray(B, dtype=float))
    s0 = model.initial_state
    layers = _outcomes(model, criterion, cap, states=[s0])
    root = layers[0][s0]
    ok = np.flatnonzero(np.all(root.costs <= B + FEAS_TOL, axis=1))
    if len(ok) == 0:
        return OracleResult(NEG_INF, None, None, len(root.values))
    best = ok[np.argmax(root.values[ok])]
    return OracleResult(ExtendedValue(root.values[best]), _witness(model, layers, 0, s0, best),
                        root.costs[best].copy(), len(root.values))


def enumerate_achievable_costs(model: TabularCaMDP, criterion: SrCriterion, cap: int = DEFAULT_POLICY_CAP) -> list:
    """Distinct criterion costs of every sub-policy from every ``(h, s)``; layer ``H`` is ``{0}``."""
    layers = _outcomes(model, criterion, cap)
    return [[np.unique(canonical(o.costs), axis=0) for o in row] for row in layers]


def unconstrained_value(model: TabularCaMDP) -> float:
    """Plain finite-horizon backward induction."""
    V = np.zeros(model.num_states)
    for h in reversed(range(model.horizon)):
        Q = model.rewards[h] + model.transitions[h] @ V
        V = np.array([max(Q[s, a] for a in model.actions(h, s)) if len(model.actions(h, s)) else -np.inf
                      for s in range(model.num_states)])
    return float(V[model.initial_state])


# ---------------------------------------------------------------------------
# histories and path enumeration


@dataclass(frozen=True)
class HistoryTree:
    """Realisable histories ``((s0, a0, s1), ...)`` with their path probabilities.

    A node's probability is the product of transition probabilities along
    it, so for each action the children of a node sum to the node.
    """

    nodes: dict               # history tuple -> (h, state, probability)

    def __len__(self) -> int:
        return len(self.nodes)

    def children(self, history: tuple, action: int) -> list:
        h = len(history)
        return [k for k in self.nodes if len(k) == h + 1 and k[:h] == history and k[h][1] == action]


def history_tree(model: TabularCaMDP, cap: int = DEFAULT_HISTORY_CAP) -> HistoryTree:
    nodes = {(): (0, model.initial_state, 1.0)}
    frontier = [()]
    for h in range(model.horizon):
        nxt = []
        for hist in frontier:
            _, s, pr = nodes[hist]
            for a in model.actions(h, s):
                for t, p in zip(*model.support(h, s, a)):
                    key = hist + ((s, a, int(t)),)
                    nodes[key] = (h + 1, int(t), pr * float(p))
                    nxt.append(key)
                    if len(nodes) > cap:
                        raise TooManyPolicies(len(nodes), cap)
        frontier = nxt
    return HistoryTree(nodes)


def path_distribution(model: TabularCaMDP, policy: AugmentedPolicy, start=None):
    """Every outcome path of an augmented policy as ``(probability, [(h, s, a), ...])``."""
    start = policy.start(model) if start is None else tuple(start)
    out = []

    def walk(h, s, b, pr, path):
        if h == model.horizon:
            out.append((pr, path))
            return
        e = policy.lookup(h, s, b)
        for t, p in zip(*model.support(h, s, e.action)):
            walk(h + 1, int(t), tuple(e.successors[int(t)]), pr * float(p), path + [(h, s, e.action)])

    walk(0, model.initial_state, start, 1.0, [])
    return out


def exceed_probability(aug: CostAugmentedModel, policy: AugmentedPolicy, start=None, anytime: bool | None = None) -> float:
    """Exact probability that the true cumulative cost of ``aug.column`` exceeds the chance budget.

    The policy acts on the augmented model; costs are read from the base
    model so the grid rounding plays no part.  ``anytime`` checks every
    prefix sum instead of the total.
    """
    anytime = aug.anytime if anytime is None else anytime
    base, L = aug.base, aug.num_levels
    tie = CHANCE_TIE_TOL * max(1.0, abs(aug.budget))
    total = 0.0
    for pr, path in path_distribution(aug.augmented, policy, start):
        cum, hit = 0.0, False
        for h, x, a in path:
            cum += base.costs[h, x // L, a, aug.column]
            hit = hit or (anytime and cum > aug.budget + tie)
        if hit or cum > aug.budget + tie:
            total += pr
    return total
