"""Tabular cost-accumulating MDPs, budget-augmented policies and their evaluation.

Steps are indexed ``0 .. H-1`` throughout the package; ``h == H`` is the
terminal layer.  Budgets attached to augmented states are tuples: integer
grid multipliers for rounded solves, canonical reals for exact solves.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Sequence

import numpy as np

from .errors import EmptySample, MissingPolicyEntry, NonFiniteValue, ValidationError

ROW_SUM_TOL = 1e-9

Budget = tuple  # tuple[int, ...] on a grid, tuple[float, ...] in exact mode


@functools.total_ordering
class ExtendedValue:
    """A real number or negative infinity.

    Negative infinity absorbs addition and sits below every finite value.
    Finite arithmetic that overflows raises instead of producing ``inf``.
    """

    __slots__ = ("_x",)

    def __init__(self, x: float | None):
        if x is not None:
            x = float(x)
            if not math.isfinite(x):
                raise NonFiniteValue(f"finite extended value cannot hold {x!r}")
        self._x = x

    @classmethod
    def finite(cls, x: float) -> "ExtendedValue":
        return cls(x)

    @property
    def is_neg_inf(self) -> bool:
        return self._x is None

    @property
    def is_finite(self) -> bool:
        return self._x is not None

    @property
    def value(self) -> float:
        if self._x is None:
            raise ValueError("negative infinity has no finite value")
        return self._x

    def __float__(self) -> float:
        return -math.inf if self._x is None else self._x

    def __add__(self, other):
        if isinstance(other, ExtendedValue):
            if self._x is None or other._x is None:
                return NEG_INF
            return ExtendedValue(self._x + other._x)
        if self._x is None:
            return NEG_INF
        return ExtendedValue(self._x + float(other))

    __radd__ = __add__

    def scale(self, weight: float) -> "ExtendedValue":
        """Multiply by a non-negative weight; ``0 * -inf`` is not defined here."""
        if weight < 0:
            raise ValueError("weights must be non-negative")
        if self._x is None:
            if weight == 0:
                raise ValueError("0 * -inf is undefined")
            return NEG_INF
        return ExtendedValue(weight * self._x)

    def __eq__(self, other):
        if isinstance(other, ExtendedValue):
            return self._x == other._x
        if isinstance(other, (int, float)):
            return float(self) == other
        return NotImplemented

    def __lt__(self, other):
        if isinstance(other, (int, float)):
            other = ExtendedValue(other) if math.isfinite(other) else (NEG_INF if other < 0 else None)
            if other is None:
                return True
        if not isinstance(other, ExtendedValue):
            return NotImplemented
        if self._x is None:
            return other._x is not None
        if other._x is None:
            return False
        return self._x < other._x

    def __hash__(self):
        return hash(self._x)

    def __repr__(self):
        return "NegInfinity" if self._x is None else f"Finite({self._x!r})"


NEG_INF = ExtendedValue(None)


@dataclass(frozen=True, eq=False)
class TabularCaMDP:
    """Finite-horizon MDP emitting an expected reward and a cost vector per step.

    Arrays are indexed ``transitions[h, s, a, s']``, ``rewards[h, s, a]`` and
    ``costs[h, s, a, k]``.  ``valid_actions[h][s]`` optionally restricts the
    actions available in a state; by default every action is valid.
    """

    transitions: np.ndarray
    rewards: np.ndarray
    costs: np.ndarray
    initial_state: int = 0
    valid_actions: tuple | None = None

    def __post_init__(self):
        for name in ("transitions", "rewards", "costs"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        if self.valid_actions is not None:
            va = tuple(tuple(tuple(int(a) for a in acts) for acts in layer) for layer in self.valid_actions)
            object.__setattr__(self, "valid_actions", va)
        object.__setattr__(self, "_support_cache", {})

    @property
    def horizon(self) -> int:
        return self.transitions.shape[0]

    @property
    def num_states(self) -> int:
        return self.transitions.shape[1] if self.transitions.ndim == 4 else 0

    @property
    def num_actions(self) -> int:
        return self.transitions.shape[2] if self.transitions.ndim == 4 else 0

    @property
    def num_constraints(self) -> int:
        return self.costs.shape[-1] if self.costs.ndim == 4 else 0

    def actions(self, h: int, s: int) -> Sequence[int]:
        if self.valid_actions is None:
            return range(self.num_actions)
        return self.valid_actions[h][s]

    def support(self, h: int, s: int, a: int) -> tuple[np.ndarray, np.ndarray]:
        """Successor states with positive probability, in index order, and their probabilities."""
        key = (h, s, a)
        hit = self._support_cache.get(key)
        if hit is None:
            row = self.transitions[h, s, a]
            idx = np.flatnonzero(row > 0)
            hit = (idx, row[idx])
            self._support_cache[key] = hit
        return hit

    def max_branching(self) -> int:
        """Largest support size over all valid (h, s, a)."""
        best = 1
        for h in range(self.horizon):
            for s in range(self.num_states):
                for a in self.actions(h, s):
                    best = max(best, int(np.count_nonzero(self.transitions[h, s, a] > 0)))
        return best

    def reachable(self) -> list[set[int]]:
        """States reachable at each step ``0..H`` under some action sequence."""
        layers = [{self.initial_state}]
        for h in range(self.horizon):
            nxt: set[int] = set()
            for s in layers[-1]:
                for a in self.actions(h, s):
                    nxt.update(int(t) for t in self.support(h, s, a)[0])
            layers.append(nxt)
        return layers

    def with_rewards(self, rewards) -> "TabularCaMDP":
        return TabularCaMDP(self.transitions, rewards, self.costs, self.initial_state, self.valid_actions)

    def with_costs(self, costs) -> "TabularCaMDP":
        return TabularCaMDP(self.transitions, self.rewards, costs, self.initial_state, self.valid_actions)

    def to_dict(self) -> dict:
        out = {
            "horizon": self.horizon,
            "num_states": self.num_states,
            "num_actions": self.num_actions,
            "initial_state": int(self.initial_state),
            "transitions": self.transitions.tolist(),
            "rewards": self.rewards.tolist(),
            "costs": self.costs.tolist(),
        }
        if self.valid_actions is not None:
            out["valid_actions"] = [[list(acts) for acts in layer] for layer in self.valid_actions]
        return out

    @classmethod
    def from_dict(cls, data: Mapping) -> "TabularCaMDP":
        return cls(
            transitions=data["transitions"],
            rewards=data["rewards"],
            costs=data["costs"],
            initial_state=data["initial_state"],
            valid_actions=data.get("valid_actions"),
        )


def validate_camdp(model: TabularCaMDP) -> TabularCaMDP:
    """Return ``model`` unchanged if every structural invariant holds.

    Raises ``ValidationError`` naming the first violated invariant.
    """
    P, r, c = model.transitions, model.rewards, model.costs
    if P.ndim != 4 or P.shape[0] < 1:
        raise ValidationError("horizon", "horizon must be a positive integer", P.shape[:1])
    H, S, A, S2 = P.shape
    if S < 1 or A < 1:
        raise ValidationError("shape", "need at least one state and one action", (S, A))
    if S2 != S:
        raise ValidationError("shape", f"transitions must be [H][S][A][S], got {P.shape}")
    if r.shape != (H, S, A):
        raise ValidationError("shape", f"rewards must have shape {(H, S, A)}, got {r.shape}")
    if c.ndim != 4 or c.shape[:3] != (H, S, A) or c.shape[3] < 1:
        raise ValidationError("shape", f"costs must have shape {(H, S, A)} + (m,), got {c.shape}")
    if not 0 <= model.initial_state < S:
        raise ValidationError("initial_state", f"must lie in [0, {S})", model.initial_state)
    if model.valid_actions is not None:
        va = model.valid_actions
        if len(va) != H or any(len(layer) != S for layer in va):
            raise ValidationError("valid_actions", "must be an [H][S] array of action lists")
        for h, layer in enumerate(va):
            for s, acts in enumerate(layer):
                for a in acts:
                    if not 0 <= a < A:
                        raise ValidationError("valid_actions", f"action {a} out of range", (h, s))
    if not np.all(np.isfinite(r)):
        raise ValidationError("finite", "rewards must be finite", tuple(np.argwhere(~np.isfinite(r))[0]))
    if not np.all(np.isfinite(c)):
        raise ValidationError("finite", "costs must be finite", tuple(np.argwhere(~np.isfinite(c))[0]))
    for h in range(H):
        for s in range(S):
            for a in model.actions(h, s):
                row = P[h, s, a]
                if not np.all(np.isfinite(row)) or np.any(row < 0) or np.any(row > 1):
                    raise ValidationError("probability", "entries must lie in [0, 1]", (h, s, a))
                if abs(row.sum() - 1.0) > ROW_SUM_TOL:
                    raise ValidationError("row-sum", f"row sums to {row.sum()!r}", (h, s, a))
    for h, layer in enumerate(model.reachable()[:-1]):
        for s in sorted(layer):
            if len(model.actions(h, s)) == 0:
                raise ValidationError("valid_actions", "reachable state has no valid action", (h, s))
    return model


@dataclass(frozen=True)
class PolicyEntry:
    action: int
    successors: Mapping[int, Budget]


@dataclass
class AugmentedPolicy:
    """Deterministic policy over augmented states ``(h, s, budget)``.

    Each entry fixes the action and the budget handed to every successor
    state with positive probability.
    """

    entries: dict = field(default_factory=dict)
    initial_budget: Budget | None = None

    def __getitem__(self, key) -> PolicyEntry:
        return self.entries[key]

    def __contains__(self, key) -> bool:
        return key in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator:
        return iter(self.entries)

    def set(self, h: int, s: int, budget: Budget, action: int, successors: Mapping[int, Budget]):
        self.entries[(h, s, tuple(budget))] = PolicyEntry(int(action), dict(successors))

    def lookup(self, h: int, s: int, budget: Budget) -> PolicyEntry:
        try:
            return self.entries[(h, s, tuple(budget))]
        except KeyError:
            raise MissingPolicyEntry(h, s, budget) from None

    def start(self, model: TabularCaMDP) -> Budget:
        if self.initial_budget is not None:
            return tuple(self.initial_budget)
        roots = [b for (h, s, b) in self.entries if h == 0 and s == model.initial_state]
        if len(roots) != 1:
            raise MissingPolicyEntry(0, model.initial_state, ())
        return roots[0]

    def to_json(self) -> list:
        out = []
        for (h, s, b), e in sorted(self.entries.items(), key=lambda kv: (kv[0][0], kv[0][1], kv[0][2])):
            out.append({
                "h": h,
                "state": s,
                "budget_multipliers": list(b),
                "action": e.action,
                "successors": {str(t): list(bt) for t, bt in sorted(e.successors.items())},
            })
        return out

    @classmethod
    def from_json(cls, rows: list) -> "AugmentedPolicy":
        if not isinstance(rows, list):
            raise ValidationError("policy", "policy file must hold a JSON array", "$")
        pol = cls()
        for i, row in enumerate(rows):
            try:
                pol.set(int(row["h"]), int(row["state"]), tuple(row["budget_multipliers"]), int(row["action"]),
                        {int(t): tuple(b) for t, b in row["successors"].items()})
            except (KeyError, TypeError, ValueError, AttributeError) as exc:
                raise ValidationError("policy", f"malformed entry ({exc})", f"$[{i}]") from None
        return pol


@dataclass(frozen=True)
class EvaluationReport:
    value: float
    cost: np.ndarray
    truncated_costs: np.ndarray | None = None

    def to_json(self) -> dict:
        out = {"value": self.value, "cost": self.cost.tolist()}
        if self.truncated_costs is not None:
            out["truncated_costs"] = self.truncated_costs.tolist()
        return out


def _policy_recursion(model, criterion, policy, start, cutoff=None, origin=None):
    """Exact value and SR cost of ``policy`` from ``(0, s0, start)``.

    Costs at steps ``h >= cutoff`` are treated as zero, which gives the
    criterion of the truncated-horizon process.
    """
    H = model.horizon
    memo: dict = {}

    def rec(h, s, b):
        if h == H:
            return 0.0, np.zeros(model.num_constraints)
        key = (h, s, b)
        hit = memo.get(key)
        if hit is not None:
            return hit
        e = policy.lookup(h, s, b)
        a = e.action
        succ, probs = model.support(h, s, a)
        vals = np.empty(len(succ))
        sub = np.empty((len(succ), model.num_constraints))
        for i, t in enumerate(succ):
            t = int(t)
            if t not in e.successors:
                raise MissingPolicyEntry(h + 1, t, ())
            vals[i], sub[i] = rec(h + 1, t, tuple(e.successors[t]))
        value = float(model.rewards[h, s, a] + probs @ vals)
        immediate = model.costs[h, s, a] if cutoff is None or h < cutoff else np.zeros(model.num_constraints)
        cost = immediate + criterion.combine(probs, sub)
        memo[key] = (value, cost)
        return value, cost

    h0, s0 = (0, model.initial_state) if origin is None else origin
    return rec(h0, s0, tuple(start))


def evaluate_policy(model: TabularCaMDP, criterion, policy: AugmentedPolicy, start: Budget | None = None,
                    truncated: bool = False) -> EvaluationReport:
    """Exact value and criterion cost of an augmented policy (no sampling)."""
    start = policy.start(model) if start is None else tuple(start)
    value, cost = _policy_recursion(model, criterion, policy, start)
    trunc = None
    if truncated:
        trunc = np.array([_policy_recursion(model, criterion, policy, start, cutoff=t)[1]
                          for t in range(1, model.horizon + 1)])
    return EvaluationReport(value, np.asarray(cost, dtype=float), trunc)


def evaluate_from(model: TabularCaMDP, criterion, policy: AugmentedPolicy, h: int, s: int, budget: Budget):
    """Value and criterion cost of the policy from the augmented state ``(h, s, budget)``."""
    value, cost = _policy_recursion(model, criterion, policy, budget, origin=(h, s))
    return value, np.asarray(cost, dtype=float)


@dataclass(frozen=True)
class RolloutSummary:
    value_mean: float
    value_stderr: float
    cost_mean: np.ndarray
    cost_max: np.ndarray
    total_costs: np.ndarray = field(repr=False)
    episodes: int

    def exceed_probability(self, budget) -> np.ndarray:
        return np.mean(self.total_costs > np.asarray(budget, dtype=float), axis=0)

    def to_json(self) -> dict:
        return {
            "episodes": self.episodes,
            "value_mean": self.value_mean,
            "value_stderr": self.value_stderr,
            "cost_mean": self.cost_mean.tolist(),
            "cost_max": self.cost_max.tolist(),
        }


def _stable_mean(x: np.ndarray) -> float:
    # offset by the first sample so identical samples average to themselves exactly
    base = x[0]
    return float(base + np.mean(x - base))


def rollout(model: TabularCaMDP, policy: AugmentedPolicy, seed: int, episodes: int,
            start: Budget | None = None) -> RolloutSummary:
    """Monte-Carlo execution of an augmented policy.

    Episodes start at ``(s0, start)``; at each step the policy supplies the
    action and the successor budgets, the next state is sampled and the
    budget assigned to it becomes the new augmented budget.
    """
    if episodes <= 0:
        raise EmptySample("rollout needs at least one episode")
    rng = np.random.default_rng(seed)
    H, m = model.horizon, model.num_constraints
    start = policy.start(model) if start is None else tuple(start)
    states = np.full(episodes, model.initial_state, dtype=np.int64)
    budgets = [start] * episodes
    rewards = np.zeros((H, episodes))
    costs = np.zeros((episodes, m))
    for h in range(H):
        groups: dict = {}
        for i, (s, b) in enumerate(zip(states.tolist(), budgets)):
            groups.setdefault((s, b), []).append(i)
        next_states = np.empty(episodes, dtype=np.int64)
        next_budgets = [None] * episodes
        for (s, b) in sorted(groups, key=lambda k: (k[0], k[1])):
            idx = np.asarray(groups[(s, b)])
            e = policy.lookup(h, s, b)
            a = e.action
            rewards[h, idx] = model.rewards[h, s, a]
            costs[idx] += model.costs[h, s, a]
            succ, probs = model.support(h, s, a)
            draws = succ[rng.choice(len(succ), size=len(idx), p=probs / probs.sum())]
            next_states[idx] = draws
            for i, t in zip(idx.tolist(), draws.tolist()):
                if t not in e.successors:
                    raise MissingPolicyEntry(h + 1, t, ())
                next_budgets[i] = tuple(e.successors[t])
        states, budgets = next_states, next_budgets
    returns = np.zeros(episodes)
    for h in reversed(range(H)):
        returns = rewards[h] + returns
    stderr = float(np.std(returns, ddof=1) / math.sqrt(episodes)) if episodes > 1 else 0.0
    return RolloutSummary(
        value_mean=_stable_mean(returns),
        value_stderr=stderr,
        cost_mean=costs.mean(axis=0),
        cost_max=costs.max(axis=0),
        total_costs=costs,
        episodes=episodes,
    )
