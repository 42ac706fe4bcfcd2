"""Bicriteria solver: rounded budgets, relaxed admissibility, certified cost bound."""
from __future__ import annotations

import itertools
import json
import time
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .bellman import (DEFAULT_PARTIAL_CAP, DEFAULT_TABLE_CAP, RoundingScheme,
                      approximate_backward_induction)
from .criteria import (Kind, SrCriterion, augment_for_chance, check_criterion,
                       expand_anytime_expectation)
from .errors import NonpositiveBudget, ValidationError
from .model import AugmentedPolicy, TabularCaMDP, evaluate_policy

ADDITIVE, RELATIVE = "additive", "relative"
MANY_DIMS_WARNING = 3


def choose_ell_additive(epsilon: float, S: int, H: int) -> float:
    return epsilon / (1 + (S + 1) * H)


def choose_ell_relative(epsilon: float, B, S: int, H: int) -> float:
    B = np.atleast_1d(np.asarray(B, dtype=float))
    if np.any(B <= 0):
        raise NonpositiveBudget(f"relative mode needs strictly positive budgets, got {B.tolist()}")
    return float(np.min(epsilon / (B * (H * (S + 1) + 1))))


def effective_branching(model: TabularCaMDP) -> int:
    """Successors with positive probability are the only ones rounded over."""
    return max(1, model.max_branching())


@dataclass(frozen=True)
class BudgetGrid:
    """Product grid of multipliers ``kmin..kmax`` per dimension (never materialised by the solver)."""

    ell: float
    kmin: np.ndarray
    kmax: np.ndarray

    @classmethod
    def for_model(cls, model: TabularCaMDP, ell: float) -> "BudgetGrid":
        c = model.costs.reshape(-1, model.num_constraints)
        H = model.horizon
        lo = H * np.minimum(c.min(axis=0), 0.0)
        hi = H * np.maximum(c.max(axis=0), 0.0)
        scheme = RoundingScheme(ell, 1)
        return cls(float(ell), scheme.round_up(lo), scheme.round_up(hi))

    @property
    def sizes(self) -> np.ndarray:
        return self.kmax - self.kmin + 1

    @property
    def size(self) -> int:
        return int(np.prod(self.sizes))

    def points(self):
        return itertools.product(*[range(int(a), int(b) + 1) for a, b in zip(self.kmin, self.kmax)])

    def contains(self, k) -> bool:
        k = np.asarray(k)
        return bool(np.all(k >= self.kmin) and np.all(k <= self.kmax))

    def initial_point(self, B) -> tuple:
        """``ceil(B)`` on the grid, capped at the top: larger budgets buy nothing more."""
        k = np.minimum(RoundingScheme(self.ell, 1).round_up(B), self.kmax)
        return tuple(int(v) for v in k)


@dataclass(frozen=True)
class ApproximateMdp:
    model: TabularCaMDP
    criterion: SrCriterion
    scheme: RoundingScheme
    grid: BudgetGrid
    initial_point: tuple

    def base_value(self, k) -> float:
        return 0.0 if np.all(np.asarray(k) >= 0) else -np.inf

    def admissible(self, h: int, s: int, a: int, k, successors) -> bool:
        """Relaxed test ``c + F_hat <= kappa(b)`` with dynamically rounded partial costs."""
        from .bellman import compose
        succ, probs = self.model.support(h, s, a)
        F = np.zeros((1, self.criterion.m))
        for t, p in zip(succ, probs):
            F = compose(self.criterion.combinators, F, np.array([successors[int(t)]], dtype=float),
                        float(p), self.scheme)[0]
        need = self.scheme.needed_budget(self.model.costs[h, s, a] / self.scheme.unit + F[0])
        return self.scheme.fits(need, k)


def build_approximate_mdp(model: TabularCaMDP, criterion: SrCriterion, B=None,
                          scheme: RoundingScheme | None = None, ell: float | None = None) -> ApproximateMdp:
    B = criterion.budgets if B is None else np.atleast_1d(np.asarray(B, dtype=float))
    if scheme is None:
        if ell is None:
            raise ValueError("pass a scheme or ell")
        scheme = RoundingScheme(ell, effective_branching(model))
    grid = BudgetGrid.for_model(model, scheme.ell)
    return ApproximateMdp(model, criterion, scheme, grid, grid.initial_point(B))


# ---------------------------------------------------------------------------
# preprocessing of chance and anytime-expectation dims


@dataclass
class PreparedProblem:
    """Model and criterion the engine actually solves, with a map back to the user's dims."""

    model: TabularCaMDP
    criterion: SrCriterion
    origin: list
    chance: dict = field(default_factory=dict)   # original dim -> CostAugmentedModel

    def collapse(self, vec) -> np.ndarray:
        vec = np.asarray(vec, dtype=float)
        out = np.full(max(self.origin) + 1, -np.inf)
        for j, k in enumerate(self.origin):
            out[k] = max(out[k], vec[j])
        return out


def prepare(model: TabularCaMDP, criterion: SrCriterion, epsilon: float | None = None) -> PreparedProblem:
    """Augment chance dims with the cumulative cost and expand anytime expectation dims."""
    check_criterion(model, criterion)
    chance = {}
    dims = list(criterion.dims)
    for k, d in enumerate(criterion.dims):
        if d.kind is Kind.CHANCE:
            aug = augment_for_chance(model, d, column=k, epsilon=epsilon if epsilon is not None else 0.1)
            model = aug.augmented
            chance[k] = aug
    crit = SrCriterion(dims)
    if any(d.kind is Kind.EXPECTATION and d.anytime for d in dims):
        model, crit, origin = expand_anytime_expectation(model, crit)
    else:
        origin = list(range(len(dims)))
    return PreparedProblem(model, crit, origin, chance)


# ---------------------------------------------------------------------------


@dataclass
class SolveReport:
    status: str                       # "solved" | "infeasible"
    value: float | None
    certified_cost_bound: np.ndarray
    realized_cost: np.ndarray | None
    ell: float
    mode: str
    wall_time_ms: float
    policy: AugmentedPolicy | None = field(default=None, repr=False)
    prepared: PreparedProblem | None = field(default=None, repr=False)
    table: object = field(default=None, repr=False)
    p_min: float | None = None
    plan: object = field(default=None, repr=False)
    discretized: object = field(default=None, repr=False)

    @property
    def solved(self) -> bool:
        return self.status == "solved"

    def to_json(self) -> dict:
        out = {
            "status": self.status,
            "value": self.value,
            "certified_cost_bound": [float(x) for x in self.certified_cost_bound],
            "realized_cost": None if self.realized_cost is None else [float(x) for x in self.realized_cost],
            "ell": self.ell,
            "mode": self.mode,
            "wall_time_ms": self.wall_time_ms,
        }
        if self.p_min is not None:
            out["p_min"] = self.p_min
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True)


def solve_bicriteria(model: TabularCaMDP, criterion: SrCriterion, B=None, epsilon: float = 0.1,
                     mode: str = ADDITIVE, partial_cap: int = DEFAULT_PARTIAL_CAP,
                     table_cap: int = DEFAULT_TABLE_CAP, ell: float | None = None) -> SolveReport:
    """Approximately optimal policy whose criterion cost is at most ``B + eps``.

    The value is at least the constrained optimum.  In relative mode the
    bound is ``(1 + eps) * B`` and every budget must be positive.  ``B``
    overrides the criterion budgets.  Chance and anytime-expectation dims are
    prepared automatically.  ``ell`` overrides the unit; the certified bound is
    computed from whichever unit is used.
    """
    t0 = time.perf_counter()
    if not (np.isfinite(epsilon) and epsilon > 0):
        raise ValidationError("epsilon", f"must be positive, got {epsilon}")
    if mode not in (ADDITIVE, RELATIVE):
        raise ValidationError("mode", f"unknown mode {mode!r}")
    if B is not None:
        B = np.atleast_1d(np.asarray(B, dtype=float))
        dims = [replace(d, delta=float(b)) if d.kind is Kind.CHANCE else replace(d, budget=float(b))
                for d, b in zip(criterion.dims, B)]
        criterion = SrCriterion(dims)
    prep = prepare(model, criterion, epsilon)
    m_model, m_crit = prep.model, prep.criterion
    if m_crit.m >= MANY_DIMS_WARNING:
        warnings.warn(f"{m_crit.m} constraint dims: the budget grid grows exponentially in m", stacklevel=2)
    H = m_model.horizon
    S = effective_branching(m_model)
    Bv = m_crit.budgets
    if ell is None:
        if mode == ADDITIVE:
            ell = choose_ell_additive(epsilon, S, H)
        else:
            # the textbook unit only yields (1+eps)B when B >= 1; the second term covers B < 1
            ell = min(choose_ell_relative(epsilon, Bv, S, H), epsilon * float(Bv.min()) / (1 + (S + 1) * H))
    approx = build_approximate_mdp(m_model, m_crit, Bv, RoundingScheme(ell, S))
    policy, table = approximate_backward_induction(m_model, m_crit, approx.scheme, approx.grid,
                                                   start=approx.initial_point, partial_cap=partial_cap,
                                                   table_cap=table_cap)
    bound = prep.collapse(Bv + ell * (1 + (S + 1) * H))
    if policy is None:
        return SolveReport("infeasible", None, bound, None, float(ell), mode,
                           _ms(t0), None, prep, table)
    ev = evaluate_policy(m_model, m_crit, policy)
    return SolveReport("solved", float(ev.value), bound, prep.collapse(ev.cost), float(ell), mode,
                       _ms(t0), policy, prep, table)


def _ms(t0: float) -> float:
    return round((time.perf_counter() - t0) * 1000.0, 3)
