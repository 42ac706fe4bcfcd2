"""Shortly-recursive cost criteria.

A criterion is one ``(f, g)`` pair per constraint dimension.  The policy cost
obeys ``C_h = c_h(s, a) + F`` where ``F`` folds ``f`` over the successors
``s'`` of ``(s, a)`` applied to ``g(P(s'|s,a)) * C_{h+1}(s')``, starting from 0.
Successors with zero probability are skipped, which is a no-op because
``g(0) = 0`` and ``f`` preserves its identity.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .errors import GridTooLarge, ValidationError
from .model import TabularCaMDP, _policy_recursion

# cumulative costs within this distance of the chance budget count as satisfied
CHANCE_TIE_TOL = 1e-9


def _sum(x, y):
    return np.add(x, y)


def _max(x, y):
    return np.maximum(x, y)


def _max_zero(x, y):
    return np.maximum(0.0, np.maximum(x, y))


def _identity(p):
    return np.asarray(p, dtype=float)


def _positive_indicator(p):
    return (np.asarray(p) > 0).astype(float)


@dataclass(frozen=True)
class FgCombinator:
    """The ``(f, g)`` pair of one constraint dimension.

    ``f`` must accept numpy arrays and broadcast.  Built-in pairs are trusted;
    anything else has to pass :func:`check_sr_axioms` through :func:`certify`
    before a constraint dimension will accept it.
    """

    name: str
    f: Callable = field(repr=False)
    g: Callable = field(repr=False)
    builtin: bool = False
    certified: bool = False

    def fold(self, probs, values):
        """``f`` over successors of ``g(p_i) * values[i]``; trailing axes of ``values`` broadcast."""
        acc = 0.0
        for p, x in zip(np.asarray(probs, dtype=float), np.asarray(values, dtype=float)):
            acc = self.f(acc, self.g(p) * x)
        return float(acc) if np.ndim(acc) == 0 else np.asarray(acc, dtype=float)


SUM_IDENTITY = FgCombinator("sum/identity", _sum, _identity, builtin=True, certified=True)
MAX_INDICATOR = FgCombinator("max/positive_indicator", _max, _positive_indicator, builtin=True, certified=True)
MAXZERO_INDICATOR = FgCombinator("max_zero/positive_indicator", _max_zero, _positive_indicator,
                                 builtin=True, certified=True)

BUILTIN_COMBINATORS = (SUM_IDENTITY, MAX_INDICATOR, MAXZERO_INDICATOR)


class Kind(str, enum.Enum):
    EXPECTATION = "expectation"
    CHANCE = "chance"
    ALMOST_SURE = "almost_sure"


@dataclass(frozen=True)
class ConstraintDim:
    """One constraint.

    ``budget`` is the budget the user wrote: the cost bound for expectation
    and almost-sure dims, the cumulative-cost threshold for chance dims.
    :attr:`sr_budget` is the bound the criterion cost is compared against.
    """

    combinator: FgCombinator
    budget: float
    kind: Kind = Kind.EXPECTATION
    anytime: bool = False
    delta: float | None = None
    grid_unit: float | None = None

    @property
    def sr_budget(self) -> float:
        return self.delta if self.kind is Kind.CHANCE else self.budget

    @property
    def needs_nonnegative_costs(self) -> bool:
        return self.kind is Kind.ALMOST_SURE

    def to_json(self) -> dict:
        out = {"kind": self.kind.value, "anytime": self.anytime, "budget": self.budget}
        if self.kind is Kind.CHANCE:
            out["delta"] = self.delta
            if self.grid_unit is not None:
                out["grid_unit"] = self.grid_unit
        return out


def _finite(x, what="budget") -> float:
    x = float(x)
    if not math.isfinite(x):
        raise ValidationError(what, f"must be finite, got {x!r}")
    return x


def make_expectation(budget: float, anytime: bool = False) -> ConstraintDim:
    return ConstraintDim(SUM_IDENTITY, _finite(budget), Kind.EXPECTATION, anytime)


def make_almost_sure(budget: float, anytime: bool = False) -> ConstraintDim:
    comb = MAXZERO_INDICATOR if anytime else MAX_INDICATOR
    return ConstraintDim(comb, _finite(budget), Kind.ALMOST_SURE, anytime)


def make_chance(budget: float, delta: float, anytime: bool = False, grid_unit: float | None = None) -> ConstraintDim:
    """Chance constraint ``P[sum of costs > budget] <= delta``.

    The criterion is an expectation over the cost-augmented model built by
    :func:`augment_for_chance`, so its SR budget is ``delta``.
    """
    delta = _finite(delta, "delta")
    if not 0.0 <= delta <= 1.0:
        raise ValidationError("delta", f"must lie in [0, 1], got {delta}")
    if grid_unit is not None and not (math.isfinite(grid_unit) and grid_unit > 0):
        raise ValidationError("grid_unit", f"must be a positive real, got {grid_unit}")
    return ConstraintDim(SUM_IDENTITY, _finite(budget), Kind.CHANCE, anytime, delta, grid_unit)


def make_custom(combinator: FgCombinator, budget: float) -> ConstraintDim:
    if not combinator.certified:
        raise ValidationError("combinator", f"{combinator.name} has not passed check_sr_axioms; call certify()")
    return ConstraintDim(combinator, _finite(budget))


@dataclass(frozen=True)
class SrCriterion:
    dims: tuple

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(self.dims))

    @property
    def m(self) -> int:
        return len(self.dims)

    @property
    def budgets(self) -> np.ndarray:
        return np.array([d.sr_budget for d in self.dims], dtype=float)

    @property
    def combinators(self) -> tuple:
        return tuple(d.combinator for d in self.dims)

    def combine(self, probs, values) -> np.ndarray:
        """Fold successor costs ``values[i, k]`` weighted by ``probs[i]`` per dimension."""
        values = np.asarray(values, dtype=float)
        return np.array([d.combinator.fold(probs, values[:, k]) for k, d in enumerate(self.dims)])

    def has(self, kind: Kind) -> bool:
        return any(d.kind is kind for d in self.dims)


def check_criterion(model: TabularCaMDP, criterion: SrCriterion) -> None:
    if criterion.m != model.num_constraints:
        raise ValidationError("constraints", f"model has {model.num_constraints} cost columns, "
                              f"criterion has {criterion.m} dims")
    for k, d in enumerate(criterion.dims):
        if d.needs_nonnegative_costs and np.any(model.costs[..., k] < 0):
            raise ValidationError("constraints", "almost-sure dims require non-negative costs", k)


def sr_cost(model: TabularCaMDP, criterion: SrCriterion, policy, start=None) -> np.ndarray:
    """Criterion cost vector of an augmented policy by backward recursion."""
    start = policy.start(model) if start is None else tuple(start)
    return np.asarray(_policy_recursion(model, criterion, policy, start)[1], dtype=float)


# ---------------------------------------------------------------------------
# chance constraints: cumulative-cost augmentation


def default_chance_unit(model: TabularCaMDP, column: int, epsilon: float) -> float:
    c = model.costs[..., column]
    spread = float(c.max() - c.min())
    if spread > 0:
        return epsilon * spread / (2 * model.horizon)
    scale = float(abs(c.max()))
    return scale if scale > 0 else 1.0


def _round_up_units(x: float) -> int:
    return int(math.ceil(x - 1e-12 * max(1.0, abs(x))))


@dataclass(frozen=True, eq=False)
class CostAugmentedModel:
    """Base model whose states carry the rounded cumulative cost of one column.

    Augmented state ``s * len(levels) + i`` is base state ``s`` with
    cumulative cost ``levels[i] * unit``.  Column ``column`` of the augmented
    cost holds the over-budget indicator; the other columns are copied.
    """

    base: TabularCaMDP
    augmented: TabularCaMDP
    unit: float
    levels: np.ndarray
    column: int
    budget: float
    anytime: bool
    over_level: int | None

    @property
    def num_levels(self) -> int:
        return len(self.levels)

    def index(self, s: int, level_idx: int) -> int:
        return s * self.num_levels + level_idx

    def split(self, aug_state: int) -> tuple[int, int]:
        return divmod(int(aug_state), self.num_levels)


def augment_for_chance(model: TabularCaMDP, dim: ConstraintDim, column: int = 0, grid_unit: float | None = None,
                       epsilon: float | None = None, cap: int = 10**6) -> CostAugmentedModel:
    """Track the cumulative cost of ``column`` on a grid and emit the chance indicator.

    The cumulative cost is kept as an integer multiple of the grid unit and
    rounded up after every step, so the indicator never under-reports a
    violation.  With non-negative costs every level above the budget is
    merged into one absorbing level.
    """
    if dim.kind is not Kind.CHANCE:
        raise ValidationError("constraints", "augment_for_chance needs a chance dimension", column)
    unit = grid_unit or dim.grid_unit
    if unit is None:
        if epsilon is None:
            raise ValidationError("grid_unit", "chance augmentation needs grid_unit or epsilon")
        unit = default_chance_unit(model, column, epsilon)
    H, S, A = model.horizon, model.num_states, model.num_actions
    cost = model.costs[..., column]
    B = dim.budget
    nonneg = bool(np.all(cost >= 0))
    tie = CHANCE_TIE_TOL * max(1.0, abs(B))
    over = None
    if nonneg:
        over = _round_up_units((B + tie) / unit)
        while over * unit <= B + tie:
            over += 1

    def step(j, c):
        nj = _round_up_units((j * unit + c) / unit)
        return min(nj, over) if over is not None else nj

    frontier = {(model.initial_state, 0)}
    seen_levels = {0}
    for h in range(H):
        nxt = set()
        for s, j in frontier:
            for a in model.actions(h, s):
                nj = step(j, cost[h, s, a])
                for t in model.support(h, s, a)[0]:
                    nxt.add((int(t), nj))
        frontier = nxt
        seen_levels.update(j for _, j in nxt)
        if S * len(seen_levels) > cap:
            raise GridTooLarge(S * len(seen_levels), cap)
    levels = np.array(sorted(seen_levels), dtype=np.int64)
    L = len(levels)
    pos = {int(j): i for i, j in enumerate(levels)}
    SA = S * L
    P = np.zeros((H, SA, A, SA))
    r = np.zeros((H, SA, A))
    c = np.zeros((H, SA, A, model.num_constraints))
    for h in range(H):
        for s in range(S):
            for li, j in enumerate(levels.tolist()):
                x = s * L + li
                for a in range(A):
                    r[h, x, a] = model.rewards[h, s, a]
                    c[h, x, a] = model.costs[h, s, a]
                    raw = cost[h, s, a]
                    hit = 1.0 if raw + j * unit > B + tie else 0.0
                    c[h, x, a, column] = hit if (dim.anytime or h == H - 1) else 0.0
                    nj = step(j, raw)
                    ni = pos.get(nj)
                    if ni is None:
                        # only unreachable augmented states get here; round up to a tracked level
                        ni = min(int(np.searchsorted(levels, nj)), L - 1)
                    P[h, x, a, np.arange(S) * L + ni] = model.transitions[h, s, a]
    va = None
    if model.valid_actions is not None:
        va = [[model.valid_actions[h][x // L] for x in range(SA)] for h in range(H)]
    aug = TabularCaMDP(P, r, c, model.initial_state * L + pos[0], va)
    return CostAugmentedModel(model, aug, float(unit), levels, column, float(B), dim.anytime, over)


# ---------------------------------------------------------------------------
# anytime expectation: one truncated criterion per horizon

ANYTIME_EXPECTATION_MAX_H = 4


def expand_anytime_expectation(model: TabularCaMDP, criterion: SrCriterion,
                               max_horizon: int = ANYTIME_EXPECTATION_MAX_H):
    """Replace each anytime expectation dim by ``H`` truncated-horizon dims.

    Dim ``(k, t)`` charges the column-``k`` costs of steps ``< t`` only, so its
    SR cost is the expected cost accumulated by time ``t``.
    Returns the new model, the new criterion and, per new dim, the index of
    the original dim it came from.
    """
    H = model.horizon
    cols, dims, origin = [], [], []
    for k, d in enumerate(criterion.dims):
        if d.kind is Kind.EXPECTATION and d.anytime:
            if H > max_horizon:
                raise ValidationError("anytime", f"anytime expectation is limited to H <= {max_horizon}", k)
            for t in range(1, H + 1):
                col = model.costs[..., k].copy()
                col[t:] = 0.0
                cols.append(col)
                dims.append(replace(d, anytime=False))
                origin.append(k)
        else:
            cols.append(model.costs[..., k])
            dims.append(d)
            origin.append(k)
    return model.with_costs(np.stack(cols, axis=-1)), SrCriterion(dims), origin


# ---------------------------------------------------------------------------
# axiom harness

AXIOM_TOL = 1e-9


@dataclass(frozen=True)
class AxiomResult:
    passed: bool
    witness: tuple | None = None


@dataclass(frozen=True)
class AxiomReport:
    combinator: str
    results: dict

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results.values())

    def failures(self) -> list[str]:
        return [name for name, r in self.results.items() if not r.passed]


def _first_failure(ok, *cols):
    bad = np.flatnonzero(~np.asarray(ok))
    if len(bad) == 0:
        return AxiomResult(True)
    i = bad[0]
    return AxiomResult(False, tuple(float(np.asarray(c)[i]) for c in cols))


def check_sr_axioms(combinator: FgCombinator, samples: int = 10_000, seed: int = 0,
                    domain: str = "nonnegative", scale: float = 10.0) -> AxiomReport:
    """Property-test the axioms an ``(f, g)`` pair must satisfy on random inputs.

    ``domain`` selects where the reals are drawn: ``"nonnegative"`` for
    ``[0, scale]`` or ``"real"`` for ``[-scale, scale]``.  Each failed axiom
    carries the first offending sample as its witness.
    """
    if domain not in ("nonnegative", "real"):
        raise ValueError(f"unknown domain {domain!r}")
    rng = np.random.default_rng(seed)
    lo = 0.0 if domain == "nonnegative" else -scale
    x, y, z = (rng.uniform(lo, scale, samples) for _ in range(3))
    f, g = combinator.f, combinator.g
    tol = AXIOM_TOL
    res = {}
    lhs, rhs = f(f(x, y), z), f(x, f(y, z))
    res["associative"] = _first_failure(np.abs(lhs - rhs) <= tol, x, y, z)
    y_hi = y + np.abs(z)
    res["non_decreasing"] = _first_failure(
        (f(x, y) <= f(x, y_hi) + tol) & (f(y, x) <= f(y_hi, x) + tol), x, y, y_hi)
    zero = np.zeros_like(x)
    res["identity"] = _first_failure((np.abs(f(zero, x) - x) <= tol) & (np.abs(f(x, zero) - x) <= tol), x)
    res["short_map"] = _first_failure(
        (np.abs(f(x, y) - f(x, z)) <= np.abs(y - z) + tol) & (np.abs(f(y, x) - f(z, x)) <= np.abs(y - z) + tol),
        x, y, z)
    p = rng.uniform(0.0, 1.0, samples)
    gp = np.asarray(g(p), dtype=float)
    g0 = float(np.asarray(g(np.zeros(1)))[0])
    res["g_rooted"] = AxiomResult(True) if abs(g0) <= tol else AxiomResult(False, (0.0, g0))
    res["g_range"] = _first_failure((gp >= -tol) & (gp <= 1 + tol), p, gp)
    weighted_ok = []
    wit = []
    n_vec = max(1, samples // 10)
    for _ in range(n_vec):
        n = int(rng.integers(1, 6))
        probs = rng.dirichlet(np.ones(n))
        if n > 1 and rng.random() < 0.3:
            probs[rng.integers(n)] = 0.0
            probs /= probs.sum()
        u = rng.uniform(lo, scale, n)
        v = rng.uniform(lo, scale, n)
        gap = abs(combinator.fold(probs, u) - combinator.fold(probs, v))
        ok = gap <= np.max(np.abs(u - v)) + tol
        weighted_ok.append(ok)
        wit.append((tuple(probs), tuple(u), tuple(v)))
    bad = [i for i, ok in enumerate(weighted_ok) if not ok]
    res["weighted_short_map"] = AxiomResult(True) if not bad else AxiomResult(False, wit[bad[0]])
    return AxiomReport(combinator.name, res)


def certify(combinator: FgCombinator, samples: int = 10_000, seed: int = 0) -> FgCombinator:
    """Return a certified copy of a plug-in combinator, or raise if an axiom fails."""
    report = check_sr_axioms(combinator, samples, seed)
    if not report.passed:
        raise ValidationError("combinator", f"{combinator.name} fails {', '.join(report.failures())}")
    return replace(combinator, certified=True)


def criterion_from_json(rows: Sequence[dict]) -> SrCriterion:
    dims = []
    for i, row in enumerate(rows):
        kind = row["kind"]
        anytime = bool(row.get("anytime", False))
        if kind == "expectation":
            dims.append(make_expectation(row["budget"], anytime))
        elif kind == "almost_sure":
            dims.append(make_almost_sure(row["budget"], anytime))
        elif kind == "chance":
            if "delta" not in row:
                raise ValidationError("constraints", "chance constraint needs delta", f"$.constraints[{i}]")
            dims.append(make_chance(row["budget"], row["delta"], anytime, row.get("grid_unit")))
        else:
            raise ValidationError("constraints", f"unknown kind {kind!r}", f"$.constraints[{i}].kind")
    return SrCriterion(dims)
