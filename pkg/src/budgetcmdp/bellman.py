"""Bellman updates over budget-augmented states.

Two layers live here.  ``exact_dp_update`` and ``approx_dp_update`` evaluate
a single ``(h, s, b, a)`` cell by the successor-by-successor recursion, with
explicit partial-cost sets and back-pointers.  ``approximate_backward_induction``
solves a whole model: for each ``(h, s, a)`` it runs the forward partial-cost
pass once, independently of ``b``, keeps only partial costs that are not
dominated (smaller cost and larger value), and answers every budget by a
lookup.  ``f`` and the rounding are monotone, so the dominance pruning does
not change any value.

All arithmetic in the whole-model solver runs in *units*: multiples of ``ell``
when rounding, plain reals (canonicalised to 12 decimals) in identity mode.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import GridTooLarge, PartialCostSetTooLarge
from .model import NEG_INF, AugmentedPolicy, ExtendedValue

FEAS_TOL = 1e-9
CANON_DIGITS = 12
DEFAULT_PARTIAL_CAP = 10**7
DEFAULT_TABLE_CAP = 5 * 10**6


def canonical(x) -> np.ndarray:
    """Round to 12 decimals; used as the equality key for real budgets."""
    return np.round(np.asarray(x, dtype=float), CANON_DIGITS) + 0.0


def _ceil_units(y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    return np.ceil(y - 1e-12 * np.maximum(1.0, np.abs(y)))


@dataclass(frozen=True)
class RoundingScheme:
    """Upward rounding to multiples of ``ell`` and the relaxed threshold ``kappa``.

    ``num_states`` is the number of successors a partial cost can be rounded
    over; ``kappa(x) = x + ell * (num_states + 1)``.  In identity mode both
    rounding and ``kappa`` are the identity.
    """

    ell: float
    num_states: int
    identity_mode: bool = False

    def __post_init__(self):
        if not self.identity_mode and not (math.isfinite(self.ell) and self.ell > 0):
            raise ValueError(f"ell must be a positive real, got {self.ell}")

    @classmethod
    def identity(cls, num_states: int = 1) -> "RoundingScheme":
        return cls(1.0, num_states, identity_mode=True)

    @property
    def unit(self) -> float:
        return 1.0 if self.identity_mode else self.ell

    @property
    def kappa_slack(self) -> float:
        return 0.0 if self.identity_mode else self.ell * (self.num_states + 1)

    @property
    def slack_units(self) -> float:
        return 0.0 if self.identity_mode else float(self.num_states + 1)

    def round_up(self, x) -> np.ndarray:
        """Smallest integer multipliers ``k`` with ``k * ell >= x``, component-wise."""
        x = np.asarray(x, dtype=float)
        if not np.all(np.isfinite(x)):
            raise ValueError("round_up needs finite input")
        if self.identity_mode:
            raise ValueError("identity-mode schemes have no grid multipliers")
        return _ceil_units(x / self.ell).astype(np.int64)

    def round_value(self, x) -> np.ndarray:
        if self.identity_mode:
            return canonical(x)
        return self.round_up(x) * self.ell

    def kappa(self, x) -> np.ndarray:
        return np.asarray(x, dtype=float) + self.kappa_slack

    def quantize(self, y) -> np.ndarray:
        """Round a unit-space array onto the scheme's lattice (float-valued)."""
        return canonical(y) if self.identity_mode else _ceil_units(y)

    def key(self, units) -> tuple:
        """Hashable budget key for a unit-space vector."""
        if self.identity_mode:
            return tuple(float(v) for v in canonical(units))
        return tuple(int(round(v)) for v in np.asarray(units, dtype=float))

    def needed_budget(self, threshold_units) -> np.ndarray:
        """Smallest lattice budget ``b`` with ``threshold <= kappa(b)``."""
        if self.identity_mode:
            return canonical(threshold_units)
        return _ceil_units(np.asarray(threshold_units, dtype=float) - self.slack_units)

    def fits(self, need, budget) -> bool:
        tol = FEAS_TOL if self.identity_mode else 0.0
        return bool(np.all(np.asarray(need) <= np.asarray(budget, dtype=float) + tol))


def compose(combinators, F, budgets, p: float, scheme: RoundingScheme) -> np.ndarray:
    """Rounded partial cost ``round(f(F, g(p) * b))`` in unit space.

    ``F`` has shape ``(n, m)`` and ``budgets`` ``(k, m)``; the result is
    ``(n, k, m)``.  Built-in combinators are positively homogeneous so they
    are applied to units directly; plug-ins are applied to real values.
    """
    F = np.asarray(F, dtype=float)
    budgets = np.asarray(budgets, dtype=float)
    out = np.empty((F.shape[0], budgets.shape[0], F.shape[1]))
    u = scheme.unit
    for k, comb in enumerate(combinators):
        w = float(np.asarray(comb.g(p)))
        a, b = F[:, None, k], w * budgets[None, :, k]
        out[:, :, k] = comb.f(a, b) if comb.builtin else comb.f(a * u, b * u) / u
    return scheme.quantize(out)


# ---------------------------------------------------------------------------
# single-cell updates


@dataclass(frozen=True)
class DpUpdate:
    value: ExtendedValue
    successors: dict
    partial_costs: list | None = field(default=None, repr=False)


def exact_dp_update(reduced, h: int, s: int, b, a: int, next_value) -> DpUpdate:
    """Best successor-budget assignment for one ``(h, s, b, a)`` with no rounding.

    ``reduced`` supplies ``model``, ``criterion`` and the budget set; every
    successor budget is drawn from it.  ``next_value(t, b_t)`` returns the
    ``h + 1`` value as an :class:`ExtendedValue`.  The returned value excludes
    the immediate reward.  Ties go to the lexicographically smallest
    assignment.
    """
    model, criterion = reduced.model, reduced.criterion
    combs = criterion.combinators
    succ, probs = model.support(h, s, a)
    c = model.costs[h, s, a]
    budgets = sorted(reduced.budget_set())
    b = np.asarray(b, dtype=float)

    def rec(i, F):
        if i == len(succ):
            return (ExtendedValue(0.0) if np.all(c + F <= b + FEAS_TOL) else NEG_INF), {}
        t, p = int(succ[i]), float(probs[i])
        best, choice = NEG_INF, None
        for bt in budgets:
            v = next_value(t, bt)
            if v.is_neg_inf:
                continue
            Fn = np.array([comb.f(F[k], float(comb.g(p)) * bt[k]) for k, comb in enumerate(combs)])
            sub, rest = rec(i + 1, canonical(Fn))
            if sub.is_neg_inf:
                continue
            total = v.scale(p) + sub
            if choice is None or total > best:
                best, choice = total, {t: tuple(bt), **rest}
        return best, (choice or {})

    value, chosen = rec(0, np.zeros(criterion.m))
    return DpUpdate(value, chosen if value.is_finite else {})


def approx_dp_update(model, criterion, h: int, s: int, b, a: int, scheme: RoundingScheme,
                     next_value, budget_grid) -> DpUpdate:
    """Dynamically rounded update for one ``(h, s, b, a)``.

    ``b`` and every element of ``budget_grid`` are budget keys (grid
    multipliers, or reals in identity mode).  A forward pass builds the
    rounded partial-cost sets; the backward pass maximises over successor
    budgets with the relaxed test ``c + F <= kappa(b)`` at the end.  The
    partial-cost sets are returned alongside the value.
    """
    combs = criterion.combinators
    succ, probs = model.support(h, s, a)
    grid = sorted(tuple(g) for g in budget_grid)
    grid_arr = np.asarray(grid, dtype=float).reshape(len(grid), criterion.m)
    c_units = model.costs[h, s, a] / scheme.unit
    b_units = np.asarray(b, dtype=float)

    sets = [{tuple(np.zeros(criterion.m))}]
    step_maps = []
    for p in probs:
        nxt, moves = set(), {}
        for F in sorted(sets[-1]):
            newF = compose(combs, np.array([F]), grid_arr, float(p), scheme)[0]
            row = [tuple(x) for x in newF]
            moves[F] = row
            nxt.update(row)
        sets.append(nxt)
        step_maps.append(moves)

    memo = {}

    def W(i, F):
        key = (i, F)
        if key in memo:
            return memo[key]
        if i == len(succ):
            need = scheme.needed_budget(c_units + np.asarray(F))
            out = (ExtendedValue(0.0) if scheme.fits(need, b_units) else NEG_INF), {}
        else:
            t, p = int(succ[i]), float(probs[i])
            best, choice = NEG_INF, None
            for bt, Fn in zip(grid, step_maps[i][F]):
                v = next_value(t, bt)
                if v.is_neg_inf:
                    continue
                sub, rest = W(i + 1, Fn)
                if sub.is_neg_inf:
                    continue
                total = v.scale(p) + sub
                if choice is None or total > best:
                    best, choice = total, {t: bt, **rest}
            out = best, (choice or {})
        memo[key] = out
        return out

    value, chosen = W(0, tuple(np.zeros(criterion.m)))
    return DpUpdate(value, chosen if value.is_finite else {}, sets)


# ---------------------------------------------------------------------------
# whole-model solver


def pareto_front(F: np.ndarray, D: np.ndarray) -> np.ndarray:
    """Indices of entries not dominated by another (cost ``<=`` and value ``>=``).

    Among exact duplicates the earliest index survives.  For one dimension
    the result is ordered by increasing cost (and strictly increasing value).
    """
    n = len(D)
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    idx = np.arange(n)
    if F.shape[1] == 1:
        order = np.lexsort((idx, -D, F[:, 0]))
        d = D[order]
        prev = np.concatenate(([-np.inf], np.maximum.accumulate(d)[:-1]))
        return order[d > prev]
    keys = [idx] + [F[:, k] for k in reversed(range(F.shape[1]))] + [-D]
    order = np.lexsort(keys)
    kept: list[int] = []
    kept_F = np.empty((0, F.shape[1]))
    for i in order:
        if len(kept) and np.any(np.all(kept_F <= F[i], axis=1)):
            continue
        kept.append(i)
        kept_F = np.vstack([kept_F, F[i]])
    kept = np.asarray(kept, dtype=np.int64)
    return kept[np.lexsort([kept] + [F[kept, k] for k in reversed(range(F.shape[1]))])]


def best_per_key(F: np.ndarray, D: np.ndarray) -> np.ndarray:
    """Indices keeping the highest value for each distinct cost row (no dominance)."""
    n = len(D)
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    idx = np.arange(n)
    order = np.lexsort([idx, -D] + [F[:, k] for k in reversed(range(F.shape[1]))])
    Fs = F[order]
    first = np.ones(n, dtype=bool)
    first[1:] = np.any(Fs[1:] != Fs[:-1], axis=1)
    return order[first]


@dataclass
class _Trace:
    """Forward pass of one ``(h, s, a)``: per successor, parent index and chosen budget."""

    succ: np.ndarray
    parents: list
    cands: list


@dataclass
class _Cell:
    """Value function of one ``(h, s)`` as a finite set of (minimal budget, value) entries."""

    budgets: np.ndarray          # (n, m) unit-space minimal budgets, all actions
    values: np.ndarray           # (n,)
    actions: np.ndarray          # (n,)
    refs: np.ndarray             # (n,) index into the action's final forward layer
    cand_budgets: np.ndarray     # dominance-pruned across actions; successor candidates
    cand_values: np.ndarray
    traces: dict                 # action -> _Trace

    @classmethod
    def terminal(cls, m: int) -> "_Cell":
        z = np.zeros((1, m))
        return cls(z, np.zeros(1), np.zeros(1, dtype=np.int64), np.zeros(1, dtype=np.int64), z, np.zeros(1), {})


class DpTable:
    """Solved value functions ``V_h(s, .)`` for ``h = 0..H``.

    ``value`` and ``decision`` accept any budget key; values are monotone
    non-decreasing in the budget by construction.
    """

    def __init__(self, model, criterion, scheme: RoundingScheme, grid, cells):
        self.model, self.criterion, self.scheme, self.grid = model, criterion, scheme, grid
        self._cells = cells

    def cell(self, h: int, s: int) -> _Cell | None:
        return self._cells[h][s]

    def computed(self, h: int, s: int) -> bool:
        return self._cells[h][s] is not None

    def _match(self, h, s, budget):
        cell = self._cells[h][s]
        if cell is None:
            raise KeyError(f"state {s} is unreachable at step {h}; solve with reachable_only=False")
        if len(cell.values) == 0:
            return None
        b = np.asarray(budget, dtype=float)
        tol = FEAS_TOL if self.scheme.identity_mode else 0.0
        ok = np.flatnonzero(np.all(cell.budgets <= b + tol, axis=1))
        if len(ok) == 0:
            return None
        best = cell.values[ok].max()
        top = ok[cell.values[ok] == best]
        if len(top) > 1:
            keys = [top] + [cell.budgets[top, k] for k in reversed(range(cell.budgets.shape[1]))] + [cell.actions[top]]
            top = top[np.lexsort(keys)]
        return int(top[0])

    def value(self, h: int, s: int, budget) -> ExtendedValue:
        i = self._match(h, s, budget)
        return NEG_INF if i is None else ExtendedValue(self._cells[h][s].values[i])

    def decision(self, h: int, s: int, budget):
        """``(action, {successor: budget key})`` attaining ``value``, or ``None`` if infeasible."""
        if h >= self.model.horizon:
            return None
        i = self._match(h, s, budget)
        if i is None:
            return None
        cell = self._cells[h][s]
        a = int(cell.actions[i])
        trace = cell.traces[a]
        e = int(cell.refs[i])
        out = {}
        for j in reversed(range(len(trace.succ))):
            t = int(trace.succ[j])
            out[t] = self.scheme.key(trace.cands[j][e])
            e = int(trace.parents[j][e])
        return a, dict(sorted(out.items()))

    def policy(self, start) -> AugmentedPolicy | None:
        """Policy covering every augmented state reachable from ``(0, s0, start)``."""
        model = self.model
        start = tuple(start)
        if self.value(0, model.initial_state, start).is_neg_inf:
            return None
        pol = AugmentedPolicy(initial_budget=start)
        stack = [(0, model.initial_state, start)]
        while stack:
            h, s, b = stack.pop()
            if h >= model.horizon or (h, s, b) in pol:
                continue
            a, succ = self.decision(h, s, b)
            pol.set(h, s, b, a, succ)
            stack.extend((h + 1, t, bt) for t, bt in succ.items())
        return pol

    def grid_values(self, h: int, s: int, points) -> np.ndarray:
        return np.array([float(self.value(h, s, p)) for p in points])


def _solve_action(model, criterion, scheme, grid, h, s, a, nxt, prune, partial_cap):
    combs = criterion.combinators
    m = criterion.m
    succ, probs = model.support(h, s, a)
    F = np.zeros((1, m))
    D = np.zeros(1)
    parents, cands = [], []
    size = 0
    for t, p in zip(succ, probs):
        cell = nxt[int(t)]
        k = len(cell.cand_values)
        if k == 0 or len(D) == 0:
            return None, size
        if len(D) * k > partial_cap:
            raise PartialCostSetTooLarge(len(D) * k, partial_cap, h)
        newF = compose(combs, F, cell.cand_budgets, float(p), scheme).reshape(-1, m)
        newD = (D[:, None] + float(p) * cell.cand_values[None, :]).ravel()
        keep = pareto_front(newF, newD) if prune else best_per_key(newF, newD)
        parents.append(np.repeat(np.arange(len(D)), k)[keep])
        cands.append(cell.cand_budgets[np.tile(np.arange(k), len(D))[keep]])
        F, D = newF[keep], newD[keep]
        size += len(D)
    need = scheme.needed_budget(model.costs[h, s, a] / scheme.unit + F)
    if grid is not None:
        need = np.maximum(need, grid.kmin[None, :])
        inside = np.all(need <= grid.kmax[None, :], axis=1)
    else:
        inside = np.ones(len(D), dtype=bool)
    vals = model.rewards[h, s, a] + D
    ref = np.flatnonzero(inside)
    keep = pareto_front(need[ref], vals[ref]) if prune else best_per_key(need[ref], vals[ref])
    ref = ref[keep]
    return (need[ref], vals[ref], ref, _Trace(succ, parents, cands)), size


def _full_candidates(cell: _Cell, grid, scheme) -> tuple[np.ndarray, np.ndarray]:
    """Every feasible grid point of a cell, for the unpruned reference path."""
    pts = np.asarray(list(grid.points()), dtype=float).reshape(-1, cell.budgets.shape[1])
    vals = []
    for p in pts:
        ok = np.all(cell.budgets <= p, axis=1)
        vals.append(cell.values[ok].max() if ok.any() else -np.inf)
    vals = np.asarray(vals)
    live = np.isfinite(vals)
    return pts[live], vals[live]


def approximate_backward_induction(model, criterion, scheme: RoundingScheme, budget_grid=None, start=None,
                                   prune: bool = True, partial_cap: int = DEFAULT_PARTIAL_CAP,
                                   table_cap: int = DEFAULT_TABLE_CAP, reachable_only: bool = True):
    """Fill value functions for ``h = H-1 .. 0`` and extract the policy from ``start``.

    ``budget_grid`` bounds the budgets (``kmin``/``kmax`` in multipliers); it
    is required when rounding and ignored in identity mode.  ``start`` is the
    budget key of the initial augmented state; it defaults to the rounded
    criterion budgets, clipped to the top of the grid.  Returns
    ``(policy or None, table)``; the policy is ``None`` when the initial
    augmented state is infeasible.

    ``prune=False`` keeps every distinct partial cost and offers every grid
    point as a successor budget; it exists to cross-check the pruned path on
    small inputs.  With ``reachable_only`` the cells of states no action
    sequence can reach are skipped, and the table refuses queries there.
    """
    H, S, m = model.horizon, model.num_states, criterion.m
    grid = None if scheme.identity_mode else budget_grid
    if not scheme.identity_mode and grid is None:
        raise ValueError("a budget grid is required when rounding")
    cells = [None] * (H + 1)
    live = model.reachable() if reachable_only else [set(range(S))] * (H + 1)
    cells[H] = [_Cell.terminal(m) if s in live[H] else None for s in range(S)]
    for h in reversed(range(H)):
        nxt = cells[h + 1]
        if not prune and grid is not None:
            nxt = [c and _Cell(c.budgets, c.values, c.actions, c.refs, *_full_candidates(c, grid, scheme), c.traces)
                   for c in nxt]
        layer, partial, stored = [], 0, 0
        for s in range(S):
            if s not in live[h]:
                layer.append(None)
                continue
            parts = []
            traces = {}
            for a in model.actions(h, s):
                res, size = _solve_action(model, criterion, scheme, grid, h, s, a, nxt, prune, partial_cap)
                partial += size
                if partial > partial_cap:
                    raise PartialCostSetTooLarge(partial, partial_cap, h)
                if res is None:
                    continue
                need, vals, ref, trace = res
                traces[a] = trace
                parts.append((need, vals, np.full(len(vals), a), ref))
            if parts:
                bud = np.vstack([p[0] for p in parts])
                val = np.concatenate([p[1] for p in parts])
                act = np.concatenate([p[2] for p in parts]).astype(np.int64)
                ref_all = np.concatenate([p[3] for p in parts]).astype(np.int64)
            else:
                bud, val = np.zeros((0, m)), np.zeros(0)
                act = ref_all = np.zeros(0, dtype=np.int64)
            cand = pareto_front(bud, val)
            cell = _Cell(bud, val, act, ref_all, bud[cand], val[cand], traces)
            layer.append(cell)
            stored += len(val)
        if stored > table_cap:
            sizes = None if grid is None else (grid.kmax - grid.kmin + 1)
            raise GridTooLarge(stored, table_cap, sizes)
        cells[h] = layer
    table = DpTable(model, criterion, scheme, grid, cells)
    if start is None:
        start = default_start(criterion, scheme, grid)
    return table.policy(start), table


def default_start(criterion, scheme: RoundingScheme, grid=None) -> tuple:
    B = criterion.budgets
    if scheme.identity_mode:
        return scheme.key(B)
    k = scheme.round_up(B)
    if grid is not None:
        k = np.minimum(k, grid.kmax)
    return tuple(int(v) for v in k)
