"""Seeded instance corpus and the checks run against it.

Every check returns a :class:`CheckResult`; its JSON form keeps timings in a
separate ``wall_time_ms`` field so repeated runs can be compared byte for
byte once that field is dropped.
"""
from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field

import numpy as np

from .bellman import RoundingScheme, approx_dp_update, compose, exact_dp_update
from .bicriteria import solve_bicriteria
from .criteria import (MAX_INDICATOR, MAXZERO_INDICATOR, SUM_IDENTITY, SrCriterion, make_almost_sure,
                       make_chance, make_expectation, sr_cost)
from .model import NEG_INF, ExtendedValue, TabularCaMDP
from .oracle import brute_force_optimum, enumerate_achievable_costs, exceed_probability
from .reduction import enumerate_budget_space, solve_exact

TOL = 1e-9
DYADIC = 8           # transition probabilities are multiples of 1/8, so sums are exact


@dataclass
class CheckResult:
    name: str
    checked: int = 0
    failures: list = field(default_factory=list)
    wall_time_ms: float = 0.0
    stats: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return not self.failures

    def fail(self, what: str) -> None:
        self.failures.append(what)

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        extra = f", {len(self.failures)} failing" if self.failures else ""
        return f"[{tag}] {self.name}: {self.checked} checks{extra}"

    def to_json(self, timings: bool = True) -> dict:
        out = {"name": self.name, "passed": self.passed, "checked": self.checked,
               "failures": self.failures[:50], "stats": self.stats}
        if timings:
            out["wall_time_ms"] = self.wall_time_ms
        return out


class _Timer:
    def __init__(self, result: CheckResult):
        self.result = result

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self.result

    def __exit__(self, *exc):
        self.result.wall_time_ms = round((time.perf_counter() - self.t0) * 1000.0, 3)
        return False


# ---------------------------------------------------------------------------
# instances


def random_model(rng: np.random.Generator, max_h: int = 3, max_s: int = 3, max_a: int = 2,
                 cost_levels: int = 3) -> TabularCaMDP:
    H = int(rng.integers(1, max_h + 1))
    S = int(rng.integers(1, max_s + 1))
    A = int(rng.integers(1, max_a + 1))
    P = np.zeros((H, S, A, S))
    for idx in np.ndindex(H, S, A):
        P[idx] = rng.multinomial(DYADIC, np.full(S, 1.0 / S)) / DYADIC
    r = rng.integers(0, 5, (H, S, A)).astype(float)
    c = rng.integers(0, cost_levels, (H, S, A, 1)).astype(float)
    return TabularCaMDP(P, r, c, 0)


@dataclass(frozen=True)
class CorpusItem:
    index: int
    model: TabularCaMDP
    budget: float


def corpus(seed: int = 0, count: int = 200, max_h: int = 3, max_s: int = 3, max_a: int = 2) -> list[CorpusItem]:
    rng = np.random.default_rng(seed)
    return [CorpusItem(i, random_model(rng, max_h, max_s, max_a), float(rng.integers(0, 4))) for i in range(count)]


KINDS = {
    "expectation": lambda b: make_expectation(b),
    "almost_sure": lambda b: make_almost_sure(b),
    "anytime_almost_sure": lambda b: make_almost_sure(b, anytime=True),
}


def t1_instance() -> TabularCaMDP:
    """Two steps, two states, two actions; the expensive action pays off."""
    P = np.zeros((2, 2, 2, 2))
    P[0, 0, 0] = [0.5, 0.5]
    P[0, 0, 1] = [0.25, 0.75]
    P[0, 1, :] = [1.0, 0.0]
    P[1, :, :, 0] = 1.0
    r = np.zeros((2, 2, 2))
    c = np.zeros((2, 2, 2, 1))
    r[0, 0] = [1.0, 3.0]
    c[0, 0, 1, 0] = 1.0
    r[1, 0] = [0.0, 2.0]
    c[1, 0, :, 0] = [0.0, 2.0]
    r[1, 1] = [1.0, 4.0]
    c[1, 1, :, 0] = [0.0, 3.0]
    return TabularCaMDP(P, r, c, 0)


def chain_instance(H: int = 3) -> TabularCaMDP:
    """Deterministic chain: action ``a`` moves to state ``a``; action 1 earns more and costs 1."""
    P = np.zeros((H, 2, 2, 2))
    P[:, :, 0, 0] = 1.0
    P[:, :, 1, 1] = 1.0
    r = np.zeros((H, 2, 2))
    r[:, :, 1] = 2.0
    r[:, :, 0] = 1.0
    c = np.zeros((H, 2, 2, 1))
    c[:, :, 1, 0] = 1.0
    return TabularCaMDP(P, r, c, 0)


def named_instances() -> dict:
    """``name -> (model, criterion, epsilon, mode)`` for the files shipped under ``instances/``."""
    return {
        "t1": (t1_instance(), SrCriterion([make_expectation(1.5)]), 0.1, "additive"),
        "chain": (chain_instance(), SrCriterion([make_almost_sure(2.0)]), 0.1, "additive"),
        "infeasible": (t1_instance().with_costs(t1_instance().costs + 1.0),
                       SrCriterion([make_almost_sure(1.0)]), 0.1, "additive"),
    }


# ---------------------------------------------------------------------------
# corpus checks


def check_exact(items, kinds=tuple(KINDS)) -> CheckResult:
    res = CheckResult("exact-mode correctness")
    with _Timer(res):
        feasible = 0
        for it in items:
            for kind in kinds:
                crit = SrCriterion([KINDS[kind](it.budget)])
                orc = brute_force_optimum(it.model, crit)
                ex = solve_exact(it.model, crit)
                res.checked += 1
                tag = f"instance {it.index} {kind} B={it.budget}"
                if orc.feasible != ex.feasible:
                    res.fail(f"{tag}: feasibility oracle={orc.feasible} exact={ex.feasible}")
                    continue
                if not orc.feasible:
                    continue
                feasible += 1
                if abs(orc.value.value - ex.value.value) > TOL:
                    res.fail(f"{tag}: value oracle={orc.value.value} exact={ex.value.value}")
                cost = sr_cost(it.model, crit, ex.policy)
                if np.any(cost > it.budget + TOL):
                    res.fail(f"{tag}: policy cost {cost.tolist()} exceeds budget")
        res.stats = {"feasible": feasible}
    return res


def check_bicriteria(items, epsilons=(0.5, 0.1), kinds=tuple(KINDS)) -> CheckResult:
    res = CheckResult("bicriteria guarantee")
    with _Timer(res):
        for it in items:
            for kind in kinds:
                crit = SrCriterion([KINDS[kind](it.budget)])
                orc = brute_force_optimum(it.model, crit)
                for eps in epsilons:
                    rep = solve_bicriteria(it.model, crit, epsilon=eps)
                    res.checked += 1
                    tag = f"instance {it.index} {kind} B={it.budget} eps={eps}"
                    if not orc.feasible:
                        continue
                    if not rep.solved:
                        res.fail(f"{tag}: reported infeasible, oracle V*={orc.value.value}")
                        continue
                    if rep.value < orc.value.value - TOL:
                        res.fail(f"{tag}: value {rep.value} below V*={orc.value.value}")
                    if np.any(rep.realized_cost > it.budget + eps + TOL):
                        res.fail(f"{tag}: cost {rep.realized_cost.tolist()} above B+eps")
    return res


def check_chance(items, deltas=(0.0, 0.25, 0.5), epsilon: float = 0.1) -> CheckResult:
    res = CheckResult("chance constraints")
    with _Timer(res):
        solved = 0
        for it in items:
            for delta in deltas:
                crit = SrCriterion([make_chance(it.budget, delta)])
                rep = solve_bicriteria(it.model, crit, epsilon=epsilon)
                res.checked += 1
                if not rep.solved:
                    continue
                solved += 1
                aug = rep.prepared.chance[0]
                p = exceed_probability(aug, rep.policy)
                if p > delta + epsilon + TOL:
                    res.fail(f"instance {it.index} B={it.budget} delta={delta}: P[exceed]={p}")
        res.stats = {"solved": solved}
    return res


def size_bound(A: int, S: int, H: int, h: int) -> int:
    """Budget-space size bound at 0-based layer ``h``: ``A ** sum_{j < H - h} S ** j``."""
    return A ** sum(S**j for j in range(H - h))


def check_budget_space(items, kinds=tuple(KINDS)) -> CheckResult:
    res = CheckResult("budget-space semantics")
    with _Timer(res):
        for it in items:
            for kind in kinds:
                m = it.model
                crit = SrCriterion([KINDS[kind](it.budget)])
                space = enumerate_budget_space(m, crit)
                ach = enumerate_achievable_costs(m, crit)
                for h in range(m.horizon + 1):
                    for s in range(m.num_states):
                        res.checked += 1
                        got, want = space.at(h, s), ach[h][s]
                        if got.shape != want.shape or not np.array_equal(got, want):
                            res.fail(f"instance {it.index} {kind} (h={h}, s={s}): {got.ravel().tolist()} "
                                     f"vs {want.ravel().tolist()}")
                        if len(got) > size_bound(m.num_actions, m.num_states, m.horizon, h):
                            res.fail(f"instance {it.index} {kind} (h={h}, s={s}): size {len(got)} over bound")
    return res


# ---------------------------------------------------------------------------
# rounding bounds


def exact_partial(combs, u, probs, budgets):
    """``f(u, f_t g(p_t) b_t)`` folded over successors, without rounding; budgets ``(S, n, m)``."""
    acc = np.broadcast_to(np.asarray(u, dtype=float), budgets.shape[1:]).copy()
    inner = np.zeros_like(acc)
    for k, comb in enumerate(combs):
        inner[:, k] = comb.fold(probs, budgets[:, :, k])
        acc[:, k] = comb.f(acc[:, k], inner[:, k])
    return acc


def rounded_partial(combs, u, probs, budgets, scheme: RoundingScheme):
    """Dynamically rounded version of :func:`exact_partial`, in real units."""
    F = np.broadcast_to(np.asarray(u, dtype=float), budgets.shape[1:]).copy()
    for p, b in zip(probs, budgets):
        out = np.empty_like(F)
        for k, comb in enumerate(combs):
            out[:, k] = comb.f(F[:, k], float(comb.g(p)) * b[:, k])
        F = scheme.round_value(out)
    return F


def check_rounding_bounds(seed: int = 0, samples: int = 100_000,
                          units=(0.5, 0.25, 0.1, 1.0 / 3.0, 0.037), max_states: int = 6) -> CheckResult:
    res = CheckResult("rounding bounds")
    rng = np.random.default_rng(seed)
    with _Timer(res):
        # upward rounding sandwich and idempotence
        x = np.concatenate([rng.normal(0, 10, samples - 6), [0.0, -0.0, 1.0, -1.0, 1e-13, 3.0]])
        for ell in units:
            sch = RoundingScheme(ell, 1)
            k = sch.round_up(x)
            y = k * ell
            tol = 1e-12 * np.maximum(1.0, np.abs(x))
            bad = np.flatnonzero((y < x - tol) | (y > x + ell + tol) | (sch.round_up(y) != k))
            res.checked += len(x)
            for i in bad[:5]:
                res.fail(f"round ell={ell} x={x[i]!r}: got {y[i]!r}")
        # space error: every (S, t), budget vectors from a small value set, a few probability rows
        values = (0.0, 0.3, 1.7)
        for comb in (SUM_IDENTITY, MAX_INDICATOR, MAXZERO_INDICATOR):
            for S in range(1, max_states + 1):
                grid = np.array(list(itertools.product(values, repeat=S)), dtype=float).T[:, :, None]
                for _ in range(3):
                    probs = rng.dirichlet(np.ones(S))
                    probs[rng.random(S) < 0.2] = 0.0
                    for ell in units[:3]:
                        sch = RoundingScheme(ell, S)
                        for t in range(S + 1):
                            u = np.array([rng.choice(values)])
                            f = exact_partial([comb], u, probs[t:], grid[t:])
                            fh = rounded_partial([comb], u, probs[t:], grid[t:], sch)
                            slack = (S - t) * ell + 1e-9
                            bad = np.flatnonzero((fh[:, 0] < f[:, 0] - 1e-9) | (fh[:, 0] > f[:, 0] + slack))
                            res.checked += grid.shape[1]
                            for i in bad[:3]:
                                res.fail(f"space {comb.name} S={S} t={t} ell={ell}: f={f[i, 0]} fhat={fh[i, 0]}")
        # time error: b <= b' <= b + x gives f(b) <= f(b') <= f(b) + x
        for comb in (SUM_IDENTITY, MAX_INDICATOR, MAXZERO_INDICATOR):
            for _ in range(2000):
                S = int(rng.integers(1, max_states + 1))
                probs = rng.dirichlet(np.ones(S))
                b = rng.uniform(0, 5, (S, 1, 1))
                xval = float(rng.uniform(0.01, 2))
                b2 = b + rng.uniform(0, xval, b.shape)
                f1 = exact_partial([comb], [0.0], probs, b)[0, 0]
                f2 = exact_partial([comb], [0.0], probs, b2)[0, 0]
                res.checked += 1
                if not (f1 - 1e-12 <= f2 <= f1 + xval + 1e-12):
                    res.fail(f"time {comb.name}: f(b)={f1} f(b')={f2} x={xval}")
    return res


# ---------------------------------------------------------------------------
# single-update optimisation identity


class _Stub:
    def __init__(self, model, criterion, budgets):
        self.model, self.criterion, self._budgets = model, criterion, budgets

    def budget_set(self):
        return self._budgets


def _one_step(probs, cost, m=1):
    """One step, ``len(probs)`` states, one action; every row uses ``probs``."""
    S = len(probs)
    P = np.zeros((1, S, 1, S))
    P[0, :, 0] = probs
    return TabularCaMDP(P, np.zeros((1, S, 1)), np.full((1, S, 1, m), cost), 0)


def brute_force_update(model, criterion, b, scheme, next_value, grid):
    """Max over every successor budget vector of the rounded, relaxed single-update problem."""
    succ, probs = model.support(0, 0, 0)
    best = NEG_INF
    for choice in itertools.product(grid, repeat=len(succ)):
        vals = [next_value(int(t), bt) for t, bt in zip(succ, choice)]
        if any(v.is_neg_inf for v in vals):
            continue
        F = np.zeros((1, criterion.m))
        for p, bt in zip(probs, choice):
            F = compose(criterion.combinators, F, np.array([bt], dtype=float), float(p), scheme)[0]
        need = scheme.needed_budget(model.costs[0, 0, 0] / scheme.unit + F[0])
        if not scheme.fits(need, b):
            continue
        total = ExtendedValue(0.0)
        for p, v in zip(probs, vals):
            total = total + v.scale(float(p))
        best = max(best, total)
    return best


def check_adp_optimization(seed: int = 0, trials: int = 60, max_states: int = 4, max_grid: int = 4) -> CheckResult:
    res = CheckResult("approximate update as optimisation")
    rng = np.random.default_rng(seed)
    with _Timer(res):
        for comb_name, make in (("sum", make_expectation), ("max", make_almost_sure)):
            for trial in range(trials):
                S = int(rng.integers(1, max_states + 1))
                probs = rng.multinomial(DYADIC, np.full(S, 1.0 / S)) / DYADIC
                cost = float(rng.integers(0, 3))
                model = _one_step(probs, cost)
                crit = SrCriterion([make(0.0)])
                ell = float(rng.choice([0.25, 0.5, 1.0]))
                scheme = RoundingScheme(ell, S)
                n = int(rng.integers(1, max_grid + 1))
                grid = [(int(k),) for k in sorted(rng.choice(np.arange(-1, 8), n, replace=False))]
                table = {(t, g): (NEG_INF if rng.random() < 0.2 else ExtendedValue(float(rng.integers(0, 6))))
                         for t in range(S) for g in grid}
                nv = lambda t, g, table=table: table[(t, tuple(g))]
                for b in range(-2, 10):
                    got = approx_dp_update(model, crit, 0, 0, (b,), 0, scheme, nv, grid).value
                    want = brute_force_update(model, crit, (b,), scheme, nv, grid)
                    res.checked += 1
                    if got != want:
                        res.fail(f"{comb_name} trial {trial} b={b}: dp={got} brute={want}")
                # identity mode against the unrounded update over real budgets
                reals = sorted({float(v) for v in rng.choice([0.0, 0.5, 1.0, 1.5, 2.0, 3.0], n)})
                rgrid = [(v,) for v in reals]
                rtable = {(t, g): (NEG_INF if rng.random() < 0.2 else ExtendedValue(float(rng.integers(0, 6))))
                          for t in range(S) for g in rgrid}
                rv = lambda t, g, table=rtable: table[(t, tuple(float(x) for x in g))]
                ident = RoundingScheme.identity(S)
                stub = _Stub(model, crit, rgrid)
                for b in (0.0, 0.5, 1.0, 2.0, 3.5, 5.0):
                    a1 = approx_dp_update(model, crit, 0, 0, (b,), 0, ident, rv, rgrid)
                    a2 = exact_dp_update(stub, 0, 0, (b,), 0, rv)
                    res.checked += 1
                    same = (a1.value.is_neg_inf and a2.value.is_neg_inf) or (
                        a1.value.is_finite and a2.value.is_finite and abs(a1.value.value - a2.value.value) <= 1e-12)
                    if not same:
                        res.fail(f"{comb_name} identity trial {trial} b={b}: approx={a1.value} exact={a2.value}")
    return res


def run_corpus_checks(seed: int = 0, count: int = 200, chance_count: int = 100, budget_count: int = 50,
                      max_h: int = 3, max_s: int = 3) -> list[CheckResult]:
    items = corpus(seed, count, max_h, max_s)
    return [
        check_exact(items),
        check_bicriteria(items),
        check_chance(items[:chance_count]),
        check_rounding_bounds(seed),
        check_adp_optimization(seed),
        check_budget_space(items[:budget_count]),
    ]
