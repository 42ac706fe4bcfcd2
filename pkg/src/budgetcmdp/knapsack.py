"""0/1 knapsack as an almost-sure constrained MDP, with exhaustive and FPTAS baselines."""
from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass

import numpy as np

from .bicriteria import RELATIVE, solve_bicriteria
from .criteria import SrCriterion, make_almost_sure, make_expectation
from .errors import TooLarge, ValidationError
from .model import TabularCaMDP

BRUTEFORCE_MAX_N = 25
CSV_COLUMNS = ("method", "value", "weight", "violation", "wall_time_ms")


@dataclass(frozen=True)
class KnapsackInstance:
    values: np.ndarray
    weights: np.ndarray
    budget: float

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if v.ndim != 1 or v.shape != w.shape or len(v) < 1:
            raise ValidationError("knapsack", "values and weights must be equal-length non-empty vectors")
        if not (np.all(np.isfinite(v)) and np.all(np.isfinite(w)) and math.isfinite(self.budget)):
            raise ValidationError("knapsack", "entries must be finite")
        if np.any(v < 0) or np.any(w < 0) or self.budget < 0:
            raise ValidationError("knapsack", "entries must be non-negative")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "budget", float(self.budget))

    @property
    def n(self) -> int:
        return len(self.values)

    def evaluate(self, subset) -> tuple[float, float]:
        idx = sorted(subset)
        return float(self.values[idx].sum()), float(self.weights[idx].sum())


def knapsack_to_cmdp(inst: KnapsackInstance, kind: str = "almost_sure"):
    """Step ``i`` decides item ``i``; state ``n`` is the absorbing end state.

    With deterministic transitions the almost-sure and expectation criteria
    coincide, so ``kind`` may be either.
    """
    n = inst.n
    S = n + 1
    P = np.zeros((n, S, 2, S))
    for s in range(S):
        P[:, s, :, min(s + 1, n)] = 1.0
    r = np.zeros((n, S, 2))
    c = np.zeros((n, S, 2, 1))
    r[:, :n, 1] = inst.values[None, :]
    c[:, :n, 1, 0] = inst.weights[None, :]
    make = {"almost_sure": make_almost_sure, "expectation": make_expectation}[kind]
    return TabularCaMDP(P, r, c, 0), SrCriterion([make(inst.budget)])


def knapsack_bruteforce(inst: KnapsackInstance, chunk_bits: int = 18):
    """Best subset by scanning all ``2**n`` masks; ties go to the smaller mask."""
    n = inst.n
    if n > BRUTEFORCE_MAX_N:
        raise TooLarge(f"brute force is limited to n <= {BRUTEFORCE_MAX_N}, got {n}")
    bits = np.arange(n, dtype=np.int64)
    best_v, best_mask = -1.0, 0
    step = 1 << min(n, chunk_bits)
    for lo in range(0, 1 << n, step):
        masks = np.arange(lo, lo + step, dtype=np.int64)
        take = ((masks[:, None] >> bits) & 1).astype(float)
        val = take @ inst.values
        wt = take @ inst.weights
        val[wt > inst.budget + 1e-9] = -1.0
        i = int(np.argmax(val))
        if val[i] > best_v:
            best_v, best_mask = float(val[i]), int(masks[i])
    subset = frozenset(int(i) for i in range(n) if best_mask >> i & 1)
    return best_v, subset


def knapsack_fptas(inst: KnapsackInstance, epsilon: float):
    """Value-scaling dynamic program: min weight per scaled profit, profits ``floor(v / mu)``."""
    if not 0 < epsilon:
        raise ValidationError("epsilon", f"must be positive, got {epsilon}")
    fits = np.flatnonzero(inst.weights <= inst.budget + 1e-9)
    if len(fits) == 0 or inst.values[fits].max() <= 0:
        return 0.0, frozenset()
    mu = epsilon * inst.values[fits].max() / inst.n
    profit = np.floor(inst.values[fits] / mu + 1e-9).astype(np.int64)
    total = int(profit.sum())
    dp = np.full(total + 1, np.inf)
    dp[0] = 0.0
    took = np.zeros((len(fits), total + 1), dtype=bool)
    for j, (p, w) in enumerate(zip(profit, inst.weights[fits])):
        if p == 0:
            continue
        cand = np.full(total + 1, np.inf)
        cand[p:] = dp[:-p] + w
        better = cand < dp
        took[j] = better
        dp = np.where(better, cand, dp)
    reach = np.flatnonzero(dp <= inst.budget + 1e-9)
    q = int(reach.max())
    chosen = []
    for j in reversed(range(len(fits))):
        if took[j, q]:
            chosen.append(int(fits[j]))
            q -= int(profit[j])
    subset = frozenset(chosen)
    return inst.evaluate(subset)[0], subset


def subset_from_policy(inst: KnapsackInstance, policy) -> frozenset:
    b = tuple(policy.initial_budget)
    chosen, s = [], 0
    for h in range(inst.n):
        e = policy.lookup(h, s, b)
        if e.action == 1:
            chosen.append(h)
        s = min(s + 1, inst.n)
        b = tuple(e.successors[s])
    return frozenset(chosen)


def knapsack_bicriteria(inst: KnapsackInstance, epsilon: float, mode: str = RELATIVE):
    model, crit = knapsack_to_cmdp(inst)
    rep = solve_bicriteria(model, crit, epsilon=epsilon, mode=mode)
    if not rep.solved:
        return rep, None
    return rep, subset_from_policy(inst, rep.policy)


def random_instance(rng: np.random.Generator, n: int) -> KnapsackInstance:
    v = rng.integers(1, 101, n).astype(float)
    w = rng.integers(1, 101, n).astype(float)
    return KnapsackInstance(v, w, float(math.ceil(0.4 * w.sum())))


def benchmark_rows(inst: KnapsackInstance, epsilon: float = 0.1, mode: str = RELATIVE,
                   bruteforce: bool = True) -> list[dict]:
    rows = []

    def emit(method, subset, t0):
        ms = round((time.perf_counter() - t0) * 1000.0, 3)
        val, wt = inst.evaluate(subset) if subset is not None else (float("nan"), float("nan"))
        rows.append({"method": method, "value": val, "weight": wt,
                     "violation": max(0.0, wt - inst.budget) if subset is not None else float("nan"),
                     "wall_time_ms": ms})

    if bruteforce:
        t0 = time.perf_counter()
        emit("bruteforce", knapsack_bruteforce(inst)[1], t0)
    t0 = time.perf_counter()
    emit("fptas", knapsack_fptas(inst, epsilon)[1], t0)
    t0 = time.perf_counter()
    emit(f"bicriteria-{mode}", knapsack_bicriteria(inst, epsilon, mode)[1], t0)
    return rows


def rows_to_csv(rows, columns=CSV_COLUMNS, timings: bool = True) -> str:
    cols = [c for c in columns if timings or c != "wall_time_ms"]
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=cols, extrasaction="ignore", lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: (repr(float(v)) if isinstance(v, float) else v) for k, v in row.items() if k in cols})
    return buf.getvalue()
