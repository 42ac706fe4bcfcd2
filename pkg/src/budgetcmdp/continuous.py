"""Lipschitz continuous-state models on an interval, discretised into cells."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .bicriteria import ADDITIVE, SolveReport, solve_bicriteria
from .criteria import Kind, SrCriterion, make_expectation
from .errors import DegenerateInterval, QuadratureFailure, UnsupportedCriterion, ValidationError
from .model import TabularCaMDP

SIMPSON_PANELS = 32
RENORM_RECORD = 1e-6
RENORM_FAIL = 1e-3


@dataclass(frozen=True)
class LipschitzCaMDP:
    """Continuous-state model on ``[s_min, s_max]``.

    ``density(h, s, a, xs)`` must accept an array of successor states.
    ``interval_mass(h, s, a, lo, hi)``, when given, replaces quadrature.
    """

    horizon: int
    s_min: float
    s_max: float
    num_actions: int
    reward: Callable
    cost: Callable
    density: Callable
    lambda_r: float
    lambda_c: float
    lambda_p: float
    s0: float
    r_max: float
    c_max: float
    c_min: float = 0.0
    num_constraints: int = 1
    interval_mass: Callable | None = None

    def __post_init__(self):
        if not self.s_max > self.s_min:
            raise DegenerateInterval(f"need s_max > s_min, got [{self.s_min}, {self.s_max}]")
        for name in ("lambda_r", "lambda_c", "lambda_p"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValidationError(name, f"Lipschitz constants must be positive and finite, got {v}")
        if not self.s_min <= self.s0 <= self.s_max:
            raise ValidationError("initial_state", f"s0={self.s0} outside the interval")

    @property
    def length(self) -> float:
        return self.s_max - self.s_min

    def density_mass(self, h: int, s: float, a: int, n: int = 4096) -> float:
        xs = np.linspace(self.s_min, self.s_max, n + 1)
        return _simpson(np.asarray(self.density(h, s, a, xs), dtype=float), self.length / n)


def _simpson(y: np.ndarray, dx: float) -> float:
    return float(dx / 3.0 * (y[0] + y[-1] + 4.0 * y[1:-1:2].sum() + 2.0 * y[2:-1:2].sum()))


@dataclass(frozen=True)
class DiscretizationPlan:
    ell_d: float
    ell_a: float
    num_cells: int
    value_error: float          # bound on |value gap| from discretising
    cost_error: float           # same for expectation-type costs
    epsilon: float | None = None

    def to_json(self) -> dict:
        return {k: getattr(self, k) for k in ("ell_d", "ell_a", "num_cells", "value_error", "cost_error", "epsilon")}


def _cells(length: float, ell_d: float) -> int:
    return max(1, int(math.ceil(length / ell_d - 1e-9)))


def plan_for_cell_width(ell_d: float, epsilon: float, lambda_r: float, lambda_c: float, lambda_p: float,
                        H: int, r_max: float, c_max: float, s_min: float, s_max: float) -> DiscretizationPlan:
    length = s_max - s_min
    if not length > 0:
        raise DegenerateInterval(f"need s_max > s_min, got [{s_min}, {s_max}]")
    n = _cells(length, ell_d)
    ell_a = (epsilon / 2) / (1 + (n + 1) * H)
    v_err = ell_d * (lambda_r + lambda_p) * H * r_max * length * H
    c_err = ell_d * (lambda_c + lambda_p) * H * c_max * length * H
    return DiscretizationPlan(ell_d, ell_a, n, v_err, c_err, epsilon)


def choose_discretization(epsilon: float, lambda_r: float, lambda_c: float, lambda_p: float, H: int,
                          r_max: float, c_max: float, s_min: float, s_max: float) -> DiscretizationPlan:
    """Cell width and rounding unit that split ``epsilon`` evenly between the two error sources."""
    if not epsilon > 0:
        raise ValidationError("epsilon", f"must be positive, got {epsilon}")
    length = s_max - s_min
    if not length > 0:
        raise DegenerateInterval(f"need s_max > s_min, got [{s_min}, {s_max}]")
    ell_d = (epsilon / 2) / ((lambda_r + lambda_c + lambda_p) * H * max(c_max, r_max) * length)
    return plan_for_cell_width(ell_d, epsilon, lambda_r, lambda_c, lambda_p, H, r_max, c_max, s_min, s_max)


def plan_for(cont: LipschitzCaMDP, epsilon: float, ell_d: float | None = None) -> DiscretizationPlan:
    args = (cont.lambda_r, cont.lambda_c, cont.lambda_p, cont.horizon, cont.r_max, cont.c_max, cont.s_min, cont.s_max)
    if ell_d is None:
        return choose_discretization(epsilon, *args)
    return plan_for_cell_width(ell_d, epsilon, *args)


@dataclass(frozen=True)
class Discretized:
    model: TabularCaMDP
    representatives: np.ndarray
    edges: np.ndarray
    renormalization: float       # largest |row mass - 1| before renormalising
    p_min: float

    def cell_of(self, s: float) -> int:
        return cell_index(self.edges, s)


def cell_index(edges: np.ndarray, s: float) -> int:
    """Cell whose rounded-up endpoint is ``ceil(s)``; the left end joins the first cell."""
    i = int(np.searchsorted(edges, s - 1e-12 * max(1.0, abs(s)), side="left")) - 1
    return min(max(i, 0), len(edges) - 2)


def discretize(cont: LipschitzCaMDP, plan: DiscretizationPlan | float) -> Discretized:
    """Tabular model over cells ``(e_j - ell, e_j]`` represented by their right endpoint.

    Transition mass into a cell is the density integrated over the states
    that round up to it.  Without ``interval_mass`` the integral is composite
    Simpson with 32 panels per cell, and rows are renormalised.
    """
    ell_d = plan.ell_d if isinstance(plan, DiscretizationPlan) else float(plan)
    n = _cells(cont.length, ell_d)
    edges = np.minimum(cont.s_min + ell_d * np.arange(n + 1), cont.s_max)
    edges[-1] = cont.s_max
    reps = edges[1:]
    H, A, m = cont.horizon, cont.num_actions, cont.num_constraints
    P = np.zeros((H, n, A, n))
    r = np.zeros((H, n, A))
    c = np.zeros((H, n, A, m))
    widths = np.diff(edges)
    k = SIMPSON_PANELS
    nodes = edges[:-1, None] + widths[:, None] * (np.arange(k + 1)[None, :] / k)
    w = np.ones(k + 1)
    w[1:-1:2], w[2:-1:2] = 4.0, 2.0
    weights = w[None, :] * (widths[:, None] / (3.0 * k))
    worst = 0.0
    for h in range(H):
        for i, x in enumerate(reps):
            for a in range(A):
                r[h, i, a] = cont.reward(h, x, a)
                c[h, i, a] = np.atleast_1d(cont.cost(h, x, a))
                if cont.interval_mass is not None:
                    row = np.array([cont.interval_mass(h, x, a, lo, hi) for lo, hi in zip(edges[:-1], edges[1:])])
                else:
                    dens = np.asarray(cont.density(h, x, a, nodes.ravel()), dtype=float).reshape(nodes.shape)
                    row = (dens * weights).sum(axis=1)
                row = np.maximum(row, 0.0)
                total = row.sum()
                dev = abs(total - 1.0)
                if dev > RENORM_FAIL or total <= 0:
                    raise QuadratureFailure(f"row (h={h}, cell={i}, a={a}) integrates to {total:.6g}")
                worst = max(worst, dev)
                P[h, i, a] = row / total
    positive = P[P > 0]
    model = TabularCaMDP(P, r, c, cell_index(edges, cont.s0))
    return Discretized(model, reps, edges, worst if worst > RENORM_RECORD else 0.0,
                       float(positive.min()) if positive.size else 0.0)


def solve_continuous(cont: LipschitzCaMDP, criterion: SrCriterion, B=None, epsilon: float = 0.5,
                     ell_d: float | None = None, **kwargs) -> SolveReport:
    """Discretise with half of ``epsilon`` and solve the tabular model with the other half.

    ``ell_d`` overrides the cell width (the unit then follows from the cell
    count).  The report carries the smallest positive discretised transition
    probability when an almost-sure dim is present, because the almost-sure
    cost error scales with its inverse.
    """
    if criterion.has(Kind.CHANCE):
        raise UnsupportedCriterion("chance constraints are not supported on continuous-state input")
    plan = plan_for(cont, epsilon, ell_d)
    disc = discretize(cont, plan)
    rep = solve_bicriteria(disc.model, criterion, B=B, epsilon=epsilon / 2, mode=kwargs.pop("mode", ADDITIVE),
                           ell=plan.ell_a, **kwargs)
    if criterion.has(Kind.ALMOST_SURE):
        rep.p_min = disc.p_min
    rep.plan = plan
    rep.discretized = disc
    return rep


# ---------------------------------------------------------------------------
# built-in families


def _triangle(center, half_width, xs):
    return np.maximum(0.0, half_width - np.abs(np.asarray(xs, dtype=float) - center)) / half_width**2


def triangle_family(horizon: int = 2, budget: float = 0.6):
    """Triangle densities whose centre drifts with the state and the action.

    The centre stays in ``[0.25, 0.75]`` so no mass leaves ``[0, 1]``.
    """
    w = 0.25
    cont = LipschitzCaMDP(
        horizon=horizon, s_min=0.0, s_max=1.0, num_actions=2,
        reward=lambda h, s, a: s + 0.5 * a,
        cost=lambda h, s, a: np.array([a * (0.5 + 0.5 * s)]),
        density=lambda h, s, a, xs: _triangle(0.25 + 0.25 * s + 0.25 * a, w, xs),
        lambda_r=1.0, lambda_c=0.5, lambda_p=0.25 / w**2,
        s0=0.0, r_max=1.5, c_max=1.0, c_min=0.0,
    )
    return cont, SrCriterion([make_expectation(budget)])


def uniform_drift_family(horizon: int = 2, budget: float = 0.5):
    """Uniform density tilted toward the end of the interval the state sits in."""
    cont = LipschitzCaMDP(
        horizon=horizon, s_min=0.0, s_max=1.0, num_actions=2,
        reward=lambda h, s, a: 1.0 - s + 0.5 * a,
        cost=lambda h, s, a: np.array([0.5 * a]),
        density=lambda h, s, a, xs: 1.0 + 0.5 * (2 * s - 1) * (2 * np.asarray(xs, dtype=float) - 1),
        lambda_r=1.0, lambda_c=1e-6, lambda_p=1.0,
        s0=0.5, r_max=1.5, c_max=0.5, c_min=0.0,
    )
    return cont, SrCriterion([make_expectation(budget)])


def constant_family(horizon: int = 2, budget: float = 0.5):
    """Rewards, costs and the (uniform) density do not depend on the state."""
    cont = LipschitzCaMDP(
        horizon=horizon, s_min=0.0, s_max=1.0, num_actions=2,
        reward=lambda h, s, a: 1.0 + a,
        cost=lambda h, s, a: np.array([float(a)]),
        density=lambda h, s, a, xs: np.ones_like(np.asarray(xs, dtype=float)),
        lambda_r=1.0, lambda_c=1.0, lambda_p=1.0,
        s0=0.0, r_max=2.0, c_max=1.0, c_min=0.0,
        interval_mass=lambda h, s, a, lo, hi: hi - lo,
    )
    return cont, SrCriterion([make_expectation(budget)])


FAMILIES = {
    "triangle": triangle_family,
    "uniform-drift": uniform_drift_family,
    "constant": constant_family,
}


def family(name: str, **kwargs):
    try:
        return FAMILIES[name](**kwargs)
    except KeyError:
        raise ValidationError("family", f"unknown family {name!r}; choose from {sorted(FAMILIES)}") from None
