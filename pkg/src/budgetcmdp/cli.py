"""Command-line front end.

Exit codes: 0 solved (or all checks passed), 2 infeasible (or a check
failed), 1 any error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import corpus as corpus_mod
from .bellman import DEFAULT_PARTIAL_CAP, DEFAULT_TABLE_CAP
from .bicriteria import ADDITIVE, RELATIVE, SolveReport, prepare, solve_bicriteria
from .continuous import family, solve_continuous
from .errors import CmdpError
from .io import load_instance, write_json
from .knapsack import benchmark_rows, random_instance, rows_to_csv
from .model import AugmentedPolicy, evaluate_policy, rollout
from .oracle import DEFAULT_POLICY_CAP, brute_force_optimum
from .reduction import DEFAULT_BUDGET_CAP, solve_exact

log = logging.getLogger("budgetcmdp")

EXIT_OK, EXIT_ERROR, EXIT_INFEASIBLE = 0, 1, 2


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _figures(args) -> Path | None:
    if getattr(args, "figures", None):
        p = Path(args.figures)
        p.mkdir(parents=True, exist_ok=True)
        return p
    return None


# ---------------------------------------------------------------------------


def _solve_exact_report(inst, budget_cap) -> SolveReport:
    t0 = time.perf_counter()
    prep = prepare(inst.model, inst.criterion, inst.epsilon)
    res = solve_exact(prep.model, prep.criterion, cap=budget_cap)
    bound = prep.collapse(prep.criterion.budgets)
    ms = round((time.perf_counter() - t0) * 1000.0, 3)
    if not res.feasible:
        return SolveReport("infeasible", None, bound, None, 0.0, "exact", ms, None, prep, res.table)
    ev = evaluate_policy(prep.model, prep.criterion, res.policy)
    return SolveReport("solved", float(ev.value), bound, prep.collapse(ev.cost), 0.0, "exact", ms,
                       res.policy, prep, res.table)


def cmd_solve(args) -> int:
    inst = load_instance(args.instance)
    eps = args.epsilon if args.epsilon is not None else inst.epsilon
    mode = args.mode or inst.mode
    if args.exact:
        rep = _solve_exact_report(inst, args.budget_cap)
    else:
        rep = solve_bicriteria(inst.model, inst.criterion, epsilon=eps, mode=mode,
                               partial_cap=args.partial_cap, table_cap=args.grid_cap)
    _emit(_dumps(rep.to_json()), args.out)
    if rep.policy is not None and args.policy_out:
        write_json(args.policy_out, rep.policy.to_json())
    fig = _figures(args)
    if fig is not None and rep.table is not None and rep.prepared.criterion.m == 1:
        from .plotting import plot_value_staircase
        m = rep.prepared.model
        unit = 1.0 if args.exact else rep.ell
        plot_value_staircase(rep.table, 0, m.initial_state, fig / f"{Path(args.instance).stem}_value.png", unit)
    return EXIT_OK if rep.solved else EXIT_INFEASIBLE


def cmd_evaluate(args) -> int:
    inst = load_instance(args.instance)
    eps = args.epsilon if args.epsilon is not None else inst.epsilon
    prep = prepare(inst.model, inst.criterion, eps)
    try:
        rows = json.loads(Path(args.policy).read_text())
    except json.JSONDecodeError as exc:
        raise CmdpError(f"policy file: {exc.msg} at $ (line {exc.lineno})") from None
    policy = AugmentedPolicy.from_json(rows)
    ev = evaluate_policy(prep.model, prep.criterion, policy, truncated=args.truncated)
    out = {"value": ev.value, "cost": prep.collapse(ev.cost).tolist()}
    if ev.truncated_costs is not None:
        out["truncated_costs"] = ev.truncated_costs.tolist()
    if args.episodes:
        t0 = time.perf_counter()
        out["rollout"] = rollout(prep.model, policy, args.seed, args.episodes).to_json()
        out["wall_time_ms"] = round((time.perf_counter() - t0) * 1000.0, 3)
    _emit(_dumps(out), args.out)
    return EXIT_OK


def cmd_oracle(args) -> int:
    inst = load_instance(args.instance)
    prep = prepare(inst.model, inst.criterion, inst.epsilon)
    res = brute_force_optimum(prep.model, prep.criterion, cap=args.oracle_cap)
    _emit(_dumps(res.to_json()), args.out)
    return EXIT_OK if res.feasible else EXIT_INFEASIBLE


def cmd_corpus(args) -> int:
    results = corpus_mod.run_corpus_checks(seed=args.seed, count=args.count, max_h=args.max_h, max_s=args.max_s,
                                           chance_count=min(100, args.count), budget_count=min(50, args.count))
    for r in results:
        print(r.line(), file=sys.stderr)
    doc = {"seed": args.seed, "count": args.count, "checks": [r.to_json() for r in results]}
    _emit(_dumps(doc), args.out)
    fig = _figures(args)
    if fig is not None:
        from .plotting import plot_checks
        plot_checks(doc["checks"], fig / "corpus_checks.png")
    return EXIT_OK if all(r.passed for r in results) else EXIT_INFEASIBLE


BENCH_COLUMNS = ("epsilon", "ell", "status", "value", "oracle_value", "realized_cost", "violation", "wall_time_ms")


def bench_rows(model, criterion, epsilons, mode=ADDITIVE) -> tuple[list[dict], float | None]:
    orc = brute_force_optimum(model, criterion)
    opt = orc.value.value if orc.feasible else None
    rows = []
    for eps in epsilons:
        rep = solve_bicriteria(model, criterion, epsilon=eps, mode=mode)
        cost = None if rep.realized_cost is None else float(np.max(rep.realized_cost))
        viol = None if rep.realized_cost is None else float(np.max(np.maximum(rep.realized_cost - criterion.budgets, 0)))
        rows.append({"epsilon": eps, "ell": rep.ell, "status": rep.status, "value": rep.value,
                     "oracle_value": opt, "realized_cost": cost, "violation": viol,
                     "wall_time_ms": rep.wall_time_ms})
    return rows, opt


def runtime_slope(rows) -> float:
    x = np.log([1 / r["epsilon"] for r in rows])
    y = np.log([max(r["wall_time_ms"], 1e-3) for r in rows])
    return float(np.polyfit(x, y, 1)[0]) if len(rows) > 1 else float("nan")


def _csv(rows, columns) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    for r in rows:
        w.writerow({k: ("" if v is None else repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()


def cmd_bench(args) -> int:
    if args.instance:
        inst = load_instance(args.instance)
        model, crit, mode = inst.model, inst.criterion, inst.mode
    else:
        model, crit, _, mode = corpus_mod.named_instances()["t1"]
    eps = [float(x) for x in args.epsilons.split(",")]
    rows, opt = bench_rows(model, crit, eps, mode)
    _emit(_csv(rows, BENCH_COLUMNS), args.out)
    print(f"log-runtime vs log(1/epsilon) slope: {runtime_slope(rows):.3f}", file=sys.stderr)
    fig = _figures(args)
    if fig is not None:
        from .plotting import plot_bench
        plot_bench([r for r in rows if r["value"] is not None], fig / "bench.png", opt)
    return EXIT_OK


def cmd_knapsack(args) -> int:
    rng = np.random.default_rng(args.seed)
    rows = []
    for i in range(args.instances):
        inst = random_instance(rng, args.n)
        for r in benchmark_rows(inst, args.epsilon, args.mode, bruteforce=args.n <= 25):
            rows.append(r if args.instances == 1 else {"instance": i, **r})
    cols = ("method", "value", "weight", "violation", "wall_time_ms")
    if args.instances > 1:
        cols = ("instance",) + cols
    _emit(rows_to_csv(rows, cols), args.out)
    fig = _figures(args)
    if fig is not None:
        from .plotting import plot_knapsack
        plot_knapsack(rows, fig / "knapsack.png")
    return EXIT_OK


def cmd_continuous(args) -> int:
    cont, crit = family(args.family)
    eps_list = [float(x) for x in args.epsilons.split(",")] if args.epsilons else [args.epsilon]
    points, reports = [], []
    for eps in eps_list:
        rep = solve_continuous(cont, crit, epsilon=eps)
        doc = {"epsilon": eps, "report": rep.to_json(), "plan": rep.plan.to_json()}
        if args.reference and rep.solved:
            ref = solve_continuous(cont, crit, epsilon=eps, ell_d=rep.plan.ell_d / 16)
            doc["reference_value"] = ref.value
            doc["gap"] = abs(rep.value - ref.value)
            points.append({"epsilon": eps, "gap": doc["gap"], "bound": rep.plan.value_error})
        reports.append(doc)
    _emit(_dumps({"family": args.family, "runs": reports}), args.out)
    fig = _figures(args)
    if fig is not None and points:
        from .plotting import plot_continuous
        plot_continuous(points, fig / f"continuous_{args.family}.png")
    return EXIT_OK if all(d["report"]["status"] == "solved" for d in reports) else EXIT_INFEASIBLE


# ---------------------------------------------------------------------------


def _positive(x: str) -> float:
    v = float(x)
    if not (math.isfinite(v) and v > 0):
        raise argparse.ArgumentTypeError(f"must be a positive number, got {x}")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="budgetcmdp", description="Budget-augmented solvers for constrained MDPs.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def caps(sp):
        sp.add_argument("--grid-cap", type=int, default=DEFAULT_TABLE_CAP)
        sp.add_argument("--partial-cap", type=int, default=DEFAULT_PARTIAL_CAP)
        sp.add_argument("--budget-cap", type=int, default=DEFAULT_BUDGET_CAP)
        sp.add_argument("--oracle-cap", type=int, default=DEFAULT_POLICY_CAP)

    sp = sub.add_parser("solve", help="solve an instance file")
    sp.add_argument("instance")
    sp.add_argument("--epsilon", type=_positive)
    sp.add_argument("--mode", choices=(ADDITIVE, RELATIVE))
    sp.add_argument("--exact", action="store_true", help="exact reduction (tiny instances only)")
    sp.add_argument("--out", help="report JSON path (default stdout)")
    sp.add_argument("--policy-out", help="policy JSON path")
    sp.add_argument("--figures", help="directory for PNG figures")
    caps(sp)
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("evaluate", help="evaluate a policy file exactly, optionally by rollout")
    sp.add_argument("instance")
    sp.add_argument("policy")
    sp.add_argument("--epsilon", type=_positive, help="must match the solve when chance dims are present")
    sp.add_argument("--episodes", type=int, default=0)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--truncated", action="store_true", help="also report costs of every truncated horizon")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("oracle", help="brute-force optimum over deterministic history-dependent policies")
    sp.add_argument("instance")
    sp.add_argument("--out")
    caps(sp)
    sp.set_defaults(func=cmd_oracle)

    sp = sub.add_parser("corpus", help="run the seeded corpus checks")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--count", type=int, default=200)
    sp.add_argument("--max-h", type=int, default=3)
    sp.add_argument("--max-s", type=int, default=3)
    sp.add_argument("--out")
    sp.add_argument("--figures")
    sp.set_defaults(func=cmd_corpus)

    sp = sub.add_parser("bench", help="sweep epsilon on a fixed instance")
    sp.add_argument("--instance", help="instance file (default: built-in t1)")
    sp.add_argument("--epsilons", default="0.4,0.2,0.1,0.05")
    sp.add_argument("--out")
    sp.add_argument("--figures")
    sp.set_defaults(func=cmd_bench)

    sp = sub.add_parser("knapsack", help="random knapsack comparison")
    sp.add_argument("--n", type=int, default=12)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--epsilon", type=_positive, default=0.1)
    sp.add_argument("--mode", choices=(ADDITIVE, RELATIVE), default=RELATIVE)
    sp.add_argument("--instances", type=int, default=1)
    sp.add_argument("--out")
    sp.add_argument("--figures")
    sp.set_defaults(func=cmd_knapsack)

    sp = sub.add_parser("continuous", help="solve a built-in continuous-state family")
    sp.add_argument("--family", choices=("triangle", "uniform-drift", "constant"), default="triangle")
    sp.add_argument("--epsilon", type=_positive, default=1.0)
    sp.add_argument("--epsilons", help="comma-separated sweep, overrides --epsilon")
    sp.add_argument("--reference", action="store_true", help="also solve on a 16x finer grid and report the gap")
    sp.add_argument("--out")
    sp.add_argument("--figures")
    sp.set_defaults(func=cmd_continuous)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (CmdpError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
