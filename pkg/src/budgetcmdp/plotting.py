"""Report figures (PNG, non-interactive backend)."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (5.0, 3.4),
    "figure.dpi": 120,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "font.size": 9,
    "legend.fontsize": 8,
    "legend.frameon": False,
}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_value_staircase(table, h: int, s: int, path, unit: float = 1.0, title: str | None = None) -> Path:
    """``V_h(s, b)`` against the budget for a one-dimensional table."""
    cell = table.cell(h, s)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        if cell is not None and len(cell.cand_values):
            b = cell.cand_budgets[:, 0] * unit
            v = cell.cand_values
            hi = b.max() + max(1.0, 0.25 * (b.max() - b.min()))
            ax.step(np.append(b, hi), np.append(v, v[-1]), where="post", color="C0")
            ax.plot(b, v, "o", ms=3, color="C0")
        ax.set_xlabel("budget")
        ax.set_ylabel("value")
        ax.set_title(title or f"value function, step {h}, state {s}")
        return _save(fig, path)


def plot_bench(rows, path, oracle_value: float | None = None) -> Path:
    eps = np.array([r["epsilon"] for r in rows], dtype=float)
    ms = np.array([r["wall_time_ms"] for r in rows], dtype=float)
    val = np.array([r["value"] for r in rows], dtype=float)
    with plt.rc_context(STYLE):
        fig, (a1, a2) = plt.subplots(1, 2, figsize=(8.0, 3.2))
        a1.loglog(1 / eps, np.maximum(ms, 1e-3), "o-")
        a1.set_xlabel("1 / epsilon")
        a1.set_ylabel("wall time [ms]")
        a2.semilogx(eps, val, "o-", label="solver")
        if oracle_value is not None:
            a2.axhline(oracle_value, color="k", lw=0.8, ls="--", label="optimum")
        a2.set_xlabel("epsilon")
        a2.set_ylabel("value")
        a2.legend()
        return _save(fig, path)


def plot_knapsack(rows, path) -> Path:
    methods = sorted({r["method"] for r in rows})
    with plt.rc_context(STYLE):
        fig, (a1, a2) = plt.subplots(1, 2, figsize=(8.0, 3.2))
        for i, m in enumerate(methods):
            sel = [r for r in rows if r["method"] == m]
            a1.bar(i, np.mean([r["value"] for r in sel]), color=f"C{i}")
            a2.bar(i, np.mean([r["wall_time_ms"] for r in sel]), color=f"C{i}")
        for ax, lab in ((a1, "mean value"), (a2, "mean wall time [ms]")):
            ax.set_xticks(range(len(methods)))
            ax.set_xticklabels(methods, rotation=20)
            ax.set_ylabel(lab)
        return _save(fig, path)


def plot_continuous(points, path) -> Path:
    """``points``: dicts with ``epsilon``, ``gap`` and ``bound``."""
    eps = np.array([p["epsilon"] for p in points], dtype=float)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.loglog(eps, [max(p["gap"], 1e-12) for p in points], "o-", label="value gap to fine grid")
        ax.loglog(eps, [p["bound"] for p in points], "s--", label="discretisation bound")
        ax.set_xlabel("epsilon")
        ax.legend()
        return _save(fig, path)


def plot_checks(results, path) -> Path:
    names = [r["name"] for r in results]
    ok = [r["passed"] for r in results]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6.0, 0.4 * len(names) + 1.0))
        ax.barh(range(len(names)), [r["checked"] for r in results], color=["C2" if o else "C3" for o in ok])
        ax.set_yticks(range(len(names)))
        ax.set_yticklabels(names)
        ax.set_xscale("log")
        ax.set_xlabel("checks run")
        return _save(fig, path)
