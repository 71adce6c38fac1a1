"""Figures for sweep and bench results, rendered to image files.

Uses the non-interactive Agg backend so it works on headless machines.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .campaign import BenchRow, SweepRow  # noqa: E402


def plot_sweep(rows: Sequence[SweepRow], path: str | Path, title: str = "") -> Path:
    """Mean inputs-to-vet (left axis) and failed trials (right axis) per phase-1 budget."""
    path = Path(path)
    budgets = [r.budget for r in rows]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(budgets, [r.mean_inputs_to_vet for r in rows], "o-", color="tab:blue")
    ax.set_xscale("log")
    ax.set_xlabel("phase-1 budget (executions)")
    ax.set_ylabel("mean inputs to vet (95%)", color="tab:blue")
    ax2 = ax.twinx()
    ax2.plot(budgets, [r.failed_trials for r in rows], "s--", color="tab:red")
    ax2.set_ylabel("failed trials", color="tab:red")
    ax2.set_ylim(bottom=0)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_bench(rows: Sequence[BenchRow], path: str | Path) -> Path:
    """Per-target detection spread (min/median/max) and mean inputs to vet."""
    path = Path(path)
    names = [r.target for r in rows]
    xs = range(len(rows))
    fig, (top, bottom) = plt.subplots(2, 1, figsize=(7, 5), sharex=True)
    for x, r in zip(xs, rows):
        if r.execs_to_detection_median is None:
            continue
        lo = r.execs_to_detection_median - r.execs_to_detection_min
        hi = r.execs_to_detection_max - r.execs_to_detection_median
        top.errorbar([x], [r.execs_to_detection_median], yerr=[[lo], [hi]], fmt="o",
                     color="tab:blue", capsize=4)
    top.set_yscale("log")
    top.set_ylabel("execs to first\ntrue report")
    bottom.bar(list(xs), [r.inputs_to_vet_mean or 0 for r in rows], color="tab:gray")
    bottom.set_ylabel("mean inputs to vet")
    bottom.set_xticks(list(xs))
    bottom.set_xticklabels(names, rotation=20)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path
