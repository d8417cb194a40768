"""Figures for bench reports."""

from __future__ import annotations

from collections import defaultdict
from statistics import median
from typing import Dict, List, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

PHASES = ("visible_chase", "safety_check", "repair")


def _by_size(reports: Sequence[dict]) -> Dict[int, List[dict]]:
    groups: Dict[int, List[dict]] = defaultdict(list)
    for r in reports:
        groups[r["inputs"]["n_dep"]].append(r)
    return dict(sorted(groups.items()))


def plot_repair_time(reports: Sequence[dict], path) -> None:
    """Median total repair time against the number of tgds."""
    groups = _by_size(reports)
    xs = list(groups)
    ys = [median(r["timings"]["total"] for r in groups[x]) for x in xs]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(xs, ys, marker="o")
    for x in xs:
        pts = [r["timings"]["total"] for r in groups[x]]
        ax.scatter([x] * len(pts), pts, s=8, alpha=0.4, color="gray")
    ax.set_xlabel("number of tgds")
    ax.set_ylabel("repair time (s)")
    ax.set_title("Repair time")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_phase_breakdown(reports: Sequence[dict], path) -> None:
    """Stacked median time per phase against the number of tgds."""
    groups = _by_size(reports)
    xs = list(groups)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    bottom = [0.0] * len(xs)
    width = (min(b - a for a, b in zip(xs, xs[1:])) * 0.6) if len(xs) > 1 else 1.0
    for phase in PHASES:
        vals = [median(r["timings"][phase] for r in groups[x]) for x in xs]
        ax.bar(xs, vals, width=width, bottom=bottom, label=phase.replace("_", " "))
        bottom = [b + v for b, v in zip(bottom, vals)]
    ax.set_xlabel("number of tgds")
    ax.set_ylabel("median time (s)")
    ax.set_title("Time per phase")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
