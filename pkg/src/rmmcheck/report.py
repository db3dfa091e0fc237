"""Corpus-level reporting: delimited summary plus rendered figures.

The report subcommand runs the checker over a set of program files and leaves
behind a CSV table, a bar chart comparing full and reduced SC state counts
per attack sweep, and for each non-robust program a drawing of the violating
happens-before trace (threads as columns, program order downwards, store /
source / conflict edges colored).
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
from matplotlib.patches import FancyArrowPatch

from .traces import CF, PO, SRC, ST, Trace

EDGE_COLORS = {PO: "#444444", ST: "#1f77b4", SRC: "#2ca02c", CF: "#d62728"}


def trace_figure(trace: Trace, path: Path, cycle=None, title: str = "") -> None:
    """Render a happens-before trace with one column per thread."""
    cyc = {tuple(k) for k in (cycle or ())}
    threads = sorted({n.thread for n in trace.nodes})
    xs = {t: i for i, t in enumerate(threads)}
    pos = {n.key: (xs[n.thread], -n.index) for n in trace.nodes}
    height = max(3.0, 1.0 + 0.7 * max((n.index for n in trace.nodes), default=0))
    fig, ax = plt.subplots(figsize=(2.8 * max(2, len(threads)), height))
    for n in trace.nodes:
        x, y = pos[n.key]
        boxcolor = "#f4c7c3" if n.key in cyc else "#e8eef7"
        ax.text(x, y, str(n), ha="center", va="center", fontsize=9,
                bbox=dict(boxstyle="round,pad=0.35", fc=boxcolor, ec="#666666"))
    for a, b, lab in sorted(trace.edges, key=str):
        (x1, y1), (x2, y2) = pos[a], pos[b]
        same_col = x1 == x2
        arrow = FancyArrowPatch(
            (x1, y1 - 0.12 if same_col else y1), (x2, y2 + 0.12 if same_col else y2),
            arrowstyle="-|>", mutation_scale=12,
            connectionstyle="arc3,rad=0.0" if same_col else "arc3,rad=0.18",
            color=EDGE_COLORS[lab], lw=1.4, shrinkA=16, shrinkB=16,
        )
        ax.add_patch(arrow)
        mx, my = (x1 + x2) / 2, (y1 + y2) / 2
        if not same_col:
            my += 0.18
        ax.text(mx, my, lab, fontsize=8, color=EDGE_COLORS[lab],
                ha="center", va="center")
    for t, x in xs.items():
        ax.text(x, 0.7, t, ha="center", va="bottom", fontsize=11, fontweight="bold")
    ax.set_xlim(-0.7, len(threads) - 0.3)
    ymin = min(y for _, y in pos.values()) if pos else -1
    ax.set_ylim(ymin - 0.7, 1.2)
    ax.axis("off")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def states_figure(rows: list[dict], path: Path) -> None:
    """Grouped bars of SC states visited per program, full vs reduced."""
    rows = [r for r in rows if r.get("states_full")]
    if not rows:
        return
    names = [r["program"] for r in rows]
    full = [r["states_full"] for r in rows]
    por = [r["states_por"] for r in rows]
    x = range(len(names))
    width = 0.38
    fig, ax = plt.subplots(figsize=(max(5, 1.3 * len(names)), 4))
    ax.bar([i - width / 2 for i in x], full, width, label="full", color="#1f77b4")
    ax.bar([i + width / 2 for i in x], por, width, label="reduced", color="#ff7f0e")
    ax.set_xticks(list(x))
    ax.set_xticklabels(names, rotation=30, ha="right")
    ax.set_ylabel("SC states visited (attack sweep)")
    ax.set_yscale("log")
    ax.legend()
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


REPORT_FIELDS = [
    "program", "file", "threads", "instructions", "mode", "robust",
    "attacks", "feasible_attack", "states_full", "states_por",
    "oracle_cost", "seconds",
]


def write_csv(rows: list[dict], path: Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=REPORT_FIELDS)
        writer.writeheader()
        for r in rows:
            writer.writerow({k: r.get(k, "") for k in REPORT_FIELDS})
