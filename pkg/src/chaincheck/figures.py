"""Matplotlib figures rendered next to report output.

Space-time diagrams show process timelines left to right with message
arrows, operation spans, crash marks, and (optionally) a past-frontier
overlay.  Witness charts compare per-operation witness/observer counts
against the crash tolerance.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .model import Run, deliveries

KIND_COLORS = {"W": "#c44e52", "R": "#4c72b0"}


def save_spacetime(run: Run, ops, path: str | Path, frontier=None, title: str | None = None) -> Path:
    n = run.config.n
    fig, ax = plt.subplots(figsize=(max(6.0, run.horizon / 12.0), 1.0 + 0.8 * n))
    for p in range(n):
        ax.axhline(p, color="0.85", lw=1, zorder=0)
    for d in deliveries(run):
        ax.annotate(
            "",
            xy=(d.deliver_round, d.receiver),
            xytext=(d.send_round, d.sender),
            arrowprops=dict(arrowstyle="->", color="0.55", lw=0.8, shrinkA=2, shrinkB=2),
        )
    for op in ops:
        color = KIND_COLORS.get(op.kind, "0.3")
        end = op.end.time if op.end is not None else run.horizon
        ax.plot([op.start.time, end], [op.process, op.process], color=color, lw=4, alpha=0.65, zorder=2)
        label = f"{op.kind}({op.value})" if op.value is not None else op.kind
        ax.annotate(label, (op.start.time, op.process + 0.13), fontsize=7, color=color)
        if op.end is None:
            ax.plot([end], [op.process], marker=">", color=color, ms=6)
    for p, c in run.crashes.items():
        ax.plot([c], [p], marker="x", color="k", ms=9, mew=2, zorder=3)
    if frontier is not None:
        for p in range(n):
            ax.plot(
                [frontier.cut[p], frontier.cut[p]], [p - 0.35, p + 0.35],
                color="#55a868", lw=2,
            )
        ax.plot(
            [frontier.pivot.time], [frontier.pivot.process],
            marker="o", color="#55a868", ms=8, zorder=4,
        )
    ax.set_yticks(range(n))
    ax.set_yticklabels([f"p{p}" for p in range(n)])
    ax.set_xlim(-0.5, run.horizon + 0.5)
    ax.set_ylim(-0.6, n - 0.4)
    ax.invert_yaxis()
    ax.set_xlabel("time (rounds)")
    if title:
        ax.set_title(title, fontsize=10)
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def save_witness_bars(rows, f: int, path: str | Path, title: str | None = None) -> Path:
    """``rows`` are audit_quorum per-operation dicts."""
    labels = [r["op"] for r in rows]
    wit = [len(r["witnesses"]) for r in rows]
    obs = [len(r["observers"]) for r in rows]
    x = range(len(labels))
    fig, ax = plt.subplots(figsize=(max(5.0, 0.7 * len(labels) + 2), 3.2))
    ax.bar([i - 0.2 for i in x], wit, width=0.4, label="witnesses", color="#4c72b0")
    ax.bar([i + 0.2 for i in x], obs, width=0.4, label="observers", color="#dd8452")
    ax.axhline(f, color="k", lw=1, ls="--", label=f"f = {f}")
    ax.set_xticks(list(x))
    ax.set_xticklabels(labels, rotation=45, ha="right", fontsize=7)
    ax.set_ylabel("processes")
    ax.legend(fontsize=8)
    if title:
        ax.set_title(title, fontsize=10)
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def save_verdict_hist(counts: dict[str, int], path: str | Path, title: str | None = None) -> Path:
    fig, ax = plt.subplots(figsize=(4.5, 3.0))
    keys = sorted(counts)
    ax.bar(keys, [counts[k] for k in keys], color="#4c72b0")
    ax.set_ylabel("seeds")
    if title:
        ax.set_title(title, fontsize=10)
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
