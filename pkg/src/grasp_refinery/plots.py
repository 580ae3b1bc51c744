"""Report figures rendered next to the delimited stats output."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .triage import StatsRow

FIGSIZE = (6.4, 3.95)  # golden-ratio-ish landscape


def save_stats_figures(rows: Sequence[StatsRow], out_dir: Path | str) -> list[Path]:
    """Render the false-count trend and the FN/TN proportion chart as PNGs."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    iterations = [row.iteration for row in rows]
    written: list[Path] = []

    fig, ax = plt.subplots(figsize=FIGSIZE)
    ax.plot(iterations, [row.false_count for row in rows], marker="o", color="#1f77b4")
    ax.set_xlabel("iteration")
    ax.set_ylabel("flagged (false) images")
    ax.set_title("False count per refinement iteration")
    ax.grid(True, alpha=0.3)
    if iterations:
        ax.set_xticks(iterations)
    fig.tight_layout()
    path = out_dir / "false_counts.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)

    fn = [row.fn_proportion for row in rows]
    tn = [None if p is None else 1.0 - p for p in fn]
    fig, ax = plt.subplots(figsize=FIGSIZE)
    # None -> NaN so undecided iterations leave a gap instead of a fake point.
    to_series = lambda values: [float("nan") if v is None else v for v in values]
    ax.plot(iterations, to_series(fn), marker="o", color="#d62728", label="false negatives")
    ax.plot(iterations, to_series(tn), marker="s", color="#2ca02c", label="true negatives")
    ax.set_xlabel("iteration")
    ax.set_ylabel("proportion of reviewed flags")
    ax.set_ylim(-0.05, 1.05)
    ax.set_title("Review outcomes per iteration")
    ax.legend()
    ax.grid(True, alpha=0.3)
    if iterations:
        ax.set_xticks(iterations)
    fig.tight_layout()
    path = out_dir / "fn_tn_proportion.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)
    return written
