"""Report rendering for the stats path: CSV, JSON, and a usage figure.

matplotlib is imported lazily with the Agg backend so plain stats runs and
headless environments never pay for (or trip over) a display toolkit.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

from .efficiency import CostEstimate, TokenUsageStats, stats_to_dict


def write_usage_csv(
    rows: list[tuple[str, int]], budget: int, path: str | Path
) -> None:
    """Per-manifest table: file, total_kept, budget, violation flag."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["file", "total_kept", "budget", "violation"])
        for name, kept in rows:
            writer.writerow([name, kept, budget, int(kept > budget)])


def write_stats_json(
    stats: TokenUsageStats, path: str | Path, cost: CostEstimate | None = None
) -> None:
    Path(path).write_text(
        json.dumps(stats_to_dict(stats, cost), indent=2) + "\n", "utf-8"
    )


def render_usage_figure(
    totals: list[int], budget: int, path: str | Path
) -> None:
    """Per-sample kept-token counts against the budget line."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(8.0, 4.5))
    samples = range(1, len(totals) + 1)
    ax.plot(samples, totals, marker="o", markersize=3, linewidth=1.0,
            color="#1f77b4", label="tokens kept")
    ax.axhline(budget, color="#d62728", linewidth=1.2, linestyle="--",
               label=f"budget = {budget}")
    ax.set_xlabel("sample")
    ax.set_ylabel("visual tokens kept")
    ax.set_title("Kept visual tokens vs. budget")
    ax.set_ylim(bottom=0, top=max(budget, max(totals)) * 1.15 + 1)
    ax.legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
