"""Bar-chart rendering of an evaluation report."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .report import EvalReport  # noqa: E402


def plot_report(report: EvalReport, path: str | Path) -> Path:
    """Bounded metrics as bars on [0, 1]; unbounded ones (edit distance) in the title."""
    path = Path(path)
    bounded = [c for c in report.columns if c != "levenshtein"]
    values = [report.metrics[c] for c in bounded]
    fig, ax = plt.subplots(figsize=(1.1 * len(bounded) + 2, 3.6), dpi=100)
    bars = ax.bar(bounded, values, color="#4c72b0")
    ax.bar_label(bars, fmt="%.3f", fontsize=8)
    ax.set_ylim(0, 1.08)
    ax.set_ylabel("score")
    title = f"{report.direction} (n={report.sample_count})"
    if "levenshtein" in report.metrics:
        title += f", mean edit distance {report.metrics['levenshtein']:.2f}"
    ax.set_title(title, fontsize=10)
    ax.tick_params(axis="x", labelrotation=30, labelsize=8)
    fig.tight_layout()
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path
