"""Figure rendering for training logs and evaluation reports.

Companion PNGs land next to the delimited outputs: a loss / validation
recall curve for a training log and grouped metric bars for an evaluation
report. PNG metadata is stripped so identical inputs give identical bytes.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .evalmetrics import METRIC_NAMES, EvalReport

__all__ = ["save_training_curves", "save_metric_bars"]

_SAVE_KWARGS = {"dpi": 120, "metadata": {"Software": None}}


def save_training_curves(records: list[dict], path) -> None:
    """Loss and validation-metric trajectories from a training log."""
    iters = [r["iter"] for r in records]
    metric_key = next((k for k in records[0] if k.startswith("recall")), None)
    fig, (ax_loss, ax_metric) = plt.subplots(1, 2, figsize=(9, 3.2))

    loss_pts = [(r["iter"], r["loss_avg"]) for r in records if r["loss_avg"] is not None]
    if loss_pts:
        ax_loss.plot([p[0] for p in loss_pts], [p[1] for p in loss_pts], marker="o", ms=3)
    ax_loss.set_xlabel("iteration")
    ax_loss.set_ylabel("training loss")
    ax_loss.grid(alpha=0.3)

    if metric_key:
        ax_metric.plot(iters, [r[metric_key] for r in records], marker="o", ms=3, color="tab:green")
        best = max(range(len(records)), key=lambda i: records[i][metric_key])
        ax_metric.axvline(records[best]["iter"], color="tab:red", ls="--", lw=1, alpha=0.6)
        ax_metric.set_ylabel(metric_key)
    ax_metric.set_xlabel("iteration")
    ax_metric.grid(alpha=0.3)

    fig.tight_layout()
    fig.savefig(Path(path), **_SAVE_KWARGS)
    plt.close(fig)


def save_metric_bars(report: EvalReport, path, title: str | None = None) -> None:
    """Grouped bars, one group per metric, one bar per cutoff."""
    cutoffs = sorted(report.metrics)
    width = 0.8 / max(len(cutoffs), 1)
    fig, ax = plt.subplots(figsize=(7, 3.2))
    for i, k in enumerate(cutoffs):
        values = [report.metrics[k][name] for name in METRIC_NAMES]
        offsets = [j + i * width for j in range(len(METRIC_NAMES))]
        ax.bar(offsets, values, width=width, label=f"@{k}")
    ax.set_xticks([j + width * (len(cutoffs) - 1) / 2 for j in range(len(METRIC_NAMES))])
    ax.set_xticklabels(METRIC_NAMES)
    ax.legend()
    if title:
        ax.set_title(title)
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(Path(path), **_SAVE_KWARGS)
    plt.close(fig)
