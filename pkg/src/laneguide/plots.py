"""Headless report figures (PNG) accompanying the CSV outputs."""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

__all__ = ["save_metric_chart", "save_bucket_chart"]


def _finite(vals):
    return [0.0 if v is None or (isinstance(v, float) and math.isnan(v)) else float(v)
            for v in vals]


def save_metric_chart(path, metrics: dict, title: str = "match report") -> None:
    """Bar chart of named scalar metrics in [0, 1]."""
    names = list(metrics)
    fig, ax = plt.subplots(figsize=(5.2, 3.4), dpi=120)
    bars = ax.bar(names, _finite(metrics.values()), color="#4878cf")
    ax.set_ylim(0.0, 1.05)
    ax.set_title(title)
    ax.bar_label(bars, fmt="%.3f", padding=2, fontsize=8)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def save_bucket_chart(path, edges, series: dict, ylabel: str,
                      title: str = "grazing-angle buckets") -> None:
    """Grouped bars per angle bucket; NaN entries render as zero height."""
    labels = [f"{lo:g}-{hi:g}" for lo, hi in zip(edges, edges[1:])]
    fig, ax = plt.subplots(figsize=(6.0, 3.6), dpi=120)
    group = max(len(series), 1)
    width = 0.8 / group
    for k, (name, vals) in enumerate(series.items()):
        xs = [i + (k - (group - 1) / 2.0) * width for i in range(len(labels))]
        ax.bar(xs, _finite(vals), width=width, label=name)
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels)
    ax.set_xlabel("grazing angle (deg)")
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    if len(series) > 1:
        ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
