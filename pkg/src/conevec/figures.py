"""Figure rendering for eval reports.

Each eval command writes its numbers as CSV and an accompanying PNG so
the run can be eyeballed without loading anything. The Agg backend is
forced so rendering works headless, and the PNG Software tag is dropped
to keep output stable across environments.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .audits import AuditResult, RotationRow
from .metrics import RetrievalScores
from .probes import ProbeResult

__all__ = [
    "plot_audit_scatter",
    "plot_retrieval_bars",
    "plot_trace",
    "plot_rotation_bars",
    "plot_probe_bars",
]

_SAVE_KW = {"dpi": 100, "metadata": {"Software": None}}


def _finish(fig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
    return path


def plot_audit_scatter(results: Sequence[AuditResult], path: str | Path) -> Path:
    """One panel per audit row: analytic distance against embedding distance."""
    if not results:
        raise ValueError("need at least one audit result")
    fig, axes = plt.subplots(1, len(results), figsize=(4 * len(results), 3.6),
                             squeeze=False)
    for ax, res in zip(axes[0], results):
        ax.scatter(res.analytic, res.embedding, s=6, alpha=0.4,
                   color="tab:blue", edgecolors="none")
        ax.set_title(f"{res.kind}/{res.metric} ({res.source})\n"
                     f"r={res.pearson_r:.3f} rho={res.spearman_rho:.3f}",
                     fontsize=9)
        ax.set_xlabel("analytic distance", fontsize=8)
        ax.set_ylabel("embedding distance", fontsize=8)
        ax.tick_params(labelsize=7)
    return _finish(fig, path)


def plot_retrieval_bars(scores: dict[str, RetrievalScores], path: str | Path) -> Path:
    if not scores:
        raise ValueError("need at least one set of retrieval scores")
    names = list(scores)
    metrics = ("recall", "map", "mrr")
    values = {
        "recall": [scores[n].recall for n in names],
        "map": [scores[n].mean_ap for n in names],
        "mrr": [scores[n].mrr for n in names],
    }
    fig, ax = plt.subplots(figsize=(1.6 + 1.4 * len(names), 3.6))
    width = 0.8 / len(metrics)
    for i, metric in enumerate(metrics):
        xs = [j + (i - 1) * width for j in range(len(names))]
        ax.bar(xs, values[metric], width=width, label=metric)
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, fontsize=8)
    ax.set_ylim(0.0, 1.0)
    ax.set_ylabel("score@k")
    ax.legend(fontsize=8)
    return _finish(fig, path)


def plot_trace(steps: Sequence[int], losses: Sequence[float], path: str | Path,
               title: str = "training loss") -> Path:
    if len(steps) != len(losses):
        raise ValueError("steps and losses must align")
    fig, ax = plt.subplots(figsize=(5.2, 3.4))
    ax.plot(steps, losses, color="tab:blue", linewidth=1.0)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.set_title(title, fontsize=10)
    if losses and min(losses) > 0:
        ax.set_yscale("log")
    return _finish(fig, path)


def plot_rotation_bars(rows: Sequence[RotationRow], path: str | Path) -> Path:
    if not rows:
        raise ValueError("need at least one rotation row")
    labels = [f"{r.component}\n{r.rotated}" for r in rows]
    sims = [r.similarity for r in rows]
    fig, ax = plt.subplots(figsize=(1.6 + 1.2 * len(rows), 3.6))
    colors = ["tab:gray" if r.component == "none" else "tab:orange" for r in rows]
    ax.bar(range(len(rows)), sims, color=colors)
    ax.set_xticks(range(len(rows)))
    ax.set_xticklabels(labels, fontsize=7)
    ax.set_ylabel("cosine similarity to reference")
    ax.axhline(1.0, color="black", linewidth=0.6, linestyle=":")
    return _finish(fig, path)


def plot_probe_bars(results: Sequence[tuple[str, ProbeResult]], path: str | Path) -> Path:
    if not results:
        raise ValueError("need at least one probe result")
    labels = [f"{task.task}\n({source})" for source, task in results]
    means = [r.mean for _, r in results]
    fig, ax = plt.subplots(figsize=(1.6 + 1.2 * len(results), 3.6))
    ax.bar(range(len(results)), means, color="tab:blue")
    for i, (_, r) in enumerate(results):
        ax.scatter([i] * len(r.per_seed), r.per_seed, color="black", s=10, zorder=3)
    ax.set_xticks(range(len(results)))
    ax.set_xticklabels(labels, fontsize=8)
    ax.set_ylabel("score (mean over seeds)")
    return _finish(fig, path)
