"""Figure rendering for the report paths (loss curves, recall bars).

Always uses the Agg backend so the CLI can run headless; the figures sit
next to the CSV/JSON outputs they visualize.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def save_loss_curve(loss_curve, path, title="Training loss") -> None:
    """Line plot of per-iteration loss values."""
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(range(len(loss_curve)), loss_curve, lw=0.8)
    ax.set_xlabel("iteration")
    ax.set_ylabel("loss")
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_retrieval_figure(report, path, title="Retrieval / clustering") -> None:
    """Bar chart of Recall@K plus the NMI and F1 scores."""
    ks = sorted(report.recall_at)
    names = [f"R@{k}" for k in ks] + ["NMI", "F1"]
    values = [report.recall_at[k] for k in ks] + [report.nmi, report.f1]
    fig, ax = plt.subplots(figsize=(7, 4))
    bars = ax.bar(names, values, color=["#4878d0"] * len(ks) + ["#ee854a", "#6acc64"])
    for bar, val in zip(bars, values):
        ax.annotate(f"{val:.3f}", (bar.get_x() + bar.get_width() / 2, val),
                    ha="center", va="bottom", fontsize=8)
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("score")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
