"""Matplotlib figures rendered next to the CSV reports.

Everything draws through the Agg backend so headless runs work; each helper
takes the same row dicts the CSV writers consume and saves a PNG.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

_RC = {
    "figure.figsize": (7.0, 4.2),
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "font.size": 10,
}


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def save_training_curves(rows: list[dict], path: str | Path) -> Path:
    """Loss and validation MRR per epoch, with stage boundaries marked."""
    with plt.rc_context(_RC):
        fig, ax_loss = plt.subplots()
        xs = range(1, len(rows) + 1)
        ax_loss.plot(xs, [r["train_loss"] for r in rows], color="tab:blue", label="train loss")
        ax_loss.set_xlabel("epoch (all stages)")
        ax_loss.set_ylabel("train loss", color="tab:blue")
        ax_mrr = ax_loss.twinx()
        ax_mrr.plot(xs, [r["valid_mrr"] for r in rows], color="tab:orange", label="valid MRR")
        ax_mrr.set_ylabel("valid MRR", color="tab:orange")
        ax_mrr.grid(False)
        prev_k = None
        for x, r in zip(xs, rows):
            if prev_k is not None and r["k"] != prev_k:
                ax_loss.axvline(x - 0.5, color="gray", linestyle="--", alpha=0.6)
            prev_k = r["k"]
        ax_loss.set_title("curriculum training")
    return _save(fig, path)


def save_metric_bars(report_row: dict, path: str | Path, title: str = "evaluation") -> Path:
    metrics = ["mrr", "h1", "h3", "h10"]
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(5.0, 3.6))
        vals = [float(report_row[m]) for m in metrics]
        ax.bar(metrics, vals, color="tab:blue", width=0.6)
        for i, v in enumerate(vals):
            ax.annotate(f"{v:.3f}", (i, v), ha="center", va="bottom", fontsize=9)
        ax.set_ylim(0, 1.05)
        ax.set_title(title)
    return _save(fig, path)


def save_online_timeline(rows: list[dict], path: str | Path) -> Path:
    """Per-timestamp metrics over the online test range."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        ts = [r["t"] for r in rows]
        for key, color in (("mrr", "tab:blue"), ("h1", "tab:green"), ("h10", "tab:gray")):
            ax.plot(ts, [float(r[key]) for r in rows], label=key, color=color)
        ax.set_xlabel("timestamp")
        ax.set_ylabel("metric")
        ax.set_ylim(0, 1.05)
        ax.legend()
        ax.set_title("online evaluation by timestamp")
    return _save(fig, path)


def save_ablation_bars(rows: list[dict], path: str | Path) -> Path:
    """Grouped metric bars, one group per ablation variant."""
    metrics = ["mrr", "h1", "h3", "h10"]
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        width = 0.8 / len(rows)
        for i, row in enumerate(rows):
            offs = [j + i * width for j in range(len(metrics))]
            ax.bar(offs, [float(row[m]) for m in metrics], width=width,
                   label=str(row["variant"]))
        ax.set_xticks([j + width * (len(rows) - 1) / 2 for j in range(len(metrics))])
        ax.set_xticklabels(metrics)
        ax.set_ylim(0, 1.05)
        ax.legend()
        ax.set_title("ablation comparison")
    return _save(fig, path)
