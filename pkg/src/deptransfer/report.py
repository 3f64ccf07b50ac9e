"""Result tables and matplotlib figures for run reports."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .pipeline import RunReport  # noqa: E402

plt.rc("axes", labelsize=9, titlesize=10)
plt.rc("xtick", labelsize=8)
plt.rc("ytick", labelsize=8)
plt.rc("legend", fontsize=8)

STAGE_COLORS = ("tab:blue", "tab:orange", "tab:green")


def results_table(reports: Sequence[RunReport]) -> str:
    """Plain-text table with ``UAS ± MOE`` and ``LAS ± MOE`` columns."""
    width = max([len("Model")] + [len(r.name) for r in reports])
    lines = [f"{'Model':<{width}}  {'UAS':>14}  {'LAS':>14}"]
    for r in reports:
        t = r.test
        uas = f"{100 * t.uas:.2f} ± {100 * t.uas_moe:.2f}"
        las = f"{100 * t.las:.2f} ± {100 * t.las_moe:.2f}"
        lines.append(f"{r.name:<{width}}  {uas:>14}  {las:>14}")
    return "\n".join(lines) + "\n"


def plot_training_curves(report: RunReport, path: str | Path) -> Path:
    """Train/dev loss and dev UAS/LAS per epoch, stages laid end to end."""
    fig, (ax_loss, ax_acc) = plt.subplots(1, 2, figsize=(8.0, 3.0))
    offset = 0
    for k, stage in enumerate(report.stages):
        color = STAGE_COLORS[k % len(STAGE_COLORS)]
        curve = stage["curve"]
        x = [offset + e["epoch"] for e in curve]
        trained = [(offset + e["epoch"], e["train_loss"]) for e in curve if e["train_loss"] is not None]
        if trained:
            ax_loss.plot(*zip(*trained), color=color, lw=1.2, label=f"{stage['language']} train")
        ax_loss.plot(x, [e["dev_loss"] for e in curve], color=color, lw=1.2, ls="--",
                     label=f"{stage['language']} dev")
        ax_acc.plot(x, [100 * e["dev_uas"] for e in curve], color=color, lw=1.2,
                    label=f"{stage['language']} UAS")
        ax_acc.plot(x, [100 * e["dev_las"] for e in curve], color=color, lw=1.0, ls=":",
                    label=f"{stage['language']} LAS")
        ax_acc.axvline(offset + stage["best_epoch"], color=color, lw=0.6, alpha=0.5)
        offset = x[-1]
        if k + 1 < len(report.stages):
            for ax in (ax_loss, ax_acc):
                ax.axvline(offset, color="0.6", lw=0.8)
    ax_loss.set_yscale("log")
    ax_loss.set_xlabel("epoch")
    ax_loss.set_ylabel("loss")
    ax_acc.set_xlabel("epoch")
    ax_acc.set_ylabel("dev score (%)")
    ax_acc.set_ylim(0, 100)
    ax_loss.legend(frameon=False)
    ax_acc.legend(frameon=False, loc="lower right")
    fig.suptitle(f"{report.name} ({report.kind})", fontsize=10)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_comparison(reports: Sequence[RunReport], path: str | Path) -> Path:
    """Grouped UAS/LAS bars with margin-of-error whiskers, one group per scenario."""
    names = [r.name for r in reports]
    x = range(len(reports))
    w = 0.38
    fig, ax = plt.subplots(figsize=(max(4.0, 0.9 * len(reports) + 1.5), 3.0))
    ax.bar([i - w / 2 for i in x], [100 * r.test.uas for r in reports], w,
           yerr=[100 * r.test.uas_moe for r in reports], capsize=3, label="UAS", color="tab:blue")
    ax.bar([i + w / 2 for i in x], [100 * r.test.las for r in reports], w,
           yerr=[100 * r.test.las_moe for r in reports], capsize=3, label="LAS", color="tab:orange")
    ax.set_xticks(list(x))
    ax.set_xticklabels(names, rotation=30, ha="right")
    ax.set_ylabel("test score (%)")
    ax.set_ylim(0, 100)
    ax.legend(frameon=False, ncol=2, loc="lower right")
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
