"""Figures written next to the CSV reports."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .active_learning import SUBSETS, RoundReport  # noqa: E402
from .training import EpochMetrics  # noqa: E402

STYLE = {
    "figure.dpi": 110,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 9,
    "legend.frameon": False,
}


def plot_history(epochs: Sequence[EpochMetrics], path, title: str = "") -> Path:
    """Loss and dominant-channel accuracy per epoch, train vs validation."""
    path = Path(path)
    x = [e.epoch for e in epochs]
    with plt.rc_context(STYLE):
        fig, (ax_loss, ax_acc) = plt.subplots(1, 2, figsize=(9, 3.4))
        ax_loss.plot(x, [e.train_loss for e in epochs], label="train")
        ax_loss.plot(x, [e.val_loss for e in epochs], label="validation")
        ax_loss.set_yscale("log")
        ax_loss.set_xlabel("epoch")
        ax_loss.set_ylabel("MSE")
        ax_acc.plot(x, [e.train_acc for e in epochs], label="train")
        ax_acc.plot(x, [e.val_acc for e in epochs], label="validation")
        ax_acc.set_ylim(0, 1)
        ax_acc.set_xlabel("epoch")
        ax_acc.set_ylabel("dominant-channel accuracy")
        ax_acc.legend(loc="lower right")
        if title:
            fig.suptitle(title)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
    return path


def plot_rounds(reports: Sequence[RoundReport], path) -> Path:
    """Pre/post accuracy bars per round, one panel per record subset."""
    path = Path(path)
    labels = ["train", "val"]
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, len(SUBSETS), figsize=(4.5 * len(SUBSETS), 3.2), sharey=True)
        for ax, subset in zip(axes, SUBSETS):
            width = 0.8 / (2 * len(reports))
            for i, rep in enumerate(reports):
                for j, phase in enumerate(("pre", "post")):
                    m = getattr(rep, phase)[subset]
                    offset = (2 * i + j) * width - 0.4 + width / 2
                    ax.bar([k + offset for k in range(2)], [m.train_acc, m.val_acc], width,
                           label=f"round {rep.round} {phase}")
            ax.set_xticks(range(2), labels)
            ax.set_ylim(0, 1)
            ax.set_title(f"{subset} records")
        axes[0].set_ylabel("dominant-channel accuracy")
        axes[-1].legend(loc="lower right", fontsize=7)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
    return path
