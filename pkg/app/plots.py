"""
SVG plots for metric curves and probe probability sweeps.

Figures are rendered with the Agg backend and a fixed SVG hash salt with no
date metadata, so identical inputs give identical files.
"""

import logging
from io import StringIO
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

from .dataio import PathLike, atomic_write_text  # noqa: E402

logger = logging.getLogger(__name__)

plt.rcParams["svg.hashsalt"] = "emomix"


def _save_svg(figure, path: PathLike):
    buffer = StringIO()
    figure.savefig(buffer, format="svg", metadata={"Date": None})
    plt.close(figure)
    atomic_write_text(path, buffer.getvalue())
    logger.info(f"Plot written to {path}")


def plot_metric_curve(scores: pd.DataFrame, metric: str, path: PathLike, title: Optional[str] = None):
    """
    Mean metric per mixing percentage.

    `scores` needs `mix_percentage` and `metric` columns; rows without a
    percentage are skipped.
    """
    usable = scores.dropna(subset=["mix_percentage", metric])
    curve = usable.groupby("mix_percentage")[metric].agg(["mean", "std"]).fillna(0.0)

    figure, axis = plt.subplots(figsize=(5, 3.5))
    axis.errorbar(curve.index, curve["mean"], yerr=curve["std"], marker="o", capsize=3)
    axis.set_xlabel("Mixing percentage (%)")
    axis.set_ylabel(metric.upper())
    axis.set_title(title or f"{metric.upper()} vs. mixing percentage")
    axis.grid(alpha=0.3)
    figure.tight_layout()
    _save_svg(figure, path)


def plot_probability_sweep(
    probabilities: np.ndarray,
    labels: Sequence[str],
    path: PathLike,
    title: str = "Class probability along the sweep",
):
    """One line per emotion; x runs from 0% (start) to 100% (end)"""
    steps = np.linspace(0.0, 100.0, probabilities.shape[0])

    figure, axis = plt.subplots(figsize=(5, 3.5))
    for k, label in enumerate(labels):
        axis.plot(steps, probabilities[:, k], marker="o", label=label.capitalize())
    axis.set_xlabel("Interpolation (%)")
    axis.set_ylabel("Probability")
    axis.set_ylim(0.0, 1.0)
    axis.set_title(title)
    axis.legend(fontsize="small")
    axis.grid(alpha=0.3)
    figure.tight_layout()
    _save_svg(figure, path)
