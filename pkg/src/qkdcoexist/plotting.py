"""Report figures, rendered off-screen to image files."""

from __future__ import annotations

from pathlib import Path
from typing import Any, Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .dataset import TARGET_NAMES  # noqa: E402

_LABELS = {"noise_rate": "noise (photons/s)", "skr": "SKR (b/s)", "qber": "QBER"}


def plot_mse(rows: Sequence[Mapping[str, Any]], path: str | Path) -> Path:
    """Bar chart of mean validation MSE, one panel per target.

    ``rows`` holds ``{"model": name, <target>: mse, ...}`` entries, as
    produced by ``ComparisonTable.rows``. A log axis keeps the baseline and
    the best model on one scale.
    """
    path = Path(path)
    models = [r["model"] for r in rows]
    fig, axes = plt.subplots(1, len(TARGET_NAMES), figsize=(4 * len(TARGET_NAMES), 3.6))
    colors = plt.cm.tab10(np.arange(len(models)))
    for ax, target in zip(axes, TARGET_NAMES):
        values = [r[target] for r in rows]
        ax.bar(models, values, color=colors)
        ax.set_yscale("log")
        ax.set_title(f"{_LABELS[target]} MSE")
        ax.tick_params(axis="x", rotation=45)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_scenario(
    rows: Sequence[Mapping[str, Any]],
    threshold: Mapping[str, float],
    path: str | Path,
    quantum_index: float | None = None,
) -> Path:
    """Predicted against monitored metrics per stage, plus the channel map.

    Parameters
    ----------
    rows
        One mapping per stage with ``stage``, ``channels`` (dash-joined
        grid indices), ``monitored_<target>`` and ``predicted_<target>``.
    threshold
        ``min_skr``, ``max_qber`` and ``max_noise_rate``; drawn as dashed
        lines on the matching panel.
    quantum_index
        Fractional grid position of the quantum channel, marked on the map.
    """
    path = Path(path)
    stages = [r["stage"] for r in rows]
    x = np.arange(len(stages))
    limits = {
        "noise_rate": threshold.get("max_noise_rate"),
        "skr": threshold.get("min_skr"),
        "qber": threshold.get("max_qber"),
    }
    fig, axes = plt.subplots(1, 4, figsize=(16, 3.6))
    for ax, target in zip(axes, TARGET_NAMES):
        ax.plot(x, [r[f"monitored_{target}"] for r in rows], "o-", label="monitored")
        ax.plot(x, [r[f"predicted_{target}"] for r in rows], "s--", label="predicted")
        if limits[target] is not None:
            ax.axhline(limits[target], color="grey", linestyle=":", label="threshold")
        ax.set_xticks(x, stages)
        ax.set_title(_LABELS[target])
    axes[0].legend(fontsize=8)
    ax = axes[3]
    for i, r in enumerate(rows):
        idx = [int(c) for c in str(r["channels"]).split("-") if c]
        ax.scatter(idx, [i] * len(idx), marker="|", s=200)
    if quantum_index is not None:
        ax.axvline(quantum_index, color="crimson", linewidth=1, label="quantum")
        ax.legend(fontsize=8)
    ax.set_yticks(x, stages)
    ax.invert_yaxis()
    ax.set_xlabel("grid index")
    ax.set_title("classical channels")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
