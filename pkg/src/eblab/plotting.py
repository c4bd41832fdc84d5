"""Line charts of merging curves, rendered to SVG with matplotlib."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

# fixed hash salt and no date stamp keep the SVG bytes reproducible
matplotlib.rcParams["svg.hashsalt"] = "eblab"


def curve_chart(path, n_grid, rows, metric: str, title: str = "") -> None:
    """Median with a q10-q90 band against n on a log x axis.

    ``rows`` holds (mean, median, q10, q90, reps_ok) per n.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    med = [r[1] for r in rows]
    q10 = [r[2] for r in rows]
    q90 = [r[3] for r in rows]
    mean = [r[0] for r in rows]
    fig, ax = plt.subplots(figsize=(5.0, 3.5))
    ax.fill_between(n_grid, q10, q90, alpha=0.25, label="q10-q90")
    ax.plot(n_grid, med, marker="o", label="median")
    ax.plot(n_grid, mean, linestyle="--", label="mean")
    if len(n_grid) > 1 and min(n_grid) > 0:
        ax.set_xscale("log")
    ax.set_xlabel("n")
    ax.set_ylabel(metric)
    ax.set_title(title or metric)
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
