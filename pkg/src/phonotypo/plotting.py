"""Static SVG scatter of per-reading paired means."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
from matplotlib.patches import Ellipse

from .typology import CorrelationResult, scatter_rows


def plot_pair_scatter(result: CorrelationResult, path, measure: str = "") -> None:
    """One point per reading with SD/10 ellipses, the fitted line and y = x."""
    with plt.rc_context({"svg.hashsalt": "phonotypo"}):
        _plot(result, path, measure)


def _plot(result: CorrelationResult, path, measure: str) -> None:
    rows = scatter_rows(result)
    x = np.array([r[1] for r in rows])
    y = np.array([r[2] for r in rows])
    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    for _, mx, my, _, _, hx, hy in rows:
        # Ellipse takes full widths
        ax.add_patch(Ellipse((mx, my), 2 * hx, 2 * hy, alpha=0.25, color="C0", lw=0))
    ax.scatter(x, y, s=12, color="C0", zorder=3)
    lo = float(min(x.min(), y.min()))
    hi = float(max(x.max(), y.max()))
    pad = 0.05 * (hi - lo or 1.0)
    grid = np.array([lo - pad, hi + pad])
    slope, intercept = np.polyfit(x, y, 1)
    ax.plot(grid, slope * grid + intercept, color="C3", lw=1, label="least squares")
    ax.plot(grid, grid, color="0.5", lw=1, ls="--", label="y = x")
    a, b = result.pair
    unit = f" ({measure})" if measure else ""
    ax.set_xlabel(f"{a}{unit}")
    ax.set_ylabel(f"{b}{unit}")
    ax.set_title(f"{a}-{b}: r = {result.r:.2f}, n = {result.n_readings}")
    ax.legend(loc="upper left", fontsize=8, frameon=False)
    fig.tight_layout()
    # fixed metadata keeps reruns byte-identical
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
