"""Value heatmaps over the partition grid."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .jobs import MalformedCsv, PlotJob, load_heatmap


def render_heatmap(job: PlotJob):
    """Render the step-0 lower bounds as a cell grid; returns the value grid.

    For partitions beyond two dimensions, two projection axes must be chosen
    in the job; cells aggregate by the maximum over the remaining axes.
    """
    centers, values, counts = load_heatmap(job.input_csv)
    n = len(counts)
    if n == 2:
        ax0, ax1 = 0, 1
    else:
        if len(job.axes) != 2:
            raise MalformedCsv("heatmaps of >2-D partitions need two --axes")
        ax0, ax1 = job.axes
    grid_full = np.array(values).reshape(counts)
    other = tuple(i for i in range(n) if i not in (ax0, ax1))
    grid = grid_full.max(axis=other) if other else grid_full
    if ax0 > ax1:
        grid = grid.T
    c = np.array(centers)
    lo0, hi0 = c[:, ax0].min(), c[:, ax0].max()
    lo1, hi1 = c[:, ax1].min(), c[:, ax1].max()

    fig, ax = plt.subplots(figsize=(6, 5))
    im = ax.imshow(grid.T, origin="lower", vmin=0.0, vmax=1.0, cmap="viridis",
                   extent=(lo0, hi0, lo1, hi1), aspect="auto",
                   interpolation="nearest")
    fig.colorbar(im, ax=ax, label="lower bound on reach-avoid probability")
    ax.set_xlabel(f"axis {ax0}")
    ax.set_ylabel(f"axis {ax1}")
    if job.title:
        ax.set_title(job.title)
    for overlay in job.overlays:
        _draw_box(ax, overlay, ax0, ax1)
    fig.savefig(job.output_path, dpi=150)
    plt.close(fig)
    return grid


def _draw_box(ax, overlay, ax0, ax1):
    from matplotlib.patches import Rectangle

    styles = {
        "goal": dict(edgecolor="green", linestyle="-"),
        "goal_augmented": dict(edgecolor="green", linestyle="--"),
        "critical": dict(edgecolor="red", linestyle="-"),
        "critical_augmented": dict(edgecolor="red", linestyle="--"),
    }
    style = styles.get(overlay.kind)
    if style is None:
        return
    x, y = overlay.lo[ax0], overlay.lo[ax1]
    w = overlay.hi[ax0] - x
    h = overlay.hi[ax1] - y
    ax.add_patch(Rectangle((x, y), w, h, fill=False, linewidth=1.5, **style))
