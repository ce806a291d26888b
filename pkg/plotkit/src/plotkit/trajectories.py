"""Trajectory overlays: actual-state traces over goal/critical geometry."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .heatmap import _draw_box
from .jobs import MalformedCsv, PlotJob, load_trajectories


def render_trajectories(job: PlotJob):
    """Plot each trial's actual-state trace projected onto two axes.

    Goal boxes draw solid green, expanded/contracted variants dashed, in the
    usual convention. Returns the number of polylines drawn.
    """
    dim, traces = load_trajectories(job.input_csv)
    if dim == 2 and not job.axes:
        ax0, ax1 = 0, 1
    else:
        if len(job.axes) != 2:
            raise MalformedCsv("state dimension > 2 needs an explicit --axes pair")
        ax0, ax1 = job.axes
        if not (0 <= ax0 < dim and 0 <= ax1 < dim):
            raise MalformedCsv(f"axes {job.axes} out of range for dimension {dim}")

    fig, ax = plt.subplots(figsize=(6, 5))
    for trial in sorted(traces):
        pts = traces[trial]
        ax.plot([p[ax0] for p in pts], [p[ax1] for p in pts],
                linewidth=1.0, alpha=0.8)
        ax.plot(pts[0][ax0], pts[0][ax1], marker="o", markersize=3, color="black")
    for overlay in job.overlays:
        _draw_box(ax, overlay, ax0, ax1)
    ax.set_xlabel(f"axis {ax0}")
    ax.set_ylabel(f"axis {ax1}")
    if job.title:
        ax.set_title(job.title)
    fig.savefig(job.output_path, dpi=150)
    plt.close(fig)
    return len(traces)
