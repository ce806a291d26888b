"""Rendering of reach-avoid synthesis CSV artifacts into static figures."""

from .jobs import PlotJob, RegionOverlay, load_regions
from .heatmap import render_heatmap
from .trajectories import render_trajectories

__version__ = "0.1.0"
