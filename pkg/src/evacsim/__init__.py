"""Evacuation-scenario toolkit: parametric floorplans, a stepwise microscopic
egress simulator, time-resolved density-class heatmaps, dataset sweeps, and
evaluation metrics for TET/density predictors."""

__version__ = "0.1.0"

from . import dataset, engine, evaluate, floorplan, frames, geometry, raster  # noqa: F401
from .errors import EvacsimError  # noqa: F401
