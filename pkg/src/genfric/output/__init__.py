"""File outputs: trajectory CSV, JSON summaries and SVG plots.

Every writer goes through :func:`atomic_write`, so a failed run never leaves a
half-written file behind.
"""

from .csv_writer import CsvWriter, read_trajectory, trajectory_header
from .files import atomic_write
from .json_writer import SCHEMA_VERSION, JsonWriter
from .svg import render_plot

__all__ = [
    "SCHEMA_VERSION",
    "CsvWriter",
    "JsonWriter",
    "atomic_write",
    "read_trajectory",
    "render_plot",
    "trajectory_header",
]
