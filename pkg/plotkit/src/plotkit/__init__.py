"""Offline figure generation for vtolnav run CSVs."""

from .io import RunCsvError, RunLog, min_obstacle_distance, read_run, settling_time
from .plots import plot_error_and_distance, plot_trajectory

__version__ = "0.1.0"
