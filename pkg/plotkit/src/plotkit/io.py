"""Run-log CSV parsing and the numeric summaries echoed to stdout.

The simulator writes one CSV per run with the documented column set; this
module is the only place that schema is interpreted. Summaries (minimum
obstacle distance, settling time) are recomputed from the parsed columns so
they can be cross-checked against the simulator's own metrics.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

EXPECTED_COLUMNS = (
    "t", "x", "y", "z", "phi", "theta", "psi", "vx", "vy", "vz", "thrust",
    "u1", "u2", "u3", "u4", "v1", "v2", "v3", "v4",
    "h_min", "dist_min", "cost", "solver_status", "solver_iters", "solve_ms",
)

_STRING_COLUMNS = {"solver_status"}


class RunCsvError(ValueError):
    """Malformed run CSV; message carries file and line."""


@dataclass
class RunLog:
    """Parsed run: numeric columns as arrays, statuses as a list."""

    path: str
    columns: dict

    def __len__(self):
        return self.columns["t"].size

    @property
    def t(self):
        return self.columns["t"]

    @property
    def positions(self):
        return np.column_stack([self.columns["x"], self.columns["y"],
                                self.columns["z"]])


def read_run(path) -> RunLog:
    """Parse a run CSV, validating the schema and time monotonicity."""
    path = str(path)
    with open(path, newline="") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise RunCsvError(f"{path}: empty file") from None
        if tuple(header) != EXPECTED_COLUMNS:
            raise RunCsvError(f"{path}: unexpected header {header}")
        raw = {name: [] for name in EXPECTED_COLUMNS}
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(EXPECTED_COLUMNS):
                raise RunCsvError(f"{path}:{lineno}: expected "
                                  f"{len(EXPECTED_COLUMNS)} fields, got {len(row)}")
            for name, tok in zip(EXPECTED_COLUMNS, row):
                if name in _STRING_COLUMNS:
                    raw[name].append(tok)
                else:
                    try:
                        raw[name].append(float(tok))
                    except ValueError:
                        raise RunCsvError(
                            f"{path}:{lineno}: bad value {tok!r} in {name}") from None
    columns = {name: (vals if name in _STRING_COLUMNS else np.asarray(vals))
               for name, vals in raw.items()}
    t = columns["t"]
    if t.size == 0:
        raise RunCsvError(f"{path}: no data rows")
    if t.size > 1 and np.any(np.diff(t) <= 0.0):
        raise RunCsvError(f"{path}: time column is not strictly increasing")
    return RunLog(path=path, columns=columns)


def min_obstacle_distance(log: RunLog, center) -> float:
    """Minimum center distance along the run, recomputed from positions."""
    diff = log.positions - np.asarray(center, dtype=float)
    return float(np.min(np.linalg.norm(diff, axis=1)))


def settling_time(log: RunLog, goal=(0.0, 0.0, 0.0), threshold: float = 0.1) -> float:
    """First time after which the position error stays below the threshold."""
    err = np.linalg.norm(log.positions - np.asarray(goal, dtype=float), axis=1)
    above = np.nonzero(err > threshold)[0]
    if above.size == 0:
        return 0.0
    if above[-1] == len(log) - 1:
        return math.inf
    return float(log.t[above[-1] + 1])
