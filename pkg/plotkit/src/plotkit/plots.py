"""Figure builders: overhead trajectory view and error/distance panels."""
from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .io import RunLog, min_obstacle_distance, settling_time


def plot_trajectory(logs, obstacle, out_path, goal=(0.0, 0.0, 0.0),
                    three_d: bool = False):
    """Overlay the x-y paths (optionally 3-D) with the obstacle and markers.

    obstacle is (cx, cy, cz, r) or None. Legend entries come from file stems.
    Returns the per-log minimum obstacle distances (empty dict without an
    obstacle).
    """
    fig = plt.figure(figsize=(7.0, 6.0))
    dists = {}
    if three_d:
        ax = fig.add_subplot(projection="3d")
        for log in logs:
            p = log.positions
            ax.plot(p[:, 0], p[:, 1], p[:, 2], label=Path(log.path).stem)
        if obstacle is not None:
            cx, cy, cz, r = obstacle
            u, v = np.mgrid[0:2 * np.pi:30j, 0:np.pi:15j]
            ax.plot_surface(cx + r * np.cos(u) * np.sin(v),
                            cy + r * np.sin(u) * np.sin(v),
                            cz + r * np.cos(v), alpha=0.25, color="crimson")
        ax.set_zlabel("z [m]")
    else:
        ax = fig.add_subplot()
        for log in logs:
            p = log.positions
            ax.plot(p[:, 0], p[:, 1], label=Path(log.path).stem)
        if obstacle is not None:
            cx, cy, _, r = obstacle
            ax.add_patch(plt.Circle((cx, cy), r, color="crimson", alpha=0.3,
                                    label="obstacle"))
        ax.set_aspect("equal")
    first = logs[0].positions
    ax.scatter(*([first[0, 0]], [first[0, 1]], [first[0, 2]])[: 3 if three_d else 2],
               marker="o", color="k", label="start", zorder=5)
    ax.scatter(*([goal[0]], [goal[1]], [goal[2]])[: 3 if three_d else 2],
               marker="*", s=120, color="green", label="goal", zorder=5)
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.legend(loc="best", fontsize=8)
    ax.set_title("trajectories")
    fig.tight_layout()
    fig.savefig(out_path)
    plt.close(fig)
    if obstacle is not None:
        for log in logs:
            dists[log.path] = min_obstacle_distance(log, obstacle[:3])
    return dists


def plot_error_and_distance(log: RunLog, out_path, obstacle=None,
                            goal=(0.0, 0.0, 0.0), threshold: float = 0.1):
    """Two panels: x/y error (dashed/solid) vs time, and obstacle distance
    with the radius reference line. Returns (min distance, settling time)."""
    goal = np.asarray(goal, dtype=float)
    fig, axes = plt.subplots(2, 1, figsize=(7.0, 6.5), sharex=True)
    err_x = log.columns["x"] - goal[0]
    err_y = log.columns["y"] - goal[1]
    axes[0].plot(log.t, err_x, "--", label="x error")
    axes[0].plot(log.t, err_y, "-", label="y error")
    axes[0].axhline(0.0, color="gray", lw=0.6)
    axes[0].set_ylabel("error [m]")
    axes[0].legend(fontsize=8)

    if obstacle is not None:
        center, radius = obstacle[:3], obstacle[3]
        dist = np.linalg.norm(log.positions - np.asarray(center), axis=1)
        min_dist = float(np.min(dist))
        axes[1].plot(log.t, dist, label="distance to obstacle")
        axes[1].axhline(radius, color="crimson", ls=":", label="obstacle radius")
    else:
        dist = np.linalg.norm(log.positions - goal, axis=1)
        min_dist = math.inf
        axes[1].plot(log.t, dist, label="distance to goal")
    axes[1].set_ylim(bottom=0.0)
    axes[1].set_xlabel("t [s]")
    axes[1].set_ylabel("distance [m]")
    axes[1].legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path)
    plt.close(fig)
    return min_dist, settling_time(log, goal, threshold)
