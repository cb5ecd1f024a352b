from pathlib import Path

import pytest

from plotkit.io import read_run
from plotkit.plots import plot_error_and_distance, plot_trajectory

from conftest import make_csv


@pytest.fixture()
def hover_log(tmp_path):
    rows = [(0.05 * k, 7.0, 7.0, 0.0, 4.8) for k in range(5)]
    return read_run(make_csv(tmp_path / "hover.csv", rows))


@pytest.fixture()
def two_logs(tmp_path):
    a = make_csv(tmp_path / "cbf.csv",
                 [(0.05 * k, 7.0 - 0.2 * k, 7.0 - 0.1 * k, 0.0, 5.0)
                  for k in range(10)])
    b = make_csv(tmp_path / "ed.csv",
                 [(0.05 * k, 7.0 - 0.1 * k, 7.0 - 0.2 * k, 0.0, 5.0)
                  for k in range(10)])
    return read_run(a), read_run(b)


def test_trajectory_single_hover_point(hover_log, tmp_path):
    out = tmp_path / "traj.png"
    dists = plot_trajectory([hover_log], (3.5, 3.5, 0.0, 1.0), out)
    assert out.exists() and out.stat().st_size > 0
    assert dists[hover_log.path] == pytest.approx((2 * 3.5 ** 2) ** 0.5, abs=1e-9)


def test_trajectory_two_labeled_curves(two_logs, tmp_path):
    out = tmp_path / "traj.svg"
    plot_trajectory(list(two_logs), (3.5, 3.5, 0.0, 1.0), out)
    svg = out.read_text()
    assert "cbf" in svg and "ed" in svg  # legend entries from file stems


def test_trajectory_three_d(two_logs, tmp_path):
    out = tmp_path / "traj3d.png"
    plot_trajectory(list(two_logs), (3.5, 3.5, 0.0, 1.0), out, three_d=True)
    assert out.exists() and out.stat().st_size > 0


def test_trajectory_without_obstacle(hover_log, tmp_path):
    out = tmp_path / "traj.png"
    dists = plot_trajectory([hover_log], None, out)
    assert out.exists() and dists == {}


def test_error_panels_hover_flat_lines(hover_log, tmp_path):
    out = tmp_path / "err.png"
    min_dist, settle = plot_error_and_distance(
        hover_log, out, obstacle=(3.5, 3.5, 0.0, 1.0), goal=(7.0, 7.0, 0.0))
    assert out.exists() and out.stat().st_size > 0
    assert settle == 0.0
    assert min_dist == pytest.approx((2 * 3.5 ** 2) ** 0.5, abs=1e-9)


def test_error_panels_without_obstacle(hover_log, tmp_path):
    out = tmp_path / "err.svg"
    min_dist, settle = plot_error_and_distance(hover_log, out,
                                               goal=(7.0, 7.0, 0.0))
    assert out.exists()
    assert min_dist == float("inf")
    assert settle == 0.0
