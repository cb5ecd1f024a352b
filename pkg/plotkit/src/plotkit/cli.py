"""plot trajectory|error --in <csv...> --obstacle cx,cy,cz,r --out <file>

Numeric summaries (min_distance, settling_time) are printed to stdout with
full precision so they can be compared against the simulator's metrics.
"""
from __future__ import annotations

import argparse
import sys

from .io import RunCsvError, read_run
from .plots import plot_error_and_distance, plot_trajectory


def _parse_obstacle(tok):
    if tok is None:
        return None
    parts = [float(p) for p in tok.split(",")]
    if len(parts) != 4 or parts[3] <= 0:
        raise ValueError("obstacle must be cx,cy,cz,r with r > 0")
    return tuple(parts)


def _parse_goal(tok):
    parts = [float(p) for p in tok.split(",")]
    if len(parts) != 3:
        raise ValueError("goal must be x,y,z")
    return tuple(parts)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="plotkit",
                                     description="Plots for vtolnav run logs")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--in", dest="inputs", nargs="+", required=True,
                        help="run CSV file(s)")
    common.add_argument("--obstacle", help="cx,cy,cz,r")
    common.add_argument("--goal", default="0,0,0", help="goal position x,y,z")
    common.add_argument("--out", required=True, help="output image (.png/.svg)")

    p_traj = sub.add_parser("trajectory", parents=[common],
                            help="overlaid paths with the obstacle")
    p_traj.add_argument("--three-d", action="store_true",
                        help="3-D axes instead of the overhead view")

    p_err = sub.add_parser("error", parents=[common],
                           help="error and obstacle-distance panels")
    p_err.add_argument("--threshold", type=float, default=0.1,
                       help="settling threshold [m]")

    args = parser.parse_args(argv)
    try:
        obstacle = _parse_obstacle(args.obstacle)
        goal = _parse_goal(args.goal)
        logs = [read_run(p) for p in args.inputs]
    except (RunCsvError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    if args.command == "trajectory":
        dists = plot_trajectory(logs, obstacle, args.out, goal=goal,
                                three_d=args.three_d)
        for path, dist in dists.items():
            print(f"min_distance {path} {dist!r}")
    else:
        if len(logs) != 1:
            print("error: the error plot takes exactly one CSV", file=sys.stderr)
            return 1
        min_dist, settle = plot_error_and_distance(
            logs[0], args.out, obstacle=obstacle, goal=goal,
            threshold=args.threshold)
        print(f"min_distance {logs[0].path} {min_dist!r}")
        print(f"settling_time {logs[0].path} {settle!r}")
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
