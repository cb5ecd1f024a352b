"""Command-line entry points: run, sweep, verify.

Exit codes: 0 success, 1 configuration error, 2 run aborted
(infeasibility/domain violation with a partial log).
"""
from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from . import flatmpc
from .harness import ScenarioError, load_scenario, metrics, run_closed_loop, write_csv


def _print_metrics(tag, log):
    m = metrics(log)
    dist = ", ".join(f"{d:.4f}" for d in m.min_distance) or "n/a"
    print(f"[{tag}] steps={len(log)} min_distance=[{dist}] "
          f"settling_time={m.settling_time:.4g} "
          f"max_cbf_violation={m.max_cbf_violation:.3e} "
          f"infeasible={m.infeasible_count} fallback={m.fallback_count} "
          f"mean_solve_ms={m.mean_solve_ms:.2f}")
    if log.aborted:
        print(f"[{tag}] ABORTED: {log.abort_reason}")


def _run_one(scenario, out_dir: Path, name: str) -> bool:
    log = run_closed_loop(scenario)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"{name}.csv"
    write_csv(log, path)
    _print_metrics(name, log)
    print(f"wrote {path}")
    return not log.aborted


def cmd_run(args) -> int:
    try:
        scenario = load_scenario(args.scenario)
        if args.mode:
            scenario = dataclasses.replace(
                scenario, cfg=dataclasses.replace(scenario.cfg, mode=args.mode))
            scenario.validate()
    except (ScenarioError, OSError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    name = Path(args.scenario).stem + f"_{scenario.cfg.mode}"
    ok = _run_one(scenario, Path(args.out), name)
    return 0 if ok else 2


def cmd_sweep(args) -> int:
    try:
        base = load_scenario(args.scenario)
        gammas = [float(tok) for tok in args.gamma.split(",")] if args.gamma else [base.cfg.gamma]
        horizons = [int(tok) for tok in args.horizon.split(",")] if args.horizon else [base.cfg.n]
    except (ScenarioError, OSError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    stem = Path(args.scenario).stem
    ok = True
    for gamma in gammas:
        for n in horizons:
            cfg = dataclasses.replace(base.cfg, gamma=gamma, n=n)
            scenario = dataclasses.replace(base, cfg=cfg)
            scenario.validate()
            ok &= _run_one(scenario, Path(args.out),
                           f"{stem}_gamma{gamma:g}_n{n}")
    return 0 if ok else 2


def cmd_verify(args) -> int:
    from .verify import run_verification

    return 0 if run_verification() else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="vtolnav",
        description="Closed-loop safe quadrotor navigation simulations")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one scenario and write a CSV log")
    p_run.add_argument("--scenario", required=True, help="scenario TOML file")
    p_run.add_argument("--mode", choices=[flatmpc.MODE_CBF, flatmpc.MODE_ED],
                       help="override the scenario safety mode")
    p_run.add_argument("--out", required=True, help="output directory")
    p_run.set_defaults(fn=cmd_run)

    p_sweep = sub.add_parser("sweep", help="run a gamma/horizon grid")
    p_sweep.add_argument("--scenario", required=True)
    p_sweep.add_argument("--gamma", help="comma-separated decay rates")
    p_sweep.add_argument("--horizon", help="comma-separated horizons")
    p_sweep.add_argument("--out", required=True)
    p_sweep.set_defaults(fn=cmd_sweep)

    p_verify = sub.add_parser("verify", help="run the quick oracle suite")
    p_verify.set_defaults(fn=cmd_verify)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
