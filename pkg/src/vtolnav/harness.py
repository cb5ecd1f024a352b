"""Closed-loop executive: measure -> flat map -> MPC solve -> DFL -> plant step.

Each control period the loop maps the (optionally noise-corrupted) measured
state into flat coordinates, shifts by the goal, assembles and solves the
safety-constrained problem warm-started from the shifted previous plan,
realizes the first virtual input through the feedback-linearizing controller,
and advances the true plant one RK4 step. Thrust integrator states belong to
the controller and are never corrupted by measurement noise.

On a failed solve the loop falls back to the next element of the shifted
previous plan and flags the step. The run aborts (partial log) if the state
leaves the attitude bounds or the thrust singularity floor.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from . import dfl, flatmpc
from .solver import STATUS_OPTIMAL, SolverSettings, solve
from .vehicle import (
    POS,
    BodyParams,
    DomainError,
    hover_state,
    pack_state,
    rk4_step,
)

CSV_COLUMNS = (
    "t", "x", "y", "z", "phi", "theta", "psi", "vx", "vy", "vz", "thrust",
    "u1", "u2", "u3", "u4", "v1", "v2", "v3", "v4",
    "h_min", "dist_min", "cost", "solver_status", "solver_iters", "solve_ms",
)


class ScenarioError(ValueError):
    """Scenario file or scenario invariants are invalid."""


@dataclass
class Scenario:
    params: BodyParams
    initial: np.ndarray
    goal_position: np.ndarray
    goal_yaw: float
    obstacles: list
    cfg: flatmpc.MpcConfig
    duration: float
    noise_variance: float = 0.0
    seed: int = 0
    # closed-loop feasibility tolerance sized to the Euler-discretization
    # mismatch band of the executed states (solver library default is 1e-7)
    settings: SolverSettings = field(
        default_factory=lambda: SolverSettings(con_tol=5e-3))
    settle_threshold: float = 0.1

    def validate(self) -> None:
        if self.duration <= 0:
            raise ScenarioError("duration must be positive")
        if self.noise_variance < 0:
            raise ScenarioError("noise variance must be nonnegative")
        if abs(self.initial[3]) >= math.pi / 2 or abs(self.initial[4]) >= math.pi / 2:
            raise ScenarioError("initial attitude violates the model bounds")
        if self.initial[12] <= dfl.THRUST_FLOOR:
            raise ScenarioError("initial thrust at or below the singularity floor")
        z0 = dfl.flat_map(self.initial, self.params)
        for obs in self.obstacles:
            if flatmpc.cbf_value(z0, obs) < 0:
                raise ScenarioError("initial state is inside an obstacle")
        self.cfg.validate()


def load_scenario(path) -> Scenario:
    """Build a Scenario from the TOML schema (see README for the sections)."""
    with open(path, "rb") as f:
        raw = tomllib.load(f)
    try:
        body = raw.get("body", {})
        params = BodyParams(
            m=body.get("m", 0.7), d=body.get("d", 0.3),
            ix=body.get("ix", 1.241), iy=body.get("iy", 1.241),
            iz=body.get("iz", 1.241), g=body.get("g", 9.81))
        init = raw.get("initial", {})
        initial = pack_state(
            p=init.get("p", (0.0, 0.0, 0.0)),
            eulers=init.get("eulers", (0.0, 0.0, 0.0)),
            v=init.get("v", (0.0, 0.0, 0.0)),
            rates=init.get("rates", (0.0, 0.0, 0.0)),
            thrust=init.get("thrust", params.hover_thrust),
            thrust_rate=init.get("thrust_rate", 0.0))
        goal = raw.get("goal", {})
        mpc = raw.get("mpc", {})
        cfg = flatmpc.default_config(
            delta=mpc.get("delta", 0.05), n=mpc.get("n", 20),
            nc=mpc.get("nc", 20), gamma=mpc.get("gamma", 0.1),
            mode=mpc.get("mode", flatmpc.MODE_CBF),
            q_diag=mpc.get("q_diag"), r_diag=mpc.get("r_diag"),
            z_lo=mpc.get("z_lo"), z_hi=mpc.get("z_hi"),
            v_lo=mpc.get("v_lo"), v_hi=mpc.get("v_hi"))
        obstacles = [flatmpc.Obstacle(center=o["center"], radius=o["radius"])
                     for o in raw.get("obstacle", [])]
        sim = raw.get("sim", {})
        scenario = Scenario(
            params=params, initial=initial,
            goal_position=np.asarray(goal.get("p", (0.0, 0.0, 0.0)), dtype=float),
            goal_yaw=goal.get("yaw", 0.0), obstacles=obstacles, cfg=cfg,
            duration=sim.get("duration", 20.0),
            noise_variance=sim.get("noise_variance", 0.0),
            seed=sim.get("seed", 0))
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioError(f"bad scenario file {path}: {exc}") from exc
    scenario.validate()
    return scenario


@dataclass
class TrajectoryLog:
    """Per-step record of one closed-loop run (arrays indexed by step)."""

    scenario: Scenario
    t: np.ndarray
    states: np.ndarray        # true extended states
    measured: np.ndarray
    flats: np.ndarray         # flat map of the true states
    v: np.ndarray
    u: np.ndarray
    barrier: np.ndarray       # H per obstacle, true state
    dist: np.ndarray          # center distance per obstacle
    cost: np.ndarray
    status: list
    iters: np.ndarray
    solve_ms: np.ndarray
    fallback: np.ndarray      # bool, shifted-plan fallback engaged
    aborted: bool = False
    abort_reason: str | None = None

    def __len__(self):
        return self.t.size


def add_noise(x: np.ndarray, variance: float, rng: np.random.Generator) -> np.ndarray:
    """Corrupt the 12 rigid-state components with iid zero-mean Gaussian noise."""
    if variance == 0.0:
        return x.copy()
    out = x.copy()
    out[:12] += rng.normal(0.0, math.sqrt(variance), 12)
    return out


def run_closed_loop(scenario: Scenario) -> TrajectoryLog:
    """Run the cascade for the scenario duration and log every step."""
    scenario.validate()
    params = scenario.params
    cfg = scenario.cfg
    delta = cfg.model.delta
    steps = int(round(scenario.duration / delta))
    rng = np.random.default_rng(scenario.seed)
    shifted_obs = [flatmpc.shift_obstacle(o, scenario.goal_position)
                   for o in scenario.obstacles]
    closed = cfg.model.a_d + cfg.model.b_d @ cfg.k_gain
    n_obs = len(scenario.obstacles)

    rows = dict(t=[], states=[], measured=[], flats=[], v=[], u=[],
                barrier=[], dist=[], cost=[], status=[], iters=[],
                solve_ms=[], fallback=[])
    aborted = False
    reason = None

    x = scenario.initial.copy()
    pending_plan = None   # shifted previous input sequence
    pending_term = None   # its predicted terminal flat state

    for k in range(steps):
        try:
            measured = add_noise(x, scenario.noise_variance, rng)
            z_meas = dfl.flat_map(measured, params)
            z_true = dfl.flat_map(x, params)
        except DomainError as exc:
            aborted, reason = True, str(exc)
            break
        z0 = flatmpc.goal_shift(z_meas, scenario.goal_position, scenario.goal_yaw)
        problem = flatmpc.build_qcqp(z0, cfg, shifted_obs)
        res = solve(problem, warm_start=pending_plan, settings=scenario.settings)

        if res.status == STATUS_OPTIMAL:
            plan = res.x
            z_term = problem.state_maps[cfg.n] @ plan + problem.state_offsets[cfg.n]
            v_now = plan[:4]
            pending_plan = np.concatenate([plan[4:], cfg.k_gain @ z_term])
            pending_term = closed @ z_term
            used_fallback = False
        elif pending_plan is not None:
            v_now = pending_plan[:4]
            pending_plan = np.concatenate([pending_plan[4:], cfg.k_gain @ pending_term])
            pending_term = closed @ pending_term
            used_fallback = True
        else:
            aborted, reason = True, f"first solve failed with status {res.status}"
            break

        try:
            u_now = dfl.dfl_control(measured, v_now, params)
        except DomainError as exc:
            aborted, reason = True, str(exc)
            break

        rows["t"].append(k * delta)
        rows["states"].append(x.copy())
        rows["measured"].append(measured)
        rows["flats"].append(z_true)
        rows["v"].append(np.array(v_now))
        rows["u"].append(u_now)
        rows["barrier"].append(np.array(
            [flatmpc.cbf_value(z_true, o) for o in scenario.obstacles]))
        rows["dist"].append(np.array(
            [float(np.linalg.norm(x[POS] - o.center)) for o in scenario.obstacles]))
        rows["cost"].append(res.objective)
        rows["status"].append(res.status)
        rows["iters"].append(res.iterations)
        rows["solve_ms"].append(res.wall_time * 1e3)
        rows["fallback"].append(used_fallback)

        try:
            x = rk4_step(x, u_now, delta, params)
        except DomainError as exc:
            aborted, reason = True, str(exc)
            break
        if x[12] <= dfl.THRUST_FLOOR:
            aborted, reason = True, "thrust fell to the singularity floor"
            break

    steps_done = len(rows["t"])
    return TrajectoryLog(
        scenario=scenario,
        t=np.asarray(rows["t"]),
        states=np.asarray(rows["states"]).reshape(steps_done, 14),
        measured=np.asarray(rows["measured"]).reshape(steps_done, 14),
        flats=np.asarray(rows["flats"]).reshape(steps_done, 14),
        v=np.asarray(rows["v"]).reshape(steps_done, 4),
        u=np.asarray(rows["u"]).reshape(steps_done, 4),
        barrier=np.asarray(rows["barrier"]).reshape(steps_done, n_obs),
        dist=np.asarray(rows["dist"]).reshape(steps_done, n_obs),
        cost=np.asarray(rows["cost"]),
        status=rows["status"],
        iters=np.asarray(rows["iters"], dtype=int),
        solve_ms=np.asarray(rows["solve_ms"]),
        fallback=np.asarray(rows["fallback"], dtype=bool),
        aborted=aborted, abort_reason=reason)


@dataclass
class RunMetrics:
    min_distance: np.ndarray      # per obstacle
    settling_time: float          # inf if the error never settles
    max_cbf_violation: float      # executed-state decrease-condition violation
    infeasible_count: int
    fallback_count: int
    mean_solve_ms: float

    @property
    def min_distance_overall(self) -> float:
        return float(np.min(self.min_distance)) if self.min_distance.size else math.inf


def metrics(log: TrajectoryLog) -> RunMetrics:
    """Summary statistics of a run, recomputed from the logged trajectories."""
    if len(log) == 0:
        raise ValueError("empty trajectory log")
    sc = log.scenario
    err = np.linalg.norm(log.states[:, POS] - sc.goal_position, axis=1)
    above = np.nonzero(err > sc.settle_threshold)[0]
    if above.size == 0:
        settling = 0.0
    elif above[-1] == len(log) - 1:
        settling = math.inf
    else:
        settling = float(log.t[above[-1] + 1])

    max_viol = 0.0
    gamma = sc.cfg.gamma
    for j, obs in enumerate(sc.obstacles):
        h = log.barrier[:, j]
        resid = h[1:] - (1.0 - gamma) * h[:-1]
        if resid.size:
            max_viol = max(max_viol, -float(np.min(resid, initial=0.0)))

    if log.dist.size:
        min_dist = log.dist.min(axis=0)
    else:
        min_dist = np.zeros(0)
    return RunMetrics(
        min_distance=min_dist,
        settling_time=settling,
        max_cbf_violation=max_viol,
        infeasible_count=int(sum(s == "infeasible" for s in log.status)),
        fallback_count=int(log.fallback.sum()),
        mean_solve_ms=float(log.solve_ms.mean()))


def _fmt(value: float) -> str:
    return f"{value:.9g}"


def write_csv(log: TrajectoryLog, path) -> None:
    """Write the documented per-run CSV (9 significant digits)."""
    with open(path, "w") as f:
        f.write(",".join(CSV_COLUMNS) + "\n")
        for k in range(len(log)):
            s = log.states[k]
            h_min = float(log.barrier[k].min()) if log.barrier.shape[1] else math.inf
            d_min = float(log.dist[k].min()) if log.dist.shape[1] else math.inf
            vals = [log.t[k], s[0], s[1], s[2], s[3], s[4], s[5],
                    s[6], s[7], s[8], s[12],
                    *log.u[k], *log.v[k], h_min, d_min, log.cost[k]]
            f.write(",".join(_fmt(v) for v in vals))
            f.write(f",{log.status[k]},{log.iters[k]},{_fmt(log.solve_ms[k])}\n")


def load_log_csv(path, scenario: Scenario) -> TrajectoryLog:
    """Rebuild a metrics-grade log from a run CSV (positions, barrier, cost).

    Full states beyond the CSV columns are zero-filled; metrics() only needs
    positions, per-obstacle distances, statuses, and timing.
    """
    import csv as _csv

    with open(path) as f:
        reader = _csv.DictReader(f)
        recs = list(reader)
    n = len(recs)
    states = np.zeros((n, 14))
    flats = np.zeros((n, 14))
    t = np.zeros(n)
    cost = np.zeros(n)
    solve_ms = np.zeros(n)
    iters = np.zeros(n, dtype=int)
    status = []
    u = np.zeros((n, 4))
    v = np.zeros((n, 4))
    for i, rec in enumerate(recs):
        t[i] = float(rec["t"])
        states[i, 0:3] = [float(rec["x"]), float(rec["y"]), float(rec["z"])]
        states[i, 3:6] = [float(rec["phi"]), float(rec["theta"]), float(rec["psi"])]
        states[i, 6:9] = [float(rec["vx"]), float(rec["vy"]), float(rec["vz"])]
        states[i, 12] = float(rec["thrust"])
        u[i] = [float(rec[f"u{j}"]) for j in range(1, 5)]
        v[i] = [float(rec[f"v{j}"]) for j in range(1, 5)]
        flats[i, 0], flats[i, 4], flats[i, 8] = states[i, 0:3]
        flats[i, 12] = states[i, 5]
        cost[i] = float(rec["cost"])
        solve_ms[i] = float(rec["solve_ms"])
        iters[i] = int(rec["solver_iters"])
        status.append(rec["solver_status"])
    n_obs = len(scenario.obstacles)
    barrier = np.zeros((n, n_obs))
    dist = np.zeros((n, n_obs))
    for j, obs in enumerate(scenario.obstacles):
        diff = states[:, 0:3] - obs.center
        dist[:, j] = np.linalg.norm(diff, axis=1)
        barrier[:, j] = dist[:, j] ** 2 - obs.radius ** 2
    return TrajectoryLog(
        scenario=scenario, t=t, states=states, measured=states.copy(),
        flats=flats, v=v, u=u, barrier=barrier, dist=dist, cost=cost,
        status=status, iters=iters, solve_ms=solve_ms,
        fallback=np.zeros(n, dtype=bool))


def line_deviation(points: np.ndarray, start, end) -> np.ndarray:
    """Distance of each point from the 3-D line through start and end."""
    start = np.asarray(start, dtype=float)
    axis = np.asarray(end, dtype=float) - start
    axis = axis / np.linalg.norm(axis)
    rel = points - start
    along = rel @ axis
    return np.linalg.norm(rel - np.outer(along, axis), axis=1)
