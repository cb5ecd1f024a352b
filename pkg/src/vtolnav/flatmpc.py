"""Flat linear model, terminal LQR machinery, and the per-step MPC problem.

The flat model is three 4-integrator chains (x, y, z) plus a double
integrator (yaw):

    z' = A z + B v,   y = C z,   C selects (x, y, z, psi)

discretized forward-Euler: Ad = I + delta*A, Bd = delta*B.

The per-step problem is condensed over the stacked input sequence
V = (v_0, ..., v_{N-1}): states are affine in V, the cost is a positive
definite quadratic, box constraints and terminal-set rows are linear, and
every safety row is a quadratic form required to be nonnegative:

    barrier mode:   H(z_{k+1}) - (1-gamma) H(z_k) >= 0,   k = 0..N-1
    distance mode:  H(z_k) >= 0,                          k = 1..N

with H(z) = |pos(z) - center|^2 - radius^2 per obstacle.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .dfl import FLAT_DIM, FLAT_POS, FLAT_YAW, VIRTUAL_DIM

BOX_CHANNELS = (0, 4, 8, 12)  # flat channels carrying position/yaw boxes

MODE_CBF = "cbf"
MODE_ED = "ed"


@dataclass(frozen=True)
class LinearModel:
    """Continuous and (optionally) discretized flat model matrices."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    a_d: np.ndarray | None = None
    b_d: np.ndarray | None = None
    delta: float | None = None


def build_continuous() -> LinearModel:
    """Block structure: three 4-chains feeding from v1..v3, a 2-chain from v4."""
    a = np.zeros((FLAT_DIM, FLAT_DIM))
    b = np.zeros((FLAT_DIM, VIRTUAL_DIM))
    for chain, offset in enumerate((0, 4, 8)):
        for i in range(3):
            a[offset + i, offset + i + 1] = 1.0
        b[offset + 3, chain] = 1.0
    a[12, 13] = 1.0
    b[13, 3] = 1.0
    c = np.zeros((4, FLAT_DIM))
    for row, ch in enumerate(BOX_CHANNELS):
        c[row, ch] = 1.0
    return LinearModel(a=a, b=b, c=c)


def discretize(model: LinearModel, delta: float) -> LinearModel:
    """Forward-Euler discrete matrices Ad = I + delta*A, Bd = delta*B."""
    if delta < 0:
        raise ValueError("sampling period must be nonnegative")
    a_d = np.eye(FLAT_DIM) + delta * model.a
    b_d = delta * model.b
    return replace(model, a_d=a_d, b_d=b_d, delta=delta)


def lqr_gain(a_d: np.ndarray, b_d: np.ndarray, q: np.ndarray, r: np.ndarray,
             tol: float = 1e-10, max_iter: int = 200_000) -> np.ndarray:
    """Discrete LQR gain K (u = K z) from the fixed-point Riccati iteration.

    Iterates P <- Q + A'PA - A'PB (R + B'PB)^{-1} B'PA until the equation
    residual drops below tol; raises RuntimeError on non-convergence.
    """
    a_d = np.asarray(a_d, dtype=float)
    b_d = np.asarray(b_d, dtype=float)
    q = np.asarray(q, dtype=float)
    r = np.asarray(r, dtype=float)
    p = q.copy()
    for _ in range(max_iter):
        btp = b_d.T @ p
        gain = np.linalg.solve(r + btp @ b_d, btp @ a_d)
        p_next = q + a_d.T @ p @ (a_d - b_d @ gain)
        p_next = 0.5 * (p_next + p_next.T)
        if np.max(np.abs(p_next - p)) <= tol:
            p = p_next
            break
        p = p_next
    else:
        raise RuntimeError(f"Riccati iteration did not converge in {max_iter} steps")
    btp = b_d.T @ p
    k = -np.linalg.solve(r + btp @ b_d, btp @ a_d)
    if np.max(np.abs(np.linalg.eigvals(a_d + b_d @ k))) >= 1.0:
        raise RuntimeError("Riccati gain failed to stabilize the closed loop")
    return k


def terminal_weight(a_d: np.ndarray, b_d: np.ndarray, k: np.ndarray,
                    q: np.ndarray, r: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Terminal weight solving Qbar = M' Qbar M + Q + K'RK with M = Ad + Bd K.

    Uses the doubling iteration X <- X + T'XT, T <- T^2, which converges
    whenever the closed loop is strictly stable.
    """
    m = a_d + b_d @ k
    if np.max(np.abs(np.linalg.eigvals(m))) >= 1.0:
        raise RuntimeError("closed-loop matrix is not strictly stable")
    x = q + k.T @ r @ k
    t = m.copy()
    for _ in range(200):
        x = x + t.T @ x @ t
        t = t @ t
        if np.max(np.abs(t)) < tol:
            break
    return 0.5 * (x + x.T)


@dataclass(frozen=True)
class Obstacle:
    """Spherical keep-out region."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        if self.center.shape != (3,):
            raise ValueError("obstacle center must be a 3-vector")
        if self.radius <= 0:
            raise ValueError("obstacle radius must be positive")


def cbf_value(z: np.ndarray, obs: Obstacle) -> float:
    """Squared center distance minus squared radius; >= 0 iff outside/on the sphere."""
    dx = z[FLAT_POS[0]] - obs.center[0]
    dy = z[FLAT_POS[1]] - obs.center[1]
    dz = z[FLAT_POS[2]] - obs.center[2]
    return dx * dx + dy * dy + dz * dz - obs.radius * obs.radius


def goal_shift(z: np.ndarray, position, yaw: float) -> np.ndarray:
    """Express z relative to the goal (subtract it from the output channels)."""
    out = np.array(z, dtype=float)
    out[FLAT_POS[0]] -= position[0]
    out[FLAT_POS[1]] -= position[1]
    out[FLAT_POS[2]] -= position[2]
    out[FLAT_YAW] -= yaw
    return out


def goal_unshift(z: np.ndarray, position, yaw: float) -> np.ndarray:
    """Inverse of goal_shift."""
    out = np.array(z, dtype=float)
    out[FLAT_POS[0]] += position[0]
    out[FLAT_POS[1]] += position[1]
    out[FLAT_POS[2]] += position[2]
    out[FLAT_YAW] += yaw
    return out


def shift_obstacle(obs: Obstacle, position) -> Obstacle:
    """Obstacle expressed in the goal-relative frame."""
    return Obstacle(center=obs.center - np.asarray(position, dtype=float),
                    radius=obs.radius)


@dataclass(frozen=True)
class MpcConfig:
    """Horizons, weights, bounds, terminal pieces, and the safety mode.

    Box bounds apply to the goal-relative output channels (x, y, z, psi).
    """

    model: LinearModel
    n: int = 20
    nc: int = 20
    gamma: float = 0.1
    q: np.ndarray = None
    r: np.ndarray = None
    qbar: np.ndarray = None
    k_gain: np.ndarray = None
    z_lo: np.ndarray = None
    z_hi: np.ndarray = None
    v_lo: np.ndarray = None
    v_hi: np.ndarray = None
    mode: str = MODE_CBF

    def validate(self) -> None:
        if self.model.a_d is None:
            raise ValueError("config model must be discretized")
        if self.n < 1:
            raise ValueError("prediction horizon must be at least 1")
        if self.nc < 0:
            raise ValueError("constraint-checking horizon must be nonnegative")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")
        if self.mode not in (MODE_CBF, MODE_ED):
            raise ValueError(f"unknown safety mode {self.mode!r}")
        if np.min(np.linalg.eigvalsh(self.q)) < -1e-12:
            raise ValueError("state weight must be positive semidefinite")
        if np.min(np.linalg.eigvalsh(self.r)) <= 0.0:
            raise ValueError("input weight must be positive definite")
        closed = self.model.a_d + self.model.b_d @ self.k_gain
        if np.max(np.abs(np.linalg.eigvals(closed))) >= 1.0:
            raise ValueError("terminal gain does not stabilize the discrete model")
        resid = self.qbar - closed.T @ self.qbar @ closed - self.q \
            - self.k_gain.T @ self.r @ self.k_gain
        if np.linalg.norm(resid) > 1e-8:
            raise ValueError("terminal weight violates the Lyapunov equation")


def default_config(delta: float = 0.05, n: int = 20, nc: int = 20,
                   gamma: float = 0.1, mode: str = MODE_CBF,
                   q_diag=None, r_diag=None,
                   z_lo=None, z_hi=None, v_lo=None, v_hi=None) -> MpcConfig:
    """Config with the stock weights (10 on output channels, 1 elsewhere; R = I),
    +-10 m / +-pi boxes, +-100 input bounds, and LQR terminal pieces."""
    model = discretize(build_continuous(), delta)
    if q_diag is None:
        q_diag = np.ones(FLAT_DIM)
        q_diag[list(BOX_CHANNELS)] = 10.0
    if r_diag is None:
        r_diag = np.ones(VIRTUAL_DIM)
    q = np.diag(np.asarray(q_diag, dtype=float))
    r = np.diag(np.asarray(r_diag, dtype=float))
    k = lqr_gain(model.a_d, model.b_d, q, r)
    qbar = terminal_weight(model.a_d, model.b_d, k, q, r)
    cfg = MpcConfig(
        model=model, n=n, nc=nc, gamma=gamma, q=q, r=r, qbar=qbar, k_gain=k,
        z_lo=np.asarray([-10.0, -10.0, -10.0, -np.pi] if z_lo is None else z_lo, dtype=float),
        z_hi=np.asarray([10.0, 10.0, 10.0, np.pi] if z_hi is None else z_hi, dtype=float),
        v_lo=np.asarray([-100.0] * 4 if v_lo is None else v_lo, dtype=float),
        v_hi=np.asarray([100.0] * 4 if v_hi is None else v_hi, dtype=float),
        mode=mode,
    )
    cfg.validate()
    return cfg


@dataclass(frozen=True)
class QuadConstraint:
    """Quadratic row  |A1 x + b1|^2 - scale * |A2 x + b2|^2 + const >= 0.

    Stored factored (the Gram pieces are rank <= 3) so evaluation along the
    SQP iterations stays cheap; hessian() materializes 2*(A1'A1 - scale*A2'A2).
    """

    a1: np.ndarray
    b1: np.ndarray
    const: float
    scale: float = 0.0
    a2: np.ndarray = None
    b2: np.ndarray = None

    def value(self, x: np.ndarray) -> float:
        w = self.a1 @ x + self.b1
        out = float(w @ w) + self.const
        if self.scale:
            w2 = self.a2 @ x + self.b2
            out -= self.scale * float(w2 @ w2)
        return out

    def grad(self, x: np.ndarray) -> np.ndarray:
        out = 2.0 * (self.a1.T @ (self.a1 @ x + self.b1))
        if self.scale:
            out -= 2.0 * self.scale * (self.a2.T @ (self.a2 @ x + self.b2))
        return out

    def hessian(self) -> np.ndarray:
        out = 2.0 * self.a1.T @ self.a1
        if self.scale:
            out = out - 2.0 * self.scale * self.a2.T @ self.a2
        return out


@dataclass
class QcqpProblem:
    """Condensed per-step problem over the stacked input sequence.

    minimize 0.5 x'Hx + g'x + const
    s.t.     lin_g @ x <= lin_h
             quad_row.value(x) >= 0  for every quadratic row
    """

    dim: int
    hess: np.ndarray
    grad: np.ndarray
    const: float
    lin_g: np.ndarray
    lin_h: np.ndarray
    quads: list  # of QuadConstraint
    # prediction data: z_k = state_maps[k] @ x + state_offsets[k]
    state_maps: list = field(default_factory=list)
    state_offsets: list = field(default_factory=list)

    def predict_states(self, x: np.ndarray) -> np.ndarray:
        """Stacked state sequence z_0..z_N implied by the decision vector."""
        return np.stack([m @ x + f for m, f in
                         zip(self.state_maps, self.state_offsets)])

    def objective(self, x: np.ndarray) -> float:
        return 0.5 * float(x @ self.hess @ x) + float(self.grad @ x) + self.const

    def max_violation(self, x: np.ndarray) -> float:
        viol = 0.0
        if self.lin_g.size:
            viol = max(viol, float(np.max(self.lin_g @ x - self.lin_h, initial=0.0)))
        for row in self.quads:
            viol = max(viol, -min(0.0, row.value(x)))
        return viol


def _box_rows(coeff: np.ndarray, offset: np.ndarray, lo: np.ndarray, hi: np.ndarray):
    """Rows for lo <= coeff@x + offset <= hi as (G, h) with G x <= h."""
    g = np.vstack([coeff, -coeff])
    h = np.concatenate([hi - offset, offset - lo])
    return g, h


def build_qcqp(z0: np.ndarray, cfg: MpcConfig, obstacles) -> QcqpProblem:
    """Assemble the condensed problem at the (goal-relative) flat state z0."""
    cfg.validate()
    n = cfg.n
    a_d, b_d, c = cfg.model.a_d, cfg.model.b_d, cfg.model.c
    dim = VIRTUAL_DIM * n

    # prediction matrices: z_k = maps[k] @ V + offs[k]
    maps = [np.zeros((FLAT_DIM, dim))]
    offs = [np.asarray(z0, dtype=float)]
    for k in range(n):
        nxt = a_d @ maps[k]
        nxt[:, VIRTUAL_DIM * k:VIRTUAL_DIM * (k + 1)] += b_d
        maps.append(nxt)
        offs.append(a_d @ offs[k])

    hess = np.zeros((dim, dim))
    grad = np.zeros(dim)
    const = 0.0
    for k in range(n):
        qm = cfg.q @ maps[k]
        hess += 2.0 * maps[k].T @ qm
        grad += 2.0 * qm.T @ offs[k]
        const += float(offs[k] @ cfg.q @ offs[k])
    qm = cfg.qbar @ maps[n]
    hess += 2.0 * maps[n].T @ qm
    grad += 2.0 * qm.T @ offs[n]
    const += float(offs[n] @ cfg.qbar @ offs[n])
    for k in range(n):
        sl = slice(VIRTUAL_DIM * k, VIRTUAL_DIM * (k + 1))
        hess[sl, sl] += 2.0 * cfg.r
    hess = 0.5 * (hess + hess.T)

    lin_g, lin_h = [], []
    for k in range(n):  # output boxes over the horizon
        g, h = _box_rows(c @ maps[k], c @ offs[k], cfg.z_lo, cfg.z_hi)
        lin_g.append(g)
        lin_h.append(h)
    eye = np.eye(dim)
    for k in range(n):  # input boxes
        sl = slice(VIRTUAL_DIM * k, VIRTUAL_DIM * (k + 1))
        g, h = _box_rows(eye[sl], np.zeros(VIRTUAL_DIM), cfg.v_lo, cfg.v_hi)
        lin_g.append(g)
        lin_h.append(h)
    closed = a_d + b_d @ cfg.k_gain
    power = np.eye(FLAT_DIM)
    for _ in range(cfg.nc + 1):  # terminal-set rows on (Ad+BdK)^i z_N
        km = cfg.k_gain @ power
        g, h = _box_rows(km @ maps[n], km @ offs[n], cfg.v_lo, cfg.v_hi)
        lin_g.append(g)
        lin_h.append(h)
        cm = c @ power
        g, h = _box_rows(cm @ maps[n], cm @ offs[n], cfg.z_lo, cfg.z_hi)
        lin_g.append(g)
        lin_h.append(h)
        power = closed @ power

    sel = np.zeros((3, FLAT_DIM))
    for row, ch in enumerate(FLAT_POS):
        sel[row, ch] = 1.0
    quads = []
    for obs in obstacles:
        r2 = obs.radius * obs.radius
        pos_maps = [sel @ maps[k] for k in range(n + 1)]
        pos_offs = [sel @ offs[k] - obs.center for k in range(n + 1)]
        if cfg.mode == MODE_CBF:
            keep = 1.0 - cfg.gamma
            for k in range(n):
                quads.append(QuadConstraint(
                    a1=pos_maps[k + 1], b1=pos_offs[k + 1],
                    const=-r2 + keep * r2, scale=keep,
                    a2=pos_maps[k], b2=pos_offs[k]))
        else:
            for k in range(1, n + 1):
                quads.append(QuadConstraint(
                    a1=pos_maps[k], b1=pos_offs[k], const=-r2))

    return QcqpProblem(
        dim=dim, hess=hess, grad=grad, const=const,
        lin_g=np.vstack(lin_g), lin_h=np.concatenate(lin_h),
        quads=quads, state_maps=maps, state_offsets=offs)


def check_terminal_safe_invariance(cfg: MpcConfig, obs: Obstacle,
                                   n_samples: int = 1000, seed: int = 0) -> float:
    """Sampled check of the terminal-set premise H(M z) > (1-gamma) H(z).

    Draws random directions, scales each onto the boundary of the terminal
    row set, and returns the fraction of samples satisfying the inequality.
    """
    rng = np.random.default_rng(seed)
    closed = cfg.model.a_d + cfg.model.b_d @ cfg.k_gain
    rows = []
    power = np.eye(FLAT_DIM)
    for _ in range(cfg.nc + 1):
        rows.append(cfg.k_gain @ power / cfg.v_hi[:, None])
        rows.append(cfg.model.c @ power / cfg.z_hi[:, None])
        power = closed @ power
    rows = np.vstack(rows)
    ok = 0
    for _ in range(n_samples):
        direction = rng.standard_normal(FLAT_DIM)
        ratio = np.max(np.abs(rows @ direction))
        z = direction / ratio
        if cbf_value(closed @ z, obs) > (1.0 - cfg.gamma) * cbf_value(z, obs):
            ok += 1
    return ok / n_samples
