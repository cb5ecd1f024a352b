"""Independent numerical oracles used by the verification suite and tests.

These deliberately avoid the closed-form drift/decoupling expressions: output
derivatives are estimated with 5-point finite-difference stencils applied to
quantities read off trajectories of the plant integrator, and the flat chain
is integrated directly from its block matrices.
"""
from __future__ import annotations

import numpy as np

from . import dfl, flatmpc
from .vehicle import BodyParams, body_z_axis, derivatives, rk4_step


def accel_of(x: np.ndarray, params: BodyParams) -> np.ndarray:
    """Translational acceleration read from the plant's own force balance."""
    out = (x[12] / params.m) * body_z_axis(x[3:6])
    out[2] -= params.g
    return out


def _stencil_states(x0: np.ndarray, u: np.ndarray, params: BodyParams, h: float):
    """States at t = -2h..2h under constant input, integrated with RK4."""
    nodes = {0: x0}
    xf = x0
    for i in (1, 2):
        xf = rk4_step(xf, u, h, params)
        nodes[i] = xf
    xb = x0
    for i in (1, 2):
        xb = rk4_step(xb, u, -h, params)
        nodes[-i] = xb
    return nodes


def fd_output_derivatives(x0: np.ndarray, u: np.ndarray, params: BodyParams,
                          h: float = 1e-4) -> np.ndarray:
    """5-point estimate of (d4p/dt4, d2psi/dt2) under constant input u.

    The position snap is the second derivative of the acceleration along the
    trajectory; the yaw acceleration is the first derivative of the yaw rate.
    """
    nodes = _stencil_states(x0, u, params, h)
    a = {i: accel_of(nodes[i], params) for i in nodes}
    snap = (-a[-2] + 16 * a[-1] - 30 * a[0] + 16 * a[1] - a[2]) / (12 * h * h)
    psi_acc = (nodes[-2][11] - 8 * nodes[-1][11]
               + 8 * nodes[1][11] - nodes[2][11]) / (12 * h)
    return np.concatenate([snap, [psi_acc]])


def closed_loop_rk4(x0: np.ndarray, v_of_t, params: BodyParams,
                    dt: float, steps: int) -> np.ndarray:
    """Integrate the plant under the linearizing feedback, evaluating the
    feedback (and v) at every RK4 stage. Returns states at all step times."""
    def rhs(t, x):
        return derivatives(x, dfl.dfl_control(x, v_of_t(t), params), params)

    out = np.empty((steps + 1, x0.size))
    out[0] = x0
    x = x0
    t = 0.0
    for k in range(steps):
        k1 = rhs(t, x)
        k2 = rhs(t + 0.5 * dt, x + 0.5 * dt * k1)
        k3 = rhs(t + 0.5 * dt, x + 0.5 * dt * k2)
        k4 = rhs(t + dt, x + dt * k3)
        x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t += dt
        out[k + 1] = x
    return out


def chain_rk4(z0: np.ndarray, v_of_t, dt: float, steps: int) -> np.ndarray:
    """Integrate the flat chain z' = Az + Bv with the same stage sampling."""
    model = flatmpc.build_continuous()
    a, b = model.a, model.b

    def rhs(t, z):
        return a @ z + b @ v_of_t(t)

    out = np.empty((steps + 1, z0.size))
    out[0] = z0
    z = z0
    t = 0.0
    for k in range(steps):
        k1 = rhs(t, z)
        k2 = rhs(t + 0.5 * dt, z + 0.5 * dt * k1)
        k3 = rhs(t + 0.5 * dt, z + 0.5 * dt * k2)
        k4 = rhs(t + dt, z + dt * k3)
        z = z + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t += dt
        out[k + 1] = z
    return out


def random_admissible_state(rng: np.random.Generator, params: BodyParams,
                            attitude: float = 0.35, rate: float = 0.5,
                            speed: float = 1.0) -> np.ndarray:
    """Sample a state comfortably inside the attitude/thrust validity region."""
    from .vehicle import pack_state

    return pack_state(
        p=rng.uniform(-2.0, 2.0, 3),
        eulers=rng.uniform(-attitude, attitude, 3),
        v=rng.uniform(-speed, speed, 3),
        rates=rng.uniform(-rate, rate, 3),
        thrust=params.hover_thrust + rng.uniform(-1.5, 1.5),
        thrust_rate=rng.uniform(-0.5, 0.5))


def smooth_virtual_input(rng: np.random.Generator, amplitude: float = 1.5):
    """Random smooth v(t): per-channel sum of two sinusoids."""
    amps = rng.uniform(-amplitude, amplitude, (4, 2))
    freqs = rng.uniform(0.3, 3.0, (4, 2))
    phases = rng.uniform(0.0, 2.0 * np.pi, (4, 2))

    def v_of_t(t):
        return np.sum(amps * np.sin(freqs * t + phases), axis=1)

    return v_of_t
