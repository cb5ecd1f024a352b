"""Nonlinear underactuated quadrotor plant with a thrust double-integrator extension.

State layout (14,):
    [0:3]   p       position, inertial frame [m]
    [3:6]   eul     ZYX Euler angles (phi, theta, psi) [rad]
    [6:9]   v       linear velocity, inertial frame [m/s]
    [9:12]  rates   Euler angle rates (dphi, dtheta, dpsi) [rad/s]
    [12]    zeta    total thrust [N]
    [13]    dzeta   thrust rate [N/s]

Input layout (4,):
    [0] U1  thrust second derivative command [N/s^2]
    [1:4]   body torques about x, y, z [N*m]

Model:
    p'     = v
    eul'   = rates                       (Euler rates carried as states)
    v'     = (zeta/m) R(eul) e3 - g e3   (thrust along +body-z)
    rates' = gyroscopic terms + diag(d/Ix, d/Iy, d/Iz) @ torques
    zeta'  = dzeta,  dzeta' = U1
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

STATE_DIM = 14
INPUT_DIM = 4

POS = slice(0, 3)
EUL = slice(3, 6)
VEL = slice(6, 9)
RATES = slice(9, 12)
THRUST = 12
THRUST_RATE = 13


class DomainError(ValueError):
    """State left the model's validity region (attitude bounds)."""


class SingularityError(DomainError):
    """Decoupling matrix is singular (thrust at or below the floor)."""


@dataclass(frozen=True)
class BodyParams:
    """Rigid-body constants: mass [kg], arm length rotor-to-CoM [m],
    diagonal inertia [kg*m^2], gravity [m/s^2]."""

    m: float = 0.7
    d: float = 0.3
    ix: float = 1.241
    iy: float = 1.241
    iz: float = 1.241
    g: float = 9.81

    def __post_init__(self):
        for name in ("m", "d", "ix", "iy", "iz", "g"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"BodyParams.{name} must be positive")

    @property
    def hover_thrust(self) -> float:
        return self.m * self.g


def pack_state(p=(0.0, 0.0, 0.0), eulers=(0.0, 0.0, 0.0), v=(0.0, 0.0, 0.0),
               rates=(0.0, 0.0, 0.0), thrust=0.0, thrust_rate=0.0) -> np.ndarray:
    """Assemble a (14,) state vector from named pieces."""
    x = np.empty(STATE_DIM)
    x[POS] = p
    x[EUL] = eulers
    x[VEL] = v
    x[RATES] = rates
    x[THRUST] = thrust
    x[THRUST_RATE] = thrust_rate
    return x


def hover_state(params: BodyParams, p=(0.0, 0.0, 0.0), yaw: float = 0.0) -> np.ndarray:
    """Equilibrium state at position p with the given yaw."""
    return pack_state(p=p, eulers=(0.0, 0.0, yaw), thrust=params.hover_thrust)


def rotation_matrix(eulers) -> np.ndarray:
    """ZYX rotation matrix R = Rz(psi) Ry(theta) Rx(phi), body to inertial."""
    phi, theta, psi = eulers
    cph, sph = math.cos(phi), math.sin(phi)
    cth, sth = math.cos(theta), math.sin(theta)
    cps, sps = math.cos(psi), math.sin(psi)
    return np.array([
        [cps * cth, cps * sph * sth - cph * sps, sph * sps + cph * cps * sth],
        [cth * sps, cph * cps + sph * sps * sth, cph * sps * sth - cps * sph],
        [-sth, cth * sph, cph * cth],
    ])


def body_z_axis(eulers) -> np.ndarray:
    """Third column of the rotation matrix (thrust direction in inertial frame)."""
    phi, theta, psi = eulers
    cph, sph = math.cos(phi), math.sin(phi)
    cth, sth = math.cos(theta), math.sin(theta)
    cps, sps = math.cos(psi), math.sin(psi)
    return np.array([sph * sps + cph * cps * sth,
                     cph * sps * sth - cps * sph,
                     cph * cth])


def derivatives(x: np.ndarray, u: np.ndarray, params: BodyParams) -> np.ndarray:
    """Time derivative of the extended state under input u.

    Raises DomainError if |theta| >= pi/2.
    """
    theta = x[4]
    if abs(theta) >= math.pi / 2:
        raise DomainError(f"pitch angle {theta:.4f} outside (-pi/2, pi/2)")

    dx = np.empty(STATE_DIM)
    dx[POS] = x[VEL]
    dx[EUL] = x[RATES]

    thrust_acc = x[THRUST] / params.m
    dx[VEL] = thrust_acc * body_z_axis(x[EUL])
    dx[8] -= params.g

    dphi, dth, dpsi = x[RATES]
    dx[9] = (params.iy - params.iz) / params.ix * dth * dpsi + params.d / params.ix * u[1]
    dx[10] = (params.iz - params.ix) / params.iy * dphi * dpsi + params.d / params.iy * u[2]
    dx[11] = (params.ix - params.iy) / params.iz * dphi * dth + params.d / params.iz * u[3]

    dx[THRUST] = x[THRUST_RATE]
    dx[THRUST_RATE] = u[0]
    return dx


def rk4_step(x: np.ndarray, u: np.ndarray, dt: float, params: BodyParams) -> np.ndarray:
    """Classical RK4 step with the input held constant (zero-order hold)."""
    if dt == 0.0:
        return x.copy()
    k1 = derivatives(x, u, params)
    k2 = derivatives(x + 0.5 * dt * k1, u, params)
    k3 = derivatives(x + 0.5 * dt * k2, u, params)
    k4 = derivatives(x + dt * k3, u, params)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
