"""Dynamic feedback linearization of the extended quadrotor.

With the thrust double integrator in the state, the position outputs have
relative degree 4 and yaw has relative degree 2 (total 14 = state dimension),
so the map from the virtual input

    v = (d4x/dt4, d4y/dt4, d4z/dt4, d2psi/dt2)

to the physical input u is invertible away from zero thrust and |phi| = pi/2:

    snap     = drift_xyz + Abar[0:3, :] @ u
    psi_acc  = drift_psi + Abar[3, :] @ u
    u        = Abar^{-1} (v - drift)

All drift and decoupling entries are closed forms obtained by differentiating
the translational dynamics a = (zeta/m) r3(eul) - g e3 twice (r3 = body z-axis
in the inertial frame). det(Abar) = d^3 zeta^2 cos(phi) / (Ix Iy Iz m^3).

The flat state z stacks the three position chains and the yaw pair:
    z = (x, x', x'', x''', y, ..., z, ..., psi, psi').
"""
from __future__ import annotations

import math

import numpy as np

from .vehicle import (
    EUL,
    POS,
    RATES,
    THRUST,
    THRUST_RATE,
    VEL,
    BodyParams,
    DomainError,
    SingularityError,
)

# below this total thrust [N] the decoupling matrix is declared singular
THRUST_FLOOR = 1e-3

FLAT_DIM = 14
VIRTUAL_DIM = 4

# flat-state channel indices of (x, y, z, psi)
FLAT_POS = (0, 4, 8)
FLAT_YAW = 12


def _check_attitude(x: np.ndarray) -> None:
    phi, theta = x[3], x[4]
    if abs(theta) >= math.pi / 2 or abs(phi) >= math.pi / 2:
        raise DomainError(
            f"attitude (phi={phi:.4f}, theta={theta:.4f}) outside (-pi/2, pi/2)^2"
        )


def _check_thrust(x: np.ndarray) -> None:
    if x[THRUST] <= THRUST_FLOOR:
        raise SingularityError(
            f"thrust {x[THRUST]:.6f} N at or below singularity floor {THRUST_FLOOR} N"
        )


def _r3_and_jacobian(eulers):
    """Body z-axis r3 and its Jacobian wrt (phi, theta, psi)."""
    phi, theta, psi = eulers
    cph, sph = math.cos(phi), math.sin(phi)
    cth, sth = math.cos(theta), math.sin(theta)
    cps, sps = math.cos(psi), math.sin(psi)
    r3 = np.array([sph * sps + cph * cps * sth,
                   cph * sps * sth - cps * sph,
                   cph * cth])
    jac = np.array([
        [cph * sps - cps * sph * sth, cph * cps * cth, cps * sph - cph * sps * sth],
        [-cph * cps - sph * sps * sth, cph * cth * sps, cph * cps * sth + sph * sps],
        [-cth * sph, -cph * sth, 0.0],
    ])
    return r3, jac


def _r3_rate_quadratic(eulers, rates) -> np.ndarray:
    """rates^T Hess(r3_i) rates for each component of r3."""
    phi, theta, psi = eulers
    cph, sph = math.cos(phi), math.sin(phi)
    cth, sth = math.cos(theta), math.sin(theta)
    cps, sps = math.cos(psi), math.sin(psi)
    dph, dth, dps = rates
    r3x = sph * sps + cph * cps * sth
    r3y = cph * sps * sth - cps * sph
    qx = (-r3x * (dph * dph + dps * dps)
          - cph * cps * sth * dth * dth
          + 2.0 * (cph * cps + sph * sps * sth) * dph * dps
          - 2.0 * cps * cth * sph * dph * dth
          - 2.0 * cph * cth * sps * dth * dps)
    qy = (-r3y * (dph * dph + dps * dps)
          - cph * sps * sth * dth * dth
          + 2.0 * (cph * sps - cps * sph * sth) * dph * dps
          - 2.0 * cth * sph * sps * dph * dth
          + 2.0 * cph * cps * cth * dth * dps)
    qz = -cph * cth * (dph * dph + dth * dth) + 2.0 * sph * sth * dph * dth
    return np.array([qx, qy, qz])


def _gyro(rates, params: BodyParams) -> np.ndarray:
    """Euler-rate accelerations with zero applied torque."""
    dph, dth, dps = rates
    return np.array([
        (params.iy - params.iz) / params.ix * dth * dps,
        (params.iz - params.ix) / params.iy * dph * dps,
        (params.ix - params.iy) / params.iz * dph * dth,
    ])


def static_decoupling(x: np.ndarray, params: BodyParams) -> np.ndarray:
    """Input coefficient matrix of the second output derivatives of the
    unextended plant (thrust still a direct input).

    Torques reach none of the position accelerations, so the torque columns
    of the position rows vanish and the matrix is structurally singular,
    which is what motivates the thrust extension.
    """
    _check_attitude(x)
    r3, _ = _r3_and_jacobian(x[EUL])
    a = np.zeros((4, 4))
    a[0:3, 0] = r3 / params.m
    a[3, 3] = params.d / params.iz
    return a


def drift_terms(x: np.ndarray, params: BodyParams) -> np.ndarray:
    """Zero-input value of (d4p/dt4, d2psi/dt2) along the extended dynamics."""
    _check_attitude(x)
    _check_thrust(x)
    rates = x[RATES]
    _, jac = _r3_and_jacobian(x[EUL])
    quad = _r3_rate_quadratic(x[EUL], rates)
    snap = (2.0 * x[THRUST_RATE] * (jac @ rates)
            + x[THRUST] * (jac @ _gyro(rates, params) + quad)) / params.m
    psi_acc = (params.ix - params.iy) / params.iz * rates[0] * rates[1]
    out = np.empty(4)
    out[0:3] = snap
    out[3] = psi_acc
    return out


def decoupling_matrix(x: np.ndarray, params: BodyParams) -> np.ndarray:
    """Extended decoupling matrix Abar: input coefficients of the 4th/2nd
    output derivatives."""
    _check_attitude(x)
    r3, jac = _r3_and_jacobian(x[EUL])
    a = np.zeros((4, 4))
    a[0:3, 0] = r3 / params.m
    gains = np.array([params.d / params.ix, params.d / params.iy, params.d / params.iz])
    a[0:3, 1:4] = (x[THRUST] / params.m) * jac * gains
    a[3, 3] = params.d / params.iz
    return a


def decoupling_inverse(x: np.ndarray, params: BodyParams) -> np.ndarray:
    """Inverse of the extended decoupling matrix.

    Raises SingularityError below the thrust floor, DomainError outside the
    attitude bounds.
    """
    _check_thrust(x)
    return np.linalg.inv(decoupling_matrix(x, params))


def dfl_control(x: np.ndarray, v: np.ndarray, params: BodyParams) -> np.ndarray:
    """Physical input realizing the virtual input v: u = Abar^{-1}(v - drift)."""
    rhs = np.asarray(v, dtype=float) - drift_terms(x, params)
    return np.linalg.solve(decoupling_matrix(x, params), rhs)


def flat_map(x: np.ndarray, params: BodyParams) -> np.ndarray:
    """Map the extended state to the chain-of-integrators state z.

    Accelerations come from the translational dynamics, jerks from their
    first time derivative (thrust rate plus attitude motion).
    """
    _check_attitude(x)
    r3, jac = _r3_and_jacobian(x[EUL])
    thrust_acc = x[THRUST] / params.m
    accel = thrust_acc * r3
    accel[2] -= params.g
    jerk = (x[THRUST_RATE] * r3 + x[THRUST] * (jac @ x[RATES])) / params.m

    z = np.empty(FLAT_DIM)
    z[0:12:4] = x[POS]
    z[1:12:4] = x[VEL]
    z[2:12:4] = accel
    z[3:12:4] = jerk
    z[12] = x[5]
    z[13] = x[11]
    return z
