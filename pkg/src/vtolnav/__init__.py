"""Safe VTOL-UAV navigation toolkit: flat linear MPC with discrete barrier
constraints, mapped onto the nonlinear quadrotor by dynamic feedback
linearization, with an embedded dense SQP solver."""

from .vehicle import (
    BodyParams,
    DomainError,
    SingularityError,
    derivatives,
    hover_state,
    pack_state,
    rk4_step,
    rotation_matrix,
)
from .dfl import (
    decoupling_inverse,
    decoupling_matrix,
    dfl_control,
    drift_terms,
    flat_map,
    static_decoupling,
)
from .flatmpc import (
    LinearModel,
    MpcConfig,
    Obstacle,
    QcqpProblem,
    build_continuous,
    build_qcqp,
    cbf_value,
    default_config,
    discretize,
    goal_shift,
    goal_unshift,
    lqr_gain,
    terminal_weight,
)
from .solver import SolveResult, SolverSettings, qp_solve, solve

__version__ = "0.1.0"
