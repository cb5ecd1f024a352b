"""Quick oracle suite behind the `verify` CLI command.

Trimmed-down versions of the acceptance oracles: enough to confirm an
installation reproduces the core numerics without running the full test
suite. Prints one PASS/FAIL line per check and returns the overall result.
"""
from __future__ import annotations

import numpy as np

from . import dfl, flatmpc, oracles, solver
from .vehicle import BodyParams


def _run(name: str, fn) -> bool:
    try:
        fn()
    except AssertionError as exc:
        print(f"FAIL {name}: {exc}")
        return False
    print(f"PASS {name}")
    return True


def run_verification(seed: int = 0) -> bool:
    params = BodyParams()
    rng = np.random.default_rng(seed)
    checks = []

    def linearization_exactness():
        for _ in range(3):
            x0 = oracles.random_admissible_state(rng, params)
            v_fn = oracles.smooth_virtual_input(rng)
            plant = oracles.closed_loop_rk4(x0, v_fn, params, 1e-3, 400)
            chain = oracles.chain_rk4(dfl.flat_map(x0, params), v_fn, 1e-3, 400)
            mapped = np.array([dfl.flat_map(x, params) for x in plant])
            err = np.max(np.abs(mapped - chain))
            assert err <= 1e-6, f"flat trajectory discrepancy {err:.2e}"

    def drift_and_decoupling():
        for _ in range(50):
            x0 = oracles.random_admissible_state(rng, params)
            u = rng.normal(0.0, 1.0, 4)
            fd = oracles.fd_output_derivatives(x0, u, params)
            pred = dfl.drift_terms(x0, params) + dfl.decoupling_matrix(x0, params) @ u
            err = np.max(np.abs(fd - pred) / np.maximum(1.0, np.abs(fd)))
            assert err <= 1e-3, f"finite-difference mismatch {err:.2e}"

    def riccati_pieces():
        one = np.array([[1.0]])
        k = flatmpc.lqr_gain(one, one, one, one)
        golden = (1.0 + np.sqrt(5.0)) / 2.0
        assert abs(k[0, 0] + golden / (1.0 + golden)) <= 1e-10, "scalar gain"
        qb = flatmpc.terminal_weight(np.array([[0.5]]), np.zeros((1, 1)),
                                     np.zeros((1, 1)), one, one)
        assert abs(qb[0, 0] - 4.0 / 3.0) <= 1e-10, "scalar terminal weight"
        cfg = flatmpc.default_config()
        cfg.validate()

    def solver_oracle():
        prob = flatmpc.QcqpProblem(
            dim=2, hess=2.0 * np.eye(2), grad=np.array([-1.0, 0.0]), const=0.25,
            lin_g=np.zeros((0, 2)), lin_h=np.zeros(0),
            quads=[flatmpc.QuadConstraint(a1=np.eye(2), b1=np.zeros(2), const=-1.0)])
        res = solver.solve(prob, warm_start=np.array([0.5, 0.0]))
        assert res.status == solver.STATUS_OPTIMAL, res.status
        assert np.max(np.abs(res.x - [1.0, 0.0])) <= 1e-6, f"solution {res.x}"
        for _ in range(10):
            n = int(rng.integers(2, 8))
            root = rng.normal(0.0, 1.0, (n, n))
            hess = root.T @ root + 0.1 * np.eye(n)
            grad = rng.normal(0.0, 1.0, n)
            g = rng.normal(0.0, 1.0, (2 * n, n))
            h = g @ rng.normal(0.0, 1.0, n) + rng.uniform(0.1, 1.0, 2 * n)
            qp = solver.qp_solve(hess, grad, g, h)
            assert qp.status == solver.STATUS_OPTIMAL
            assert qp.comp <= 1e-9 and qp.r_dual <= 1e-7, "KKT residuals"

    def condensing_consistency():
        cfg = flatmpc.default_config(n=8, nc=4)
        z0 = rng.normal(0.0, 1.0, 14)
        prob = flatmpc.build_qcqp(z0, cfg, [flatmpc.Obstacle((3.0, 3.0, 0.0), 1.0)])
        vec = rng.normal(0.0, 5.0, prob.dim)
        z = z0.copy()
        for k in range(cfg.n):
            pred = prob.state_maps[k] @ vec + prob.state_offsets[k]
            assert np.max(np.abs(pred - z)) <= 1e-10, "condensed state mismatch"
            z = cfg.model.a_d @ z + cfg.model.b_d @ vec[4 * k:4 * k + 4]

    checks.append(_run("linearization exactness (flat vs plant)", linearization_exactness))
    checks.append(_run("drift/decoupling finite-difference oracle", drift_and_decoupling))
    checks.append(_run("Riccati and terminal-weight identities", riccati_pieces))
    checks.append(_run("solver oracle (toy problem + random QPs)", solver_oracle))
    checks.append(_run("condensed prediction consistency", condensing_consistency))
    return all(checks)
