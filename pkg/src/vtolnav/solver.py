"""Dense SQP solver for the per-step safety-constrained problem.

The problem class is: convex quadratic cost, linear inequality rows, and
"quadratic form >= 0" rows (the only nonconvexity). Each SQP iteration
linearizes the quadratic rows about the iterate and solves the resulting
convex QP with a primal-dual interior-point method (Mehrotra
predictor-corrector), then backtracks on an l1 exact-penalty merit function
with a second-order correction retry (the quadratic rows make the plain
l1 search Maratos-prone).

Infeasibility handling: a certified-infeasible subproblem whose minimal
achievable violation exceeds con_tol is reported upward as Infeasible. When
the minimal violation fits inside con_tol (in closed loop this happens on
rows whose predicted positions are structurally input-independent over the
first few steps of the Euler model, so discretization mismatch can leave
them a hair negative), the rows are shifted by exactly that minimal
residual and the step proceeds; the unshifted violation is still what gets
reported.

Stationarity and complementarity residuals are reported scaled by
(1 + |grad f|_inf); constraint violations are absolute.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

STATUS_OPTIMAL = "optimal"
STATUS_MAX_ITER = "max_iter"
STATUS_INFEASIBLE = "infeasible"


@dataclass(frozen=True)
class SolverSettings:
    max_iter: int = 100
    kkt_tol: float = 1e-7
    con_tol: float = 1e-7
    line_search_shrink: float = 0.5
    merit_penalty: float = 1.0
    hessian_reg: float = 1e-9
    qp_comp_tol: float = 1e-9
    qp_max_iter: int = 200

    def __post_init__(self):
        if not 0.0 < self.line_search_shrink < 1.0:
            raise ValueError("line_search_shrink must lie in (0, 1)")
        for name in ("max_iter", "kkt_tol", "con_tol", "merit_penalty",
                     "hessian_reg", "qp_comp_tol", "qp_max_iter"):
            if getattr(self, name) <= 0:
                raise ValueError(f"SolverSettings.{name} must be positive")


@dataclass
class QpResult:
    status: str
    x: np.ndarray
    duals: np.ndarray
    iterations: int
    comp: float
    r_dual: float
    r_prim: float
    # filled when the main iteration failed and phase 1 ran: per-row minimal
    # relaxation making the rows consistent, and its maximum entry
    relaxation: np.ndarray | None = None
    min_violation: float = 0.0


def _solve_spd(m: np.ndarray, rhs: np.ndarray, reg: float) -> np.ndarray:
    """Solve an (almost) SPD system, bumping the diagonal if factorization fails."""
    bump = 0.0
    for _ in range(6):
        try:
            chol = np.linalg.cholesky(m + (reg + bump) * np.eye(m.shape[0]))
        except np.linalg.LinAlgError:
            bump = max(10.0 * bump, 1e-12)
            continue
        y = np.linalg.solve(chol, rhs)
        return np.linalg.solve(chol.T, y)
    raise np.linalg.LinAlgError("KKT system not positive definite")


def qp_solve(hess: np.ndarray, grad: np.ndarray,
             lin_g: np.ndarray | None = None, lin_h: np.ndarray | None = None,
             x0: np.ndarray | None = None, comp_tol: float = 1e-9,
             max_iter: int = 200, reg: float = 1e-12,
             _allow_phase1: bool = True) -> QpResult:
    """Convex QP: minimize 0.5 x'Hx + g'x subject to lin_g @ x <= lin_h.

    Mehrotra predictor-corrector primal-dual interior point. Infeasibility is
    certified through an elastic phase-1 problem when the main iteration
    fails to converge.
    """
    grad = np.asarray(grad, dtype=float)
    n = grad.size
    if lin_g is None or lin_g.size == 0:
        x = _solve_spd(np.asarray(hess, dtype=float), -grad, reg)
        return QpResult(STATUS_OPTIMAL, x, np.zeros(0), 0, 0.0, 0.0, 0.0)

    hess = np.asarray(hess, dtype=float)
    lin_g = np.asarray(lin_g, dtype=float)
    lin_h = np.asarray(lin_h, dtype=float)
    m = lin_g.shape[0]

    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    s = np.maximum(lin_h - lin_g @ x, 1.0)
    lam = np.ones(m)

    scale_d = 1.0 + np.max(np.abs(grad))
    scale_p = 1.0 + np.max(np.abs(lin_h))
    feas_tol = 1e-10
    stall_tol = 1e-7  # accept a stalled iterate this close to the KKT point

    best = None
    stall = 0
    ref = np.inf
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        for it in range(1, max_iter + 1):
            r_dual = hess @ x + grad + lin_g.T @ lam
            r_prim = lin_g @ x + s - lin_h
            mu = float(s @ lam) / m
            nd = float(np.max(np.abs(r_dual)))
            np_ = float(np.max(np.abs(r_prim)))
            merit_now = np_ / scale_p + nd / scale_d + mu
            if best is None or merit_now < best[0]:
                best = (merit_now, x.copy(), lam.copy(), it, mu, nd, np_)
            if merit_now < 0.9 * ref:
                ref = merit_now
                stall = 0
            else:
                stall += 1
            if nd <= feas_tol * scale_d and np_ <= feas_tol * scale_p and mu <= comp_tol:
                return QpResult(STATUS_OPTIMAL, x, lam, it, mu, nd, np_)
            if stall >= 8:
                break  # no tenfold progress in a while: settle below
            if not np.isfinite(mu) or np.max(lam) > 1e14 * scale_d:
                break  # duals diverging: certify feasibility below
            if mu < 1e-13 and np_ > 1e-8 * scale_p:
                break  # stalled with primal infeasibility

            w = lam / s
            kkt = hess + (lin_g.T * w) @ lin_g
            # predictor
            rc = lam * s
            rhs = -(r_dual + lin_g.T @ ((-rc + lam * r_prim) / s))
            try:
                dx = _solve_spd(kkt, rhs, reg)
            except np.linalg.LinAlgError:
                break
            ds = -r_prim - lin_g @ dx
            dlam = (-rc - lam * ds) / s

            def max_step(vec, dvec):
                neg = dvec < 0
                if not np.any(neg):
                    return 1.0
                return min(1.0, float(np.min(-vec[neg] / dvec[neg])))

            alpha_aff = min(max_step(s, ds), max_step(lam, dlam))
            mu_aff = float((s + alpha_aff * ds) @ (lam + alpha_aff * dlam)) / m
            sigma = (mu_aff / mu) ** 3 if mu > 0 else 0.0

            # corrector
            rc = lam * s - sigma * mu + dlam * ds
            rhs = -(r_dual + lin_g.T @ ((-rc + lam * r_prim) / s))
            try:
                dx = _solve_spd(kkt, rhs, reg)
            except np.linalg.LinAlgError:
                break
            ds = -r_prim - lin_g @ dx
            dlam = (-rc - lam * ds) / s

            frac = 1.0 - min(0.1, 10.0 * mu)  # push harder as the path converges
            alpha_p = min(1.0, frac * max_step(s, ds))
            alpha_d = min(1.0, frac * max_step(lam, dlam))
            x = x + alpha_p * dx
            s = np.maximum(s + alpha_p * ds, 1e-30)
            lam = lam + alpha_d * dlam

    # tight tolerances unreachable: a stalled iterate near the KKT point
    # (dual residual pinned by conditioning) still counts as solved
    _, bx, blam, bit, bmu, bnd, bnp = best
    if bnd <= stall_tol * scale_d and bnp <= stall_tol * scale_p and bmu <= comp_tol:
        return QpResult(STATUS_OPTIMAL, bx, blam, bit, bmu, bnd, bnp)
    if _allow_phase1:
        relax, worst = _phase1(lin_g, lin_h)
        status = STATUS_INFEASIBLE if worst > 1e-9 * scale_p else STATUS_MAX_ITER
        return QpResult(status, bx, blam, bit, bmu, bnd, bnp,
                        relaxation=relax, min_violation=worst)
    return QpResult(STATUS_MAX_ITER, bx, blam, bit, bmu, bnd, bnp)


def _phase1(lin_g: np.ndarray, lin_h: np.ndarray):
    """Elastic feasibility problem: min sum(t) s.t. Gx - t <= h, t >= 0.

    Returns the per-row minimal relaxations and their maximum.
    """
    m, n = lin_g.shape
    eps = 1e-8
    hess = eps * np.eye(n + m)
    grad = np.concatenate([np.zeros(n), np.ones(m)])
    g1 = np.block([[lin_g, -np.eye(m)], [np.zeros((m, n)), -np.eye(m)]])
    h1 = np.concatenate([lin_h, np.zeros(m)])
    res = qp_solve(hess, grad, g1, h1, comp_tol=1e-9, max_iter=200,
                   _allow_phase1=False)
    t = np.maximum(res.x[n:], 0.0)
    return t, float(np.max(t, initial=0.0))


@dataclass
class SolveResult:
    status: str
    x: np.ndarray
    objective: float
    kkt_residual: float
    constraint_violation: float
    iterations: int
    lin_duals: np.ndarray
    quad_duals: np.ndarray
    wall_time: float
    # (merit_before, merit_after) per accepted step, for monotonicity checks
    merit_history: list = field(default_factory=list)


def _violation_l1(problem, x, qvals=None) -> float:
    out = 0.0
    if problem.lin_g.size:
        out += float(np.sum(np.maximum(problem.lin_g @ x - problem.lin_h, 0.0)))
    vals = [row.value(x) for row in problem.quads] if qvals is None else qvals
    for v in vals:
        out += max(0.0, -v)
    return out


def solve(problem, warm_start: np.ndarray | None = None,
          settings: SolverSettings | None = None) -> SolveResult:
    """SQP loop over the quadratically constrained problem.

    Terminates at a scaled KKT point, or reports infeasibility when a
    linearized subproblem is certified infeasible beyond con_tol, or returns
    the best iterate at the iteration cap. Deterministic for identical inputs.
    """
    cfg = settings or SolverSettings()
    t0 = time.perf_counter()
    x = np.zeros(problem.dim) if warm_start is None else np.array(warm_start, dtype=float)
    nq = len(problem.quads)
    nlin = problem.lin_g.shape[0]
    eye = np.eye(problem.dim)
    penalty = cfg.merit_penalty
    history = []

    def subproblem_hessian(lam_quad):
        """Lagrangian Hessian floored to hessian_reg (curvature of the active
        quadratic rows is what gives the local step its fast rate)."""
        h = problem.hess.copy()
        for lq, row in zip(lam_quad, problem.quads):
            if lq != 0.0:
                h -= lq * row.hessian()
        h = 0.5 * (h + h.T)
        floor = float(np.linalg.eigvalsh(h)[0])
        if floor < cfg.hessian_reg:
            h += (cfg.hessian_reg - floor) * eye
        return h

    def finish(status, x, kkt, viol, iters, lam_lin, lam_quad):
        return SolveResult(
            status=status, x=x, objective=problem.objective(x),
            kkt_residual=kkt, constraint_violation=viol, iterations=iters,
            lin_duals=lam_lin, quad_duals=lam_quad,
            wall_time=time.perf_counter() - t0, merit_history=history)

    lam_lin = np.zeros(nlin)
    lam_quad = np.zeros(nq)
    kkt_res = np.inf

    for it in range(1, cfg.max_iter + 1):
        grad_f = problem.hess @ x + problem.grad
        qvals = [row.value(x) for row in problem.quads]
        qgrads = [row.grad(x) for row in problem.quads]

        if nq:
            g_sub = np.vstack([problem.lin_g] + [-g for g in qgrads])
            h_sub = np.concatenate([problem.lin_h - problem.lin_g @ x, qvals])
        else:
            g_sub = problem.lin_g
            h_sub = problem.lin_h - problem.lin_g @ x

        hess_sub = subproblem_hessian(lam_quad) if nq else \
            problem.hess + cfg.hessian_reg * eye

        # rows with no decision influence (predicted positions over the first
        # chain steps are input-independent) cannot be enforced; when the
        # discretization mismatch leaves them a hair negative, restore them
        # within con_tol instead of failing
        relax = np.zeros(h_sub.size)
        dead = (np.max(np.abs(g_sub), axis=1) <= 1e-12) & (h_sub < 0.0)
        if np.any(dead):
            if float(np.max(-h_sub[dead])) > cfg.con_tol:
                return finish(STATUS_INFEASIBLE, x, kkt_res,
                              problem.max_violation(x), it, lam_lin, lam_quad)
            relax[dead] = -h_sub[dead] + 1e-9

        qp = qp_solve(hess_sub, grad_f, g_sub, h_sub + relax,
                      comp_tol=cfg.qp_comp_tol, max_iter=cfg.qp_max_iter)
        if qp.status != STATUS_OPTIMAL and qp.relaxation is not None:
            if qp.min_violation > cfg.con_tol:
                return finish(STATUS_INFEASIBLE, x, kkt_res,
                              problem.max_violation(x), it, lam_lin, lam_quad)
            # rows jointly inconsistent by less than the tolerance: shift by
            # the certified minimal residual and keep going
            relax = relax + qp.relaxation + 1e-9
            qp = qp_solve(hess_sub, grad_f, g_sub, h_sub + relax,
                          comp_tol=cfg.qp_comp_tol, max_iter=cfg.qp_max_iter)
        if qp.status == STATUS_INFEASIBLE:
            return finish(STATUS_INFEASIBLE, x, kkt_res,
                          problem.max_violation(x), it, lam_lin, lam_quad)
        d = qp.x
        lam_lin = qp.duals[:nlin]
        lam_quad = qp.duals[nlin:]

        # KKT of the original problem at the current iterate (complementarity
        # measured against the restored rows when a relaxation was needed)
        lag_grad = grad_f + problem.lin_g.T @ lam_lin
        for lq, g in zip(lam_quad, qgrads):
            lag_grad -= lq * g
        scale = 1.0 + float(np.max(np.abs(grad_f)))
        stat = float(np.max(np.abs(lag_grad), initial=0.0)) / scale
        comp = 0.0
        if nlin:
            comp = float(np.max(np.abs(
                lam_lin * (problem.lin_g @ x - problem.lin_h - relax[:nlin]))))
        for i, (lq, v) in enumerate(zip(lam_quad, qvals)):
            comp = max(comp, abs(lq * (v + relax[nlin + i])))
        comp /= scale
        viol = 0.0
        if nlin:
            viol = float(np.max(problem.lin_g @ x - problem.lin_h, initial=0.0))
        for v in qvals:
            viol = max(viol, -min(0.0, v))
        kkt_res = max(stat, comp)
        if stat <= cfg.kkt_tol and comp <= cfg.kkt_tol and viol <= cfg.con_tol:
            return finish(STATUS_OPTIMAL, x, kkt_res, viol, it, lam_lin, lam_quad)

        dual_inf = float(np.max(np.abs(qp.duals), initial=0.0))
        penalty = max(penalty, 2.0 * dual_inf + 1.0)
        v1 = _violation_l1(problem, x, qvals)
        merit0 = problem.objective(x) + penalty * v1
        descent = float(grad_f @ d) - penalty * v1

        def merit(pt):
            return problem.objective(pt) + penalty * _violation_l1(problem, pt)

        xt = x + d
        merit_t = merit(xt)
        accepted = merit_t <= merit0 + 1e-4 * descent
        if not accepted and nq:
            # second-order correction: cancel the constraint curvature picked
            # up over the full step, then retry
            h_soc = h_sub + relax
            for i, row in enumerate(problem.quads):
                curv = row.value(xt) - qvals[i] - float(qgrads[i] @ d)
                h_soc[nlin + i] += curv
            qp_soc = qp_solve(hess_sub, grad_f, g_sub, h_soc,
                              comp_tol=cfg.qp_comp_tol, max_iter=cfg.qp_max_iter)
            if qp_soc.status == STATUS_OPTIMAL:
                xt_soc = x + qp_soc.x
                merit_soc = merit(xt_soc)
                if merit_soc <= merit0 + 1e-4 * descent:
                    xt, merit_t, accepted = xt_soc, merit_soc, True
        if not accepted:
            alpha = cfg.line_search_shrink
            while alpha >= 1e-12:
                xt = x + alpha * d
                merit_t = merit(xt)
                if merit_t <= merit0 + 1e-4 * alpha * descent:
                    accepted = True
                    break
                alpha *= cfg.line_search_shrink
        if not accepted:
            return finish(STATUS_MAX_ITER, x, kkt_res, viol, it, lam_lin, lam_quad)
        history.append((merit0, merit_t))
        x = xt

    return finish(STATUS_MAX_ITER, x, kkt_res, problem.max_violation(x),
                  cfg.max_iter, lam_lin, lam_quad)
