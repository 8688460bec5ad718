"""Controller synthesis by convex matrix-inequality programming.

Stabilizing synthesis searches (S_i, Y_i, W_i) with the mode-coupled block
condition and the structure equality C_i S_i = Y_i C_i, then recovers
K_i = W_i Y_i^{-1}; a polish pass re-solves at half the certified margin
while minimizing the gain-carrier norms, which keeps the returned gains
small and deterministic.

Guaranteed-cost synthesis fixes the floor parameter lambda a priori,
minimizes mu = gamma^2 over the 8x8 block program with the additional
D/E structure equalities, and certifies the recovered controller with the
analysis-side program. The block matrix is assembled under an equivalence-
preserving diagonal congruence (rows scaled by powers of lambda) because the
printed form has entries spanning ~10 orders of magnitude at lambda = 1e-5,
which no interior-point solver survives.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import lmi
from .analysis import GammaCertificate, StabilityCertificate, guaranteed_cost_gamma, ms_stability_test
from .lmi import SolveStatus
from .model import Controller, PemAdmModel, close_loop

COND_LIMIT = 1e10
DEFAULT_LAMBDA = 1e-5
EQ_RESIDUAL_BUDGET = 1e-6


@dataclass(frozen=True)
class SynthesisResult:
    controller: Controller | None
    S: tuple[np.ndarray, ...]
    Y: tuple[np.ndarray, ...]
    W: tuple[np.ndarray, ...]
    gamma: float | None            # certified level for the recovered gains (SOGCC)
    gamma_synthesis: float | None  # sqrt(mu*) of the synthesis program itself
    lam: float | None
    residuals: float
    status: SolveStatus
    diagnostics: dict
    stability: StabilityCertificate | None = None
    cost_certificate: GammaCertificate | None = None

    @property
    def feasible(self) -> bool:
        return self.status is SolveStatus.OPTIMAL and self.controller is not None


def _recover_gains(W: list[np.ndarray], Y: list[np.ndarray]):
    """K_i = W_i Y_i^{-1} via linear solve; None when Y is numerically singular."""
    gains = []
    worst_cond = 0.0
    for Wi, Yi in zip(W, Y):
        cond = float(np.linalg.cond(Yi))
        worst_cond = max(worst_cond, cond)
        if not np.isfinite(cond) or cond > COND_LIMIT:
            return None, worst_cond
        gains.append(np.linalg.solve(Yi.T, Wi.T).T)
    return gains, worst_cond


def _structure_residual(model: PemAdmModel, S, Y, with_de: bool) -> float:
    res = 0.0
    for i, m in enumerate(model.modes):
        res = max(res, float(np.abs(m.C @ S[i] - Y[i] @ m.C).max()))
        if with_de:
            res = max(res, float(np.abs(m.D @ S[i] - Y[i] @ m.D).max()))
            res = max(res, float(np.abs(m.E @ S[i] - Y[i] @ m.E).max()))
    return res


def _ssc_problem(model: PemAdmModel, s_cap: float):
    n1, n2, n3, N = model.n1, model.n2, model.n3, model.N
    p = model.transition.p
    prob = lmi.LmiProblem()
    S = [prob.add_matrix_var(f"S{i}", n1) for i in range(N)]
    Y = [prob.add_matrix_var(f"Y{i}", n3) for i in range(N)]
    W = [prob.add_matrix_var(f"W{i}", n2, n3, symmetric=False) for i in range(N)]

    blocks = []
    dim = n1 + N * n1
    for i in range(N):
        blk = prob.sym_expr(dim)
        blk.add_term(S[i], coeff=-0.5)
        for j in range(N):
            r0 = n1 + j * n1
            sp = math.sqrt(p[i, j])
            if sp > 0.0:
                blk.add_term(S[i], left=sp * model.A, r0=r0, c0=0)
                blk.add_term(W[i], left=sp * model.B, right=model.modes[i].C, r0=r0, c0=0)
            blk.add_term(S[j], coeff=-0.5, r0=r0, c0=r0)
        blocks.append(blk)
        prob.add_psd(blk, use_slack=True, name=f"stab[{i}]")

        floor = prob.sym_expr(n1)
        floor.add_const(np.eye(n1))
        floor.add_term(S[i], coeff=-0.5)
        prob.add_psd(floor, use_slack=False, name=f"S_floor[{i}]")
        cap = prob.sym_expr(n1)
        cap.add_const(-s_cap * np.eye(n1))
        cap.add_term(S[i], coeff=0.5)
        prob.add_psd(cap, use_slack=False, name=f"S_cap[{i}]")

        yfloor = prob.sym_expr(n3)
        yfloor.add_const(1e-6 * np.eye(n3))
        yfloor.add_term(Y[i], coeff=-0.5)
        prob.add_psd(yfloor, use_slack=False, name=f"Y_floor[{i}]")
        ycap = prob.sym_expr(n3)
        ycap.add_const(-s_cap * np.eye(n3))
        ycap.add_term(Y[i], coeff=0.5)
        prob.add_psd(ycap, use_slack=False, name=f"Y_cap[{i}]")

        eq = prob.expr(n3, n1)
        eq.add_term(S[i], left=model.modes[i].C)
        eq.add_term(Y[i], right=model.modes[i].C, coeff=-1.0)
        prob.add_eq(eq, name=f"CS=YC[{i}]")
    return prob, S, Y, W, blocks


def synthesize_ssc(model: PemAdmModel, *, s_cap: float = 1e3, polish: bool = True,
                   solver: str = "CLARABEL") -> SynthesisResult:
    """Stabilizing per-mode output-feedback gains, or Infeasible when the
    block condition certifies none."""
    N = model.N
    prob, S, Y, W, _ = _ssc_problem(model, s_cap)
    sol = lmi.solve_feasibility(prob, solver=solver)
    if sol.status is not SolveStatus.OPTIMAL:
        status = sol.status if sol.status is SolveStatus.INFEASIBLE else SolveStatus.FAILED
        return SynthesisResult(None, (), (), (), None, None, None, float("nan"),
                               status, sol.diagnostics)
    t_star = sol.objective_value
    values = sol.values
    diagnostics = dict(sol.diagnostics)
    diagnostics["slack"] = t_star

    if polish:
        prob2, S2, Y2, W2, blocks2 = _ssc_problem(model, s_cap)
        n2, n3 = model.n2, model.n3
        bounds = [prob2.add_scalar_var(f"wbound{i}", lower_bound=0.0) for i in range(N)]
        for blk in blocks2:
            blk.add_const(-0.5 * t_star * np.eye(blk.rows))
        for i in range(N):
            norm = prob2.sym_expr(n2 + n3)
            norm.add_scalar_term(bounds[i], -0.5 * np.eye(n2 + n3))
            norm.add_term(W2[i], coeff=-1.0, r0=0, c0=n2)
            prob2.add_psd(norm, name=f"W_norm[{i}]")
        prob2.set_objective([(b, 1.0) for b in bounds])
        sol2 = lmi.solve_min(prob2, solver=solver)
        if sol2.status in (SolveStatus.OPTIMAL, SolveStatus.INACCURATE) and sol2.values:
            values = sol2.values
            diagnostics["polish_status"] = sol2.status.value
        else:
            diagnostics["polish_status"] = "skipped:" + sol2.status.value

    Sv = [values[f"S{i}"] for i in range(N)]
    Yv = [values[f"Y{i}"] for i in range(N)]
    Wv = [values[f"W{i}"] for i in range(N)]
    gains, cond = _recover_gains(Wv, Yv)
    diagnostics["Y_condition"] = cond
    if gains is None:
        return SynthesisResult(None, tuple(Sv), tuple(Yv), tuple(Wv), None, None, None,
                               _structure_residual(model, Sv, Yv, False),
                               SolveStatus.FAILED, diagnostics)
    controller = Controller(gains=tuple(gains))
    stability = ms_stability_test(close_loop(model, controller), solver=solver)
    status = SolveStatus.OPTIMAL if stability.feasible else SolveStatus.INACCURATE
    return SynthesisResult(controller, tuple(Sv), tuple(Yv), tuple(Wv), None, None, None,
                           _structure_residual(model, Sv, Yv, False), status,
                           diagnostics, stability=stability)


def _sogcc_problem(model: PemAdmModel, Q: np.ndarray, R: np.ndarray, lam: float,
                   s_cap: float):
    n1, n2, n3, nw, N = model.n1, model.n2, model.n3, model.nw, model.N
    p = model.transition.p
    A, B = model.A, model.B
    Rinv = np.linalg.inv(R)
    Qinv = np.linalg.inv(Q)

    prob = lmi.LmiProblem()
    S = [prob.add_matrix_var(f"S{i}", n1) for i in range(N)]
    Y = [prob.add_matrix_var(f"Y{i}", n3) for i in range(N)]
    W = [prob.add_matrix_var(f"W{i}", n2, n3, symmetric=False) for i in range(N)]
    mu = prob.add_scalar_var("mu", lower_bound=0.0)

    # Row offsets of the 8x8 block structure and the congruence scale of each
    # band: rows {2,3} are scaled by 1/lam, rows {1,6,7} by lam^-1/2. This is
    # a similarity transform of the printed inequality, not a relaxation.
    o1 = 0
    o2 = o1 + n1
    o3 = o2 + n3
    o4 = o3 + nw
    o5 = o4 + n2
    o6 = o5 + n2
    o7 = o6 + N * n1
    o8 = o7 + N * n1
    dim = o8 + n1
    s1 = lam ** -0.5
    s2 = 1.0 / lam
    s6 = lam ** -0.5

    for i in range(N):
        C, D, E = model.modes[i].C, model.modes[i].D, model.modes[i].E
        blk = prob.sym_expr(dim)
        # diagonal bands
        blk.add_term(S[i], coeff=-0.5 * s1 * s1, r0=o1, c0=o1)
        blk.add_scalar_term(mu, -0.5 * (lam * s2) ** 2 * np.eye(n3), r0=o2, c0=o2)
        blk.add_scalar_term(mu, -0.5 * (lam * s2) ** 2 * np.eye(nw), r0=o3, c0=o3)
        blk.add_const(-Rinv, o4, o4)
        blk.add_const(-Rinv, o5, o5)
        for j in range(N):
            blk.add_term(S[j], coeff=-0.5 * s6 * s6, r0=o6 + j * n1, c0=o6 + j * n1)
            blk.add_term(S[j], coeff=-0.5 * s6 * s6, r0=o7 + j * n1, c0=o7 + j * n1)
        blk.add_const(-Qinv, o8, o8)
        # couplings (lower triangle; the symmetric counterpart is implied)
        blk.add_term(W[i], left=s1 * np.eye(n2), right=C, r0=o5, c0=o1)
        blk.add_term(W[i], left=s2 * np.eye(n2), right=E, r0=o5, c0=o2)
        blk.add_term(W[i], left=s2 * np.eye(n2), right=D, r0=o4, c0=o3)
        blk.add_term(S[i], left=s1 * np.eye(n1), r0=o8, c0=o1)
        for j in range(N):
            sp = math.sqrt(p[i, j])
            if sp == 0.0:
                continue
            blk.add_term(S[i], left=s6 * s1 * sp * A, r0=o7 + j * n1, c0=o1)
            blk.add_term(W[i], left=s6 * s1 * sp * B, right=C, r0=o7 + j * n1, c0=o1)
            blk.add_term(W[i], left=s6 * s2 * sp * B, right=E, r0=o7 + j * n1, c0=o2)
            blk.add_term(W[i], left=s6 * s2 * sp * B, right=D, r0=o6 + j * n1, c0=o3)
        prob.add_psd(blk, name=f"gc[{i}]")

        floor = prob.sym_expr(n1)
        floor.add_const(lam * np.eye(n1))
        floor.add_term(S[i], coeff=-0.5)
        prob.add_psd(floor, name=f"S_floor[{i}]")
        cap = prob.sym_expr(n1)
        cap.add_const(-s_cap * np.eye(n1))
        cap.add_term(S[i], coeff=0.5)
        prob.add_psd(cap, name=f"S_cap[{i}]")
        yfloor = prob.sym_expr(n3)
        yfloor.add_term(Y[i], coeff=-0.5)
        prob.add_psd(yfloor, name=f"Y_pd[{i}]")

        for mat, tag in ((C, "C"), (D, "D"), (E, "E")):
            eq = prob.expr(n3, n1)
            eq.add_term(S[i], left=mat)
            eq.add_term(Y[i], right=mat, coeff=-1.0)
            prob.add_eq(eq, name=f"{tag}S=Y{tag}[{i}]")

    prob.set_objective([(mu, 1.0)])
    return prob, S, Y, W


def synthesize_sogcc(model: PemAdmModel, Q, R, lam: float = DEFAULT_LAMBDA, *,
                     eq_budget: float = EQ_RESIDUAL_BUDGET, s_cap: float | None = None,
                     solver: str = "CLARABEL") -> SynthesisResult:
    """Guaranteed-cost gain synthesis with the floor parameter fixed a priori.

    The structure equalities are enforced up to the documented absolute
    residual budget (default 1e-6); the recovered gains are then certified by
    the analysis program, whose gamma is reported as the certified level
    (sqrt(mu*) of the synthesis program is kept as a diagnostic).
    """
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    if lam <= 0:
        raise ValueError("lambda must be positive")
    if np.linalg.eigvalsh(Q).min() <= 0 or np.linalg.eigvalsh(R).min() <= 0:
        raise ValueError("Q and R must be positive definite")
    if not (model.n1 == model.n3 == model.nw):
        raise ValueError(
            "guaranteed-cost synthesis requires n1 == n3 == nw so that the "
            "D/E structure equalities are well-formed"
        )
    if s_cap is None:
        s_cap = max(1.0, 1e3 * lam)

    N = model.N
    prob, S, Y, W = _sogcc_problem(model, Q, R, lam, s_cap)
    sol = lmi.solve_min(prob, eq_tolerance=eq_budget, solver=solver)
    diagnostics = dict(sol.diagnostics)
    diagnostics["lambda"] = lam
    if sol.status is SolveStatus.INFEASIBLE:
        diagnostics["hint"] = "program infeasible for this lambda; retry with a smaller lambda"
        return SynthesisResult(None, (), (), (), None, None, lam, float("nan"),
                               SolveStatus.INFEASIBLE, diagnostics)
    if sol.status is SolveStatus.FAILED or not sol.values:
        return SynthesisResult(None, (), (), (), None, None, lam, float("nan"),
                               SolveStatus.FAILED, diagnostics)

    Sv = [sol.values[f"S{i}"] for i in range(N)]
    Yv = [sol.values[f"Y{i}"] for i in range(N)]
    Wv = [sol.values[f"W{i}"] for i in range(N)]
    mu_star = max(float(sol.values["mu"]), 0.0)
    gains, cond = _recover_gains(Wv, Yv)
    diagnostics["Y_condition"] = cond
    residual = _structure_residual(model, Sv, Yv, True)
    if gains is None:
        return SynthesisResult(None, tuple(Sv), tuple(Yv), tuple(Wv), None,
                               math.sqrt(mu_star), lam, residual,
                               SolveStatus.FAILED, diagnostics)

    controller = Controller(gains=tuple(gains))
    cl = close_loop(model, controller)
    stability = ms_stability_test(cl, solver=solver)
    cost_cert = guaranteed_cost_gamma(cl, controller, model, Q, R, solver=solver)
    gamma = cost_cert.gamma if cost_cert.feasible else float("nan")
    ok = stability.feasible and cost_cert.feasible and sol.status is SolveStatus.OPTIMAL
    status = SolveStatus.OPTIMAL if ok else SolveStatus.INACCURATE
    return SynthesisResult(controller, tuple(Sv), tuple(Yv), tuple(Wv), gamma,
                           math.sqrt(mu_star), lam, residual, status, diagnostics,
                           stability=stability, cost_certificate=cost_cert)


def synthesis_to_dict(result: SynthesisResult) -> dict:
    from .analysis import certificate_to_dict
    from .model import controller_to_dict

    out: dict = {
        "status": result.status.value,
        "residuals": result.residuals,
        "gamma": result.gamma,
        "gamma_synthesis": result.gamma_synthesis,
        "lambda": result.lam,
        "S": [m.tolist() for m in result.S],
        "Y": [m.tolist() for m in result.Y],
        "W": [m.tolist() for m in result.W],
        "solver": {k: v for k, v in result.diagnostics.items()
                   if isinstance(v, (str, int, float))},
    }
    if result.controller is not None:
        out["controller"] = controller_to_dict(result.controller)
    if result.stability is not None:
        out["stability"] = certificate_to_dict(result.stability)
    if result.cost_certificate is not None:
        out["cost_certificate"] = certificate_to_dict(result.cost_certificate)
    return out
