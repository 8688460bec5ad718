"""Closed-loop analysis: mean-square stability and guaranteed-cost levels.

Two independent routes are provided for stability: the coupled-Lyapunov
feasibility test (solved as an LMI) and the second-moment spectral radius
(an eigenvalue computation on the Kronecker-lifted mode dynamics). Tests pit
them against each other; the library never substitutes one for the other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import lmi
from .lmi import SolveStatus
from .model import ClosedLoopModel, Controller, PemAdmModel
from .sim import BiasSignal

DEFAULT_P_CAP = 1e6


@dataclass(frozen=True)
class StabilityCertificate:
    feasible: bool
    P: tuple[np.ndarray, ...]
    margin: float
    status: SolveStatus
    diagnostics: dict

    @property
    def inconclusive(self) -> bool:
        """True when the solver could not settle the question either way."""
        return not self.feasible and self.status not in (SolveStatus.INFEASIBLE,)


@dataclass(frozen=True)
class GammaCertificate:
    gamma: float
    P: tuple[np.ndarray, ...]
    feasible: bool
    weights: tuple[np.ndarray, np.ndarray]
    status: SolveStatus
    diagnostics: dict

    @property
    def mu(self) -> float:
        return self.gamma * self.gamma


def ms_spectral_radius(cl: ClosedLoopModel) -> float:
    """Spectral radius of the second-moment propagator.

    Block (j, i) of the lifted matrix is p_ij * kron(Acl_i, Acl_i); the
    noise-free loop is mean-square stable iff the radius is below one.
    """
    n1 = cl.n1
    N = cl.N
    m = n1 * n1
    lifted = np.zeros((N * m, N * m))
    p = cl.transition.p
    for i in range(N):
        kron = np.kron(cl.Acl[i], cl.Acl[i])
        for j in range(N):
            lifted[j * m:(j + 1) * m, i * m:(i + 1) * m] = p[i, j] * kron
    return float(np.max(np.abs(np.linalg.eigvals(lifted))))


def _coupled_block(prob: lmi.LmiProblem, cl: ClosedLoopModel, Pvars, i: int) -> lmi.AffineMatrixExpr:
    """sum_j p_ij Acl_i' P_j Acl_i - P_i as a symmetric expression."""
    n1 = cl.n1
    expr = prob.sym_expr(n1)
    p = cl.transition.p
    for j in range(cl.N):
        if p[i, j] != 0.0:
            expr.add_term(Pvars[j], left=cl.Acl[i].T, right=cl.Acl[i], coeff=0.5 * p[i, j])
    expr.add_term(Pvars[i], coeff=-0.5)
    return expr


def ms_stability_test(cl: ClosedLoopModel, *, p_cap: float = DEFAULT_P_CAP,
                      eps_strict: float = lmi.DEFAULT_EPS_STRICT,
                      solver: str = "CLARABEL") -> StabilityCertificate:
    """Coupled-Lyapunov stability test.

    Searches P_i > 0 with sum_j p_ij Acl_i' P_j Acl_i - P_i < 0 for all i.
    The homogeneous certificate family is normalized by I <= P_i <= p_cap * I,
    which leaves feasibility unchanged and keeps the slack minimization
    bounded. Solver failures are surfaced as inconclusive, never as
    instability claims.
    """
    n1 = cl.n1
    prob = lmi.LmiProblem()
    Pvars = [prob.add_matrix_var(f"P{i}", n1) for i in range(cl.N)]
    for i in range(cl.N):
        prob.add_psd(_coupled_block(prob, cl, Pvars, i), use_slack=True, name=f"coupled[{i}]")
        lo = prob.sym_expr(n1)
        lo.add_const(np.eye(n1))
        lo.add_term(Pvars[i], coeff=-0.5)
        prob.add_psd(lo, use_slack=False, name=f"floor[{i}]")
        hi = prob.sym_expr(n1)
        hi.add_const(-p_cap * np.eye(n1))
        hi.add_term(Pvars[i], coeff=0.5)
        prob.add_psd(hi, use_slack=False, name=f"cap[{i}]")
    sol = lmi.solve_feasibility(prob, eps_strict=eps_strict, solver=solver)
    if sol.status is SolveStatus.OPTIMAL:
        P = tuple(sol.values[f"P{i}"] for i in range(cl.N))
        coupled_margin = max(sol.diagnostics["verified_margins"][3 * i] for i in range(cl.N))
        return StabilityCertificate(True, P, coupled_margin, sol.status, sol.diagnostics)
    return StabilityCertificate(False, tuple(), float("nan"), sol.status, sol.diagnostics)


def _cost_block(prob: lmi.LmiProblem, cl: ClosedLoopModel, controller: Controller,
                model: PemAdmModel, Q: np.ndarray, R: np.ndarray,
                Pvars, mu, i: int) -> lmi.AffineMatrixExpr:
    """The 3x3 guaranteed-cost block for mode i, linear in (P_j, mu)."""
    n1, n3, nw = cl.n1, cl.n3, cl.nw
    K = controller.gains[i]
    C, D, E = model.modes[i].C, model.modes[i].D, model.modes[i].E
    KC, KD, KE = K @ C, K @ D, K @ E
    p = cl.transition.p
    dim = n1 + n3 + nw
    expr = prob.sym_expr(dim)

    for j in range(cl.N):
        pij = p[i, j]
        if pij == 0.0:
            continue
        expr.add_term(Pvars[j], left=cl.Acl[i].T, right=cl.Acl[i], coeff=0.5 * pij, r0=0, c0=0)
        expr.add_term(Pvars[j], left=cl.Acl[i].T, right=cl.Ecl[i], coeff=pij, r0=0, c0=n1)
        expr.add_term(Pvars[j], left=cl.Ecl[i].T, right=cl.Ecl[i], coeff=0.5 * pij, r0=n1, c0=n1)
        expr.add_term(Pvars[j], left=cl.Dcl[i].T, right=cl.Dcl[i], coeff=0.5 * pij,
                      r0=n1 + n3, c0=n1 + n3)
    expr.add_term(Pvars[i], coeff=-0.5, r0=0, c0=0)

    expr.add_const(Q + KC.T @ R @ KC, 0, 0)
    cross = KC.T @ R @ KE
    expr.add_const(cross, 0, n1)
    expr.add_const(cross.T, n1, 0)
    expr.add_const(KE.T @ R @ KE, n1, n1)
    expr.add_const(KD.T @ R @ KD, n1 + n3, n1 + n3)

    expr.add_scalar_term(mu, -0.5 * np.eye(n3), r0=n1, c0=n1)
    expr.add_scalar_term(mu, -0.5 * np.eye(nw), r0=n1 + n3, c0=n1 + n3)
    return expr


def guaranteed_cost_gamma(cl: ClosedLoopModel, controller: Controller, model: PemAdmModel,
                          Q, R, *, eps_strict: float = lmi.DEFAULT_EPS_STRICT,
                          solver: str = "CLARABEL") -> GammaCertificate:
    """Smallest certified gamma for a fixed controller (minimized through mu = gamma^2)."""
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    if np.linalg.eigvalsh(Q).min() <= 0 or np.linalg.eigvalsh(R).min() <= 0:
        raise ValueError("Q and R must be positive definite")
    if controller.N != cl.N:
        raise ValueError("controller/closed-loop mode counts differ")

    n1 = cl.n1
    prob = lmi.LmiProblem()
    Pvars = [prob.add_matrix_var(f"P{i}", n1) for i in range(cl.N)]
    mu = prob.add_scalar_var("mu", lower_bound=0.0)
    for i in range(cl.N):
        prob.add_psd(_cost_block(prob, cl, controller, model, Q, R, Pvars, mu, i),
                     name=f"cost[{i}]")
        floor = prob.sym_expr(n1)
        floor.add_term(Pvars[i], coeff=-0.5)
        prob.add_psd(floor, name=f"pd[{i}]")
    prob.set_objective([(mu, 1.0)])
    sol = lmi.solve_min(prob, eps_strict=eps_strict, solver=solver)
    if sol.status in (SolveStatus.OPTIMAL, SolveStatus.INACCURATE) and sol.values:
        P = tuple(sol.values[f"P{i}"] for i in range(cl.N))
        mu_star = max(float(sol.values["mu"]), 0.0)
        return GammaCertificate(math.sqrt(mu_star), P, sol.status is SolveStatus.OPTIMAL,
                                (Q, R), sol.status, sol.diagnostics)
    return GammaCertificate(float("nan"), tuple(), False, (Q, R), sol.status, sol.diagnostics)


def cost_bound(cert: GammaCertificate, x0, r0: int, horizon: int, bias: BiasSignal,
               nw: int) -> float:
    """Guaranteed-cost upper bound for a run of the given horizon.

    gamma^2 multiplies the expected uncertainty energy, (horizon + 1) * nw for
    the unit-covariance noise plus the summed squared bias; the additive
    constant is x0' P_{r0} x0.
    """
    if not cert.feasible:
        raise ValueError("cost_bound requires a feasible gamma certificate")
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    energy = float((horizon + 1) * nw)
    for k in range(horizon + 1):
        vk = bias.at(k)
        energy += float(vk @ vk)
    return cert.mu * energy + float(x0 @ cert.P[r0] @ x0)


@dataclass(frozen=True)
class DriftCheck:
    c2: float
    c3: float
    mean: float
    std_error: float
    samples: int
    passed: bool


def lyapunov_drift_check(cert: StabilityCertificate, cl: ClosedLoopModel, x0, r0: int,
                         bias: BiasSignal, nw: int, *, samples: int = 10_000,
                         seed: int = 0) -> DriftCheck:
    """Empirical one-step drift test for V(x, r) = x' P_r x.

    From the certificate, constants c2 in (0, 1) and c3 > 0 are derived such
    that E[V(k+1) - V(k) | x, r] <= -c2 V(x, r) + c3 holds in theory; the
    sampled average of (dV + c2 V - c3) over simulated transitions must then
    be nonpositive up to 3 standard errors.
    """
    if not cert.feasible:
        raise ValueError("drift check requires a feasible stability certificate")
    P = cert.P
    p = cl.transition.p
    N, n1 = cl.N, cl.n1

    coupled = []
    G, H, T = [], [], []
    for i in range(N):
        acc = sum(p[i, j] * cl.Acl[i].T @ P[j] @ cl.Acl[i] for j in range(N))
        coupled.append(P[i] - acc)
        G.append(sum(p[i, j] * cl.Acl[i].T @ P[j] @ cl.Ecl[i] for j in range(N)))
        H.append(sum(p[i, j] * cl.Ecl[i].T @ P[j] @ cl.Ecl[i] for j in range(N)))
        T.append(sum(p[i, j] * cl.Dcl[i].T @ P[j] @ cl.Dcl[i] for j in range(N)))
    alpha1 = min(float(np.linalg.eigvalsh(c).min()) for c in coupled)
    if alpha1 <= 0:
        raise ValueError("certificate does not verify: coupled blocks are not negative definite")
    pmax = max(float(np.linalg.eigvalsh(Pi).max()) for Pi in P)
    c2 = 0.5 * alpha1 / pmax
    b = cl.bias_bound
    c3 = max(
        float(np.trace(T[i]))
        + float(np.linalg.eigvalsh(0.5 * (H[i] + H[i].T)).max()) * b * b
        + (2.0 / alpha1) * float(np.linalg.norm(G[i], 2)) ** 2 * b * b
        for i in range(N)
    )

    rng = np.random.Generator(np.random.Philox(key=[seed, 0]))
    uniforms = rng.random(samples)
    w = rng.standard_normal((samples + 1, nw))
    cum = cl.transition.row_cumsum()

    x = np.asarray(x0, dtype=float).reshape(n1).copy()
    r = int(r0)
    stats = np.empty(samples)
    for k in range(samples):
        vk = bias.at(k)
        V = float(x @ P[r] @ x)
        r_next = int(np.searchsorted(cum[r], uniforms[k], side="right"))
        r_next = min(r_next, N - 1)
        x_next = cl.Acl[r] @ x + cl.Dcl[r] @ w[k] + cl.Ecl[r] @ vk
        V_next = float(x_next @ P[r_next] @ x_next)
        stats[k] = (V_next - V) + c2 * V - c3
        x, r = x_next, r_next
    mean = float(stats.mean())
    se = float(stats.std(ddof=1) / math.sqrt(samples))
    return DriftCheck(c2=c2, c3=c3, mean=mean, std_error=se, samples=samples,
                      passed=mean <= 3.0 * se)


def certificate_to_dict(cert: StabilityCertificate | GammaCertificate) -> dict:
    """JSON-ready view of a certificate (matrices row-major)."""
    out: dict = {"feasible": cert.feasible, "status": cert.status.value}
    if isinstance(cert, StabilityCertificate):
        out["kind"] = "stability"
        out["margin"] = cert.margin
    else:
        out["kind"] = "guaranteed_cost"
        out["gamma"] = cert.gamma
        Q, R = cert.weights
        out["Q"] = Q.tolist()
        out["R"] = R.tolist()
    out["P"] = [Pi.tolist() for Pi in cert.P]
    diag = {k: v for k, v in cert.diagnostics.items() if isinstance(v, (str, int, float))}
    out["solver"] = diag
    return out
