"""Affine matrix-inequality problems over symmetric/rectangular matrix variables.

The modeling fragment is deliberately small: matrix and scalar variables,
block-affine symmetric expressions, linear equality constraints, and a linear
objective. Problems are lowered to a conic backend (CLARABEL by default, SCS
as fallback) and every returned assignment is re-verified with plain numpy
eigenvalue computations before a status is reported.

Strict inequalities are realized as "<= -eps_strict * I after scaling";
feasibility questions are answered by minimizing a shared slack t with
"block <= t * I" and declaring strict feasibility iff t* < -eps_strict.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

DEFAULT_EPS_STRICT = 1e-9
DEFAULT_EQ_TOL_CHECK = 1e-6
MARGIN_ROUNDTRIP_TOL = 1e-7
SLACK_LOWER_BOUND = -1e9


class SolveStatus(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    INACCURATE = "inaccurate"
    FAILED = "failed"


@dataclass(frozen=True)
class MatVar:
    """Matrix variable; symmetric square by default, rectangular when flagged."""

    id: str
    rows: int
    cols: int
    symmetric: bool = True

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError("matrix variable dimensions must be >= 1")
        if self.symmetric and self.rows != self.cols:
            raise ValueError("symmetric variables must be square")

    @property
    def n(self) -> int:
        return self.rows


@dataclass(frozen=True)
class ScalarVar:
    id: str
    lower_bound: float | None = None


@dataclass
class _MatTerm:
    var_id: str
    left: np.ndarray        # (rows, var_rows)
    right: np.ndarray       # (var_cols, cols)
    coeff: float


@dataclass
class _ScalarTerm:
    var_id: str
    block: np.ndarray       # (rows, cols)
    coeff: float


class AffineMatrixExpr:
    """constant + sum of coeff * L @ X @ R contributions.

    When the expression is declared symmetric, each variable contribution is
    accompanied by its transpose; the constant is stored in full and must be
    symmetric on its own.
    """

    def __init__(self, rows: int, cols: int | None = None, symmetric: bool = False):
        cols = rows if cols is None else cols
        if symmetric and rows != cols:
            raise ValueError("symmetric expressions must be square")
        self.rows = rows
        self.cols = cols
        self.symmetric = symmetric
        self.constant = np.zeros((rows, cols))
        self.mat_terms: list[_MatTerm] = []
        self.scalar_terms: list[_ScalarTerm] = []

    def add_const(self, block, r0: int = 0, c0: int = 0) -> "AffineMatrixExpr":
        block = np.atleast_2d(np.asarray(block, dtype=float))
        r1, c1 = r0 + block.shape[0], c0 + block.shape[1]
        self.constant[r0:r1, c0:c1] += block
        return self

    def add_term(self, var: MatVar, left=None, right=None, coeff: float = 1.0,
                 r0: int = 0, c0: int = 0) -> "AffineMatrixExpr":
        """Add coeff * L @ X @ R, with L placed at row r0 and R at column c0."""
        left = np.eye(var.rows) if left is None else np.atleast_2d(np.asarray(left, dtype=float))
        right = np.eye(var.cols) if right is None else np.atleast_2d(np.asarray(right, dtype=float))
        if left.shape[1] != var.rows or right.shape[0] != var.cols:
            raise ValueError(
                f"term factors for {var.id} do not conform: L{left.shape} X({var.rows},{var.cols}) R{right.shape}"
            )
        L = np.zeros((self.rows, var.rows))
        L[r0:r0 + left.shape[0], :] = left
        R = np.zeros((var.cols, self.cols))
        R[:, c0:c0 + right.shape[1]] = right
        self.mat_terms.append(_MatTerm(var.id, L, R, float(coeff)))
        return self

    def add_scalar_term(self, var: ScalarVar, block, coeff: float = 1.0,
                        r0: int = 0, c0: int = 0) -> "AffineMatrixExpr":
        """Add coeff * s * block for a scalar variable s."""
        block = np.atleast_2d(np.asarray(block, dtype=float))
        full = np.zeros((self.rows, self.cols))
        full[r0:r0 + block.shape[0], c0:c0 + block.shape[1]] = block
        self.scalar_terms.append(_ScalarTerm(var.id, full, float(coeff)))
        return self

    def evaluate(self, values: dict[str, np.ndarray | float]) -> np.ndarray:
        out = self.constant.copy()
        for t in self.mat_terms:
            contrib = t.coeff * (t.left @ np.atleast_2d(values[t.var_id]) @ t.right)
            out += contrib
            if self.symmetric:
                out += contrib.T
        for t in self.scalar_terms:
            contrib = t.coeff * float(values[t.var_id]) * t.block
            out += contrib
            if self.symmetric:
                out += contrib.T
        return out


@dataclass
class PsdConstraint:
    """expr required <= slack * I (use_slack) or <= 0 / <= -margin * I otherwise."""

    expr: AffineMatrixExpr
    use_slack: bool = True
    name: str = ""


@dataclass
class EqConstraint:
    """expr == 0 elementwise; enforced up to the solve's eq_tolerance."""

    expr: AffineMatrixExpr
    name: str = ""


@dataclass
class LmiProblem:
    variables: dict[str, MatVar | ScalarVar] = field(default_factory=dict)
    psd_constraints: list[PsdConstraint] = field(default_factory=list)
    eq_constraints: list[EqConstraint] = field(default_factory=list)
    objective: list[tuple[str, np.ndarray | float]] = field(default_factory=list)

    def add_matrix_var(self, id: str, rows: int, cols: int | None = None,
                       symmetric: bool = True) -> MatVar:
        if id in self.variables:
            raise ValueError(f"duplicate variable id {id!r}")
        var = MatVar(id, rows, rows if cols is None else cols, symmetric)
        self.variables[id] = var
        return var

    def add_scalar_var(self, id: str, lower_bound: float | None = None) -> ScalarVar:
        if id in self.variables:
            raise ValueError(f"duplicate variable id {id!r}")
        var = ScalarVar(id, lower_bound)
        self.variables[id] = var
        return var

    def sym_expr(self, dim: int) -> AffineMatrixExpr:
        return AffineMatrixExpr(dim, dim, symmetric=True)

    def expr(self, rows: int, cols: int) -> AffineMatrixExpr:
        return AffineMatrixExpr(rows, cols, symmetric=False)

    def add_psd(self, expr: AffineMatrixExpr, use_slack: bool = True, name: str = "") -> None:
        self._check_expr(expr)
        self.psd_constraints.append(PsdConstraint(expr, use_slack, name))

    def add_eq(self, expr: AffineMatrixExpr, name: str = "") -> None:
        self._check_expr(expr)
        self.eq_constraints.append(EqConstraint(expr, name))

    def set_objective(self, terms: list[tuple[MatVar | ScalarVar, np.ndarray | float]]) -> None:
        self.objective = [(v.id, w) for v, w in terms]

    def _check_expr(self, expr: AffineMatrixExpr) -> None:
        for t in expr.mat_terms + expr.scalar_terms:
            if t.var_id not in self.variables:
                raise ValueError(f"expression references undeclared variable {t.var_id!r}")


@dataclass(frozen=True)
class SdpSolution:
    status: SolveStatus
    values: dict[str, np.ndarray | float]
    objective_value: float
    max_eq_residual: float
    min_margin: float
    diagnostics: dict

    @property
    def feasible(self) -> bool:
        return self.status is SolveStatus.OPTIMAL


def _lower_expr(expr: AffineMatrixExpr, cvars: dict):
    import cvxpy as cp

    out = cp.Constant(expr.constant)
    for t in expr.mat_terms:
        contrib = t.coeff * (t.left @ cvars[t.var_id] @ t.right)
        out = out + contrib
        if expr.symmetric:
            out = out + contrib.T
    for t in expr.scalar_terms:
        contrib = (t.coeff * cvars[t.var_id]) * cp.Constant(t.block)
        out = out + contrib
        if expr.symmetric:
            out = out + contrib.T
    return out


def _has_variables(expr: AffineMatrixExpr) -> bool:
    return bool(expr.mat_terms or expr.scalar_terms)


def _block_scale(expr: AffineMatrixExpr) -> float:
    m = float(np.abs(expr.constant).max()) if expr.constant.size else 0.0
    return m if m > 0.0 else 1.0


def _solver_versions() -> dict:
    import cvxpy

    return {"cvxpy": cvxpy.__version__}


def _run_backend(prob, solver: str, verbose: bool):
    import cvxpy as cp

    if solver == "SCS":
        prob.solve(solver=cp.SCS, verbose=verbose, eps=1e-8, max_iters=100000)
    else:
        prob.solve(solver=solver, verbose=verbose)
    return prob.status


def _solve(problem: LmiProblem, mode: str, *, eps_strict: float, eq_tolerance: float,
           scale: bool, solver: str, verbose: bool) -> SdpSolution:
    import cvxpy as cp

    cvars: dict = {}
    constraints = []
    for vid, var in problem.variables.items():
        if isinstance(var, MatVar):
            cvars[vid] = cp.Variable((var.rows, var.cols), symmetric=var.symmetric)
        else:
            cvars[vid] = cp.Variable()
            if var.lower_bound is not None:
                constraints.append(cvars[vid] >= var.lower_bound)

    scales = [(_block_scale(c.expr) if scale else 1.0) for c in problem.psd_constraints]

    slack = None
    if mode == "feasibility":
        slack = cp.Variable()
        constraints.append(slack >= SLACK_LOWER_BOUND)

    diagnostics_early: dict = {"solver": solver, **_solver_versions()}
    for c, s in zip(problem.psd_constraints, scales):
        dim = c.expr.rows
        if not _has_variables(c.expr):
            # constant block: decide it directly
            top = float(np.linalg.eigvalsh(0.5 * (c.expr.constant + c.expr.constant.T)).max())
            if top / s > (0.0 if mode == "feasibility" and c.use_slack else eps_strict):
                diagnostics_early["reason"] = f"constant block {c.name!r} is not negative"
                return SdpSolution(SolveStatus.INFEASIBLE, {}, float("nan"), float("nan"),
                                   float("nan"), diagnostics_early)
            continue
        lowered = _lower_expr(c.expr, cvars) / s
        if mode == "feasibility":
            if c.use_slack:
                constraints.append(lowered << slack * np.eye(dim))
            else:
                constraints.append(lowered << np.zeros((dim, dim)))
        else:
            constraints.append(lowered << -eps_strict * np.eye(dim))

    for c in problem.eq_constraints:
        if not _has_variables(c.expr):
            if float(np.abs(c.expr.constant).max()) > max(eq_tolerance, DEFAULT_EQ_TOL_CHECK):
                diagnostics_early["reason"] = f"constant equality {c.name!r} is violated"
                return SdpSolution(SolveStatus.INFEASIBLE, {}, float("nan"), float("nan"),
                                   float("nan"), diagnostics_early)
            continue
        lowered = _lower_expr(c.expr, cvars)
        if eq_tolerance > 0.0:
            # request slightly inside the budget so that solver-level
            # feasibility slop cannot push returned residuals past it
            constraints.append(cp.abs(lowered) <= 0.99 * eq_tolerance)
        else:
            constraints.append(lowered == 0)

    if mode == "feasibility":
        objective = cp.Minimize(slack)
    else:
        obj = 0
        for vid, weight in problem.objective:
            if isinstance(problem.variables[vid], ScalarVar):
                obj = obj + float(weight) * cvars[vid]
            else:
                obj = obj + cp.sum(cp.multiply(cp.Constant(np.asarray(weight, dtype=float)), cvars[vid]))
        objective = cp.Minimize(obj)

    prob = cp.Problem(objective, constraints)
    diagnostics: dict = {"solver": solver, **_solver_versions()}
    solver_status = None
    try:
        solver_status = _run_backend(prob, solver, verbose)
    except Exception as exc:  # backend blew up; try the fallback once
        diagnostics["primary_error"] = f"{type(exc).__name__}: {exc}"
        if solver != "SCS":
            diagnostics["solver"] = "SCS"
            try:
                solver_status = _run_backend(prob, "SCS", verbose)
            except Exception as exc2:
                diagnostics["fallback_error"] = f"{type(exc2).__name__}: {exc2}"
                return SdpSolution(SolveStatus.FAILED, {}, float("nan"), float("nan"),
                                   float("nan"), diagnostics)
        else:
            return SdpSolution(SolveStatus.FAILED, {}, float("nan"), float("nan"),
                               float("nan"), diagnostics)

    diagnostics["solver_status"] = solver_status

    if solver_status in ("infeasible", "infeasible_inaccurate"):
        return SdpSolution(SolveStatus.INFEASIBLE, {}, float("nan"), float("nan"),
                           float("nan"), diagnostics)
    if solver_status in ("unbounded", "unbounded_inaccurate"):
        diagnostics["reason"] = "unbounded"
        return SdpSolution(SolveStatus.FAILED, {}, float("nan"), float("nan"),
                           float("nan"), diagnostics)
    if solver_status not in ("optimal", "optimal_inaccurate"):
        return SdpSolution(SolveStatus.FAILED, {}, float("nan"), float("nan"),
                           float("nan"), diagnostics)

    values: dict[str, np.ndarray | float] = {}
    for vid, var in problem.variables.items():
        val = cvars[vid].value
        if val is None:
            return SdpSolution(SolveStatus.FAILED, {}, float("nan"), float("nan"),
                               float("nan"), {**diagnostics, "reason": "no primal value"})
        if isinstance(var, MatVar):
            val = np.atleast_2d(np.asarray(val, dtype=float))
            if var.symmetric:
                val = 0.5 * (val + val.T)
            values[vid] = val
        else:
            values[vid] = float(val)

    # independent verification of the returned assignment
    margins = []
    for c, s in zip(problem.psd_constraints, scales):
        evaluated = c.expr.evaluate(values)
        sym = 0.5 * (evaluated + evaluated.T)
        margins.append(float(np.linalg.eigvalsh(sym).max()) / s)
    worst_margin = max(margins) if margins else float("-inf")

    eq_res = 0.0
    for c in problem.eq_constraints:
        r = float(np.abs(c.expr.evaluate(values)).max()) if c.expr.rows else 0.0
        eq_res = max(eq_res, r)

    eq_budget = max(eq_tolerance, DEFAULT_EQ_TOL_CHECK)
    diagnostics["verified_margins"] = margins

    if mode == "feasibility":
        t_star = float(slack.value)
        diagnostics["slack"] = t_star
        if t_star <= SLACK_LOWER_BOUND * 0.99:
            diagnostics["reason"] = "unbounded"
            return SdpSolution(SolveStatus.FAILED, values, t_star, eq_res, worst_margin, diagnostics)
        slack_margins = [m for c, m in zip(problem.psd_constraints, margins) if c.use_slack]
        verified = (max(slack_margins) if slack_margins else -np.inf) < -eps_strict
        if t_star < -eps_strict and verified and eq_res <= eq_budget:
            status = SolveStatus.OPTIMAL
        elif t_star >= -eps_strict and (solver_status == "optimal" or t_star > 1e-6):
            # a decisively positive optimum settles infeasibility even when
            # the solver only reached reduced accuracy
            status = SolveStatus.INFEASIBLE
        else:
            status = SolveStatus.INACCURATE
        return SdpSolution(status, values, t_star, eq_res, worst_margin, diagnostics)

    obj_val = float(prob.value)
    verified = worst_margin <= MARGIN_ROUNDTRIP_TOL and eq_res <= eq_budget
    if solver_status == "optimal" and verified:
        status = SolveStatus.OPTIMAL
    elif verified:
        status = SolveStatus.INACCURATE
    else:
        status = SolveStatus.INACCURATE
        diagnostics["reason"] = "verification failed"
    return SdpSolution(status, values, obj_val, eq_res, worst_margin, diagnostics)


def dump_problem(problem: LmiProblem) -> dict:
    """Debug view of the assembled blocks (JSON-ready, matrices row-major)."""

    def expr_dict(expr: AffineMatrixExpr) -> dict:
        return {
            "shape": [expr.rows, expr.cols],
            "symmetric": expr.symmetric,
            "constant": expr.constant.tolist(),
            "terms": [
                {"var": t.var_id, "left": t.left.tolist(), "right": t.right.tolist(),
                 "coeff": t.coeff}
                for t in expr.mat_terms
            ] + [
                {"var": t.var_id, "block": t.block.tolist(), "coeff": t.coeff}
                for t in expr.scalar_terms
            ],
        }

    return {
        "variables": {
            vid: ({"rows": v.rows, "cols": v.cols, "symmetric": v.symmetric}
                  if isinstance(v, MatVar) else {"lower_bound": v.lower_bound})
            for vid, v in problem.variables.items()
        },
        "psd_constraints": [
            {"name": c.name, "use_slack": c.use_slack, "expr": expr_dict(c.expr)}
            for c in problem.psd_constraints
        ],
        "eq_constraints": [
            {"name": c.name, "expr": expr_dict(c.expr)} for c in problem.eq_constraints
        ],
        "objective": [[vid, np.asarray(w).tolist()] for vid, w in problem.objective],
    }


def solve_feasibility(problem: LmiProblem, *, eps_strict: float = DEFAULT_EPS_STRICT,
                      eq_tolerance: float = 0.0, scale: bool = True,
                      solver: str = "CLARABEL", verbose: bool = False) -> SdpSolution:
    """Minimize a shared slack t with every slack-bearing block <= t * I.

    Status OPTIMAL means strictly feasible: t* < -eps_strict and the returned
    assignment re-verifies by eigenvalue computation. t* >= -eps_strict maps
    to INFEASIBLE (no strictly feasible point found).
    """
    if problem.objective:
        raise ValueError("feasibility problems must not carry an objective")
    return _solve(problem, "feasibility", eps_strict=eps_strict, eq_tolerance=eq_tolerance,
                  scale=scale, solver=solver, verbose=verbose)


def solve_min(problem: LmiProblem, *, eps_strict: float = DEFAULT_EPS_STRICT,
              eq_tolerance: float = 0.0, scale: bool = True,
              solver: str = "CLARABEL", verbose: bool = False) -> SdpSolution:
    """Minimize the linear objective subject to every block <= -eps_strict * I."""
    if not problem.objective:
        raise ValueError("solve_min requires a linear objective")
    return _solve(problem, "minimize", eps_strict=eps_strict, eq_tolerance=eq_tolerance,
                  scale=scale, solver=solver, verbose=verbose)
