"""Domain types for mode-switched driving loops with noisy, biased output feedback.

A plant ``x(k+1) = A x(k) + B u(k)`` is observed through one of N perception
modes ``y(k) = C_i x(k) + D_i w(k) + E_i v(k)``, where the active mode i
follows a Markov chain, w is i.i.d. standard normal and v is a bounded bias.
Static per-mode output feedback ``u = K_i y`` closes the loop.

Construction performs shape coercion only; semantic invariants (stochastic
rows, consistent mode dimensions, ...) are reported by :func:`validate_model`
as data, not exceptions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ROW_SUM_TOL = 1e-12


def _as_matrix(value, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1) if arr.size else arr.reshape(0, 0)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a 2-D matrix, got shape {arr.shape}")
    arr = np.ascontiguousarray(arr)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class TransitionMatrix:
    """Row-stochastic one-step transition matrix p[i, j] = P(next=j | current=i)."""

    p: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "p", _as_matrix(self.p, "transition matrix"))

    @property
    def N(self) -> int:
        return self.p.shape[0]

    def row_cumsum(self) -> np.ndarray:
        return np.cumsum(self.p, axis=1)

    def stationary_distribution(self) -> np.ndarray:
        """Left Perron vector of p, normalized to sum 1."""
        vals, vecs = np.linalg.eig(self.p.T)
        k = int(np.argmin(np.abs(vals - 1.0)))
        pi = np.real(vecs[:, k])
        return pi / pi.sum()


@dataclass(frozen=True)
class PerceptionMode:
    """One perception mode: observation C, noise factor D, bias matrix E."""

    C: np.ndarray
    D: np.ndarray
    E: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "C", _as_matrix(self.C, "C"))
        object.__setattr__(self, "D", _as_matrix(self.D, "D"))
        object.__setattr__(self, "E", _as_matrix(self.E, "E"))

    @property
    def n3(self) -> int:
        return self.C.shape[0]

    @property
    def nw(self) -> int:
        return self.D.shape[1]


@dataclass(frozen=True)
class PemAdmModel:
    """Open-loop plant plus the mode-switched measurement channel."""

    A: np.ndarray
    B: np.ndarray
    modes: tuple[PerceptionMode, ...]
    transition: TransitionMatrix
    bias_bound: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "A", _as_matrix(self.A, "A"))
        object.__setattr__(self, "B", _as_matrix(self.B, "B"))
        object.__setattr__(self, "modes", tuple(self.modes))
        object.__setattr__(self, "bias_bound", float(self.bias_bound))

    @property
    def n1(self) -> int:
        return self.A.shape[0]

    @property
    def n2(self) -> int:
        return self.B.shape[1]

    @property
    def n3(self) -> int:
        return self.modes[0].n3

    @property
    def nw(self) -> int:
        return self.modes[0].nw

    @property
    def N(self) -> int:
        return len(self.modes)


@dataclass(frozen=True)
class Controller:
    """Per-mode static output-feedback gains u = gains[i] @ y."""

    gains: tuple[np.ndarray, ...]

    def __post_init__(self):
        object.__setattr__(
            self, "gains", tuple(_as_matrix(g, f"gain[{i}]") for i, g in enumerate(self.gains))
        )

    @property
    def N(self) -> int:
        return len(self.gains)


@dataclass(frozen=True)
class ClosedLoopModel:
    """Per-mode closed loop x+ = Acl_i x + Dcl_i w + Ecl_i v under Markov switching."""

    Acl: tuple[np.ndarray, ...]
    Dcl: tuple[np.ndarray, ...]
    Ecl: tuple[np.ndarray, ...]
    transition: TransitionMatrix
    bias_bound: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "Acl", tuple(_as_matrix(m, "Acl") for m in self.Acl))
        object.__setattr__(self, "Dcl", tuple(_as_matrix(m, "Dcl") for m in self.Dcl))
        object.__setattr__(self, "Ecl", tuple(_as_matrix(m, "Ecl") for m in self.Ecl))
        object.__setattr__(self, "bias_bound", float(self.bias_bound))

    @property
    def n1(self) -> int:
        return self.Acl[0].shape[0]

    @property
    def nw(self) -> int:
        return self.Dcl[0].shape[1]

    @property
    def n3(self) -> int:
        return self.Ecl[0].shape[1]

    @property
    def N(self) -> int:
        return len(self.Acl)


@dataclass(frozen=True)
class Violation:
    code: str
    message: str


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = field(default_factory=tuple)

    @property
    def ok(self) -> bool:
        return not self.violations

    def codes(self) -> list[str]:
        return [v.code for v in self.violations]


def validate_model(model: PemAdmModel) -> ValidationReport:
    """Check every structural invariant; violations are returned, never raised."""
    out: list[Violation] = []

    def bad(code: str, message: str) -> None:
        out.append(Violation(code, message))

    p = model.transition.p
    if p.shape[0] != p.shape[1]:
        bad("transition-not-square", f"transition matrix has shape {p.shape}")
    else:
        if np.any(p < 0.0) or np.any(p > 1.0):
            bad("entry-out-of-range", "transition entries must lie in [0, 1]")
        sums = p.sum(axis=1)
        for i, s in enumerate(sums):
            if abs(s - 1.0) > ROW_SUM_TOL:
                bad("row-not-stochastic", f"transition row {i} sums to {s!r}")
    if not np.all(np.isfinite(p)):
        bad("nonfinite", "transition matrix contains non-finite entries")

    if model.N < 1:
        bad("mode-count-mismatch", "model must have at least one perception mode")
    elif model.transition.N != model.N:
        bad(
            "mode-count-mismatch",
            f"{model.N} modes but transition matrix is {model.transition.N}x{model.transition.N}",
        )

    if model.A.shape[0] != model.A.shape[1]:
        bad("dim-mismatch", f"A must be square, got {model.A.shape}")
    if model.B.shape[0] != model.A.shape[0]:
        bad("dim-mismatch", f"B has {model.B.shape[0]} rows, A has {model.A.shape[0]}")

    if model.modes:
        n3, nw = model.modes[0].n3, model.modes[0].nw
        for i, m in enumerate(model.modes):
            if m.C.shape[0] != m.D.shape[0] or m.C.shape[0] != m.E.shape[0]:
                bad("mode-dims-inconsistent", f"mode {i}: C/D/E row counts differ")
            if (m.n3, m.nw) != (n3, nw):
                bad("mode-dims-inconsistent", f"mode {i}: (n3, nw) differs from mode 0")
            if m.C.shape[1] != model.n1:
                bad("obs-cols-mismatch", f"mode {i}: C has {m.C.shape[1]} columns, state dim is {model.n1}")
            if m.E.shape[1] != m.E.shape[0]:
                bad("dim-mismatch", f"mode {i}: E must be square, got {m.E.shape}")
            for name, mat in (("C", m.C), ("D", m.D), ("E", m.E)):
                if not np.all(np.isfinite(mat)):
                    bad("nonfinite", f"mode {i}: {name} contains non-finite entries")

    for name, mat in (("A", model.A), ("B", model.B)):
        if not np.all(np.isfinite(mat)):
            bad("nonfinite", f"{name} contains non-finite entries")

    if not np.isfinite(model.bias_bound) or model.bias_bound < 0.0:
        bad("bias-bound-negative", f"bias_bound must be a nonnegative real, got {model.bias_bound}")

    return ValidationReport(tuple(out))


def close_loop(model: PemAdmModel, controller: Controller) -> ClosedLoopModel:
    """Form Acl_i = A + B K_i C_i, Dcl_i = B K_i D_i, Ecl_i = B K_i E_i per mode."""
    if controller.N != model.N:
        raise ValueError(f"controller has {controller.N} gains, model has {model.N} modes")
    for i, K in enumerate(controller.gains):
        if K.shape != (model.n2, model.n3):
            raise ValueError(
                f"gain {i} has shape {K.shape}, expected ({model.n2}, {model.n3})"
            )
    Acl, Dcl, Ecl = [], [], []
    for K, m in zip(controller.gains, model.modes):
        Acl.append(model.A + model.B @ K @ m.C)
        Dcl.append(model.B @ K @ m.D)
        Ecl.append(model.B @ K @ m.E)
    return ClosedLoopModel(
        Acl=tuple(Acl),
        Dcl=tuple(Dcl),
        Ecl=tuple(Ecl),
        transition=model.transition,
        bias_bound=model.bias_bound,
    )


# --- JSON wire format -------------------------------------------------------
# Top-level keys: "A", "B", "modes" (array of {"C", "D", "E"}), "transition",
# "bias_bound". Matrices are row-major nested lists of finite doubles.


def model_to_dict(model: PemAdmModel) -> dict:
    return {
        "A": model.A.tolist(),
        "B": model.B.tolist(),
        "modes": [
            {"C": m.C.tolist(), "D": m.D.tolist(), "E": m.E.tolist()} for m in model.modes
        ],
        "transition": model.transition.p.tolist(),
        "bias_bound": model.bias_bound,
    }


def model_from_dict(data: dict) -> PemAdmModel:
    try:
        modes = tuple(
            PerceptionMode(C=m["C"], D=m["D"], E=m["E"]) for m in data["modes"]
        )
        return PemAdmModel(
            A=data["A"],
            B=data["B"],
            modes=modes,
            transition=TransitionMatrix(data["transition"]),
            bias_bound=float(data.get("bias_bound", 0.0)),
        )
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed model description: {exc}") from exc


def controller_to_dict(controller: Controller) -> dict:
    return {"gains": [g.tolist() for g in controller.gains]}


def controller_from_dict(data: dict) -> Controller:
    try:
        return Controller(gains=tuple(np.asarray(g, dtype=float) for g in data["gains"]))
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed controller description: {exc}") from exc
