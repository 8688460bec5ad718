"""Stochastic simulation: Markov mode sampling, rollouts, Monte Carlo ensembles.

Reproducibility contract: a rollout is a pure function of (model, controller,
x0, r0, horizon, bias, seed). Per-trial seeds are derived from the master
seed by a splitmix-style golden-ratio mix, so ensembles are independent of
worker count and scheduling. Random draws use the counter-based Philox
generator; the draw order is fixed (mode uniforms first, then noise normals).
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .model import ClosedLoopModel, Controller, PemAdmModel, TransitionMatrix

DIVERGENCE_GUARD = 1e12
_GOLDEN = 0x9E3779B97F4A7C15
_MASK64 = (1 << 64) - 1


def trial_seed(master_seed: int, trial: int) -> int:
    """Derive the stream seed of one trial from the master seed."""
    return (master_seed + (trial + 1) * _GOLDEN) & _MASK64


@dataclass(frozen=True)
class BiasSignal:
    """Bounded deterministic disturbance v(k) on the measurement channel."""

    kind: str                      # "zero" | "constant" | "sinusoid"
    value: np.ndarray | None = None
    amplitude: np.ndarray | None = None
    period: float = 1.0
    phase: float = 0.0
    dim: int = 0

    @classmethod
    def zero(cls, dim: int) -> "BiasSignal":
        return cls(kind="zero", dim=dim)

    @classmethod
    def constant(cls, value) -> "BiasSignal":
        v = np.asarray(value, dtype=float).reshape(-1)
        return cls(kind="constant", value=v, dim=v.size)

    @classmethod
    def sinusoid(cls, amplitude, period: float, phase: float = 0.0) -> "BiasSignal":
        a = np.asarray(amplitude, dtype=float).reshape(-1)
        if period <= 0:
            raise ValueError("sinusoid period must be positive")
        return cls(kind="sinusoid", amplitude=a, period=float(period),
                   phase=float(phase), dim=a.size)

    def at(self, k: int) -> np.ndarray:
        if self.kind == "zero":
            return np.zeros(self.dim)
        if self.kind == "constant":
            return self.value
        return self.amplitude * math.sin(2.0 * math.pi * k / self.period + self.phase)

    def values(self, horizon: int) -> np.ndarray:
        """Stacked v(0..horizon), shape (horizon + 1, dim)."""
        if self.kind == "zero":
            return np.zeros((horizon + 1, self.dim))
        if self.kind == "constant":
            return np.tile(self.value, (horizon + 1, 1))
        k = np.arange(horizon + 1)[:, None]
        return self.amplitude[None, :] * np.sin(2.0 * np.pi * k / self.period + self.phase)

    def to_dict(self) -> dict:
        if self.kind == "zero":
            return {"kind": "zero", "dim": self.dim}
        if self.kind == "constant":
            return {"kind": "constant", "value": self.value.tolist()}
        return {"kind": "sinusoid", "amplitude": self.amplitude.tolist(),
                "period": self.period, "phase": self.phase}

    @classmethod
    def from_dict(cls, data: dict) -> "BiasSignal":
        kind = data.get("kind", "zero")
        if kind == "zero":
            return cls.zero(int(data["dim"]))
        if kind == "constant":
            return cls.constant(data["value"])
        if kind == "sinusoid":
            return cls.sinusoid(data["amplitude"], data["period"], data.get("phase", 0.0))
        raise ValueError(f"unknown bias kind {kind!r}")


@dataclass(frozen=True)
class Trajectory:
    """One sample path; all arrays share the same length."""

    x: np.ndarray              # (T, n1)
    r: np.ndarray              # (T,)
    u: np.ndarray              # (T, n2)
    y: np.ndarray              # (T, n3)
    seed: int
    diverged_at: int | None = None

    @property
    def diverged(self) -> bool:
        return self.diverged_at is not None

    def __len__(self) -> int:
        return self.x.shape[0]


@dataclass(frozen=True)
class MonteCarloSummary:
    rmse: np.ndarray           # (H+1,)
    x_mean: np.ndarray         # (H+1, n1)
    x_std: np.ndarray
    u_mean: np.ndarray         # (H+1, n2)
    u_std: np.ndarray
    costs: np.ndarray          # (trials,) NaN when weights absent or trial diverged
    trials: int
    master_seed: int
    diverged: tuple[int, ...]
    horizon: int


def sample_markov_path(transition: TransitionMatrix, r0: int, steps: int,
                       stream: np.random.Generator) -> np.ndarray:
    """Inverse-CDF Markov sampling: one uniform draw per step."""
    if not (0 <= r0 < transition.N):
        raise ValueError(f"initial mode {r0} out of range for {transition.N} modes")
    uniforms = stream.random(steps)
    cum = np.ascontiguousarray(transition.row_cumsum())
    return _kernels.markov_path(cum, int(r0), uniforms)


def _stream(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=[seed & _MASK64, 0]))


def rollout(model: PemAdmModel, controller, x0, r0: int, horizon: int,
            bias: BiasSignal, seed: int) -> Trajectory:
    """Simulate y(k) = C_r x + D_r w + E_r v, u(k) = K_r y (or a policy), x(k+1) = A x + B u.

    Deterministic given the seed. States whose magnitude exceeds the
    divergence guard truncate the trajectory with a flag at that step.
    """
    if horizon < 1:
        raise ValueError("horizon must be a positive integer")
    x0 = np.asarray(x0, dtype=float).reshape(model.n1)
    v_values = bias.values(horizon)
    if v_values.shape[1] != model.n3:
        raise ValueError(f"bias dimension {v_values.shape[1]} does not match n3={model.n3}")
    norms = np.linalg.norm(v_values, axis=1)
    if norms.max(initial=0.0) > model.bias_bound + 1e-12:
        raise ValueError(
            f"bias norm {norms.max():.6g} exceeds the model bias bound {model.bias_bound:.6g}"
        )

    stream = _stream(seed)
    r_path = sample_markov_path(model.transition, r0, horizon, stream)
    w = stream.standard_normal((horizon + 1, model.nw))

    x = np.zeros((horizon + 1, model.n1))
    y = np.zeros((horizon + 1, model.n3))
    u = np.zeros((horizon + 1, model.n2))
    x[0] = x0

    if isinstance(controller, Controller):
        if controller.N != model.N:
            raise ValueError("controller mode count does not match the model")
        C_st = np.ascontiguousarray(np.stack([m.C for m in model.modes]))
        D_st = np.ascontiguousarray(np.stack([m.D for m in model.modes]))
        E_st = np.ascontiguousarray(np.stack([m.E for m in model.modes]))
        K_st = np.ascontiguousarray(np.stack(controller.gains))
        d = _kernels.linear_rollout(model.A, model.B, C_st, D_st, E_st, K_st,
                                    r_path, w, v_values, x, y, u, DIVERGENCE_GUARD)
    else:
        d = _policy_rollout(model, controller, r_path, w, v_values, x, y, u)

    if d >= 0:
        end = d + 1
        return Trajectory(x=x[:end], r=r_path[:end], u=u[:end], y=y[:end],
                          seed=seed, diverged_at=int(d))
    return Trajectory(x=x, r=r_path, u=u, y=y, seed=seed, diverged_at=None)


def _policy_rollout(model, policy, r_path, w, v_values, x, y, u) -> int:
    """Rollout under an arbitrary policy; like the per-mode gains of the
    linear law, a policy sees the perceived measurement and the active mode."""
    horizon = r_path.shape[0] - 1
    diverged_at = -1
    for k in range(horizon + 1):
        i = int(r_path[k])
        m = model.modes[i]
        _kernels.measure(m.C, m.D, m.E, x[k], w[k], v_values[k], y[k])
        u[k] = np.asarray(policy(y[k], k, i), dtype=float).reshape(model.n2)
        if diverged_at >= 0:
            return diverged_at
        if k < horizon:
            _kernels.plant_step(model.A, model.B, x[k], u[k], x[k + 1])
            row = x[k + 1]
            if not np.all(np.isfinite(row)) or np.any(np.abs(row) > DIVERGENCE_GUARD):
                diverged_at = k + 1
    return diverged_at


def evaluate_cost(traj: Trajectory, Q, R) -> float:
    """Realized quadratic cost sum_k x' Q x + u' R u over the stored path."""
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    cx = np.einsum("ki,ij,kj->", traj.x, Q, traj.x)
    cu = np.einsum("ki,ij,kj->", traj.u, R, traj.u)
    return float(cx + cu)


def _run_batch(args):
    model, controller, x0, r0, horizon, bias, master_seed, indices = args
    return [(m, rollout(model, controller, x0, r0, horizon, bias, trial_seed(master_seed, m)))
            for m in indices]


def run_trials(model: PemAdmModel, controller, x0, r0: int, horizon: int,
               bias: BiasSignal, trials: int, master_seed: int,
               workers: int = 1) -> list[Trajectory]:
    """Independent rollouts with per-trial derived seeds, index-ordered."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    out: list[Trajectory | None] = [None] * trials
    if workers <= 1:
        for m in range(trials):
            out[m] = rollout(model, controller, x0, r0, horizon, bias,
                             trial_seed(master_seed, m))
    else:
        chunks = [list(range(trials))[c::workers] for c in range(workers)]
        payloads = [(model, controller, x0, r0, horizon, bias, master_seed, chunk)
                    for chunk in chunks if chunk]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for batch in pool.map(_run_batch, payloads):
                for m, traj in batch:
                    out[m] = traj
    return out  # type: ignore[return-value]


def summarize(trajectories: list[Trajectory], horizon: int, master_seed: int,
              Q=None, R=None) -> MonteCarloSummary:
    """Order-insensitive ensemble statistics; diverged trials are excluded from moments."""
    trials = len(trajectories)
    survivors = [t for t in trajectories if not t.diverged]
    diverged = tuple(m for m, t in enumerate(trajectories) if t.diverged)

    costs = np.full(trials, np.nan)
    if Q is not None and R is not None:
        for m, t in enumerate(trajectories):
            if not t.diverged:
                costs[m] = evaluate_cost(t, Q, R)

    if survivors:
        X = np.stack([t.x for t in survivors])          # (M, H+1, n1)
        U = np.stack([t.u for t in survivors])
        rmse = np.sqrt(np.mean(np.sum(X * X, axis=2), axis=0))
        x_mean = X.mean(axis=0)
        x_std = X.std(axis=0)
        u_mean = U.mean(axis=0)
        u_std = U.std(axis=0)
    else:
        n1 = trajectories[0].x.shape[1]
        n2 = trajectories[0].u.shape[1]
        rmse = np.full(horizon + 1, np.nan)
        x_mean = np.full((horizon + 1, n1), np.nan)
        x_std = np.full((horizon + 1, n1), np.nan)
        u_mean = np.full((horizon + 1, n2), np.nan)
        u_std = np.full((horizon + 1, n2), np.nan)

    return MonteCarloSummary(rmse=rmse, x_mean=x_mean, x_std=x_std, u_mean=u_mean,
                             u_std=u_std, costs=costs, trials=trials,
                             master_seed=master_seed, diverged=diverged, horizon=horizon)


def monte_carlo(model: PemAdmModel, controller, x0, r0: int, horizon: int,
                bias: BiasSignal, trials: int, master_seed: int, *,
                Q=None, R=None, workers: int = 1) -> MonteCarloSummary:
    """Ensemble statistics over independent trials (see run_trials/summarize)."""
    trajs = run_trials(model, controller, x0, r0, horizon, bias, trials, master_seed,
                       workers=workers)
    return summarize(trajs, horizon, master_seed, Q=Q, R=R)
