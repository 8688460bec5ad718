"""Car-following instantiation: model builder, IDM baseline, safety metrics.

The error state is x = [ego_pos - leader_pos - delta_d, ego_vel - leader_vel]
with a constant-speed leader, so the physical bumper gap is
gap = leader - ego = -(x1 + delta_d).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import PemAdmModel, PerceptionMode, TransitionMatrix
from .sim import BiasSignal, Trajectory

MISDETECTION_MODE = 0


@dataclass(frozen=True)
class CarFollowingParams:
    h: float = 0.01
    delta_d: float = -5.0
    d00: float = 0.01
    d01: float = 0.05
    d10: float = 0.01
    d11: float = 0.05
    e00: float = 0.01
    e01: float = 0.01
    e10: float = 0.01
    e11: float = 0.01
    p00: float = 0.7
    p01: float = 0.3
    p10: float = 0.2
    p11: float = 0.8
    ego_init: tuple[float, float] = (0.0, 1.0)
    leader_init: tuple[float, float] = (10.0, 5.0)
    bias: BiasSignal = field(default_factory=lambda: BiasSignal.constant([-1.0, -1.0]))

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in (
            "h", "delta_d", "d00", "d01", "d10", "d11",
            "e00", "e01", "e10", "e11", "p00", "p01", "p10", "p11")}
        out["ego_init"] = list(self.ego_init)
        out["leader_init"] = list(self.leader_init)
        out["bias"] = self.bias.to_dict()
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "CarFollowingParams":
        kwargs = dict(data)
        if "bias" in kwargs:
            kwargs["bias"] = BiasSignal.from_dict(kwargs["bias"])
        if "ego_init" in kwargs:
            kwargs["ego_init"] = tuple(float(v) for v in kwargs["ego_init"])
        if "leader_init" in kwargs:
            kwargs["leader_init"] = tuple(float(v) for v in kwargs["leader_init"])
        return cls(**kwargs)


@dataclass(frozen=True)
class IdmParams:
    """Standard IDM constants; not calibrated to any published experiment.

    b_hard is the braking authority of the baseline cruise controller. It
    defaults to b_comf: the baseline brakes no harder than its comfort
    setting, emergency intervention being a separate system out of scope.
    """

    v0: float = 15.0
    T: float = 1.0
    a_max: float = 1.5
    b_comf: float = 2.0
    s0: float = 2.0
    delta_exp: float = 4.0
    b_hard: float = 2.0

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in
                ("v0", "T", "a_max", "b_comf", "s0", "delta_exp", "b_hard")}

    @classmethod
    def from_dict(cls, data: dict) -> "IdmParams":
        return cls(**data)


def build_car_following(p: CarFollowingParams) -> tuple[PemAdmModel, np.ndarray]:
    """Instantiate the two-mode error-dynamics model and its initial state."""
    if p.h <= 0:
        raise ValueError("sampling interval h must be positive")
    h = p.h
    A = np.array([[1.0, h], [0.0, 1.0]])
    B = np.array([[0.0], [h]])
    modes = (
        PerceptionMode(C=np.diag([0.0, 1.0]), D=np.diag([p.d00, p.d01]),
                       E=np.diag([p.e00, p.e01])),
        PerceptionMode(C=np.diag([1.0, 1.0]), D=np.diag([p.d10, p.d11]),
                       E=np.diag([p.e10, p.e11])),
    )
    transition = TransitionMatrix([[p.p00, p.p01], [p.p10, p.p11]])
    if p.bias.kind == "zero":
        bias_bound = 0.0
    elif p.bias.kind == "constant":
        bias_bound = float(np.linalg.norm(p.bias.value))
    else:
        bias_bound = float(np.linalg.norm(p.bias.amplitude))
    model = PemAdmModel(A=A, B=B, modes=modes, transition=transition,
                        bias_bound=bias_bound)
    x0 = np.array([
        p.ego_init[0] - p.leader_init[0] - p.delta_d,
        p.ego_init[1] - p.leader_init[1],
    ])
    return model, x0


class IdmPolicy:
    """Intelligent-driver acceleration law on (gap, ego speed, closing speed)."""

    def __init__(self, params: IdmParams):
        self.params = params

    def accel(self, gap: float, v_ego: float, dv: float) -> float:
        p = self.params
        if gap <= 0.0:
            return -p.b_hard
        s_star = p.s0 + max(0.0, v_ego * p.T + v_ego * dv / (2.0 * math.sqrt(p.a_max * p.b_comf)))
        a = p.a_max * (1.0 - (v_ego / p.v0) ** p.delta_exp - (s_star / gap) ** 2)
        return float(min(max(a, -p.b_hard), p.a_max))

    def free_road_accel(self, v_ego: float) -> float:
        p = self.params
        a = p.a_max * (1.0 - (v_ego / p.v0) ** p.delta_exp)
        return float(min(max(a, -p.b_hard), p.a_max))


def idm_policy(params: IdmParams) -> IdmPolicy:
    if min(params.v0, params.T, params.a_max, params.b_comf, params.s0,
           params.delta_exp, params.b_hard) <= 0:
        raise ValueError("all IDM parameters must be positive")
    return IdmPolicy(params)


class IdmMeasurementAdapter:
    """Drives the IDM from the corrupted measurement channel.

    The perceived gap and closing speed are reconstructed from y exactly as
    the linear laws see them: gap = -(y1 + delta_d), dv = y2, ego speed
    = y2 + nominal leader speed. In the misdetection mode the position
    channel carries no target, so the policy falls back to its free-road
    term ("freeroad"); the alternative "ghost" reading keeps using the
    zeroed channel, which pins the perceived gap near -delta_d.
    """

    def __init__(self, idm: IdmPolicy, params: CarFollowingParams,
                 misdetection: str = "freeroad"):
        if misdetection not in ("freeroad", "ghost"):
            raise ValueError(f"unknown misdetection behavior {misdetection!r}")
        self.idm = idm
        self.delta_d = params.delta_d
        self.leader_speed = params.leader_init[1]
        self.misdetection = misdetection
        self.emergency_brakes = 0

    def __call__(self, y: np.ndarray, k: int, mode: int) -> np.ndarray:
        v_ego = max(float(y[1]) + self.leader_speed, 0.0)
        if mode == MISDETECTION_MODE and self.misdetection == "freeroad":
            a = self.idm.free_road_accel(v_ego)
        else:
            gap = -(float(y[0]) + self.delta_d)
            if gap <= 0.0:
                self.emergency_brakes += 1
            a = self.idm.accel(gap, v_ego, float(y[1]))
        return np.array([a])


@dataclass(frozen=True)
class CollisionReport:
    min_gaps: np.ndarray       # per-trial minimum of (leader - ego)
    collided: np.ndarray       # per-trial bool
    count: int
    fraction: float


def collision_metrics(trajs: list[Trajectory], params: CarFollowingParams) -> CollisionReport:
    """Per-trial minimum physical gap and point-contact collision flags.

    A trial collides iff ego - leader = x1 + delta_d reaches zero or more at
    any stored step, i.e. the minimum of (leader - ego) is <= 0.
    """
    min_gaps = np.array([
        float(np.min(-(t.x[:, 0] + params.delta_d))) for t in trajs
    ])
    collided = min_gaps <= 0.0
    count = int(collided.sum())
    return CollisionReport(min_gaps=min_gaps, collided=collided, count=count,
                           fraction=count / len(trajs) if trajs else 0.0)


def gap_series(x: np.ndarray, params: CarFollowingParams) -> np.ndarray:
    """leader - ego along a trajectory's stored states."""
    return -(x[:, 0] + params.delta_d)
