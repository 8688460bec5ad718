"""Toolkit for mode-switched driving loops with noisy, biased output feedback:
stability analysis, guaranteed-cost levels, gain synthesis, and Monte Carlo
simulation of the car-following scenario."""

from ._kernels import BACKEND as kernel_backend
from .analysis import (
    DriftCheck,
    GammaCertificate,
    StabilityCertificate,
    cost_bound,
    guaranteed_cost_gamma,
    lyapunov_drift_check,
    ms_spectral_radius,
    ms_stability_test,
)
from .model import (
    ClosedLoopModel,
    Controller,
    PemAdmModel,
    PerceptionMode,
    TransitionMatrix,
    ValidationReport,
    Violation,
    close_loop,
    controller_from_dict,
    controller_to_dict,
    model_from_dict,
    model_to_dict,
    validate_model,
)
from .scenarios import (
    CarFollowingParams,
    CollisionReport,
    IdmMeasurementAdapter,
    IdmParams,
    IdmPolicy,
    build_car_following,
    collision_metrics,
    idm_policy,
)
from .sim import (
    BiasSignal,
    MonteCarloSummary,
    Trajectory,
    evaluate_cost,
    monte_carlo,
    rollout,
    run_trials,
    sample_markov_path,
    summarize,
    trial_seed,
)
from .synthesis import SynthesisResult, synthesize_sogcc, synthesize_ssc

__version__ = "0.1.0"

__all__ = [
    "BiasSignal", "CarFollowingParams", "ClosedLoopModel", "CollisionReport",
    "Controller", "DriftCheck", "GammaCertificate", "IdmMeasurementAdapter",
    "IdmParams", "IdmPolicy", "MonteCarloSummary", "PemAdmModel",
    "PerceptionMode", "StabilityCertificate", "SynthesisResult", "Trajectory",
    "TransitionMatrix", "ValidationReport", "Violation", "build_car_following",
    "close_loop", "collision_metrics", "controller_from_dict",
    "controller_to_dict", "cost_bound", "evaluate_cost", "guaranteed_cost_gamma",
    "idm_policy", "kernel_backend", "lyapunov_drift_check", "model_from_dict",
    "model_to_dict", "monte_carlo", "ms_spectral_radius", "ms_stability_test",
    "rollout", "run_trials", "sample_markov_path", "summarize",
    "synthesize_sogcc", "synthesize_ssc", "trial_seed", "validate_model",
]
