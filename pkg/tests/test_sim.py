import numpy as np
import pytest

from pemadm import (
    BiasSignal,
    Controller,
    PemAdmModel,
    PerceptionMode,
    Trajectory,
    TransitionMatrix,
    evaluate_cost,
    monte_carlo,
    rollout,
    run_trials,
    sample_markov_path,
    summarize,
    trial_seed,
)
from pemadm._kernels_py import plant_step

from conftest import QW, RW


def _stream(seed):
    return np.random.Generator(np.random.Philox(key=[seed, 0]))


def test_markov_absorbing_mode():
    T = TransitionMatrix(np.eye(3))
    path = sample_markov_path(T, 1, 500, _stream(0))
    assert np.all(path == 1)


def test_markov_deterministic_row():
    T = TransitionMatrix([[0.0, 1.0], [0.0, 1.0]])
    path = sample_markov_path(T, 0, 100, _stream(1))
    assert path[0] == 0
    assert np.all(path[1:] == 1)


def test_markov_occupancy_matches_stationary(cf_model):
    model, _ = cf_model
    steps = 10 ** 6
    path = sample_markov_path(model.transition, 0, steps, _stream(42))
    occupancy = float(np.mean(path == 0))
    pi0 = model.transition.stationary_distribution()[0]
    assert pi0 == pytest.approx(0.4, abs=1e-12)
    # 3 sigma band; the chain's autocorrelation (second eigenvalue lam2)
    # inflates the i.i.d. variance by (1 + lam2) / (1 - lam2)
    lam2 = 1.0 - model.transition.p[0, 1] - model.transition.p[1, 0]
    sigma = np.sqrt(pi0 * (1 - pi0) * (1 + lam2) / (1 - lam2) / steps)
    assert abs(occupancy - pi0) < 3.0 * sigma


def test_rollout_deterministic_and_exact(cf_model, sogcc_ref, cf_bias):
    model, x0 = cf_model
    a = rollout(model, sogcc_ref, x0, 1, 1500, cf_bias, seed=987)
    b = rollout(model, sogcc_ref, x0, 1, 1500, cf_bias, seed=987)
    assert np.array_equal(a.x, b.x) and np.array_equal(a.u, b.u)
    assert np.array_equal(a.y, b.y) and np.array_equal(a.r, b.r)
    # the stored arithmetic satisfies the plant identity exactly
    out = np.empty(2)
    for k in range(len(a) - 1):
        plant_step(model.A, model.B, a.x[k], a.u[k], out)
        assert np.array_equal(out, a.x[k + 1])


def test_rollout_zero_gains_is_open_loop(cf_model, cf_bias):
    model, x0 = cf_model
    zero = Controller(gains=(np.zeros((1, 2)), np.zeros((1, 2))))
    traj = rollout(model, zero, x0, 1, 50, cf_bias, seed=3)
    x = x0.copy()
    for k in range(50):
        assert np.allclose(traj.x[k], x, atol=1e-12)
        x = model.A @ x
    assert np.all(traj.u == 0.0)


def test_rollout_noise_free_converges(cf_model):
    # deterministic contraction of a guaranteed-cost-style loop (gains as
    # produced by the synthesis on the reference scenario)
    params_model, x0 = cf_model
    quiet_modes = tuple(
        PerceptionMode(C=m.C, D=np.zeros((2, 2)), E=np.zeros((2, 2)))
        for m in params_model.modes
    )
    quiet = PemAdmModel(A=params_model.A, B=params_model.B, modes=quiet_modes,
                        transition=params_model.transition, bias_bound=0.0)
    K = Controller(gains=(np.array([[0.0, -1.174]]), np.array([[-0.911, -1.266]])))
    traj = rollout(quiet, K, x0, 1, 3000, BiasSignal.zero(2), seed=5)
    norms = np.linalg.norm(traj.x, axis=1)
    assert norms[-1] < 1e-6
    assert norms.max() <= 1.5 * norms[0]


def test_rollout_rejects_bias_above_bound(cf_model):
    model, x0 = cf_model  # bias_bound = sqrt(2)
    with pytest.raises(ValueError, match="bias norm"):
        rollout(model, Controller(gains=(np.zeros((1, 2)), np.zeros((1, 2)))),
                x0, 1, 10, BiasSignal.constant([-2.0, -2.0]), seed=0)


def test_rollout_divergence_truncates():
    model = PemAdmModel(
        A=np.array([[2.0]]), B=np.array([[0.0]]),
        modes=(PerceptionMode(C=np.eye(1), D=np.zeros((1, 1)), E=np.zeros((1, 1))),),
        transition=TransitionMatrix([[1.0]]),
    )
    K = Controller(gains=(np.zeros((1, 1)),))
    traj = rollout(model, K, [1.0], 0, 200, BiasSignal.zero(1), seed=0)
    assert traj.diverged
    assert traj.diverged_at is not None
    assert len(traj) == traj.diverged_at + 1
    assert abs(traj.x[-1, 0]) > 1e12


def test_evaluate_cost_zero_and_constant():
    x = np.zeros((3, 2))
    traj = Trajectory(x=x, r=np.zeros(3, dtype=np.int64), u=np.zeros((3, 1)),
                      y=np.zeros((3, 2)), seed=0)
    assert evaluate_cost(traj, QW, RW) == 0.0
    x2 = np.tile([1.0, 0.0], (3, 1))
    traj2 = Trajectory(x=x2, r=np.zeros(3, dtype=np.int64), u=np.zeros((3, 1)),
                       y=np.zeros((3, 2)), seed=0)
    assert evaluate_cost(traj2, QW, RW) == pytest.approx(30.0, rel=1e-14)


def test_single_trial_summary_has_zero_std(cf_model, sogcc_ref, cf_bias):
    model, x0 = cf_model
    summary = monte_carlo(model, sogcc_ref, x0, 1, 100, cf_bias, 1, 7, Q=QW, R=RW)
    assert summary.trials == 1
    assert np.all(summary.x_std == 0.0)
    assert np.all(summary.u_std == 0.0)
    traj = rollout(model, sogcc_ref, x0, 1, 100, cf_bias, seed=trial_seed(7, 0))
    assert np.allclose(summary.rmse, np.linalg.norm(traj.x, axis=1))
    assert summary.costs[0] == pytest.approx(evaluate_cost(traj, QW, RW))


def test_parallel_summaries_identical(cf_model, sogcc_ref, cf_bias):
    model, x0 = cf_model
    s1 = monte_carlo(model, sogcc_ref, x0, 1, 300, cf_bias, 24, 11, Q=QW, R=RW, workers=1)
    s2 = monte_carlo(model, sogcc_ref, x0, 1, 300, cf_bias, 24, 11, Q=QW, R=RW, workers=3)
    assert np.array_equal(s1.rmse, s2.rmse)
    assert np.array_equal(s1.x_mean, s2.x_mean)
    assert np.array_equal(s1.u_std, s2.u_std)
    assert np.array_equal(s1.costs, s2.costs)


def test_gaussian_channel_statistics():
    # C = 0, E = 0, D = I: y is exactly the unit-covariance noise
    n = 2
    model = PemAdmModel(
        A=np.zeros((n, n)), B=np.zeros((n, 1)),
        modes=(PerceptionMode(C=np.zeros((n, n)), D=np.eye(n), E=np.zeros((n, n))),),
        transition=TransitionMatrix([[1.0]]),
    )
    K = Controller(gains=(np.zeros((1, n)),))
    steps = 10 ** 5
    traj = rollout(model, K, np.zeros(n), 0, steps, BiasSignal.zero(n), seed=2024)
    cov = traj.y.T @ traj.y / len(traj)
    se_diag = 3.0 * np.sqrt(2.0 / steps)
    se_off = 3.0 / np.sqrt(steps)
    assert abs(cov[0, 0] - 1.0) < se_diag and abs(cov[1, 1] - 1.0) < se_diag
    assert abs(cov[0, 1]) < se_off


def test_bounded_second_moment_when_certified(cf_model, sogcc_ref, cf_bias):
    # no drift in E||x||^2 at large k for a certificate-feasible loop
    model, x0 = cf_model
    summary = monte_carlo(model, sogcc_ref, x0, 1, 2000, cf_bias, 60, 17)
    tail = summary.rmse[1000:]
    first, second = tail[:500].mean(), tail[500:].mean()
    assert second < 1.5 * first + 0.05


def test_divergent_trials_reported_and_excluded():
    model = PemAdmModel(
        A=np.array([[2.0]]), B=np.array([[0.0]]),
        modes=(PerceptionMode(C=np.eye(1), D=np.zeros((1, 1)), E=np.zeros((1, 1))),),
        transition=TransitionMatrix([[1.0]]),
    )
    K = Controller(gains=(np.zeros((1, 1)),))
    trajs = run_trials(model, K, [1.0], 0, 100, BiasSignal.zero(1), 5, 3)
    summary = summarize(trajs, 100, 3, Q=np.eye(1), R=np.eye(1))
    assert len(summary.diverged) == 5
    assert np.all(np.isnan(summary.costs))
    assert np.all(np.isnan(summary.rmse))


def test_trial_seed_mixing_is_injective():
    seeds = {trial_seed(123, m) for m in range(10_000)}
    assert len(seeds) == 10_000


def test_sinusoid_bias_respects_bound(cf_model):
    model, x0 = cf_model  # bias_bound = sqrt(2)
    zero = Controller(gains=(np.zeros((1, 2)), np.zeros((1, 2))))
    bias = BiasSignal.sinusoid([1.0, 0.5], period=40.0, phase=0.3)
    traj = rollout(model, zero, x0, 1, 120, bias, seed=9)
    assert len(traj) == 121
    vals = bias.values(120)
    k = np.arange(121)
    expected = np.outer(np.sin(2 * np.pi * k / 40.0 + 0.3), [1.0, 0.5])
    assert np.allclose(vals, expected, atol=1e-12)
    assert BiasSignal.from_dict(bias.to_dict()).to_dict() == bias.to_dict()
