"""Acceptance suite for the toolkit.

Each test covers one exit criterion at its stated tolerance and prints one
PASS/FAIL line. Regression values marked "pinned" were recorded from the
first verified run of this implementation (master seed 0) and carry bands
wide enough to survive RNG-stream changes across numpy releases.
"""

import json
import time
from contextlib import contextmanager

import numpy as np
import pytest

from pemadm import (
    BiasSignal,
    ClosedLoopModel,
    IdmMeasurementAdapter,
    IdmParams,
    TransitionMatrix,
    build_car_following,
    close_loop,
    collision_metrics,
    cost_bound,
    guaranteed_cost_gamma,
    idm_policy,
    lyapunov_drift_check,
    monte_carlo,
    ms_spectral_radius,
    ms_stability_test,
    run_trials,
    summarize,
    synthesize_sogcc,
    synthesize_ssc,
)
from pemadm.cli import EXIT_OK, main

from conftest import HORIZON, LAM, QW, R0, RW

TRIALS = 200
IDM_TRIALS = 1500
MASTER_SEED = 0

# pinned regression values from the first verified run (numpy 2.2, Philox)
PINNED_SOGCC_PLATEAU = 0.0331       # mean ensemble RMSE over the last 500 steps
PINNED_IDM_COLLISION_FRACTION = 0.002


@contextmanager
def criterion(name: str):
    try:
        yield
    except BaseException:
        print(f"ACCEPTANCE[{name}]: FAIL")
        raise
    print(f"ACCEPTANCE[{name}]: PASS")


@pytest.fixture(scope="module")
def vi(cf_params):
    model, x0 = build_car_following(cf_params)
    return model, x0, cf_params


@pytest.fixture(scope="module")
def ssc_syn(vi):
    model, _, _ = vi
    result = synthesize_ssc(model)
    assert result.feasible, result.diagnostics
    return result


@pytest.fixture(scope="module")
def sogcc_syn(vi):
    model, _, _ = vi
    result = synthesize_sogcc(model, QW, RW, LAM)
    assert result.feasible, result.diagnostics
    return result


@pytest.fixture(scope="module")
def sogcc_ensemble(vi, sogcc_syn):
    model, x0, params = vi
    trajs = run_trials(model, sogcc_syn.controller, x0, R0, HORIZON, params.bias,
                       TRIALS, MASTER_SEED)
    summary = summarize(trajs, HORIZON, MASTER_SEED, Q=QW, R=RW)
    return trajs, summary


@pytest.fixture(scope="module")
def ssc_ensemble(vi, ssc_syn):
    model, x0, params = vi
    return monte_carlo(model, ssc_syn.controller, x0, R0, HORIZON, params.bias,
                       TRIALS, MASTER_SEED, Q=QW, R=RW)


def _random_loop(rng):
    n1 = int(rng.integers(1, 4))
    N = int(rng.integers(1, 4))
    Acl = [rng.standard_normal((n1, n1)) for _ in range(N)]
    p = rng.random((N, N)) + 0.05
    p /= p.sum(axis=1, keepdims=True)
    cl = ClosedLoopModel(Acl=tuple(Acl), Dcl=tuple(np.zeros((n1, 1)) for _ in range(N)),
                         Ecl=tuple(np.zeros((n1, n1)) for _ in range(N)),
                         transition=TransitionMatrix(p))
    rho0 = ms_spectral_radius(cl)
    if rho0 == 0.0:
        return None, 0.0
    while True:
        target = rng.uniform(0.2, 2.5)
        if abs(target - 1.0) > 0.05:
            break
    scale = np.sqrt(target / rho0)
    cl = ClosedLoopModel(Acl=tuple(scale * a for a in Acl), Dcl=cl.Dcl, Ecl=cl.Ecl,
                         transition=cl.transition)
    return cl, ms_spectral_radius(cl)


def test_oracle_agreement_200_random_loops():
    with criterion("oracle-agreement"):
        rng = np.random.default_rng(1234)
        start = time.monotonic()
        checked = 0
        while checked < 200:
            cl, rho = _random_loop(rng)
            if cl is None:
                continue
            cert = ms_stability_test(cl)
            assert not cert.inconclusive, (rho, cert.diagnostics)
            assert cert.feasible == (rho < 1.0), f"disagreement at rho = {rho}"
            checked += 1
        elapsed = time.monotonic() - start
        assert elapsed < 120.0, f"took {elapsed:.1f}s"


def test_reference_gain_verification(vi, ssc_ref, sogcc_ref):
    with criterion("reference-gain-verification"):
        model, _, _ = vi
        for controller in (ssc_ref, sogcc_ref):
            cl = close_loop(model, controller)
            assert ms_stability_test(cl).feasible
            assert ms_spectral_radius(cl) < 1.0


def test_synthesis_soundness(vi, ssc_syn, sogcc_syn, sogcc_ref):
    with criterion("synthesis-soundness"):
        model, _, _ = vi
        for result in (ssc_syn, sogcc_syn):
            cl = close_loop(model, result.controller)
            assert ms_stability_test(cl).feasible
            assert ms_spectral_radius(cl) < 1.0
        ref_cert = guaranteed_cost_gamma(close_loop(model, sogcc_ref), sogcc_ref,
                                         model, QW, RW)
        assert ref_cert.feasible
        assert sogcc_syn.gamma <= ref_cert.gamma * 1.05, (
            f"certified gamma {sogcc_syn.gamma} vs reference {ref_cert.gamma}"
        )


def test_guaranteed_cost_bound_validity(vi, sogcc_syn, sogcc_ensemble):
    with criterion("cost-bound-validity"):
        model, x0, params = vi
        _, summary = sogcc_ensemble
        bound = cost_bound(sogcc_syn.cost_certificate, x0, R0, HORIZON, params.bias,
                           model.nw)
        empirical = float(np.nanmean(summary.costs))
        assert empirical <= bound, f"mean cost {empirical} exceeds bound {bound}"


def test_trend_reproduction_linear_controllers(vi, sogcc_ensemble, ssc_ensemble):
    with criterion("trend-reproduction"):
        _, _, params = vi
        trajs, sogcc = sogcc_ensemble
        ssc = ssc_ensemble
        assert sogcc.rmse[-1] < 0.25 * sogcc.rmse[0]
        assert sogcc.rmse[-1] < ssc.rmse[-1]
        gap_end = -(sogcc.x_mean[-1, 0] + params.delta_d)
        assert abs(gap_end - 5.0) <= 0.5
        assert collision_metrics(trajs, params).count == 0
        plateau = float(sogcc.rmse[-500:].mean())
        assert plateau == pytest.approx(PINNED_SOGCC_PLATEAU, rel=0.3), plateau


def test_idm_baseline_registers_collisions(vi):
    with criterion("idm-collision-fraction"):
        model, x0, params = vi
        adapter = IdmMeasurementAdapter(idm_policy(IdmParams()), params, "freeroad")
        trajs = run_trials(model, adapter, x0, R0, HORIZON, params.bias,
                           IDM_TRIALS, MASTER_SEED, workers=4)
        report = collision_metrics(trajs, params)
        assert report.fraction > 0.0, "no collisions registered"
        assert report.fraction == pytest.approx(PINNED_IDM_COLLISION_FRACTION,
                                                abs=0.004), report.fraction


def _write_sim_config(tmp_path, out_name):
    cfg = {
        "scenario": {},
        "weights": {"Q": QW.tolist(), "R": RW.tolist()},
        "horizon": 1000,
        "trials": 40,
        "master_seed": MASTER_SEED,
        "r0": R0,
        "controllers": ["ref_sogcc", "idm"],
        "gains": {"ref_sogcc": [[[0.0, -3.6]], [[-1.22, -2.66]]]},
        "out": str(tmp_path / out_name),
    }
    path = tmp_path / f"{out_name}.json"
    path.write_text(json.dumps(cfg), encoding="utf-8")
    return str(path)


def test_simulate_determinism_across_parallelism(tmp_path):
    with criterion("simulate-determinism"):
        cfg1 = _write_sim_config(tmp_path, "run1")
        cfg2 = _write_sim_config(tmp_path, "run2")
        assert main(["simulate", "--config", cfg1, "--workers", "1"]) == EXIT_OK
        assert main(["simulate", "--config", cfg2, "--workers", "4"]) == EXIT_OK
        for name in ("summary_ref_sogcc.csv", "costs_ref_sogcc.csv",
                     "summary_idm.csv", "costs_idm.csv"):
            a = (tmp_path / "run1" / name).read_bytes()
            b = (tmp_path / "run2" / name).read_bytes()
            assert a == b, f"{name} differs across parallelism levels"


def test_lyapunov_drift_property(vi, sogcc_syn):
    with criterion("lyapunov-drift"):
        model, x0, params = vi
        cl = close_loop(model, sogcc_syn.controller)
        cert = ms_stability_test(cl)
        assert cert.feasible
        check = lyapunov_drift_check(cert, cl, x0, R0, params.bias, model.nw,
                                     samples=10_000, seed=7)
        assert 0.0 < check.c2 < 1.0
        assert check.c3 > 0.0
        assert check.passed, (check.mean, check.std_error)
