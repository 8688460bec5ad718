import json
from pathlib import Path

import numpy as np
import pytest

from pemadm.cli import (
    EXIT_CONFIG,
    EXIT_INFEASIBLE,
    EXIT_MISSING_INPUT,
    EXIT_OK,
    SUMMARY_COLUMNS,
    main,
)

REF_GAINS = {
    "ref_ssc": [[[0.0, -101.0]], [[-0.45, -100.0]]],
    "ref_sogcc": [[[0.0, -3.6]], [[-1.22, -2.66]]],
    "zero": [[[0.0, 0.0]], [[0.0, 0.0]]],
}


def write_config(tmp_path: Path, **over) -> str:
    cfg = {
        "scenario": {},
        "weights": {"Q": [[10.0, 0.0], [0.0, 10.0]], "R": [[1.0]]},
        "lambda": 1e-5,
        "horizon": 300,
        "trials": 12,
        "master_seed": 0,
        "r0": 1,
        "controllers": ["ref_sogcc"],
        "gains": REF_GAINS,
        "out": str(tmp_path / "out"),
    }
    cfg.update(over)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg), encoding="utf-8")
    return str(path)


def test_analyze_reference_gains_exit_zero(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert main(["analyze", "--config", cfg, "--controller", "ref_sogcc"]) == EXIT_OK
    out = json.loads((tmp_path / "out" / "analysis_ref_sogcc.json").read_text())
    assert out["stability"]["feasible"] is True
    assert out["spectral_radius"] < 1.0
    assert out["guaranteed_cost"]["gamma"] == pytest.approx(0.18550841, rel=1e-3)
    assert "cost_bound" in out


def test_analyze_zero_gains_exit_infeasible(tmp_path):
    cfg = write_config(tmp_path)
    assert main(["analyze", "--config", cfg, "--controller", "zero"]) == EXIT_INFEASIBLE


def test_missing_transition_key_is_config_error(tmp_path):
    raw = {
        "model": {"A": [[1.0]], "B": [[1.0]],
                  "modes": [{"C": [[1.0]], "D": [[0.0]], "E": [[0.0]]}]},
        "controllers": ["zero"],
    }
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(raw), encoding="utf-8")
    assert main(["analyze", "--config", str(path), "--controller", "zero"]) == EXIT_CONFIG


def test_synthesize_writes_cached_gains(tmp_path):
    cfg = write_config(tmp_path)
    assert main(["synthesize", "--config", cfg, "--kind", "ssc"]) == EXIT_OK
    data = json.loads((tmp_path / "out" / "gains_ssc.json").read_text())
    assert data["status"] == "optimal"
    assert "controller" in data


def test_synthesize_sogcc_infeasible_lambda_exit_two(tmp_path):
    cfg = write_config(tmp_path)
    assert main(["synthesize", "--config", cfg, "--kind", "sogcc",
                 "--lambda", "1000.0"]) == EXIT_INFEASIBLE


def test_simulate_requires_cached_gains(tmp_path):
    cfg = write_config(tmp_path, controllers=["sogcc"])
    assert main(["simulate", "--config", cfg]) == EXIT_MISSING_INPUT


def test_simulate_writes_expected_files(tmp_path):
    cfg = write_config(tmp_path)
    assert main(["simulate", "--config", cfg]) == EXIT_OK
    out = tmp_path / "out"
    header = (out / "summary_ref_sogcc.csv").read_text().splitlines()[0]
    assert header == ",".join(SUMMARY_COLUMNS)
    costs = (out / "costs_ref_sogcc.csv").read_text().splitlines()
    assert costs[0] == "trial,cost,collided"
    assert len(costs) == 13
    meta = json.loads((out / "run_meta.json").read_text())
    assert meta["resolved"]["trials"] == 12
    assert meta["versions"]["pemadm"]
    assert meta["config"]["controllers"] == ["ref_sogcc"]


def test_simulate_deterministic_across_workers(tmp_path):
    cfg1 = write_config(tmp_path, out=str(tmp_path / "o1"))
    assert main(["simulate", "--config", cfg1, "--workers", "1"]) == EXIT_OK
    cfg2 = write_config(tmp_path, out=str(tmp_path / "o2"))
    assert main(["simulate", "--config", cfg2, "--workers", "3"]) == EXIT_OK
    a = (tmp_path / "o1" / "summary_ref_sogcc.csv").read_bytes()
    b = (tmp_path / "o2" / "summary_ref_sogcc.csv").read_bytes()
    assert a == b
    assert (tmp_path / "o1" / "costs_ref_sogcc.csv").read_bytes() == \
        (tmp_path / "o2" / "costs_ref_sogcc.csv").read_bytes()


def test_compare_missing_inputs_exit_66(tmp_path):
    cfg = write_config(tmp_path)
    assert main(["compare", "--config", cfg]) == EXIT_MISSING_INPUT


def test_compare_single_controller_passthrough(tmp_path):
    cfg = write_config(tmp_path)
    assert main(["simulate", "--config", cfg]) == EXIT_OK
    assert main(["compare", "--config", cfg]) == EXIT_OK
    lines = (tmp_path / "out" / "comparison.csv").read_text().splitlines()
    assert lines[0] == "controller," + ",".join(SUMMARY_COLUMNS) + ",collision_fraction,mean_cost"
    body = (tmp_path / "out" / "summary_ref_sogcc.csv").read_text().splitlines()[1:]
    assert len(lines) == 1 + len(body)
    assert all(line.startswith("ref_sogcc,") for line in lines[1:])
    # the merged rows carry the original summary verbatim
    merged_first = lines[1].split(",")[1:-2]
    assert merged_first == body[0].split(",")


def test_compare_full_runs_pipeline_inline(tmp_path):
    cfg = write_config(tmp_path, controllers=["ref_sogcc", "idm"], trials=8, horizon=200)
    assert main(["compare", "--config", cfg, "--full"]) == EXIT_OK
    lines = (tmp_path / "out" / "comparison.csv").read_text().splitlines()
    controllers = {line.split(",")[0] for line in lines[1:]}
    assert controllers == {"ref_sogcc", "idm"}
    # collision fraction column is populated for every row
    for line in lines[1:]:
        float(line.split(",")[-2])


def test_unknown_controller_is_config_error(tmp_path):
    cfg = write_config(tmp_path, controllers=["mystery"])
    assert main(["simulate", "--config", cfg]) == EXIT_CONFIG


def test_simulate_single_trial_zero_std(tmp_path):
    cfg = write_config(tmp_path, trials=1, horizon=50)
    assert main(["simulate", "--config", cfg]) == EXIT_OK
    lines = (tmp_path / "out" / "summary_ref_sogcc.csv").read_text().splitlines()
    cols = lines[0].split(",")
    std_idx = [cols.index(c) for c in ("x1_std", "x2_std", "u_std", "gap_std")]
    for line in lines[1:]:
        parts = line.split(",")
        assert all(float(parts[i]) == 0.0 for i in std_idx)
