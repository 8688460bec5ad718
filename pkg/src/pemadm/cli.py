"""Command-line front end: analyze / synthesize / simulate / compare.

Exit codes are stable API: 0 success or feasible, 2 infeasible, 3
inconclusive, 64 malformed configuration, 66 missing input artifact.
All CSV output uses '\n' newlines, UTF-8, dot-decimal floats in shortest
round-trip form, and a fixed column order.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__, analysis, kernel_backend, lmi, scenarios, sim, synthesis
from .model import (
    Controller,
    PemAdmModel,
    controller_from_dict,
    controller_to_dict,
    model_from_dict,
    model_to_dict,
    close_loop,
    validate_model,
)

EXIT_OK = 0
EXIT_INFEASIBLE = 2
EXIT_INCONCLUSIVE = 3
EXIT_CONFIG = 64
EXIT_MISSING_INPUT = 66

SUMMARY_COLUMNS = ["step", "time_s", "rmse", "x1_mean", "x1_std", "x2_mean",
                   "x2_std", "u_mean", "u_std", "gap_mean", "gap_std"]


class ConfigError(Exception):
    pass


class MissingInputError(Exception):
    pass


@dataclass
class RunConfig:
    model: PemAdmModel
    x0: np.ndarray
    scenario: scenarios.CarFollowingParams | None
    Q: np.ndarray
    R: np.ndarray
    lam: float
    horizon: int
    trials: int
    master_seed: int
    r0: int
    controllers: list[str]
    idm: scenarios.IdmParams
    idm_misdetection: str
    explicit_gains: dict[str, Controller]
    bias: sim.BiasSignal
    out_dir: Path
    raw: dict

    @property
    def h(self) -> float:
        return self.scenario.h if self.scenario is not None else 1.0


def load_config(path: str, overrides: argparse.Namespace) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")

    scenario = None
    if "scenario" in raw:
        try:
            scenario = scenarios.CarFollowingParams.from_dict(raw["scenario"])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad scenario block: {exc}") from exc
        model, x0 = scenarios.build_car_following(scenario)
        bias = scenario.bias
    elif "model" in raw:
        try:
            model = model_from_dict(raw["model"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        x0 = np.asarray(raw.get("x0", [0.0] * model.n1), dtype=float)
        bias_block = raw.get("bias", {"kind": "zero", "dim": model.n3})
        try:
            bias = sim.BiasSignal.from_dict(bias_block)
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"bad bias block: {exc}") from exc
    else:
        raise ConfigError('config must contain a "scenario" or a "model" block')

    report = validate_model(model)
    if not report.ok:
        lines = "; ".join(f"{v.code}: {v.message}" for v in report.violations)
        raise ConfigError(f"model fails validation: {lines}")

    weights = raw.get("weights", {})
    Q = np.atleast_2d(np.asarray(weights.get("Q", np.eye(model.n1).tolist()), dtype=float))
    R = np.atleast_2d(np.asarray(weights.get("R", np.eye(model.n2).tolist()), dtype=float))

    lam = float(overrides.lam if getattr(overrides, "lam", None) is not None
                else raw.get("lambda", synthesis.DEFAULT_LAMBDA))
    horizon = int(overrides.horizon if getattr(overrides, "horizon", None) is not None
                  else raw.get("horizon", 3000))
    trials = int(overrides.trials if getattr(overrides, "trials", None) is not None
                 else raw.get("trials", 200))
    master_seed = int(overrides.seed if getattr(overrides, "seed", None) is not None
                      else raw.get("master_seed", 0))
    r0 = int(raw.get("r0", 1 if model.N > 1 else 0))
    if horizon < 1 or trials < 1:
        raise ConfigError("horizon and trials must be >= 1")
    if not (0 <= r0 < model.N):
        raise ConfigError(f"r0 = {r0} out of range for {model.N} modes")

    controllers = list(getattr(overrides, "controllers", None) or raw.get("controllers", []))
    idm = scenarios.IdmParams.from_dict(raw["idm"]) if "idm" in raw else scenarios.IdmParams()
    idm_misdetection = raw.get("idm_misdetection", "freeroad")

    explicit: dict[str, Controller] = {}
    for name, gains in raw.get("gains", {}).items():
        explicit[name] = controller_from_dict({"gains": gains})

    out_dir = Path(getattr(overrides, "out", None) or raw.get("out", "out"))
    return RunConfig(model=model, x0=x0, scenario=scenario, Q=Q, R=R, lam=lam,
                     horizon=horizon, trials=trials, master_seed=master_seed, r0=r0,
                     controllers=controllers, idm=idm, idm_misdetection=idm_misdetection,
                     explicit_gains=explicit, bias=bias, out_dir=out_dir, raw=raw)


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _versions() -> dict:
    import cvxpy

    return {"pemadm": __version__, "numpy": np.__version__, "cvxpy": cvxpy.__version__,
            "kernel_backend": kernel_backend}


def _write_meta(cfg: RunConfig, extra: dict) -> None:
    meta = {
        "config": cfg.raw,
        "resolved": {
            "horizon": cfg.horizon, "trials": cfg.trials, "master_seed": cfg.master_seed,
            "r0": cfg.r0, "lambda": cfg.lam, "controllers": cfg.controllers,
            "out": str(cfg.out_dir), "x0": cfg.x0.tolist(),
            "Q": cfg.Q.tolist(), "R": cfg.R.tolist(),
            "solver_threads": os.environ.get("PEMADM_SOLVER_THREADS", ""),
        },
        "versions": _versions(),
        **extra,
    }
    with open(cfg.out_dir / "run_meta.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _gains_path(cfg: RunConfig, kind: str) -> Path:
    return cfg.out_dir / f"gains_{kind}.json"


def _load_cached_controller(cfg: RunConfig, kind: str) -> Controller:
    path = _gains_path(cfg, kind)
    if not path.exists():
        raise MissingInputError(
            f"no cached gains for {kind!r}: expected {path}; run `pemadm synthesize "
            f"--kind {kind}` first"
        )
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if "controller" not in data:
        raise MissingInputError(f"{path} does not contain a controller (status {data.get('status')})")
    return controller_from_dict(data["controller"])


def _resolve_controller(cfg: RunConfig, name: str):
    """Returns (controller_or_policy, is_idm)."""
    if name == "idm":
        if cfg.scenario is None:
            raise ConfigError("the idm baseline requires a car-following scenario")
        adapter = scenarios.IdmMeasurementAdapter(
            scenarios.idm_policy(cfg.idm), cfg.scenario, cfg.idm_misdetection)
        return adapter, True
    if name in cfg.explicit_gains:
        return cfg.explicit_gains[name], False
    if name in ("ssc", "sogcc"):
        return _load_cached_controller(cfg, name), False
    raise ConfigError(f"unknown controller {name!r}: not ssc/sogcc/idm and not in gains")


def cmd_analyze(cfg: RunConfig, args) -> int:
    if args.gains:
        try:
            with open(args.gains, encoding="utf-8") as fh:
                data = json.load(fh)
            controller = controller_from_dict(data.get("controller", data))
            name = Path(args.gains).stem
        except FileNotFoundError:
            print(f"gains file not found: {args.gains}", file=sys.stderr)
            return EXIT_MISSING_INPUT
        except (ValueError, json.JSONDecodeError) as exc:
            print(f"bad gains file: {exc}", file=sys.stderr)
            return EXIT_CONFIG
    else:
        names = cfg.controllers or list(cfg.explicit_gains)
        if len(names) != 1:
            print("analyze needs exactly one controller (--controller or --gains)",
                  file=sys.stderr)
            return EXIT_CONFIG
        name = names[0]
        if name == "idm":
            print("analyze applies to linear gain controllers only", file=sys.stderr)
            return EXIT_CONFIG
        resolved, _ = _resolve_controller(cfg, name)
        controller = resolved

    cl = close_loop(cfg.model, controller)
    cert = analysis.ms_stability_test(cl)
    rho = analysis.ms_spectral_radius(cl)
    report = {
        "controller": name,
        "spectral_radius": rho,
        "stability": analysis.certificate_to_dict(cert),
    }
    if cert.feasible:
        gc = analysis.guaranteed_cost_gamma(cl, controller, cfg.model, cfg.Q, cfg.R)
        report["guaranteed_cost"] = analysis.certificate_to_dict(gc)
        if gc.feasible:
            report["cost_bound"] = analysis.cost_bound(
                gc, cfg.x0, cfg.r0, cfg.horizon, cfg.bias, cfg.model.nw)

    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    out_path = cfg.out_dir / f"analysis_{name}.json"
    with open(out_path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")

    if cert.feasible:
        print(f"{name}: stochastically stable (margin {cert.margin:.3e}, rho {rho:.6f})")
        if "guaranteed_cost" in report and report["guaranteed_cost"]["feasible"]:
            print(f"{name}: guaranteed-cost level gamma = {report['guaranteed_cost']['gamma']:.6g}")
        print(f"wrote {out_path}")
        return EXIT_OK
    if cert.status is lmi.SolveStatus.INFEASIBLE:
        print(f"{name}: stability certificate infeasible (rho {rho:.6f})")
        print(f"wrote {out_path}")
        return EXIT_INFEASIBLE
    print(f"{name}: inconclusive ({cert.status.value})")
    print(f"wrote {out_path}")
    return EXIT_INCONCLUSIVE


def cmd_synthesize(cfg: RunConfig, args) -> int:
    kind = args.kind
    if kind == "ssc":
        result = synthesis.synthesize_ssc(cfg.model)
    else:
        result = synthesis.synthesize_sogcc(cfg.model, cfg.Q, cfg.R, cfg.lam)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    out_path = _gains_path(cfg, kind)
    with open(out_path, "w", encoding="utf-8") as fh:
        json.dump(synthesis.synthesis_to_dict(result), fh, indent=2, sort_keys=True)
        fh.write("\n")
    if result.feasible:
        gains = [g.tolist() for g in result.controller.gains]
        print(f"{kind}: feasible; gains {gains}")
        if result.gamma is not None:
            print(f"{kind}: certified gamma = {result.gamma:.6g} "
                  f"(synthesis objective sqrt(mu*) = {result.gamma_synthesis:.6g}, "
                  f"lambda = {result.lam:g})")
        print(f"wrote {out_path}")
        return EXIT_OK
    if result.status is lmi.SolveStatus.INFEASIBLE:
        lam_note = f" at lambda = {cfg.lam:g}; try a smaller lambda" if kind == "sogcc" else ""
        print(f"{kind}: infeasible{lam_note}", file=sys.stderr)
        return EXIT_INFEASIBLE
    print(f"{kind}: inconclusive ({result.status.value})", file=sys.stderr)
    return EXIT_INCONCLUSIVE


def _simulate_one(cfg: RunConfig, name: str, workers: int):
    controller, _ = _resolve_controller(cfg, name)
    trajs = sim.run_trials(cfg.model, controller, cfg.x0, cfg.r0, cfg.horizon,
                           cfg.bias, cfg.trials, cfg.master_seed, workers=workers)
    summary = sim.summarize(trajs, cfg.horizon, cfg.master_seed, Q=cfg.Q, R=cfg.R)
    collision = (scenarios.collision_metrics(trajs, cfg.scenario)
                 if cfg.scenario is not None else None)
    return trajs, summary, collision


def _summary_rows(cfg: RunConfig, summary: sim.MonteCarloSummary):
    delta = cfg.scenario.delta_d if cfg.scenario is not None else None
    for k in range(cfg.horizon + 1):
        if delta is not None:
            gap_mean = -(summary.x_mean[k, 0] + delta)
            gap_std = summary.x_std[k, 0]
        else:
            gap_mean = float("nan")
            gap_std = float("nan")
        yield [k, k * cfg.h, summary.rmse[k],
               summary.x_mean[k, 0], summary.x_std[k, 0],
               summary.x_mean[k, 1], summary.x_std[k, 1],
               summary.u_mean[k, 0], summary.u_std[k, 0],
               gap_mean, gap_std]


def cmd_simulate(cfg: RunConfig, args) -> int:
    if not cfg.controllers:
        print("no controllers configured", file=sys.stderr)
        return EXIT_CONFIG
    if cfg.model.n1 != 2 or cfg.model.n2 != 1:
        print("the simulate CSV schema covers two-state, single-input models",
              file=sys.stderr)
        return EXIT_CONFIG
    workers = max(1, int(args.workers))
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    warnings: list[str] = []
    per_controller: dict = {}
    for name in cfg.controllers:
        trajs, summary, collision = _simulate_one(cfg, name, workers)
        _write_csv(cfg.out_dir / f"summary_{name}.csv", SUMMARY_COLUMNS,
                   _summary_rows(cfg, summary))
        collided = collision.collided if collision is not None else np.zeros(cfg.trials, bool)
        _write_csv(cfg.out_dir / f"costs_{name}.csv", ["trial", "cost", "collided"],
                   ([m, summary.costs[m], int(collided[m])] for m in range(cfg.trials)))
        frac_div = len(summary.diverged) / cfg.trials
        if frac_div > 0.5:
            warnings.append(f"{name}: {len(summary.diverged)}/{cfg.trials} trials diverged")
        per_controller[name] = {
            "diverged_trials": list(summary.diverged),
            "collision_fraction": collision.fraction if collision is not None else None,
            "mean_cost": (float(np.nanmean(summary.costs))
                          if np.any(np.isfinite(summary.costs)) else None),
        }
        print(f"{name}: wrote summary_{name}.csv and costs_{name}.csv "
              f"({len(summary.diverged)} diverged)")
    _write_meta(cfg, {"warnings": warnings, "controllers": per_controller,
                      "workers": workers})
    return EXIT_OK


def cmd_compare(cfg: RunConfig, args) -> int:
    if not cfg.controllers:
        print("no controllers configured", file=sys.stderr)
        return EXIT_CONFIG
    missing = [n for n in cfg.controllers
               if not (cfg.out_dir / f"summary_{n}.csv").exists()
               or not (cfg.out_dir / f"costs_{n}.csv").exists()]
    if missing:
        if not args.full:
            print(f"missing simulate outputs for: {', '.join(missing)} "
                  f"(run `pemadm simulate` or pass --full)", file=sys.stderr)
            return EXIT_MISSING_INPUT
        for kind in ("ssc", "sogcc"):
            if kind in cfg.controllers and not _gains_path(cfg, kind).exists():
                code = cmd_synthesize(cfg, argparse.Namespace(kind=kind))
                if code != EXIT_OK:
                    return code
        code = cmd_simulate(cfg, argparse.Namespace(workers=args.workers))
        if code != EXIT_OK:
            return code

    rows = []
    for name in cfg.controllers:
        with open(cfg.out_dir / f"costs_{name}.csv", encoding="utf-8") as fh:
            lines = fh.read().splitlines()[1:]
        costs, collided = [], []
        for line in lines:
            _, cost, col = line.split(",")
            costs.append(float(cost))
            collided.append(int(col))
        mean_cost = float(np.nanmean(costs)) if costs else float("nan")
        fraction = float(np.mean(collided)) if collided else float("nan")
        with open(cfg.out_dir / f"summary_{name}.csv", encoding="utf-8") as fh:
            body = fh.read().splitlines()[1:]
        for line in body:
            rows.append([name] + line.split(",") + [repr(fraction), repr(mean_cost)])
    header = ["controller"] + SUMMARY_COLUMNS + ["collision_fraction", "mean_cost"]
    path = cfg.out_dir / "comparison.csv"
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(str(v) for v in row) + "\n")
    print(f"wrote {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pemadm",
                                     description="Mode-switched driving-loop toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--out", help="output directory (default from config)")
        p.add_argument("--seed", type=int, help="master seed override")
        p.add_argument("--trials", type=int, help="trial count override")
        p.add_argument("--horizon", type=int, help="horizon override")
        p.add_argument("--lambda", dest="lam", type=float, help="floor parameter override")
        p.add_argument("--controller", dest="controllers", action="append",
                       help="controller name (repeatable)")

    p = sub.add_parser("analyze", help="stability and guaranteed-cost certificates")
    common(p)
    p.add_argument("--gains", help="path to a synthesis JSON artifact")

    p = sub.add_parser("synthesize", help="compute stabilizing or guaranteed-cost gains")
    common(p)
    p.add_argument("--kind", choices=["ssc", "sogcc"], required=True)

    p = sub.add_parser("simulate", help="Monte Carlo rollouts to CSV")
    common(p)
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("compare", help="merge per-controller summaries")
    common(p)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--full", action="store_true",
                   help="run synthesis/simulation inline when outputs are missing")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    threads = os.environ.get("PEMADM_SOLVER_THREADS")
    if threads:
        os.environ.setdefault("OMP_NUM_THREADS", threads)
    try:
        cfg = load_config(args.config, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.command == "analyze":
            return cmd_analyze(cfg, args)
        if args.command == "synthesize":
            return cmd_synthesize(cfg, args)
        if args.command == "simulate":
            return cmd_simulate(cfg, args)
        return cmd_compare(cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MissingInputError as exc:
        print(f"missing input: {exc}", file=sys.stderr)
        return EXIT_MISSING_INPUT


if __name__ == "__main__":
    sys.exit(main())
