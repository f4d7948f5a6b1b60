"""Command-line entry points: eval, forward, impute, illustrate, study.

Configuration files are JSON; measures and distributions use the literal
syntaxes of `riskmeasures` and `probspace`.  Exit codes: 0 on success, 2 for
an infeasible imputation instance, 3 for missing or malformed data.
"""

from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import dualpwl as dp
from . import experiments as ex
from . import inverse as iv
from . import riskmeasures as rm
from .errors import DataMissing, InfeasibleInstance, RiskImputeError
from .forward import ForwardProblem, PolytopeSet, SimplexSet, solve_forward
from .probspace import DiscreteDistribution, OutcomeSpace, RandomLoss

EXIT_OK = 0
EXIT_INFEASIBLE = 2
EXIT_DATA = 3


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise DataMissing(f"config file not found: {p}")
    try:
        with open(p) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataMissing(f"config is not valid JSON: {exc}") from exc


def _probs_from(cfg_probs, n: int):
    if cfg_probs is None:
        return None
    if len(cfg_probs) != n:
        raise DataMissing("probs length must match the number of return rows")
    return [Fraction(str(p)) for p in cfg_probs]


def _problem_from_config(cfg: dict) -> ForwardProblem:
    if "returns_csv" in cfg:
        _, data = ex.read_returns_csv(cfg["returns_csv"])
    elif "returns" in cfg:
        data = np.asarray(cfg["returns"], dtype=float)
    elif "losses" in cfg:
        losses = np.asarray(cfg["losses"], dtype=float)
        probs = _probs_from(cfg.get("probs"), losses.shape[0])
        feasible = _feasible_from_config(cfg.get("feasible"), losses.shape[1])
        if probs is None:
            probs = [Fraction(1, losses.shape[0])] * losses.shape[0]
        return ForwardProblem(losses, tuple(probs), feasible)
    else:
        raise DataMissing("forward config needs 'returns', 'returns_csv', or 'losses'")
    probs = _probs_from(cfg.get("probs"), data.shape[0])
    feasible_cfg = cfg.get("feasible")
    if feasible_cfg is None or "simplex" in feasible_cfg:
        return ForwardProblem.portfolio(data, probs)
    feasible = _feasible_from_config(feasible_cfg, data.shape[1])
    if probs is None:
        probs = [Fraction(1, data.shape[0])] * data.shape[0]
    return ForwardProblem(-data, tuple(probs), feasible)


def _feasible_from_config(cfg, n: int):
    if cfg is None or (isinstance(cfg, dict) and cfg.get("simplex")) or cfg == "simplex":
        return SimplexSet(n)
    return PolytopeSet(np.asarray(cfg["A"], dtype=float), np.asarray(cfg["b"], dtype=float))


def _risk_from_config(cfg: dict):
    if "function" in cfg:
        spec = cfg["function"]
        if isinstance(spec, str):
            return dp.load(spec)
        return dp.from_payload(spec)
    if "measure" in cfg:
        return rm.measure_from_literal(cfg["measure"])
    raise DataMissing("config needs a 'measure' literal or a 'function' payload/path")


def _pref_side(spec: dict, probs):
    if "distribution" in spec:
        return DiscreteDistribution.from_literal(spec["distribution"])
    if "loss" in spec:
        values = np.asarray(spec["loss"], dtype=float)
        if probs is None or len(probs) != values.size:
            raise DataMissing("a loss-vector preference side needs matching outcome weights")
        return RandomLoss(values, OutcomeSpace(tuple(probs)))
    raise DataMissing("preference sides are given as 'distribution' or 'loss'")


# -- subcommands ----------------------------------------------------------------


def _cmd_eval(args) -> int:
    cfg = _load_config(args.config)
    measure = rm.measure_from_literal(cfg["measure"])
    dist = DiscreteDistribution.from_literal(cfg["distribution"])
    print(repr(rm.evaluate(measure, dist)))
    return EXIT_OK


def _cmd_forward(args) -> int:
    cfg = _load_config(args.config)
    problem = _problem_from_config(cfg)
    risk = _risk_from_config(cfg)
    solution = solve_forward(problem, risk)
    payload = {"x": [float(v) for v in solution.x], "value": solution.value}
    print(json.dumps(payload))
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "forward_solution.json", "w") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")
    return EXIT_OK


def _cmd_impute(args) -> int:
    cfg = _load_config(args.config)
    reference = rm.measure_from_literal(cfg["reference"])
    family = iv.Family((args.family or cfg.get("family", "law_inv_cvx_measure")))
    observations = []
    for ob in cfg.get("observations", []):
        problem = _problem_from_config(ob)
        observations.append((problem, np.asarray(ob["x_star"], dtype=float)))
    shared_probs = observations[0][0].probs if observations else None
    preferences = tuple(
        iv.PreferencePair(_pref_side(p["lower"], shared_probs), _pref_side(p["upper"], shared_probs))
        for p in cfg.get("preferences", [])
    )
    inst = iv.InverseInstance(tuple(observations), reference, preferences, family)
    try:
        result = iv.impute(inst)
    except InfeasibleInstance:
        report = iv.diagnose_infeasibility(inst)
        print(
            json.dumps(
                {
                    "infeasible": True,
                    "total_violation": report.total_violation,
                    "preference_violations": [list(v) for v in report.preference_violations],
                    "observation_violations": [list(v) for v in report.observation_violations],
                }
            )
        )
        return EXIT_INFEASIBLE
    payload = {
        "deviation": result.deviation,
        "deltas": [float(v) for v in result.deltas],
        "reference_values": [float(v) for v in result.reference_values],
        "function": dp.to_payload(result.function),
        "diagnostics": result.diagnostics,
    }
    print(json.dumps({"deviation": result.deviation}))
    out = Path(args.out_dir or ".")
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "imputed.json", "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
    return EXIT_OK


def _experiment_config(args, cfg: dict, mode: str) -> ex.ExperimentConfig:
    fields = dict(
        mode=cfg.get("mode", mode),
        n_assets=cfg.get("n_assets", 5),
        in_window=cfg.get("in_window", 30),
        out_window=cfg.get("out_window", 30),
        n_experiments=cfg.get("n_experiments", 100),
        s_grid=tuple(cfg.get("s_grid", (0.01, 0.1, 1.0, 10.0, 50.0, 100.0))),
        lam=cfg.get("lambda", 0.2),
        alpha=rm.as_ratio(cfg.get("alpha", Fraction(9, 10))),
        seed=cfg.get("seed", 0),
        data_path=cfg.get("data_path"),
        lift_cap=cfg.get("lift_cap", 5040),
        cross_check=cfg.get("cross_check", False),
        grid_points=cfg.get("grid_points", 101),
        out_dir=cfg.get("out_dir", "out"),
        jobs=cfg.get("jobs", 1),
    )
    if args.seed is not None:
        fields["seed"] = args.seed
    if args.out_dir is not None:
        fields["out_dir"] = args.out_dir
    if args.jobs is not None:
        fields["jobs"] = args.jobs
    if args.s_grid is not None:
        fields["s_grid"] = tuple(float(v) for v in args.s_grid.split(","))
    return ex.ExperimentConfig(**fields)


def _cmd_illustrate(args) -> int:
    cfg = _load_config(args.config)
    config = _experiment_config(args, cfg, mode="illustrate")
    returns = np.asarray(cfg["returns"], dtype=float) if "returns" in cfg else None
    summary = ex.illustrate(config, returns)
    for s, u, dev in summary["deviations"]:
        print(f"s={s}: u*={u!r} max_vertex_deviation={dev!r}")
    return EXIT_OK


def _cmd_study(args) -> int:
    cfg = _load_config(args.config)
    config = _experiment_config(args, cfg, mode="simulate")
    summary = ex.run_study(config)
    print(
        json.dumps(
            {
                "mode": summary["mode"],
                "experiments": summary["experiments"],
                "kept": summary["kept"],
                "failures": summary["failures"],
            }
        )
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON configuration file")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--out-dir", default=None)
    common.add_argument("--jobs", type=int, default=None)
    common.add_argument("--family", default=None, choices=[f.value for f in iv.Family])
    common.add_argument("--s-grid", default=None, help="comma-separated entropic parameters")
    parser = argparse.ArgumentParser(
        prog="riskimpute",
        description="Impute convex risk functions from observed decisions and preferences.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("eval", parents=[common], help="evaluate a measure on a distribution")
    sub.add_parser("forward", parents=[common], help="solve a forward risk-minimization problem")
    sub.add_parser("impute", parents=[common], help="impute a risk function from observations/preferences")
    sub.add_parser("illustrate", parents=[common], help="two-asset value-surface grids")
    sub.add_parser("study", parents=[common], help="simulated or historical rolling-window study")
    return parser


_COMMANDS = {
    "eval": _cmd_eval,
    "forward": _cmd_forward,
    "impute": _cmd_impute,
    "illustrate": _cmd_illustrate,
    "study": _cmd_study,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except DataMissing as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (KeyError, TypeError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except InfeasibleInstance as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except RiskImputeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
