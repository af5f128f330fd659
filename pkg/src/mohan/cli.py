"""Command-line entry point: generate, fit, run, replay, sweep."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path
from typing import Any, Optional, Sequence

from . import __version__
from .core import SelectorConfig, validate_config
from .evaluation import SweepGrid, cdf, compute_stats, frontier_rank, sweep_experiment
from .predictor import FitOptions, InsufficientDataError, ModelCoefficients, fit_paths
from .selector import Policy
from .simulator import (
    Experiment,
    Scenario,
    collect,
    predict_table,
    prepare_experiment,
    run_experiment,
    simulate,
    standard_scenario,
    training_samples,
)
from .trace_io import (
    read_json,
    read_latency_table,
    read_model,
    read_trace,
    write_cdf_csv,
    write_json,
    write_latency_table,
    write_log,
    write_model,
    write_stats_csv,
    write_sweep_csv,
    write_trace,
)

log = logging.getLogger("mohan")

SCENARIOS = {"standard": standard_scenario}
POLICY_NAMES = [p.value for p in Policy] + ["all"]
_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        raise UsageError(message)


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _scenario(args: argparse.Namespace, file_cfg: dict[str, Any]) -> Scenario:
    name = args.scenario or file_cfg.get("scenario", "standard")
    if name not in SCENARIOS:
        raise UsageError(f"unknown scenario {name!r}; valid names: {', '.join(SCENARIOS)}")
    scenario = SCENARIOS[name]()
    requests = args.requests if args.requests is not None else file_cfg.get("requests")
    if requests is not None:
        if requests < 1:
            raise UsageError(f"--requests must be >= 1 (got {requests})")
        scenario = dataclasses.replace(scenario, requests=int(requests))
    truth = {k: float(file_cfg[k]) for k in ("sigma_noise", "burst_penalty") if k in file_cfg}
    if truth:
        scenario = dataclasses.replace(scenario, truth=dataclasses.replace(scenario.truth, **truth))
    return scenario


def _scenario_config(args: argparse.Namespace, file_cfg: dict[str, Any], scenario: Scenario) -> dict[str, Any]:
    return {
        "scenario": args.scenario or file_cfg.get("scenario", "standard"),
        "requests": scenario.requests,
        "sigma_noise": scenario.truth.sigma_noise,
        "burst_penalty": scenario.truth.burst_penalty,
    }


def _file_config(args: argparse.Namespace) -> dict[str, Any]:
    if not getattr(args, "config", None):
        return {}
    doc = read_json(args.config)
    if not isinstance(doc, dict):
        raise UsageError("config file must hold a JSON object")
    return doc


_SELECTOR_KEYS = ("alpha", "beta", "delta", "theta", "theta_handover", "initial_reliability", "r_init")


def _selector_config(args: argparse.Namespace, file_cfg: dict[str, Any]) -> SelectorConfig:
    raw = {k: v for k, v in file_cfg.items() if k in _SELECTOR_KEYS}
    for key in ("alpha", "beta", "delta", "theta"):
        value = getattr(args, key, None)
        if value is not None:
            if key == "theta":
                raw.pop("theta_handover", None)
            raw[key] = value
    return validate_config(raw)


def _seed(args: argparse.Namespace, file_cfg: dict[str, Any]) -> int:
    if args.seed is not None:
        return args.seed
    return int(file_cfg.get("seed", 0))


def _manifest(out: Path, command: str, seed: int, config: dict[str, Any], artifacts: dict[str, str]) -> None:
    doc = {
        "tool": "mohan",
        "version": __version__,
        "command": command,
        "seed": seed,
        "config": config,
        "artifacts": artifacts,
    }
    write_json(doc, out / "manifest.json")
    missing = [p for p in artifacts.values() if not (out / p).exists()]
    if missing:
        raise RuntimeError(f"artifacts missing after run: {missing}")


# -- commands ------------------------------------------------------------------


def cmd_generate(args: argparse.Namespace) -> int:
    file_cfg = _file_config(args)
    scenario = _scenario(args, file_cfg)
    seed = _seed(args, file_cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dataset = simulate(scenario, seed)
    records = collect(dataset, seed)
    write_trace(records, out / "trace.csv")
    write_latency_table([r.timestamp for r in records], dataset.latencies, out / "latencies.csv")
    config = _scenario_config(args, file_cfg, scenario)
    _manifest(out, "generate", seed, config, {"trace": "trace.csv", "latencies": "latencies.csv"})
    log.info("wrote %d records to %s", len(records), out / "trace.csv")
    return 0


def cmd_fit(args: argparse.Namespace) -> int:
    file_cfg = _file_config(args)
    seed = _seed(args, file_cfg)
    records = read_trace(args.trace)
    samples = training_samples(records)
    report = fit_paths(samples, FitOptions(seed=seed))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_model(report.coefficients, out / "model.json")
    write_json(
        {
            "training_rmse": report.training_rmse,
            "holdout_rmse": report.holdout_rmse,
            "r_squared": report.r_squared,
            "iterations": report.iterations,
            "converged": report.converged,
            "samples": len(samples),
            "diagnostics": list(report.diagnostics),
        },
        out / "fit_report.json",
    )
    _manifest(
        out, "fit", seed, {"trace": str(args.trace)}, {"model": "model.json", "report": "fit_report.json"}
    )
    print(report.summary())
    return 0


def _policies(args: argparse.Namespace) -> list[Policy]:
    name = args.policy_opt or args.policy or "all"
    if name == "all":
        return list(Policy)
    try:
        return [Policy.parse(name)]
    except ValueError:
        raise UsageError(f"unknown policy {name!r}; valid names: {', '.join(POLICY_NAMES)}") from None


def _load_model(source: Optional[str], scenario: Optional[Scenario]) -> Optional[ModelCoefficients]:
    if source is None or source == "auto":
        return None
    if source == "truth":
        if scenario is None:
            raise UsageError("--model truth needs --scenario")
        return scenario.truth.true_coefficients
    return read_model(source)


def _write_run_outputs(
    out: Path, experiment_logs: dict[Policy, list], command: str, seed: int, config: dict[str, Any]
) -> None:
    out.mkdir(parents=True, exist_ok=True)
    artifacts: dict[str, str] = {}
    stats_rows = []
    for policy, entries in experiment_logs.items():
        name = policy.value
        write_log(entries, out / f"log_{name}.jsonl")
        write_cdf_csv(cdf(entries), out / f"cdf_{name}.csv")
        artifacts[f"log_{name}"] = f"log_{name}.jsonl"
        artifacts[f"cdf_{name}"] = f"cdf_{name}.csv"
        stats = compute_stats(entries)
        stats_rows.append((name, stats))
        print(
            f"{name:14s} mean={stats.mean:.2f}ms median={stats.median:.2f}ms "
            f"p95={stats.p95:.2f}ms HR={100 * stats.handover_rate:.1f}%"
        )
    write_stats_csv(stats_rows, out / "stats.csv")
    artifacts["stats"] = "stats.csv"
    _manifest(out, command, seed, config, artifacts)


def cmd_run(args: argparse.Namespace) -> int:
    file_cfg = _file_config(args)
    seed = _seed(args, file_cfg)
    config = _selector_config(args, file_cfg)
    policies = _policies(args)
    needs_model = any(p in (Policy.MOHAN, Policy.LOWEST_LATENCY) for p in policies)

    if args.trace:
        return _replay(args, seed, config, policies, needs_model, command="run")

    scenario = _scenario(args, file_cfg)
    model = _load_model(args.model, scenario)
    if model is None and args.model != "auto" and needs_model:
        raise UsageError("policies mohan/lowestlatency need --model (a model.json path, 'truth' or 'auto')")
    experiment = prepare_experiment(scenario, seed, model=model, fit=args.model == "auto")
    if experiment.fit_report is not None:
        log.info("fitted model: %s", experiment.fit_report.summary())
    logs = {p: experiment.run(p, config) for p in policies}
    effective = {
        **config.to_dict(),
        **_scenario_config(args, file_cfg, scenario),
        "model": args.model,
        "policy": [p.value for p in policies],
    }
    _write_run_outputs(Path(args.out), logs, "run", seed, effective)
    return 0


def _replay(args, seed, config, policies, needs_model, command) -> int:
    if not args.trace:
        raise UsageError("replay needs --trace")
    trace_path = Path(args.trace)
    lat_path = Path(args.latencies) if args.latencies else trace_path.with_name("latencies.csv")
    records = read_trace(trace_path)
    times, latencies = read_latency_table(lat_path)
    if len(times) != len(records) or any(a != r.timestamp for a, r in zip(times, records)):
        raise ValueError("latency table does not match the trace timestamps")
    if latencies.shape[1] != records[0].n_servers:
        raise ValueError("latency table server count does not match the trace")
    if args.model in (None, "auto", "truth"):
        if needs_model:
            raise UsageError("replay of mohan/lowestlatency needs --model PATH")
        model = None
    else:
        model = read_model(args.model)
    predictions = predict_table(model, records)
    logs = {
        p: run_experiment(p, config, records, latencies, model, args.nearest, predictions) for p in policies
    }
    effective = {
        **config.to_dict(),
        "trace": str(trace_path),
        "latencies": str(lat_path),
        "model": args.model,
        "nearest": args.nearest,
        "policy": [p.value for p in policies],
    }
    _write_run_outputs(Path(args.out), logs, command, seed, effective)
    return 0


def cmd_replay(args: argparse.Namespace) -> int:
    file_cfg = _file_config(args)
    seed = _seed(args, file_cfg)
    config = _selector_config(args, file_cfg)
    policies = _policies(args)
    needs_model = any(p in (Policy.MOHAN, Policy.LOWEST_LATENCY) for p in policies)
    return _replay(args, seed, config, policies, needs_model, command="replay")


def cmd_sweep(args: argparse.Namespace) -> int:
    file_cfg = _file_config(args)
    seed = _seed(args, file_cfg)
    base = _selector_config(argparse.Namespace(), file_cfg)
    grid = SweepGrid(
        alpha=tuple(args.alpha if args.alpha is not None else [base.alpha]),
        beta=tuple(args.beta if args.beta is not None else [base.beta]),
        delta=tuple(args.delta if args.delta is not None else [base.delta]),
        theta=tuple(args.theta if args.theta is not None else [base.theta_handover]),
    )
    for point in grid.points():
        validate_config({"alpha": point[0], "beta": point[1], "delta": point[2], "theta": point[3]})
    scenario = _scenario(args, file_cfg)
    model = _load_model(args.model or "auto", scenario)
    experiment: Experiment = prepare_experiment(scenario, seed, model=model, fit=model is None)
    results = sweep_experiment(grid, experiment)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_sweep_csv(results, out / "sweep.csv")
    reference = (0.5, 0.9, 0.2, 0.05)
    if reference in grid.points():
        rank = frontier_rank(results, reference)
        print(f"reference setting {reference}: {100 * rank:.0f}% of grid points lie closer to the front")
    effective = {
        "grid": {k: list(v) for k, v in dataclasses.asdict(grid).items()},
        **_scenario_config(args, file_cfg, scenario),
        "model": args.model or "auto",
    }
    _manifest(out, "sweep", seed, effective, {"sweep": "sweep.csv"})
    print(f"{len(results)} grid points, {sum(r.pareto for r in results)} on the Pareto front")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mohan", description="Reliability-aware edge server selection experiments.")
    parser.add_argument("--version", action="version", version=f"mohan {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--config", help="JSON config file; flags override its values")
        p.add_argument("--out", required=True, help="output directory")

    def knobs(p: argparse.ArgumentParser, many: bool = False) -> None:
        kind = _float_list if many else float
        for name in ("alpha", "beta", "delta", "theta"):
            p.add_argument(f"--{name}", type=kind, default=None)

    p = sub.add_parser("generate", help="simulate a measurement trace")
    common(p)
    p.add_argument("--requests", type=int, default=None)
    p.add_argument("--scenario", default=None)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("fit", help="fit the latency model to a trace")
    common(p)
    p.add_argument("--trace", required=True)
    p.set_defaults(func=cmd_fit)

    for name, func, help_text in (
        ("run", cmd_run, "run policies on a scenario or trace"),
        ("replay", cmd_replay, "run policies over a recorded trace and latency table"),
    ):
        p = sub.add_parser(name, help=help_text)
        common(p)
        knobs(p)
        p.add_argument("policy", nargs="?", default=None, help=", ".join(POLICY_NAMES))
        p.add_argument("--policy", dest="policy_opt", default=None)
        p.add_argument("--model", default=None, help="model.json path, 'truth' or 'auto'")
        p.add_argument("--trace", default=None, required=name == "replay")
        p.add_argument("--latencies", default=None)
        p.add_argument("--nearest", type=int, default=0)
        p.add_argument("--requests", type=int, default=None)
        p.add_argument("--scenario", default=None)
        p.set_defaults(func=func)

    p = sub.add_parser("sweep", help="MO-HAN sensitivity sweep with Pareto flags")
    common(p)
    knobs(p, many=True)
    p.add_argument("--model", default=None)
    p.add_argument("--requests", type=int, default=None)
    p.add_argument("--scenario", default=None)
    p.set_defaults(func=cmd_sweep)
    return parser


def _error(kind: str, message: str) -> None:
    sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")


def main(argv: Optional[Sequence[str]] = None) -> int:
    level = os.environ.get("MOHAN_LOG_LEVEL", "warn").lower()
    logging.basicConfig(level=_LEVELS.get(level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "command", None):
            raise UsageError("a command is required: generate, fit, run, replay, sweep")
        return args.func(args)
    except UsageError as e:
        _error("usage", str(e))
        return 2
    except InsufficientDataError as e:
        _error("data", str(e))
        return 1
    except (ValueError, OSError, ArithmeticError, RuntimeError, KeyError) as e:
        _error(type(e).__name__, str(e))
        return 1


if __name__ == "__main__":
    sys.exit(main())
