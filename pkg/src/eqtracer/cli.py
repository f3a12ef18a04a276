"""Experiment runner: JSON configs in, CSV traces and JSON reports out.

`simulate` executes one seeded trace (or a directory of them with --batch),
`verify` runs the acceptance batteries.  All randomness flows from config
seeds through numpy's default generator, so identical configs reproduce
their trace files byte for byte.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import verify as verify_mod
from .applications import (
    ShiftingQuadratic,
    gd_regret_bound,
    second_eigenvalue,
    simulate_diffusion,
    simulate_shifting_quadratic,
)
from .equilibrium import ConvergenceError, solve_equilibrium
from .instances import (
    drifting_speeds,
    make_network,
    random_market,
    uniform_prices,
)
from .market import CesMarket
from .perturbation import (
    CHANNELS,
    PerturbationEvent,
    PerturbationSchedule,
    ScheduleSpec,
    generate_schedule,
)
from .prd import (
    PrdBoundConfig,
    fit_prd_constants,
    proportional_bids,
    reduce_supply_to_utility,
    run_prd_trace,
)
from .tatonnement import (
    CPF,
    MISSPENDING,
    TatonnementConfig,
    default_step_size,
    fit_contraction,
    run_tatonnement_trace,
)
from .trace import TraceRecord, write_trace_csv

KINDS = ("tatonnement-ms", "tatonnement-cpf", "prd", "gd-shifting", "diffusion")

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "eqtracer experiment configuration",
    "type": "object",
    "required": ["kind", "horizon"],
    "additionalProperties": False,
    "properties": {
        "kind": {"enum": list(KINDS)},
        "horizon": {"type": "integer", "minimum": 0},
        "market": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "random": {
                    "type": "object",
                    "required": ["m", "n", "seed"],
                    "additionalProperties": False,
                    "properties": {
                        "m": {"type": "integer", "minimum": 1},
                        "n": {"type": "integer", "minimum": 1},
                        "seed": {"type": "integer"},
                        "rho_low": {"type": "number"},
                        "rho_high": {"type": "number"},
                        "unit_supplies": {"type": "boolean"},
                    },
                },
                "budgets": {"type": "array", "items": {"type": "number"}},
                "supplies": {"type": "array", "items": {"type": "number"}},
                "rho": {"type": "array", "items": {"type": "number"}},
                "coefficients": {
                    "type": "array",
                    "items": {"type": "array", "items": {"type": "number"}},
                },
                "initial_prices": {"type": "array", "items": {"type": "number"}},
            },
        },
        "dynamics": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "step_size": {"anyOf": [{"type": "number"}, {"const": "auto"}]},
                "price_cap": {"anyOf": [{"type": "number"}, {"const": "2B"}]},
                "c_prime": {"type": "number"},
                "eta": {"anyOf": [{"type": "number"}, {"const": "max"}]},
            },
        },
        "schedule": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "events": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "required": ["round", "channel", "payload"],
                        "additionalProperties": False,
                        "properties": {
                            "round": {"type": "integer", "minimum": 1},
                            "channel": {"enum": list(CHANNELS)},
                            "payload": {"type": "array"},
                        },
                    },
                },
                "generator": {
                    "type": "object",
                    "required": ["channel", "magnitude", "seed"],
                    "additionalProperties": False,
                    "properties": {
                        "channel": {"enum": list(CHANNELS)},
                        "magnitude": {"type": "number", "minimum": 0},
                        "seed": {"type": "integer"},
                        "distribution": {"enum": ["uniform", "gaussian"]},
                        "start_round": {"type": "integer", "minimum": 1},
                        "every": {"type": "integer", "minimum": 1},
                    },
                },
            },
        },
        "bounds": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "delta": {"anyOf": [{"type": "number"}, {"const": "fit"}]},
                "warmup_rounds": {"type": "integer", "minimum": 1},
                "q1": {"type": "number"},
                "q2": {"type": "number"},
                "fit_rounds": {"type": "integer", "minimum": 2},
            },
        },
        "quadratic": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "dims": {"type": "integer", "minimum": 1},
                "curvature_low": {"type": "number", "exclusiveMinimum": 0},
                "curvature_high": {"type": "number", "exclusiveMinimum": 0},
                "shift": {"type": "number", "minimum": 0},
                "seed": {"type": "integer"},
                "start_offset": {"type": "number", "minimum": 0},
            },
        },
        "network": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "graph": {
                    "anyOf": [
                        {"enum": ["path", "cycle", "complete"]},
                        {"type": "array", "items": {"type": "array"}},
                    ]
                },
                "n": {"type": "integer", "minimum": 1},
                "speeds": {
                    "anyOf": [{"type": "number"}, {"type": "array"}]
                },
                "loads": {"type": "array", "items": {"type": "number"}},
                "load_total": {"type": "number", "exclusiveMinimum": 0},
                "seed": {"type": "integer"},
                "drift": {
                    "type": "object",
                    "required": ["magnitude", "seed"],
                    "additionalProperties": False,
                    "properties": {
                        "magnitude": {"type": "number", "minimum": 0},
                        "seed": {"type": "integer"},
                        "low": {"type": "number", "exclusiveMinimum": 0},
                        "high": {"type": "number", "exclusiveMinimum": 0},
                        "mode": {"enum": ["common", "per-machine"]},
                    },
                },
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "trace": {"type": "string"},
                "report": {"type": "string"},
            },
        },
    },
}

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SIMULATION = 3
EXIT_BOUND = 4


def _build_market(section: dict) -> CesMarket:
    if "random" in section:
        spec = dict(section["random"])
        return random_market(
            spec["seed"],
            spec["m"],
            spec["n"],
            spec.get("rho_low", 0.2),
            spec.get("rho_high", 0.8),
            unit_supplies=spec.get("unit_supplies", False),
        )
    try:
        return CesMarket(
            budgets=section["budgets"],
            supplies=section["supplies"],
            rho=section["rho"],
            coefficients=section["coefficients"],
        )
    except KeyError as missing:
        raise ValueError(f"market section needs {missing} or a 'random' block")


def _build_schedule(section: dict | None, market, horizon: int) -> PerturbationSchedule:
    if not section:
        return PerturbationSchedule()
    if "generator" in section:
        spec = ScheduleSpec(**section["generator"])
        return generate_schedule(spec, market, horizon)
    events = tuple(
        PerturbationEvent(e["round"], e["channel"], np.asarray(e["payload"], dtype=float))
        for e in section.get("events", ())
    )
    return PerturbationSchedule(events=events)


def _domination(records) -> dict:
    violations = sum(1 for r in records if r.potential > r.bound + 1e-9)
    return {
        "violations": violations,
        "verdict": "PASS" if violations == 0 else "FAIL",
        "rounds": len(records),
    }


def _run_tatonnement(config: dict, kind: str):
    market = _build_market(config.get("market", {}))
    dynamics = config.get("dynamics", {})
    bounds = config.get("bounds", {})
    horizon = config["horizon"]
    total = market.total_budget

    variant = MISSPENDING if kind == "tatonnement-ms" else CPF
    step_size = dynamics.get("step_size", "auto")
    if step_size == "auto":
        step_size = default_step_size(market) if variant == MISSPENDING else 0.05
    price_cap = dynamics.get("price_cap", "2B")
    if price_cap == "2B":
        price_cap = 2.0 * total
    delta = bounds.get("delta", "fit")
    tat_config = TatonnementConfig(
        lam=float(step_size),
        variant=variant,
        price_cap=float(price_cap),
        delta=None if delta == "fit" else float(delta),
        warmup_rounds=bounds.get("warmup_rounds", 100),
        c_prime=dynamics.get("c_prime"),
    )
    prices0 = np.asarray(
        config.get("market", {}).get("initial_prices", uniform_prices(market)),
        dtype=float,
    )
    delta_source = "supplied"
    if tat_config.delta is None:
        # Fit here instead of inside the runner so the report can carry the
        # fitted value; the trace is identical either way.
        delta_hat, prices0, _ = fit_contraction(
            market, prices0, tat_config, tat_config.warmup_rounds
        )
        tat_config = replace(tat_config, delta=delta_hat)
        delta_source = "fitted-from-warmup"
    schedule = _build_schedule(config.get("schedule"), market, horizon)
    records = run_tatonnement_trace(market, prices0, tat_config, schedule, horizon)

    constants = {
        "step_size": {"value": tat_config.lam, "source": "supplied" if dynamics.get("step_size", "auto") != "auto" else "default"},
        "price_cap": {"value": tat_config.price_cap},
        "delta": {"value": tat_config.delta, "source": delta_source},
    }
    report = {
        "kind": kind,
        "horizon": horizon,
        "constants": constants,
        "domination": _domination(records),
        "assumption1_violations": sum(1 for r in records if not r.assumption1_ok),
        "schedule_channels": sorted(schedule.channels()),
    }
    if records:
        report["final_potential"] = records[-1].potential
        report["final_bound"] = records[-1].bound
    if variant == CPF:
        eq = solve_equilibrium(market)
        report["initial_price_ratio"] = float(np.min(prices0 / eq.prices))
    return records, report


def _run_prd(config: dict):
    market = _build_market(config.get("market", {}))
    bounds = config.get("bounds", {})
    horizon = config["horizon"]
    reduced = reduce_supply_to_utility(market, np.zeros(market.num_goods))
    bids = proportional_bids(reduced)
    if "q1" in bounds and "q2" in bounds:
        bound = PrdBoundConfig(q1=bounds["q1"], q2=bounds["q2"])
        source = "supplied"
    else:
        bound, bids = fit_prd_constants(
            reduced, bids, rounds=bounds.get("fit_rounds", 200)
        )
        source = "fitted-from-warmup"
    schedule = _build_schedule(config.get("schedule"), reduced, horizon)
    records = run_prd_trace(reduced, bids, schedule, bound, horizon)
    recurrence = (
        float(np.mean([r.recurrence_ok for r in records])) if records else 1.0
    )
    report = {
        "kind": "prd",
        "horizon": horizon,
        "constants": {
            "q1": {"value": bound.q1, "source": source},
            "q2": {"value": bound.q2, "source": source},
        },
        "domination": _domination(records),
        "recurrence_fraction": recurrence,
        "schedule_channels": sorted(schedule.channels()),
    }
    if records:
        report["final_potential"] = records[-1].potential
        report["final_bound"] = records[-1].bound
        report["final_kl"] = records[-1].kl_to_equilibrium
    return records, report


def _run_gd(config: dict):
    spec = config.get("quadratic", {})
    horizon = config["horizon"]
    rng = np.random.default_rng(spec.get("seed", 0))
    dims = spec.get("dims", 5)
    curvatures = rng.uniform(
        spec.get("curvature_low", 0.5), spec.get("curvature_high", 3.0), dims
    )
    shift = spec.get("shift", 0.01)
    directions = rng.normal(size=(horizon + 1, dims))
    norms = np.linalg.norm(directions, axis=1, keepdims=True)
    directions = np.divide(directions, norms, out=np.zeros_like(directions), where=norms > 0)
    optima = np.cumsum(shift * directions, axis=0)
    eta = config.get("dynamics", {}).get("eta", "max")
    if eta == "max":
        eta = 2.0 / (curvatures.min() + curvatures.max())
    problem = ShiftingQuadratic(curvatures=curvatures, optima=optima, eta=float(eta))
    x0 = optima[0] + spec.get("start_offset", 1.0) * rng.normal(size=dims)
    trace = simulate_shifting_quadratic(problem, x0)
    records = [
        TraceRecord(
            round=t,
            potential=float(trace.distances[t]),
            delta=float(trace.shifts[t - 1]),
            bound=float(trace.bounds[t]),
        )
        for t in range(1, horizon + 1)
    ]
    regret_cap = gd_regret_bound(
        float(trace.distances[0]), problem.delta, shift, problem.beta_smooth, horizon
    )
    report = {
        "kind": "gd-shifting",
        "horizon": horizon,
        "constants": {
            "delta": {"value": problem.delta, "source": "curvature"},
            "eta": {"value": problem.eta},
            "alpha": problem.alpha,
            "beta": problem.beta_smooth,
        },
        "domination": _domination(records),
        "initial_distance": float(trace.distances[0]),
        "regret": trace.regret,
        "regret_bound": regret_cap,
        "regret_ok": bool(trace.regret <= regret_cap),
    }
    return records, report


def _run_diffusion(config: dict):
    spec = config.get("network", {})
    horizon = config["horizon"]
    n = spec.get("n", 8)
    network = make_network(
        spec.get("graph", "path"),
        n,
        speeds=spec.get("speeds"),
        loads=spec.get("loads"),
        seed=spec.get("seed", 0),
        load_total=spec.get("load_total"),
    )
    drift = spec.get("drift")
    if drift:
        path = drifting_speeds(
            drift["seed"],
            n,
            horizon,
            drift["magnitude"],
            drift.get("low", 0.8),
            drift.get("high", 1.25),
            drift.get("mode", "common"),
        )
        path = [network.speeds * p for p in path]
    else:
        path = [network.speeds] * (horizon + 1)
    trace = simulate_diffusion(network, path, horizon)
    lam = second_eigenvalue(network.diffusivity)
    records = [
        TraceRecord(
            round=t,
            potential=float(trace.potentials[t]),
            delta=float(trace.jumps[t - 1]),
            bound=float(trace.bounds[t]),
        )
        for t in range(1, horizon + 1)
    ]
    slacked = bool(
        np.all(trace.potentials <= np.sqrt(n) * trace.bounds + 1e-9)
    )
    report = {
        "kind": "diffusion",
        "horizon": horizon,
        "constants": {"lambda2": {"value": lam, "source": "power-iteration"}},
        "domination": _domination(records),
        "dominated_with_sqrt_n_slack": slacked,
        "worst_contraction": float(np.nanmax(trace.contractions)) if horizon else None,
        "initial_imbalance": float(trace.potentials[0]),
    }
    return records, report


_RUNNERS = {
    "tatonnement-ms": lambda cfg: _run_tatonnement(cfg, "tatonnement-ms"),
    "tatonnement-cpf": lambda cfg: _run_tatonnement(cfg, "tatonnement-cpf"),
    "prd": _run_prd,
    "gd-shifting": _run_gd,
    "diffusion": _run_diffusion,
}


def load_config(path: Path) -> dict:
    import jsonschema

    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}")
    try:
        config = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        )
    try:
        jsonschema.validate(config, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        field = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config field {field}: {exc.message}")
    return config


class ConfigError(ValueError):
    pass


def run_experiment(config_path: Path, out_dir: Path, strict: bool) -> int:
    config = load_config(config_path)
    out_dir.mkdir(parents=True, exist_ok=True)
    output = config.get("output", {})
    trace_path = out_dir / output.get("trace", "trace.csv")
    report_path = out_dir / output.get("report", "report.json")

    records, report = _RUNNERS[config["kind"]](config)
    write_trace_csv(records, trace_path)
    report["trace_file"] = trace_path.name
    with open(report_path, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")

    verdict = report["domination"]["verdict"]
    final = report.get("final_potential")
    summary = f"{config['kind']}: {len(records)} rounds, domination {verdict}"
    if final is not None:
        summary += f", final potential {final:.6g}"
    print(summary)
    print(f"trace: {trace_path}")
    print(f"report: {report_path}")
    if strict and verdict != "PASS":
        return EXIT_BOUND
    return EXIT_OK


def run_batch(batch_dir: Path, out_dir: Path, strict: bool) -> int:
    configs = sorted(batch_dir.glob("*.json"))
    if not configs:
        print(f"no *.json configs under {batch_dir}", file=sys.stderr)
        return EXIT_CONFIG
    workers = int(os.environ.get("TRACER_THREADS", "0")) or min(len(configs), os.cpu_count() or 1)
    codes = {}
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = {
            pool.submit(run_experiment, cfg, out_dir / cfg.stem, strict): cfg
            for cfg in configs
        }
        for future, cfg in futures.items():
            try:
                codes[cfg.name] = future.result()
            except ConfigError as exc:
                print(f"{cfg.name}: {exc}", file=sys.stderr)
                codes[cfg.name] = EXIT_CONFIG
            except Exception as exc:
                print(f"{cfg.name}: simulation error: {exc}", file=sys.stderr)
                codes[cfg.name] = EXIT_SIMULATION
    return max(codes.values())


def run_verify(suite: str) -> int:
    try:
        results = verify_mod.run_suite(suite)
    except KeyError as exc:
        print(exc.args[0], file=sys.stderr)
        return EXIT_CONFIG
    width = max(len(r.name) for r in results)
    failures = 0
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{status}  {r.name:<{width}}  [{r.seconds:7.2f}s]  {r.detail}")
        failures += not r.passed
    print(f"{len(results) - failures}/{len(results)} checks passed")
    return EXIT_OK if failures == 0 else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="eqtracer",
        description="Simulate adaptation dynamics on drifting markets and "
        "verify tracking bounds.",
    )
    parser.add_argument(
        "--emit-schema",
        action="store_true",
        help="print the JSON schema for experiment configs and exit",
    )
    sub = parser.add_subparsers(dest="command")

    sim = sub.add_parser("simulate", help="run one experiment config (or a batch)")
    group = sim.add_mutually_exclusive_group(required=True)
    group.add_argument("--config", type=Path, help="path to a JSON experiment config")
    group.add_argument("--batch", type=Path, help="directory of JSON configs to run")
    sim.add_argument("--out", type=Path, required=True, help="output directory")
    sim.add_argument(
        "--strict",
        action="store_true",
        help="exit with status 4 when the measured potential ever exceeds its bound",
    )

    ver = sub.add_parser("verify", help="run acceptance batteries")
    ver.add_argument(
        "--suite",
        default="all",
        help=f"one of {sorted(verify_mod.SUITES)}",
    )
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.emit_schema:
        print(json.dumps(CONFIG_SCHEMA, indent=2, sort_keys=True))
        return EXIT_OK
    if args.command == "simulate":
        try:
            if args.batch:
                return run_batch(args.batch, args.out, args.strict)
            return run_experiment(args.config, args.out, args.strict)
        except ConfigError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        except (ValueError, ConvergenceError, KeyError) as exc:
            print(f"simulation error: {exc}", file=sys.stderr)
            return EXIT_SIMULATION
    if args.command == "verify":
        return run_verify(args.suite)
    parser.print_help()
    return EXIT_CONFIG


def console_main() -> None:
    sys.exit(main())
