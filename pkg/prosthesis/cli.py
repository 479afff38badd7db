"""Command-line entry point: ``python -m prosthesis <command>``.

Exit codes: 0 success, 1 runtime failure, 2 usage or schema error. Failures print a JSON
object ``{"error": code, "message": ...}`` on stderr.
"""
import argparse
import json
import logging
import os
import sys

import pandas as pd
import yaml
from colorama import Fore, Style
from colorama import init as colorama_init

from config import Config
from prosthesis.controllers import VARIANTS
from prosthesis.errors import ProsthesisError, UsageError, ValidationError
from prosthesis.experiment import (
    ExperimentConfig, compare, experiment_human_fit, experiment_model, load_experiment_config, run_experiment,
    with_overrides, write_run,
)
from prosthesis.gait_library import load_gait, save_gait
from prosthesis.gait_opt import GaitOptProblem, gait_from_human_fit, optimize_gait, validate_gait
from prosthesis.human_data import JOINTS, generate_synthetic_human_gait, save_human_gait
from prosthesis.trace import FLOAT_FORMAT

logger = logging.getLogger(__name__)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _status(color: str, message: str):
    print(f"{color}{message}{Style.RESET_ALL}")


def _config(args) -> ExperimentConfig:
    config = load_experiment_config(args.config) if args.config else ExperimentConfig()
    return with_overrides(config, seed=args.seed, output_dir=args.out)


def _write_yaml(path: str, data: dict):
    with open(path, "w") as handle:
        yaml.safe_dump(data, handle, sort_keys=False)


def cmd_gen_data(args) -> int:
    config = _config(args)
    data = generate_synthetic_human_gait(config.height, config.mass, config.seed, args.samples)
    os.makedirs(config.output_dir, exist_ok=True)
    path = os.path.join(config.output_dir, "human_gait.csv")
    save_human_gait(data, path)
    _status(Fore.GREEN, f"wrote {len(data)} samples to {path}")
    return 0


def cmd_fit(args) -> int:
    config = _config(args)
    fit = experiment_human_fit(config)
    model = experiment_model(config)
    library = gait_from_human_fit(model, fit, nodes=config.gait_nodes, cycle_time=config.cycle_time)
    os.makedirs(config.output_dir, exist_ok=True)
    rows = [
        {"segment": name, "start": segment.start, "end": segment.end, **{f"rms_{j}": segment.rms[j] for j in JOINTS}}
        for name, segment in fit.segments.items()
    ]
    pd.DataFrame(rows).to_csv(os.path.join(config.output_dir, "fit_rms.csv"), index=False, float_format=FLOAT_FORMAT)
    path = os.path.join(config.output_dir, "gait_fit.json")
    save_gait(library, path)
    _status(Fore.GREEN, f"fitted degree-{fit.degree} curves, worst RMS {fit.rms:.2e} rad; gait written to {path}")
    return 0


def cmd_optimize(args) -> int:
    config = _config(args)
    fit = experiment_human_fit(config)
    model = experiment_model(config)
    guess = gait_from_human_fit(model, fit, nodes=config.gait_nodes, cycle_time=config.cycle_time)
    library, result = optimize_gait(GaitOptProblem(model, nodes=config.gait_nodes), fit, guess, args.max_iter or config.max_iter)
    os.makedirs(config.output_dir, exist_ok=True)
    path = os.path.join(config.output_dir, "gait.json")
    save_gait(library, path)
    _write_yaml(os.path.join(config.output_dir, "optimization.yaml"), {
        "status": result.status, "iterations": result.iterations, "objective": float(result.objective),
        "initial_objective": float(result.diagnostics["initial_objective"]),
        "initial_violation": float(result.diagnostics["initial_violation"]),
        "violations": {name: float(value) for name, value in result.diagnostics["violations"].items()},
    })
    color = Fore.GREEN if result.status == "optimal" else Fore.YELLOW
    _status(color, f"optimization {result.status} after {result.iterations} iterations; gait written to {path}")
    return 0 if result.status == "optimal" else 1


def cmd_validate(args) -> int:
    config = _config(args)
    model = experiment_model(config)
    library = load_gait(args.gait)
    report = validate_gait(model, library, simulate=not args.no_simulate)
    os.makedirs(config.output_dir, exist_ok=True)
    _write_yaml(os.path.join(config.output_dir, "validation.yaml"), report.to_dict())
    if report.passed:
        _status(Fore.GREEN, f"{args.gait}: all {len(report.checks)} checks pass")
        return 0
    _status(Fore.RED, f"{args.gait}: failed {', '.join(report.failures)}")
    print(json.dumps({"error": "gait_invalid", "message": f"failed checks: {report.failures}", "failures": report.failures}),
          file=sys.stderr)
    return 1


def cmd_simulate(args) -> int:
    config = _config(args)
    variant = args.controller or config.variants[0]
    fit = experiment_human_fit(config)
    result = run_experiment(config, variant, human_fit=fit)
    paths = write_run(result, fit, config.output_dir)
    if result.metrics is not None and result.metrics.fallbacks:
        _status(Fore.YELLOW, f"controller fell back to feedback linearization or PD on {result.metrics.fallbacks} ticks")
    if not result.completed:
        _status(Fore.RED, f"{variant} run ended early: {result.fall['message']}")
        print(json.dumps({"error": result.fall["code"], "message": result.fall["message"]}), file=sys.stderr)
        return 1
    rmse = result.metrics.rmse
    _status(Fore.GREEN, f"{variant}: knee RMSE {rmse['pk']:.4f} rad, ankle RMSE {rmse['pa']:.4f} rad; trace at {paths['trace']}")
    return 0


def cmd_compare(args) -> int:
    config = _config(args)
    table, results = compare(config)
    print(table.to_string(index=False))
    failed = [result.variant for result in results if not result.completed]
    if failed:
        _status(Fore.RED, f"runs ended early: {', '.join(failed)}")
        return 1
    _status(Fore.GREEN, f"RMSE table written to {os.path.join(config.output_dir, 'rmse_table.csv')}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="prosthesis", description="Human-prosthesis gait generation and controller experiments")
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    commands = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def command(name, handler, help):
        sub = commands.add_parser(name, help=help)
        sub.add_argument("--config", help="experiment config (YAML or JSON)")
        sub.add_argument("--seed", type=int, help=f"random seed (default {Config.default_seed})")
        sub.add_argument("--out", help="output directory")
        sub.set_defaults(handler=handler)
        return sub

    command("gen-data", cmd_gen_data, "synthesize a human gait cycle").add_argument("--samples", type=int, default=150)
    command("fit", cmd_fit, "fit Bézier curves to the human gait")
    command("optimize", cmd_optimize, "optimize a gait for the subject").add_argument("--max-iter", type=int)
    validate = command("validate", cmd_validate, "check a gait file")
    validate.add_argument("gait", help="gait JSON file")
    validate.add_argument("--no-simulate", action="store_true", help="skip the Poincaré return simulation")
    command("simulate", cmd_simulate, "walk with one controller").add_argument("--controller", choices=VARIANTS)
    command("compare", cmd_compare, "walk with every controller and tabulate tracking RMSE")
    return parser


def _fail(exc: Exception, status: int) -> int:
    code = exc.code if isinstance(exc, ProsthesisError) else "io"
    _status(Fore.RED, f"error: {exc}")
    print(json.dumps({"error": code, "message": str(exc)}), file=sys.stderr)
    return status


def main(argv=None) -> int:
    colorama_init()
    try:
        args = build_parser().parse_args(argv)
    except ValidationError as exc:
        return _fail(exc, 2)
    except SystemExit as exc: # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.handler(args)
    except ValidationError as exc:
        return _fail(exc, 2)
    except (ProsthesisError, OSError) as exc:
        return _fail(exc, 1)
