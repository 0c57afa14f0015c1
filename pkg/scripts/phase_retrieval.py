"""Command-line entry point: run, validate or simulate a phase-retrieval scenario."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from app.core.config import get_settings
from app.core.errors import PhaseRetrievalError
from app.services.artifacts import write_run_artifacts, write_json, write_simulation
from app.services.experiment import run_experiment, simulate
from app.services.run_config import load_run_config, read_config_file, validate_config

LOGGER = logging.getLogger("phase_retrieval")


def parse_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(description="Intensity-only synthetic-aperture phase retrieval")
    parser.add_argument(
        "--log-level",
        default=None,
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="Logging verbosity (defaults to the LOG_LEVEL setting)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_text in (
        ("run", "Simulate the configured scene, retrieve phases and write all artifacts"),
        ("validate", "Check a config file and print the effective parameters"),
        ("simulate", "Write the simulated intensities and true phases only"),
    ):
        command = sub.add_parser(name, help=help_text)
        command.add_argument("--config", type=Path, required=True, help="Flat-key JSON run config")
        if name != "validate":
            command.add_argument("--out", type=Path, help="Output directory (overrides output.directory)")
            command.add_argument("--seed", type=int, help="Override the top-level seed")
        if name == "run":
            command.add_argument("--no-svg", action="store_true", help="Skip SVG figures")
    return parser.parse_args(argv)


def configure_logging(level: str) -> None:
    logging.basicConfig(level=getattr(logging, level), format="%(asctime)s %(levelname)s %(message)s")


def _settings_base() -> Dict[str, Any]:
    settings = get_settings()
    return {
        "output.directory": settings.output_dir,
        "lp.tol": settings.lp_tol,
        "lp.max_iter": settings.lp_max_iter,
    }


def _overrides(args: argparse.Namespace) -> Dict[str, Any]:
    overrides: Dict[str, Any] = {}
    if getattr(args, "out", None) is not None:
        overrides["output.directory"] = str(args.out)
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "no_svg", False):
        overrides["output.emit_svg"] = False
    return overrides


def cmd_run(args: argparse.Namespace) -> int:
    config = load_run_config(args.config, _overrides(args), base=_settings_base())
    result = run_experiment(config)
    out_dir = Path(config.output.directory)
    write_run_artifacts(result, out_dir, config.output.emit_svg)
    print(json.dumps({"status": "ok", "output": str(out_dir), "outer_iterations": result.retrieval.estimate.iterations}))
    return 0


def cmd_validate(args: argparse.Namespace) -> int:
    report = validate_config({**_settings_base(), **read_config_file(args.config)})
    print(json.dumps(report.to_payload(), indent=2, sort_keys=True))
    return 0 if report.ok else 2


def cmd_simulate(args: argparse.Namespace) -> int:
    config = load_run_config(args.config, _overrides(args), base=_settings_base())
    simulation = simulate(config)
    out_dir = Path(config.output.directory)
    write_simulation(simulation, out_dir)
    write_json(
        out_dir / "simulation_report.json",
        {
            "status": "ok",
            "parameters": config.flat(),
            "source_directions": [{"u": u, "v": v} for u, v in simulation.directions],
        },
    )
    print(json.dumps({"status": "ok", "output": str(out_dir)}))
    return 0


COMMANDS = {"run": cmd_run, "validate": cmd_validate, "simulate": cmd_simulate}


def main(argv: Optional[List[str]] = None) -> int:
    args = parse_args(argv)
    configure_logging(args.log_level or get_settings().log_level.upper())
    try:
        return COMMANDS[args.command](args)
    except PhaseRetrievalError as exc:
        LOGGER.error("%s failed: %s", args.command, exc)
        print(json.dumps(exc.to_payload()), file=sys.stderr)
        return exc.exit_code
    except Exception as exc:  # numpy, matplotlib and other non-library failures
        LOGGER.exception("%s failed unexpectedly", args.command)
        error = PhaseRetrievalError(f"{type(exc).__name__}: {exc}")
        print(json.dumps(error.to_payload()), file=sys.stderr)
        return error.exit_code


if __name__ == "__main__":
    sys.exit(main())
