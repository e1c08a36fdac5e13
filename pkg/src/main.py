# src/main.py
# Command-line entry point: python -m src.main <match|eval|synth|reid-eval>
# Builds the RunConfig from the JSON config document plus flags and dispatches
# RELEVANT FILES: config.py, schemas.py, commands/, storage.py

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from pydantic import ValidationError

from .commands import COMMANDS
from .commands.base import EXIT_INPUT
from .config import get_settings
from .errors import InputError
from .schemas import RunConfig, Session, TimeTerm, ZoneConfig
from .storage import read_json

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

# Flag destination -> ZoneConfig field
ZONE_FLAGS = {
    "w1": "w1",
    "w2": "w2",
    "tau": "tau",
    "delta": "time_window_delta",
    "distance_m": "distance_m",
    "speed_mps": "mean_speed_mps",
    "time_term": "time_term",
    "entry_lanes": "entry_lanes",
    "exit_lanes": "exit_lanes",
}

# Flag destination -> ScenarioSpec field
SCENARIO_FLAGS = {
    "vehicles": "vehicle_count",
    "noise_std": "noise_std",
    "speed_std": "speed_std_mps",
    "truck_fraction": "truck_fraction",
    "clutter_entry": "clutter_entry",
    "clutter_exit": "clutter_exit",
    "dim": "embedding_dim",
    "duration": "duration_s",
}


def configure_logging() -> None:
    """Log to stderr at the WEAVE_LOG level"""
    level = getattr(logging, get_settings().log.upper(), logging.INFO)
    logging.basicConfig(level=level, format=LOG_FORMAT, stream=sys.stderr)


def _lane_list(text: str) -> List[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated lane ids, got {text!r}")


def _zone_options() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    group = parent.add_argument_group("zone")
    group.add_argument("--config", type=Path, help="JSON config document")
    group.add_argument("--w1", type=float, help="appearance weight (default 0.3)")
    group.add_argument("--w2", type=float, help="time weight (default 0.75)")
    group.add_argument("--tau", type=float, help="cosine similarity threshold (default 0.8)")
    group.add_argument("--delta", type=float, help="exit window half-width in seconds")
    group.add_argument("--distance-m", type=float, help="average distance S from P1 to P2")
    group.add_argument("--speed-mps", type=float, help="average speed V")
    group.add_argument("--time-term", choices=[t.value for t in TimeTerm])
    group.add_argument("--entry-lanes", type=_lane_list, help="e.g. 1,2,3")
    group.add_argument("--exit-lanes", type=_lane_list, help="e.g. 1,2,3")
    group.add_argument("--zone-name")
    group.add_argument("--session", choices=[s.value for s in Session])
    group.add_argument("--visible-sides", help='free text such as "RS-RS"')
    return parent


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="weave", description="Weaving-zone vehicle matching and lane-flow estimation"
    )
    sub = parser.add_subparsers(dest="command", required=True)
    zone = _zone_options()

    match = sub.add_parser("match", parents=[zone], help="match a recording and estimate flows")
    match.add_argument("--entries", type=Path, required=True)
    match.add_argument("--exits", type=Path, required=True)
    match.add_argument("--entry-sidecar", type=Path)
    match.add_argument("--exit-sidecar", type=Path)
    match.add_argument("--output", type=Path, required=True, help="report JSON path")
    match.add_argument("--csv", type=Path, help="flow CSV path (default: report path with .csv)")
    match.add_argument("--ground-truth", type=Path, help="attach match metrics to the report")
    match.add_argument("--total-detected", type=int)

    evaluate = sub.add_parser("eval", parents=[zone], help="score a report against ground truth")
    evaluate.add_argument("--report", type=Path, required=True)
    evaluate.add_argument("--ground-truth", type=Path, required=True)
    evaluate.add_argument("--total-detected", type=int)
    evaluate.add_argument("--output", type=Path)

    synth = sub.add_parser("synth", parents=[zone], help="generate a synthetic scenario")
    synth.add_argument("--out-dir", type=Path, required=True)
    synth.add_argument("--seed", type=int)
    synth.add_argument("--sidecar", action="store_true", help="write embeddings to .wemb files")
    synth.add_argument("--vehicles", type=int)
    synth.add_argument("--noise-std", type=float)
    synth.add_argument("--speed-std", type=float)
    synth.add_argument("--truck-fraction", type=float)
    synth.add_argument("--clutter-entry", type=int)
    synth.add_argument("--clutter-exit", type=int)
    synth.add_argument("--dim", type=int)
    synth.add_argument("--duration", type=float)

    reid = sub.add_parser("reid-eval", parents=[zone], help="CMC and mAP of an embedding set")
    reid.add_argument("--query", type=Path, required=True)
    reid.add_argument("--gallery", type=Path, required=True)
    reid.add_argument("--max-rank", type=int, default=10)
    reid.add_argument("--output", type=Path)

    return parser


def _overlay(base: Dict[str, Any], args: argparse.Namespace, flags: Dict[str, str]) -> Dict[str, Any]:
    merged = dict(base)
    for dest, field in flags.items():
        value = getattr(args, dest, None)
        if value is not None:
            merged[field] = value
    return merged


def build_run_config(args: argparse.Namespace) -> RunConfig:
    """
    Merge the optional JSON config document with command-line flags.

    Raises:
        InputError: The config document cannot be read
        ValidationError: Zone, scenario or run values break their invariants
    """
    document = read_json(args.config) if getattr(args, "config", None) else {}
    zone_data = _overlay(document.get("zone") or {}, args, ZONE_FLAGS)

    zone: Optional[ZoneConfig] = None
    tau: Optional[float] = None
    if args.command == "reid-eval":
        # Retrieval only needs the threshold; a partial zone is fine here
        tau = zone_data.get("tau")
    elif zone_data:
        zone = ZoneConfig.model_validate(zone_data)

    scenario = _overlay(document.get("scenario") or {}, args, SCENARIO_FLAGS)
    seed = getattr(args, "seed", None)

    return RunConfig(
        command=args.command,
        entries_path=getattr(args, "entries", None),
        exits_path=getattr(args, "exits", None),
        entry_sidecar=getattr(args, "entry_sidecar", None),
        exit_sidecar=getattr(args, "exit_sidecar", None),
        output_path=getattr(args, "output", None) or getattr(args, "out_dir", None),
        csv_path=getattr(args, "csv", None),
        report_path=getattr(args, "report", None),
        ground_truth_path=getattr(args, "ground_truth", None),
        query_path=getattr(args, "query", None),
        gallery_path=getattr(args, "gallery", None),
        total_detected=getattr(args, "total_detected", None),
        max_rank=getattr(args, "max_rank", None) or 10,
        sidecar=bool(getattr(args, "sidecar", False)),
        zone=zone,
        tau=tau,
        scenario=scenario,
        seed=seed if seed is not None else document.get("seed"),
        zone_name=args.zone_name or document.get("zone_name"),
        session=args.session or document.get("session"),
        visible_sides=args.visible_sides or document.get("visible_sides"),
    )


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Parse arguments, run one subcommand and return its exit status.
    0 on success, 2 for invalid input, 1 for internal errors.
    """
    configure_logging()
    args = build_parser().parse_args(argv)

    try:
        config = build_run_config(args)
    except (InputError, ValidationError) as e:
        logger.error(f"Invalid configuration: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT

    logger.info(f"Running {args.command}...")
    result = COMMANDS[args.command]().run(config)
    if result.success:
        print(result.message)
    else:
        print(f"error: {result.error}", file=sys.stderr)
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
