# src/commands/match.py
# `match` subcommand: validate -> match_zone -> lane counts -> flows -> report
# Writes the JSON weaving report and the lane-pair CSV used for plotting
# RELEVANT FILES: base.py, ../matching/assign.py, ../weave.py, ../storage.py

from pathlib import Path
from typing import List, Optional, Sequence

from ..errors import InputError
from ..evalkit import match_metrics
from ..matching.assign import match_zone
from ..model import validate_dataset
from ..schemas import GroundTruth, Observation, RunConfig, ValidationReport, ZoneConfig, ZonePoint
from ..storage import read_model, read_observations, write_report_bundle
from ..weave import build_report, estimate_flows, lane_pair_counts
from .base import BaseCommand, CommandResult


def _checked(
    observations: Sequence[Observation],
    zone: ZoneConfig,
    point: ZonePoint,
    source: Path,
    reference_dim: Optional[int] = None,
) -> ValidationReport:
    report = validate_dataset(observations, zone, expected_point=point, reference_dim=reference_dim)
    if not report.ok:
        first = report.violations[0]
        raise InputError(
            f"{source}: record {first.index + 1} (track {first.track_id}): "
            f"{first.kind}: {first.message} ({len(report.violations)} violation(s) in total)"
        )
    return report


class MatchCommand(BaseCommand):
    """Match one zone recording and estimate its lane-level weaving flows"""

    name = "match"

    def execute(self, config: RunConfig) -> CommandResult:
        zone = self._require_zone(config)
        entries_path = self._require(config.entries_path, "--entries")
        exits_path = self._require(config.exits_path, "--exits")
        output = self._require(config.output_path, "--output")

        entries: List[Observation] = read_observations(entries_path, config.entry_sidecar)
        exits: List[Observation] = read_observations(exits_path, config.exit_sidecar)
        entry_check = _checked(entries, zone, ZonePoint.ENTRY, entries_path)
        # D is shared by both files; the entry file fixes it
        entry_dim = len(entries[0].embedding) if entries else None
        exit_check = _checked(exits, zone, ZonePoint.EXIT, exits_path, reference_dim=entry_dim)

        matches = match_zone(entries, exits, zone)
        counts = lane_pair_counts(matches, entries, exits)
        flows = estimate_flows(counts, entry_check.entry_lane_counts, exit_check.exit_lane_counts)

        metrics = None
        if config.ground_truth_path is not None:
            truth = read_model(config.ground_truth_path, GroundTruth)
            total = config.total_detected or sum(entry_check.entry_lane_counts.values())
            metrics = match_metrics(matches, truth.pair_set(), total)

        report = build_report(
            flows,
            counts,
            metrics,
            matches=matches,
            zone=zone,
            zone_name=config.zone_name,
            session=config.session,
            visible_sides=config.visible_sides,
        )
        csv_path = config.csv_path or output.with_suffix(".csv")
        write_report_bundle(output, csv_path, report)

        return CommandResult(
            success=True,
            data={
                "total_matched": report.total_matched,
                "total_entries": report.total_entries,
                "sampling_rate": report.sampling_rate,
                "report": str(output),
                "csv": str(csv_path),
            },
            message=(
                f"matched {report.total_matched} of {report.total_entries} entries "
                f"(sampling rate {report.sampling_rate:.4f}) -> {output}"
            ),
        )


def cmd_match(config: RunConfig) -> int:
    """Run the match subcommand; returns the process exit status"""
    return MatchCommand().run(config).exit_code
