# src/commands/evaluate.py
# `eval` subcommand: score a weaving report against ground-truth pairs
# Emits one accuracy-table row (count accuracy, TPR, precision in percent)
# RELEVANT FILES: base.py, ../evalkit.py, ../storage.py

from typing import Dict, Optional

from ..config import get_settings
from ..evalkit import accuracy_row, count_accuracy, lane_count_accuracy, match_metrics
from ..schemas import GroundTruth, RunConfig, WeavingReport
from ..storage import read_model, write_json
from .base import BaseCommand, CommandResult


def _totals(rows) -> Dict[int, int]:
    return {row.lane_id: row.count for row in rows}


def _lane_accuracy(detected: Dict[int, int], true: Dict[int, int]) -> Dict[str, Optional[float]]:
    per_lane, _ = lane_count_accuracy(detected, true)
    return {str(lane): value for lane, value in per_lane.items()}


class EvaluateCommand(BaseCommand):
    """Compare a report's matches with ground truth"""

    name = "eval"

    def execute(self, config: RunConfig) -> CommandResult:
        report_path = self._require(config.report_path, "--report")
        truth_path = self._require(config.ground_truth_path, "--ground-truth")

        report = read_model(report_path, WeavingReport)
        truth = read_model(truth_path, GroundTruth)

        total = config.total_detected or report.total_entries
        metrics = match_metrics(report.matches, truth.pair_set(), total)

        # Count accuracy over both observation points when true counts are known
        overall = None
        lanes: Dict[str, Dict[str, Optional[float]]] = {}
        true_entry, true_exit = _totals(truth.entry_lane_totals), _totals(truth.exit_lane_totals)
        if true_entry or true_exit:
            found_entry = _totals(report.entry_lane_totals)
            found_exit = _totals(report.exit_lane_totals)
            lanes = {
                "entry": _lane_accuracy(found_entry, true_entry),
                "exit": _lane_accuracy(found_exit, true_exit),
            }
            overall = count_accuracy(
                sum(found_entry.values()) + sum(found_exit.values()),
                sum(true_entry.values()) + sum(true_exit.values()),
            )

        row = accuracy_row(
            metrics,
            overall,
            zone_name=config.zone_name or report.zone_name,
            session=config.session or report.session,
            visible_sides=config.visible_sides or report.visible_sides,
        )
        if config.output_path is not None:
            write_json(
                config.output_path,
                {
                    "schema_version": get_settings().schema_version,
                    "metrics": metrics.model_dump(mode="json"),
                    "row": row.model_dump(mode="json"),
                    "lane_count_accuracy": lanes,
                },
            )

        decimals = get_settings().percent_decimals
        count_text = "NA" if row.count_accuracy is None else f"{row.count_accuracy:.{decimals}f}"
        labels = " ".join(str(x) for x in (row.zone_name, row.session, row.visible_sides) if x)
        return CommandResult(
            success=True,
            data=row.model_dump(mode="json"),
            message=(
                f"{labels + ' ' if labels else ''}count accuracy {count_text} "
                f"TPR {row.tpr:.{decimals}f} Precision {row.precision:.{decimals}f}"
            ),
        )


def cmd_eval(config: RunConfig) -> int:
    """Run the eval subcommand; returns the process exit status"""
    return EvaluateCommand().run(config).exit_code
