# src/commands/synth.py
# `synth` subcommand: write a generated scenario and its ground truth to a directory
# Output files: entries.jsonl, exits.jsonl, ground_truth.json (+ .wemb sidecars)
# RELEVANT FILES: base.py, ../synth.py, ../storage.py

from ..schemas import RunConfig
from ..storage import default_sidecar, write_json, write_observations
from ..synth import generate_scenario
from .base import BaseCommand, CommandResult

ENTRIES_FILE = "entries.jsonl"
EXITS_FILE = "exits.jsonl"
GROUND_TRUTH_FILE = "ground_truth.json"


class SynthCommand(BaseCommand):
    """Generate a synthetic weaving scenario"""

    name = "synth"

    def execute(self, config: RunConfig) -> CommandResult:
        zone = self._require_zone(config)
        out_dir = self._require(config.output_path, "--out-dir")

        spec = config.scenario
        if config.seed is not None:
            spec = spec.model_copy(update={"seed": config.seed})

        entries, exits, truth = generate_scenario(spec, zone)

        out_dir.mkdir(parents=True, exist_ok=True)
        entries_path = out_dir / ENTRIES_FILE
        exits_path = out_dir / EXITS_FILE
        write_observations(
            entries_path, entries, default_sidecar(entries_path) if config.sidecar else None
        )
        write_observations(exits_path, exits, default_sidecar(exits_path) if config.sidecar else None)
        write_json(out_dir / GROUND_TRUTH_FILE, truth)

        return CommandResult(
            success=True,
            data={
                "entries": len(entries),
                "exits": len(exits),
                "pairs": len(truth.pairs),
                "seed": spec.seed,
                "out_dir": str(out_dir),
            },
            message=(
                f"generated {len(entries)} entries, {len(exits)} exits, "
                f"{len(truth.pairs)} true pairs (seed {spec.seed}) -> {out_dir}"
            ),
        )


def cmd_synth(config: RunConfig) -> int:
    """Run the synth subcommand; returns the process exit status"""
    return SynthCommand().run(config).exit_code
