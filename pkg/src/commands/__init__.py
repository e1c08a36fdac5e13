# src/commands/__init__.py
# Subcommand package initialization
# Exports every command for the dispatcher in main.py
# RELEVANT FILES: base.py, match.py, evaluate.py, synth.py, reid.py, ../main.py

from .base import BaseCommand, CommandResult
from .evaluate import EvaluateCommand, cmd_eval
from .match import MatchCommand, cmd_match
from .reid import ReidEvalCommand, cmd_reid_eval
from .synth import SynthCommand, cmd_synth

COMMANDS = {
    MatchCommand.name: MatchCommand,
    EvaluateCommand.name: EvaluateCommand,
    SynthCommand.name: SynthCommand,
    ReidEvalCommand.name: ReidEvalCommand,
}

__all__ = [
    "BaseCommand",
    "CommandResult",
    "COMMANDS",
    "MatchCommand",
    "EvaluateCommand",
    "SynthCommand",
    "ReidEvalCommand",
    "cmd_match",
    "cmd_eval",
    "cmd_synth",
    "cmd_reid_eval",
]
