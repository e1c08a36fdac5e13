# src/commands/base.py
# Base class for all cli subcommands providing common functionality
# Shared logging helpers, input checks and the error-to-exit-status mapping
# RELEVANT FILES: match.py, evaluate.py, synth.py, reid.py, ../main.py

import logging
from dataclasses import dataclass
from typing import Any, Dict, Optional

from pydantic import ValidationError

from ..errors import InputError
from ..schemas import RunConfig, ZoneConfig

logger = logging.getLogger(__name__)

# Exit statuses
EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_INPUT = 2


@dataclass
class CommandResult:
    """
    Standard result format for all subcommands.

    Attributes:
        success: Whether the command succeeded
        data: Summary values of the run
        message: Human-readable one-line result for stdout
        error: Error message if success is False
        exit_code: Process exit status
    """

    success: bool
    data: Optional[Dict[str, Any]] = None
    message: Optional[str] = None
    error: Optional[str] = None
    exit_code: int = EXIT_OK


class BaseCommand:
    """
    Base class for subcommands.
    Subclasses implement execute(); run() turns raised errors into exit statuses.
    """

    name = "command"

    def __init__(self):
        self.logger = logging.getLogger(self.__class__.__name__)

    def execute(self, config: RunConfig) -> CommandResult:
        raise NotImplementedError("Each command must implement execute method")

    def run(self, config: RunConfig) -> CommandResult:
        """
        Execute the command and map failures to exit statuses.

        InputError and pydantic ValidationError mean the caller's data is wrong (2);
        anything else is an internal error (1) and is logged with its traceback.
        """
        try:
            missing = config.missing_inputs()
            if missing:
                raise InputError(f"input file not found: {missing[0]}")
            result = self.execute(config)
        except (InputError, ValidationError) as e:
            self._log_error(self.name, e)
            return CommandResult(success=False, error=str(e), exit_code=EXIT_INPUT)
        except Exception as e:
            self.logger.exception(f"{self.name} failed with an internal error")
            return CommandResult(success=False, error=f"internal error: {e}", exit_code=EXIT_INTERNAL)

        self._log_success(self.name, result.message)
        return result

    def _require_zone(self, config: RunConfig) -> ZoneConfig:
        if config.zone is None:
            raise InputError("zone configuration is required (--config or zone flags)")
        return config.zone

    def _require(self, value, flag: str):
        if value is None:
            raise InputError(f"{flag} is required for {self.name}")
        return value

    def _log_error(self, operation: str, error: Exception, details: Optional[str] = None):
        """
        Standardized error logging across all commands.

        Args:
            operation: Name of the operation that failed
            error: The exception that occurred
            details: Optional additional context
        """
        error_msg = f"{operation} failed: {error}"
        if details:
            error_msg += f" | Details: {details}"
        self.logger.error(error_msg)

    def _log_success(self, operation: str, details: Optional[str] = None):
        success_msg = f"{operation} completed successfully"
        if details:
            success_msg += f" | {details}"
        self.logger.info(success_msg)
