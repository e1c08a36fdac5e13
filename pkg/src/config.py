# src/config.py
# Application configuration and environment settings
# Loads WEAVE_* environment variables and defines tool-wide settings
# RELEVANT FILES: main.py, schemas.py, synth.py

from functools import lru_cache
from typing import List

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """
    Tool settings loaded from environment variables.
    Uses pydantic-settings for validation and type conversion.
    """

    # Logging verbosity (WEAVE_LOG)
    log: str = "INFO"

    # Report layout
    schema_version: str = "1"
    percent_decimals: int = 2
    reid_report_ranks: List[int] = [1, 5, 10]

    # Matching
    enumeration_limit: int = 8  # Largest side the brute-force oracle accepts
    tie_tolerance: float = 1e-9  # Costs closer than this count as equal

    # Output files (retries when the final rename hits a locked target)
    max_retries: int = 3
    retry_delay: float = 0.1
    max_retry_delay: float = 1.0

    model_config = SettingsConfigDict(
        env_prefix="WEAVE_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )


@lru_cache()
def get_settings() -> Settings:
    """
    Get cached settings.
    Uses lru_cache to ensure settings are only loaded once.
    """
    return Settings()
