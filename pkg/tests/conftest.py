# tests/conftest.py
# Shared fixtures: a default zone and a clean settings cache

import pytest

from src.config import get_settings
from src.schemas import ZoneConfig


@pytest.fixture(autouse=True)
def fresh_settings(monkeypatch):
    """Every test sees default settings unless it sets WEAVE_* itself"""
    for name in ("WEAVE_LOG", "WEAVE_ENUMERATION_LIMIT", "WEAVE_TIE_TOLERANCE"):
        monkeypatch.delenv(name, raising=False)
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()


@pytest.fixture
def zone() -> ZoneConfig:
    """S = 500 m, V = 25 m/s -> T_a = 20 s, delta = 10 s"""
    return ZoneConfig(
        distance_m=500.0,
        mean_speed_mps=25.0,
        entry_lanes=[1, 2, 3],
        exit_lanes=[1, 2, 3],
    )
