# src/model.py
# Travel-time prior and dataset validation shared by every pipeline stage
# Violations are returned as data; nothing here raises on bad records
# RELEVANT FILES: schemas.py, matching/assign.py, weave.py

import logging
import math
from collections import Counter
from typing import Dict, List, Optional, Sequence

import numpy as np

from .schemas import (
    Observation,
    ValidationReport,
    VehicleClass,
    Violation,
    ViolationKind,
    ZoneConfig,
    ZonePoint,
)

logger = logging.getLogger(__name__)


def expected_travel_time(zone: ZoneConfig) -> float:
    """
    Prior travel time T_a = S / V through the weaving zone.

    Args:
        zone: Validated zone configuration

    Returns:
        float: Seconds
    """
    return zone.distance_m / zone.mean_speed_mps


def validate_dataset(
    observations: Sequence[Observation],
    zone: ZoneConfig,
    expected_point: Optional[ZonePoint] = None,
    reference_dim: Optional[int] = None,
) -> ValidationReport:
    """
    Check observations against the dataset invariants and count vehicles per lane.

    Args:
        observations: Records to check (never mutated)
        zone: Declares the lane sets of P1 and P2
        expected_point: When given, records from the other point are violations
        reference_dim: Dimension fixed elsewhere in the dataset (e.g. by the entry file);
            defaults to the most common dimension among these records

    Returns:
        ValidationReport: Record count, per-lane totals N_a / N_b and every violation
    """
    violations: List[Violation] = []
    entry_counts: Dict[int, int] = {lane: 0 for lane in zone.entry_lanes}
    exit_counts: Dict[int, int] = {lane: 0 for lane in zone.exit_lanes}

    def flag(kind: ViolationKind, index: int, obs: Observation, message: str) -> None:
        violations.append(
            Violation(kind=kind, index=index, track_id=obs.track_id, message=message)
        )

    # Most common dimension is the reference so one bad record is the one reported
    if reference_dim is None:
        dimensions = Counter(len(obs.embedding) for obs in observations)
        reference_dim = min(dimensions, key=lambda d: (-dimensions[d], d)) if dimensions else None

    seen = set()
    for index, obs in enumerate(observations):
        if expected_point is not None and obs.zone_point != expected_point:
            flag(
                ViolationKind.WRONG_ZONE_POINT,
                index,
                obs,
                f"record is {obs.zone_point.value}, expected {expected_point.value}",
            )

        if obs.key in seen:
            flag(
                ViolationKind.DUPLICATE_TRACK,
                index,
                obs,
                f"track {obs.track_id} repeated for camera {obs.camera_id} at {obs.zone_point.value}",
            )
        seen.add(obs.key)

        if not math.isfinite(obs.timestamp):
            flag(ViolationKind.NON_FINITE_TIMESTAMP, index, obs, "timestamp is not finite")
        elif obs.timestamp < 0:
            flag(ViolationKind.NEGATIVE_TIMESTAMP, index, obs, "timestamp is negative")

        if not isinstance(obs.vehicle_class, VehicleClass):
            flag(
                ViolationKind.UNKNOWN_CLASS,
                index,
                obs,
                f"class {obs.vehicle_class!r} is neither car nor truck",
            )

        lanes = zone.lanes_for(obs.zone_point)
        if obs.lane_id in lanes:
            counts = entry_counts if obs.zone_point == ZonePoint.ENTRY else exit_counts
            counts[obs.lane_id] += 1
        else:
            flag(
                ViolationKind.UNKNOWN_LANE,
                index,
                obs,
                f"lane {obs.lane_id} is not declared for {obs.zone_point.value} {list(lanes)}",
            )

        vector = np.asarray(obs.embedding, dtype=np.float64)
        if len(obs.embedding) != reference_dim:
            flag(
                ViolationKind.DIMENSION_MISMATCH,
                index,
                obs,
                f"embedding has dimension {len(obs.embedding)}, dataset uses {reference_dim}",
            )
        elif not np.all(np.isfinite(vector)):
            flag(ViolationKind.NON_FINITE_EMBEDDING, index, obs, "embedding has non-finite entries")
        elif not np.any(vector):
            flag(ViolationKind.ZERO_NORM_EMBEDDING, index, obs, "embedding has zero norm")

    report = ValidationReport(
        record_count=len(observations),
        entry_lane_counts=entry_counts,
        exit_lane_counts=exit_counts,
        violations=violations,
    )
    if violations:
        logger.warning(f"Validation found {len(violations)} violation(s) in {len(observations)} records")
    else:
        logger.debug(f"Validated {len(observations)} records")
    return report
