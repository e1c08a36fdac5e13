# src/weave.py
# Lane-level weaving flow estimation from the matched sample
# Matched pairs are a sample of each entry lane; counts N_a scale them to flows
# RELEVANT FILES: schemas.py, matching/assign.py, commands/match.py

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from .config import get_settings
from .errors import InconsistentCounts, UnknownTrackId
from .model import expected_travel_time
from .schemas import (
    ExitDiscrepancy,
    LanePairFlow,
    LaneRole,
    LaneTotal,
    MatchedPair,
    MatchMetrics,
    MovementShare,
    Observation,
    Session,
    WeavingReport,
    ZoneConfig,
)

logger = logging.getLogger(__name__)

LanePair = Tuple[int, int]

# Report order of the ramp/mainline movement types
MOVEMENTS = [
    (LaneRole.MAINLINE, LaneRole.MAINLINE),
    (LaneRole.MAINLINE, LaneRole.RAMP),
    (LaneRole.RAMP, LaneRole.MAINLINE),
    (LaneRole.RAMP, LaneRole.RAMP),
]


@dataclass(frozen=True)
class LanePairCounts:
    """Matched-pair counts m(a, b) by entry lane a and exit lane b"""

    counts: Dict[LanePair, int]
    entry_lanes: Tuple[int, ...]
    exit_lanes: Tuple[int, ...]

    @property
    def total_matched(self) -> int:
        return sum(self.counts.values())

    def get(self, entry_lane: int, exit_lane: int) -> int:
        return self.counts.get((entry_lane, exit_lane), 0)

    def entry_total(self, entry_lane: int) -> int:
        """Matched pairs leaving entry lane a, summed over exit lanes"""
        return sum(n for (a, _), n in self.counts.items() if a == entry_lane)

    def exit_total(self, exit_lane: int) -> int:
        return sum(n for (_, b), n in self.counts.items() if b == exit_lane)


@dataclass(frozen=True)
class FlowEstimate:
    """
    Estimated flows F(a, b); None marks an Unestimated lane pair.

    Attributes:
        flows: One entry per (entry lane, exit lane)
        entry_totals: Counted vehicles per entry lane (N_a)
        exit_totals: Counted vehicles per exit lane (N_b)
        warnings: Human-readable notes, one per unestimated entry lane
    """

    flows: Dict[LanePair, Optional[float]]
    entry_totals: Dict[int, int]
    exit_totals: Dict[int, int]
    warnings: List[str] = field(default_factory=list)

    @property
    def entry_lanes(self) -> Tuple[int, ...]:
        return tuple(sorted({a for a, _ in self.flows} | set(self.entry_totals)))

    @property
    def exit_lanes(self) -> Tuple[int, ...]:
        return tuple(sorted({b for _, b in self.flows} | set(self.exit_totals)))

    def is_estimated(self, entry_lane: int) -> bool:
        return any(
            value is not None for (a, _), value in self.flows.items() if a == entry_lane
        )


def _resolver(observations: Sequence[Observation]):
    by_camera = {(o.camera_id, o.track_id): o for o in observations}
    by_track: Dict[str, List[Observation]] = {}
    for o in observations:
        by_track.setdefault(o.track_id, []).append(o)

    def resolve(camera_id: Optional[str], track_id: str, side: str) -> Observation:
        if camera_id is not None:
            found = by_camera.get((camera_id, track_id))
            if found is not None:
                return found
        candidates = by_track.get(track_id, [])
        if len(candidates) != 1:
            raise UnknownTrackId(f"{side} track {track_id!r} does not resolve to one observation")
        return candidates[0]

    return resolve


def lane_pair_counts(
    matches: Sequence[MatchedPair],
    entries: Sequence[Observation],
    exits: Sequence[Observation],
) -> LanePairCounts:
    """
    Tally matched pairs by (entry lane, exit lane).

    Raises:
        UnknownTrackId: A matched track has no (unique) observation
    """
    entry_lanes = tuple(sorted({o.lane_id for o in entries}))
    exit_lanes = tuple(sorted({o.lane_id for o in exits}))
    counts: Dict[LanePair, int] = {(a, b): 0 for a in entry_lanes for b in exit_lanes}

    resolve_entry = _resolver(entries)
    resolve_exit = _resolver(exits)
    for pair in matches:
        a = resolve_entry(pair.entry_camera_id, pair.entry_track, "entry").lane_id
        b = resolve_exit(pair.exit_camera_id, pair.exit_track, "exit").lane_id
        counts[(a, b)] = counts.get((a, b), 0) + 1

    return LanePairCounts(counts=counts, entry_lanes=entry_lanes, exit_lanes=exit_lanes)


def estimate_flows(
    counts: LanePairCounts,
    entry_totals: Mapping[int, int],
    exit_totals: Mapping[int, int],
) -> FlowEstimate:
    """
    Per-entry-lane conditional estimator F(a, b) = N_a * m(a, b) / sum_b m(a, b).

    Lanes without a single matched pair are Unestimated (None) and get a warning.

    Raises:
        InconsistentCounts: A lane holds more matches than counted vehicles
    """
    entry_lanes = sorted(set(counts.entry_lanes) | set(entry_totals))
    exit_lanes = sorted(set(counts.exit_lanes) | set(exit_totals))

    for a in entry_lanes:
        matched = counts.entry_total(a)
        if matched > entry_totals.get(a, 0):
            raise InconsistentCounts(
                f"entry lane {a}: {matched} matched but {entry_totals.get(a, 0)} counted"
            )
    for b in exit_lanes:
        matched = counts.exit_total(b)
        if matched > exit_totals.get(b, 0):
            raise InconsistentCounts(
                f"exit lane {b}: {matched} matched but {exit_totals.get(b, 0)} counted"
            )

    flows: Dict[LanePair, Optional[float]] = {}
    warnings: List[str] = []
    for a in entry_lanes:
        sampled = counts.entry_total(a)
        counted = entry_totals.get(a, 0)
        if sampled == 0:
            warnings.append(f"entry lane {a}: no matched vehicles, flows unestimated")
            for b in exit_lanes:
                flows[(a, b)] = None
            continue
        for b in exit_lanes:
            flows[(a, b)] = counted * counts.get(a, b) / sampled

    for message in warnings:
        logger.warning(message)

    return FlowEstimate(
        flows=flows,
        entry_totals={a: entry_totals.get(a, 0) for a in entry_lanes},
        exit_totals={b: exit_totals.get(b, 0) for b in exit_lanes},
        warnings=warnings,
    )


def movement_summary(
    flows: FlowEstimate, zone: ZoneConfig
) -> Tuple[List[MovementShare], List[str]]:
    """
    Aggregate estimated flows into ramp/mainline movement types.

    Returns:
        Tuple of movement shares (empty when the zone declares no lane roles) and warnings
    """
    if not zone.entry_lane_roles or not zone.exit_lane_roles:
        return [], []

    totals = {movement: 0.0 for movement in MOVEMENTS}
    warnings = []
    for a in flows.entry_lanes:
        if not flows.is_estimated(a):
            warnings.append(f"entry lane {a} left out of movement summary (unestimated)")
            continue
        entry_role = zone.entry_lane_roles.get(a)
        if entry_role is None:
            warnings.append(f"entry lane {a} has no lane role")
            continue
        for b in flows.exit_lanes:
            exit_role = zone.exit_lane_roles.get(b)
            value = flows.flows.get((a, b))
            if exit_role is None or value is None:
                continue
            totals[(entry_role, exit_role)] += value

    grand = math.fsum(totals.values())
    shares = [
        MovementShare(
            movement=f"{src.value}->{dst.value}",
            estimated_flow=value,
            share=value / grand if grand > 0 else 0.0,
        )
        for (src, dst), value in totals.items()
    ]
    return shares, warnings


def build_report(
    flows: FlowEstimate,
    counts: LanePairCounts,
    metrics: Optional[MatchMetrics] = None,
    *,
    matches: Sequence[MatchedPair] = (),
    zone: Optional[ZoneConfig] = None,
    zone_name: Optional[str] = None,
    session: Optional[Session] = None,
    visible_sides: Optional[str] = None,
) -> WeavingReport:
    """
    Assemble the serializable weaving report.

    Sampling rate is total matched over counted entries (sum of N_a); 0 when nothing
    was counted.
    """
    total_entries = sum(flows.entry_totals.values())
    total_matched = counts.total_matched
    warnings = list(flows.warnings)

    lane_pairs = []
    for a in flows.entry_lanes:
        sampled = counts.entry_total(a)
        for b in flows.exit_lanes:
            matched = counts.get(a, b)
            lane_pairs.append(
                LanePairFlow(
                    entry_lane=a,
                    exit_lane=b,
                    matched=matched,
                    share=matched / sampled if sampled else None,
                    estimated_flow=flows.flows.get((a, b)),
                )
            )

    discrepancies = []
    for b in flows.exit_lanes:
        inflow = math.fsum(
            value for (_, lane), value in flows.flows.items() if lane == b and value is not None
        )
        counted = flows.exit_totals.get(b, 0)
        discrepancies.append(
            ExitDiscrepancy(
                exit_lane=b, counted=counted, estimated_inflow=inflow, difference=inflow - counted
            )
        )

    movements: List[MovementShare] = []
    if zone is not None:
        movements, movement_warnings = movement_summary(flows, zone)
        warnings.extend(movement_warnings)

    return WeavingReport(
        schema_version=get_settings().schema_version,
        zone_name=zone_name,
        session=session,
        visible_sides=visible_sides,
        zone=zone,
        expected_travel_time_s=expected_travel_time(zone) if zone is not None else None,
        entry_lane_totals=[LaneTotal(lane_id=a, count=n) for a, n in sorted(flows.entry_totals.items())],
        exit_lane_totals=[LaneTotal(lane_id=b, count=n) for b, n in sorted(flows.exit_totals.items())],
        lane_pairs=lane_pairs,
        total_matched=total_matched,
        total_entries=total_entries,
        sampling_rate=total_matched / total_entries if total_entries else 0.0,
        exit_discrepancies=discrepancies,
        movements=movements,
        matches=list(matches),
        warnings=warnings,
        metrics=metrics,
    )
