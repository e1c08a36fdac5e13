# src/synth.py
# Synthetic weaving scenarios with ground truth, and the brute-force matching oracle
# Same seed, same zone, same spec -> bit-identical observations
# RELEVANT FILES: schemas.py, matching/assign.py, commands/synth.py

import logging
import math
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching

from .config import get_settings
from .errors import InvalidSpec, TooLargeForEnumeration
from .matching.assign import Assignment, build_cost_matrix, extract_matches
from .model import expected_travel_time
from .schemas import (
    GroundTruth,
    LanePairCount,
    LaneTotal,
    MatchedPair,
    Observation,
    ScenarioSpec,
    VehicleClass,
    ZoneConfig,
    ZonePoint,
)

logger = logging.getLogger(__name__)

Pair = Tuple[int, int]

# Speeds are kept within these multiples of the zone's mean speed
SPEED_BOUNDS = (0.5, 1.5)
MAX_RESAMPLE_ROUNDS = 100


# Scenario generation


def _lane_distribution(
    probs: Dict[int, float], lanes: Sequence[int], name: str
) -> np.ndarray:
    """Probability vector over lanes; an empty mapping means uniform"""
    unknown = set(probs) - set(lanes)
    if unknown:
        raise InvalidSpec(f"{name} names lanes {sorted(unknown)} outside {list(lanes)}")
    if not probs:
        return np.full(len(lanes), 1.0 / len(lanes))
    return np.array([probs.get(lane, 0.0) for lane in lanes], dtype=np.float64)


def _transition_matrix(spec: ScenarioSpec, zone: ZoneConfig, entry_p: np.ndarray) -> np.ndarray:
    unknown = set(spec.transition) - set(zone.entry_lanes)
    if unknown:
        raise InvalidSpec(f"transition has rows for unknown entry lanes {sorted(unknown)}")

    rows = []
    for lane, weight in zip(zone.entry_lanes, entry_p):
        if not spec.transition:
            rows.append(_lane_distribution({}, zone.exit_lanes, "transition"))
        elif lane in spec.transition:
            rows.append(_lane_distribution(spec.transition[lane], zone.exit_lanes, f"transition[{lane}]"))
        elif weight > 0:
            raise InvalidSpec(f"entry lane {lane} can be drawn but has no transition row")
        else:
            rows.append(np.full(len(zone.exit_lanes), 1.0 / len(zone.exit_lanes)))
    return np.vstack(rows)


def _normalize(matrix: np.ndarray) -> np.ndarray:
    return matrix / np.linalg.norm(matrix, axis=-1, keepdims=True)


def _float32_exact(matrix: np.ndarray) -> np.ndarray:
    """Round to float32 so embeddings survive the binary sidecar unchanged"""
    return matrix.astype(np.float32).astype(np.float64)


def _truncated_speeds(
    rng: np.random.Generator, count: int, mean: float, std: float, low: float, high: float
) -> np.ndarray:
    speeds = np.full(count, mean, dtype=np.float64)
    if std > 0:
        speeds = rng.normal(mean, std, size=count)
        for _ in range(MAX_RESAMPLE_ROUNDS):
            outside = (speeds < low) | (speeds > high)
            if not outside.any():
                break
            speeds[outside] = rng.normal(mean, std, size=int(outside.sum()))
    return np.clip(speeds, low, high)


def _track_ids(prefix: str, count: int) -> List[str]:
    width = max(4, len(str(count)))
    return [f"{prefix}{i + 1:0{width}d}" for i in range(count)]


def generate_scenario(
    spec: ScenarioSpec, zone: ZoneConfig
) -> Tuple[List[Observation], List[Observation], GroundTruth]:
    """
    Generate entry and exit observations with known correspondences.

    Each vehicle gets one identity embedding; its two views add independent noise of
    stddev noise_std before renormalization. Clutter vehicles appear on one side only.
    Track ids are numbered in timestamp order per side (E0001..., X0001...).

    Args:
        spec: Scenario parameters, seed included
        zone: Geometry, lane sets and mean speed

    Returns:
        Tuple of (entries, exits, ground truth), each side sorted by timestamp

    Raises:
        InvalidSpec: The spec's distributions do not fit the zone's lane sets
    """
    entry_p = _lane_distribution(spec.entry_lane_probs, zone.entry_lanes, "entry_lane_probs")
    transition = _transition_matrix(spec, zone, entry_p)
    exit_marginal = entry_p @ transition

    speed_mean = spec.speed_mean_mps or zone.mean_speed_mps
    low, high = (factor * zone.mean_speed_mps for factor in SPEED_BOUNDS)
    if not (low <= speed_mean <= high):
        raise InvalidSpec(
            f"speed_mean_mps {speed_mean} outside [{low}, {high}] for zone speed {zone.mean_speed_mps}"
        )

    rng = np.random.default_rng(spec.seed)
    dim = spec.embedding_dim
    travel = expected_travel_time(zone)
    entry_lanes = np.asarray(zone.entry_lanes)
    exit_lanes = np.asarray(zone.exit_lanes)

    prototypes = {
        VehicleClass.CAR: _normalize(rng.standard_normal(dim)),
        VehicleClass.TRUCK: _normalize(rng.standard_normal(dim)),
    }

    def identities(classes: Sequence[VehicleClass]) -> np.ndarray:
        if not classes:
            return np.empty((0, dim))
        spread = rng.standard_normal((len(classes), dim)) / math.sqrt(dim)
        base = np.vstack([prototypes[c] for c in classes])
        return _normalize(base + spec.identity_scale * spread)

    def view(means: np.ndarray) -> np.ndarray:
        if means.shape[0] == 0:
            return means
        noise = rng.standard_normal(means.shape) * spec.noise_std
        return _float32_exact(_normalize(means + noise))

    def draw_classes(count: int) -> List[VehicleClass]:
        trucks = rng.random(count) < spec.truck_fraction
        return [VehicleClass.TRUCK if t else VehicleClass.CAR for t in trucks]

    # Vehicles seen at both points
    n = spec.vehicle_count
    classes = draw_classes(n)
    lane_index = rng.choice(len(entry_lanes), size=n, p=entry_p)
    exit_index = np.array(
        [rng.choice(len(exit_lanes), p=transition[a]) for a in lane_index], dtype=np.int64
    )
    speeds = _truncated_speeds(rng, n, speed_mean, spec.speed_std_mps, low, high)
    t_entry = spec.start_time_s + rng.uniform(0.0, spec.duration_s, size=n)
    t_exit = t_entry + zone.distance_m / speeds
    means = identities(classes)
    entry_views = view(means)
    exit_views = view(means)

    # Clutter: entry-only, then exit-only
    ce = spec.clutter_entry
    ce_classes = draw_classes(ce)
    ce_lanes = rng.choice(len(entry_lanes), size=ce, p=entry_p)
    ce_times = spec.start_time_s + rng.uniform(0.0, spec.duration_s, size=ce)
    ce_views = view(identities(ce_classes))

    cx = spec.clutter_exit
    cx_classes = draw_classes(cx)
    cx_lanes = rng.choice(len(exit_lanes), size=cx, p=exit_marginal / exit_marginal.sum())
    cx_times = spec.start_time_s + travel + rng.uniform(0.0, spec.duration_s, size=cx)
    cx_views = view(identities(cx_classes))

    # (timestamp, vehicle index or None, class, lane, embedding) per side
    entry_rows = [
        (float(t_entry[i]), i, classes[i], int(entry_lanes[lane_index[i]]), entry_views[i])
        for i in range(n)
    ] + [
        (float(ce_times[k]), None, ce_classes[k], int(entry_lanes[ce_lanes[k]]), ce_views[k])
        for k in range(ce)
    ]
    exit_rows = [
        (float(t_exit[i]), i, classes[i], int(exit_lanes[exit_index[i]]), exit_views[i])
        for i in range(n)
    ] + [
        (float(cx_times[k]), None, cx_classes[k], int(exit_lanes[cx_lanes[k]]), cx_views[k])
        for k in range(cx)
    ]
    entry_rows.sort(key=lambda row: row[0])
    exit_rows.sort(key=lambda row: row[0])

    def build(rows, prefix: str, camera: str, point: ZonePoint):
        observations = []
        by_vehicle = {}
        for track, (timestamp, vehicle, cls, lane, embedding) in zip(
            _track_ids(prefix, len(rows)), rows
        ):
            observations.append(
                Observation(
                    camera_id=camera,
                    zone_point=point,
                    track_id=track,
                    timestamp=timestamp,
                    lane_id=lane,
                    vehicle_class=cls,
                    embedding=tuple(float(x) for x in embedding),
                )
            )
            if vehicle is not None:
                by_vehicle[vehicle] = observations[-1]
        return observations, by_vehicle

    entries, entry_of = build(entry_rows, "E", spec.entry_camera_id, ZonePoint.ENTRY)
    exits, exit_of = build(exit_rows, "X", spec.exit_camera_id, ZonePoint.EXIT)

    flows = {(a, b): 0 for a in zone.entry_lanes for b in zone.exit_lanes}
    pairs = []
    for i in range(n):
        entry, exit_ = entry_of[i], exit_of[i]
        pairs.append((entry.track_id, exit_.track_id))
        flows[(entry.lane_id, exit_.lane_id)] += 1

    truth = GroundTruth(
        pairs=sorted(pairs),
        lane_flows=[LanePairCount(entry_lane=a, exit_lane=b, count=c) for (a, b), c in flows.items()],
        entry_lane_totals=_lane_totals(entries, zone.entry_lanes),
        exit_lane_totals=_lane_totals(exits, zone.exit_lanes),
    )
    logger.info(
        f"✓ Generated {len(entries)} entries and {len(exits)} exits "
        f"({n} vehicles, {ce}+{cx} clutter, seed {spec.seed})"
    )
    return entries, exits, truth


def _lane_totals(observations: Sequence[Observation], lanes: Sequence[int]) -> List[LaneTotal]:
    counts = {lane: 0 for lane in lanes}
    for obs in observations:
        counts[obs.lane_id] += 1
    return [LaneTotal(lane_id=lane, count=count) for lane, count in counts.items()]


# Brute-force oracle


def _max_cardinality(feasible: np.ndarray) -> int:
    """Size of a maximum bipartite matching over the feasible cells"""
    matched = maximum_bipartite_matching(csr_matrix(feasible.astype(np.int8)), perm_type="column")
    return int(np.count_nonzero(matched >= 0))


def brute_force_assignment(
    cost: np.ndarray,
    feasible: np.ndarray,
    limit: Optional[int] = None,
    tolerance: Optional[float] = None,
) -> Tuple[List[Pair], float]:
    """
    Exhaustive maximum-cardinality, minimum-cost matching over non-negative costs.

    Rows are explored in order, columns ascending before leaving a row unmatched, so
    matchings are visited in lexicographic order and the first optimum found is the
    lexicographically smallest one.

    Raises:
        TooLargeForEnumeration: Either side exceeds the enumeration limit
    """
    settings = get_settings()
    limit = settings.enumeration_limit if limit is None else limit
    tolerance = settings.tie_tolerance if tolerance is None else tolerance

    cost = np.asarray(cost, dtype=np.float64)
    feasible = np.asarray(feasible, dtype=bool)
    n, m = cost.shape
    if n > limit or m > limit:
        raise TooLargeForEnumeration(f"{n}x{m} exceeds the {limit}x{limit} enumeration limit")

    target = _max_cardinality(feasible) if n and m else 0
    if target == 0:
        return [], 0.0

    row_floor = [
        float(cost[r, feasible[r]].min()) if feasible[r].any() else math.inf for r in range(n)
    ]
    best: Dict[str, object] = {"pairs": None, "cost": math.inf}
    taken = [False] * m
    chosen: List[Pair] = []

    def lower_bound(row: int, spent: float, needed: int) -> float:
        floors = sorted(row_floor[row:])[:needed]
        return spent + sum(floors)

    def explore(row: int, spent: float) -> None:
        needed = target - len(chosen)
        if needed == 0:
            if best["pairs"] is None or spent < best["cost"] - tolerance * (1.0 + abs(best["cost"])):
                best["pairs"] = list(chosen)
                best["cost"] = spent
            return
        if n - row < needed:
            return
        if best["pairs"] is not None and lower_bound(row, spent, needed) > best["cost"] + tolerance * (
            1.0 + abs(best["cost"])
        ):
            return
        for col in range(m):
            if feasible[row, col] and not taken[col]:
                taken[col] = True
                chosen.append((row, col))
                explore(row + 1, spent + float(cost[row, col]))
                chosen.pop()
                taken[col] = False
        explore(row + 1, spent)

    explore(0, 0.0)
    pairs = best["pairs"] or []
    return pairs, math.fsum(float(cost[r, c]) for r, c in pairs)


def brute_force_match(
    entries: Sequence[Observation], exits: Sequence[Observation], zone: ZoneConfig
) -> List[MatchedPair]:
    """
    Oracle counterpart of build_cost_matrix + solve_assignment + extract_matches.

    Raises:
        TooLargeForEnumeration: More than enumeration_limit entries or exits
    """
    limit = get_settings().enumeration_limit
    if len(entries) > limit or len(exits) > limit:
        raise TooLargeForEnumeration(
            f"{len(entries)}x{len(exits)} exceeds the {limit}x{limit} enumeration limit"
        )
    m = build_cost_matrix(entries, exits, zone)
    pairs, objective = brute_force_assignment(m.cost, m.feasible, limit=limit)
    return extract_matches(Assignment(pairs=tuple(pairs), objective=objective), m, entries, exits)
