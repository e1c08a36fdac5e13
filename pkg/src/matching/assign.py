# src/matching/assign.py
# Spatio-temporal cost matrix, constrained assignment and windowed zone matching
# Feasibility: same class, exit after entry, similarity >= tau, exit inside T_a +/- delta
# RELEVANT FILES: embed.py, solver.py, ../model.py, ../weave.py

import bisect
import logging
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from ..config import get_settings
from ..errors import IndexOutOfRange
from ..model import expected_travel_time
from ..schemas import MatchedPair, Observation, TimeTerm, VehicleClass, ZoneConfig
from .embed import feasibility_from_threshold, similarity_matrix
from .solver import solve_masked

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CostMatrix:
    """
    Pairing costs between entry rows and exit columns.

    Attributes:
        cost: w1 * appearance + w2 * time on feasible cells, 0 elsewhere (ignored)
        feasible: Boolean mask; False cells are absent edges for the solver
        appearance: Cosine distance per cell
        time_cost: Travel-time term per cell (seconds)
        similarity: Cosine similarity per cell
        w1: Appearance weight used to build the matrix
        w2: Time weight used to build the matrix
    """

    cost: np.ndarray
    feasible: np.ndarray
    appearance: np.ndarray
    time_cost: np.ndarray
    similarity: np.ndarray
    w1: float
    w2: float

    @property
    def rows(self) -> int:
        return self.cost.shape[0]

    @property
    def cols(self) -> int:
        return self.cost.shape[1]


@dataclass(frozen=True)
class Assignment:
    """Partial matching: each row and column at most once, every pair feasible"""

    pairs: Tuple[Tuple[int, int], ...]
    objective: float

    @property
    def cardinality(self) -> int:
        return len(self.pairs)


def _class_label(obs: Observation) -> str:
    if isinstance(obs.vehicle_class, VehicleClass):
        return obs.vehicle_class.value
    return str(obs.vehicle_class)


def build_cost_matrix(
    entries: Sequence[Observation], exits: Sequence[Observation], zone: ZoneConfig
) -> CostMatrix:
    """
    Build the constrained pairing cost matrix for one set of entries and exits.

    Args:
        entries: P1 observations (rows)
        exits: P2 observations (columns)
        zone: Weights, threshold, travel-time prior and window

    Returns:
        CostMatrix: Costs with an explicit feasibility mask
    """
    sim = similarity_matrix([e.embedding for e in entries], [x.embedding for x in exits])
    shape = sim.shape

    t_entry = np.array([e.timestamp for e in entries], dtype=np.float64).reshape(-1, 1)
    t_exit = np.array([x.timestamp for x in exits], dtype=np.float64).reshape(1, -1)
    class_entry = np.array([_class_label(e) for e in entries], dtype=object).reshape(-1, 1)
    class_exit = np.array([_class_label(x) for x in exits], dtype=object).reshape(1, -1)

    travel = expected_travel_time(zone)
    delta = zone.time_window_delta

    same_class = np.broadcast_to(np.asarray(class_entry == class_exit, dtype=bool), shape)
    in_order = (t_entry - t_exit) < 0
    similar = feasibility_from_threshold(sim, zone.tau)
    in_window = (t_exit >= t_entry + travel - delta) & (t_exit <= t_entry + travel + delta)
    feasible = np.asarray(same_class & in_order & similar & in_window, dtype=bool).reshape(shape)

    appearance = 1.0 - sim.values
    if zone.time_term == TimeTerm.LITERAL:
        time_cost = np.abs(t_entry - t_exit - travel)
    else:
        time_cost = np.abs((t_exit - t_entry) - travel)
    time_cost = np.broadcast_to(time_cost, shape).astype(np.float64)

    cost = np.where(feasible, zone.w1 * appearance + zone.w2 * time_cost, 0.0)

    logger.debug(
        f"Cost matrix {shape[0]}x{shape[1]}: {int(feasible.sum())} feasible cells"
    )
    return CostMatrix(
        cost=cost,
        feasible=feasible,
        appearance=appearance,
        time_cost=time_cost,
        similarity=sim.values,
        w1=zone.w1,
        w2=zone.w2,
    )


def solve_assignment(m: CostMatrix) -> Assignment:
    """
    Maximum-cardinality, minimum-cost matching over the feasible cells of m.
    Ties between equal-cost optima go to the lexicographically smallest pair list.
    """
    pairs, objective = solve_masked(
        m.cost, m.feasible, tolerance=get_settings().tie_tolerance
    )
    return Assignment(pairs=tuple(pairs), objective=objective)


def extract_matches(
    a: Assignment,
    m: CostMatrix,
    entries: Sequence[Observation],
    exits: Sequence[Observation],
) -> List[MatchedPair]:
    """
    Turn assignment indices into MatchedPair records.

    Returns:
        list: Pairs sorted by entry timestamp, then entry track id

    Raises:
        IndexOutOfRange: Assignment, matrix and observation lists disagree in shape
    """
    if m.rows != len(entries) or m.cols != len(exits):
        raise IndexOutOfRange(
            f"matrix is {m.rows}x{m.cols} but {len(entries)} entries and {len(exits)} exits were given"
        )

    matches = []
    for row, col in a.pairs:
        if not (0 <= row < m.rows and 0 <= col < m.cols):
            raise IndexOutOfRange(f"pair ({row}, {col}) outside a {m.rows}x{m.cols} matrix")
        entry, exit_ = entries[row], exits[col]
        matches.append(
            MatchedPair(
                entry_track=entry.track_id,
                exit_track=exit_.track_id,
                entry_camera_id=entry.camera_id,
                exit_camera_id=exit_.camera_id,
                total_cost=float(m.cost[row, col]),
                appearance_cost=float(m.appearance[row, col]),
                time_cost=float(m.time_cost[row, col]),
                similarity=float(m.similarity[row, col]),
            )
        )

    timestamps = {(e.camera_id, e.track_id): e.timestamp for e in entries}
    matches.sort(
        key=lambda p: (timestamps[(p.entry_camera_id, p.entry_track)], p.entry_track)
    )
    return matches


def match_zone(
    entries: Sequence[Observation], exits: Sequence[Observation], zone: ZoneConfig
) -> List[MatchedPair]:
    """
    Match a whole recording by sliding entry windows of width 2 * delta, step delta.

    Each window's entries are matched against exits timed inside the window shifted by
    T_a and widened by delta on both sides. Tracks matched in one window are removed
    from later windows, which are processed in ascending order.

    Returns:
        list: Union of all window matches, sorted by entry timestamp then track id
    """
    ordered_entries = sorted(entries, key=lambda o: o.sort_key)
    ordered_exits = sorted(exits, key=lambda o: o.sort_key)
    if not ordered_entries or not ordered_exits:
        logger.info("Nothing to match: one side of the zone is empty")
        return []

    travel = expected_travel_time(zone)
    delta = zone.time_window_delta
    entry_times = [o.timestamp for o in ordered_entries]
    exit_times = [o.timestamp for o in ordered_exits]

    matched_entries = set()
    matched_exits = set()
    results: List[MatchedPair] = []
    first, last = entry_times[0], entry_times[-1]

    window = 0
    solved = 0
    while first + window * delta <= last:
        start = first + window * delta
        end = start + 2 * delta
        window += 1

        lo, hi = bisect.bisect_left(entry_times, start), bisect.bisect_left(entry_times, end)
        rows = [o for o in ordered_entries[lo:hi] if o.key not in matched_entries]
        lo, hi = (
            bisect.bisect_left(exit_times, start + travel - delta),
            bisect.bisect_right(exit_times, end + travel + delta),
        )
        cols = [o for o in ordered_exits[lo:hi] if o.key not in matched_exits]
        if not rows or not cols:
            continue

        m = build_cost_matrix(rows, cols, zone)
        pairs = extract_matches(solve_assignment(m), m, rows, cols)
        solved += 1
        by_track = {(o.camera_id, o.track_id): o for o in rows}
        exit_by_track = {(o.camera_id, o.track_id): o for o in cols}
        for pair in pairs:
            matched_entries.add(by_track[(pair.entry_camera_id, pair.entry_track)].key)
            matched_exits.add(exit_by_track[(pair.exit_camera_id, pair.exit_track)].key)
        results.extend(pairs)

    entry_time = {(o.camera_id, o.track_id): o.timestamp for o in ordered_entries}
    results.sort(key=lambda p: (entry_time[(p.entry_camera_id, p.entry_track)], p.entry_track))
    logger.info(
        f"✓ Matched {len(results)} pairs from {len(ordered_entries)} entries and "
        f"{len(ordered_exits)} exits in {solved} window(s)"
    )
    return results
