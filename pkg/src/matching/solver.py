# src/matching/solver.py
# Kuhn-Munkres solver for rectangular cost matrices with infeasible (absent) cells
# Maximises cardinality first, then minimises cost; ties resolve to the
# lexicographically smallest (row, col) pair list
# RELEVANT FILES: assign.py, ../synth.py

import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

logger = logging.getLogger(__name__)

Pair = Tuple[int, int]


@dataclass(frozen=True)
class _Solution:
    """Raw solver output on one (sub)matrix, indices local to that matrix"""

    pairs: List[Pair]
    objective: float
    tight: np.ndarray  # feasible cells with zero reduced cost under the final duals


def _lex_less(a1: np.ndarray, a2: np.ndarray, b1: np.ndarray, b2: np.ndarray) -> np.ndarray:
    return (a1 < b1) | ((a1 == b1) & (a2 < b2))


def _objective(cost: np.ndarray, pairs: Sequence[Pair]) -> float:
    return math.fsum(float(cost[r, c]) for r, c in pairs)


def _solve_padded(cost: np.ndarray, feasible: np.ndarray) -> _Solution:
    """
    Shortest-augmenting-path Hungarian method on the (n + m) square padding.

    Real cells cost the pair (-1, c): the integer part counts matched pairs, the
    float part carries the cost, and both are compared lexicographically. Row i may
    stay unmatched through its own dummy column, column j through its own dummy row,
    and dummy rows pair freely with dummy columns. Infeasible cells are absent edges.
    """
    n, m = cost.shape
    if n == 0 or m == 0:
        return _Solution(pairs=[], objective=0.0, tight=np.zeros((n, m), dtype=bool))

    size = n + m
    allowed = np.zeros((size, size), dtype=bool)
    primary = np.zeros((size, size), dtype=np.int64)
    secondary = np.zeros((size, size), dtype=np.float64)

    allowed[:n, :m] = feasible
    primary[:n, :m] = -1
    secondary[:n, :m] = np.where(feasible, cost, 0.0)
    allowed[np.arange(n), m + np.arange(n)] = True
    allowed[n + np.arange(m), np.arange(m)] = True
    allowed[n:, m:] = True

    # Rows are 1-based, column 0 is the virtual root of each alternating tree
    u1 = np.zeros(size + 1, dtype=np.int64)
    u2 = np.zeros(size + 1, dtype=np.float64)
    v1 = np.zeros(size + 1, dtype=np.int64)
    v2 = np.zeros(size + 1, dtype=np.float64)
    owner = np.zeros(size + 1, dtype=np.int64)  # owner[j]: row matched to column j
    way = np.zeros(size + 1, dtype=np.int64)
    columns = np.arange(1, size + 1)

    for row in range(1, size + 1):
        owner[0] = row
        j0 = 0
        min1 = np.zeros(size + 1, dtype=np.int64)
        min2 = np.zeros(size + 1, dtype=np.float64)
        reached = np.zeros(size + 1, dtype=bool)
        used = np.zeros(size + 1, dtype=bool)

        while True:
            used[j0] = True
            i0 = owner[j0]
            open_cols = ~used[1:] & allowed[i0 - 1]
            cur1 = primary[i0 - 1] - u1[i0] - v1[1:]
            cur2 = secondary[i0 - 1] - u2[i0] - v2[1:]
            better = open_cols & (
                ~reached[1:] | _lex_less(cur1, cur2, min1[1:], min2[1:])
            )
            improved = columns[better]
            min1[improved] = cur1[better]
            min2[improved] = cur2[better]
            way[improved] = j0
            reached[improved] = True

            frontier = columns[reached[1:] & ~used[1:]]
            f1 = min1[frontier]
            best1 = f1.min()
            level = frontier[f1 == best1]
            j1 = int(level[np.argmin(min2[level])])
            delta1 = min1[j1]
            delta2 = min2[j1]

            tree = np.nonzero(used)[0]
            u1[owner[tree]] += delta1
            u2[owner[tree]] += delta2
            v1[tree] -= delta1
            v2[tree] -= delta2
            pending = reached & ~used
            min1[pending] -= delta1
            min2[pending] -= delta2

            j0 = j1
            if owner[j0] == 0:
                break

        while j0:
            j1 = way[j0]
            owner[j0] = owner[j1]
            j0 = j1

    pairs = sorted(
        (int(owner[col]) - 1, col - 1)
        for col in range(1, m + 1)
        if 0 < owner[col] <= n
    )

    reduced1 = primary[:n, :m] - u1[1 : n + 1, None] - v1[None, 1 : m + 1]
    reduced2 = secondary[:n, :m] - u2[1 : n + 1, None] - v2[None, 1 : m + 1]
    scale = 1.0 + float(np.abs(secondary[:n, :m]).sum())
    tight = feasible & (reduced1 == 0) & (np.abs(reduced2) <= 1e-7 * scale)

    return _Solution(pairs=pairs, objective=_objective(cost, pairs), tight=tight)


def solve_masked(
    cost: np.ndarray, feasible: np.ndarray, tolerance: float = 1e-9
) -> Tuple[List[Pair], float]:
    """
    Maximum-cardinality, minimum-cost matching over the feasible cells.

    Among optimal matchings the lexicographically smallest sorted pair list wins.
    Only cells that are tight under the optimal duals can belong to any optimal
    matching, so alternatives are re-solved only for those.

    Args:
        cost: (rows, cols) costs; values in infeasible cells are ignored
        feasible: Boolean mask of the same shape
        tolerance: Relative tolerance for treating two objectives as equal

    Returns:
        Tuple of the sorted pair list and its total cost
    """
    cost = np.asarray(cost, dtype=np.float64)
    feasible = np.asarray(feasible, dtype=bool)
    n, m = cost.shape
    base = _solve_padded(cost, feasible)
    if not base.pairs:
        return [], 0.0

    target_size = len(base.pairs)
    target_cost = base.objective
    slack = tolerance * (1.0 + abs(target_cost))

    current: Dict[int, int] = dict(base.pairs)
    fixed: List[Pair] = []
    fixed_cost = 0.0
    taken = np.zeros(m, dtype=bool)

    for row in range(n):
        assigned: Optional[int] = current.get(row)
        limit = assigned if assigned is not None else m
        candidates = [
            col for col in range(limit) if base.tight[row, col] and not taken[col]
        ]

        accepted = None
        for col in candidates:
            rest_rows = np.arange(row + 1, n)
            rest_cols = np.array([c for c in range(m) if not taken[c] and c != col], dtype=np.int64)
            sub = _solve_padded(
                cost[np.ix_(rest_rows, rest_cols)], feasible[np.ix_(rest_rows, rest_cols)]
            )
            size = len(fixed) + 1 + len(sub.pairs)
            total = fixed_cost + float(cost[row, col]) + sub.objective
            if size == target_size and total <= target_cost + slack:
                accepted = col
                current = {
                    int(rest_rows[r]): int(rest_cols[c]) for r, c in sub.pairs
                }
                break

        chosen = accepted if accepted is not None else assigned
        if chosen is not None:
            fixed.append((row, chosen))
            fixed_cost += float(cost[row, chosen])
            taken[chosen] = True

    if len(fixed) != target_size:
        # Tie resolution must preserve cardinality; fall back to the base optimum
        logger.warning("Tie resolution changed cardinality, keeping base solution")
        return base.pairs, base.objective
    return fixed, _objective(cost, fixed)
