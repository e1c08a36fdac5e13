# src/matching/__init__.py
# Export the appearance kernel, solver and zone matching for easy import
# RELEVANT FILES: embed.py, solver.py, assign.py

from .assign import (
    Assignment,
    CostMatrix,
    build_cost_matrix,
    extract_matches,
    match_zone,
    solve_assignment,
)
from .embed import (
    SimilarityMatrix,
    cosine_distance,
    cosine_similarity,
    feasibility_from_threshold,
    similarity_matrix,
)
from .solver import solve_masked

__all__ = [
    "Assignment",
    "CostMatrix",
    "SimilarityMatrix",
    "build_cost_matrix",
    "cosine_distance",
    "cosine_similarity",
    "extract_matches",
    "feasibility_from_threshold",
    "match_zone",
    "similarity_matrix",
    "solve_assignment",
    "solve_masked",
]
