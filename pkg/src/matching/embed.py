# src/matching/embed.py
# Appearance-similarity kernel: cosine similarity, similarity matrices, threshold masks
# Dot products accumulate in numpy.longdouble with one fixed summation order
# RELEVANT FILES: assign.py, ../evalkit.py, ../schemas.py

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..errors import DimensionMismatch, ZeroNormVector
from ..schemas import EmbeddingVector

logger = logging.getLogger(__name__)

# Widest float numpy offers on this platform
ACCUMULATOR = np.longdouble


@dataclass(frozen=True)
class SimilarityMatrix:
    """
    Cosine similarities between entry (rows) and exit (cols) embeddings.

    Attributes:
        values: float64 array of shape (rows, cols), entries clipped to [-1, 1]
    """

    values: np.ndarray

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self):
        return self.values.shape


def _stack(vectors: Sequence[EmbeddingVector], dim: int) -> np.ndarray:
    """Stack vectors into an (n, dim) accumulator array, rejecting ragged input"""
    for vector in vectors:
        if len(vector) != dim:
            raise DimensionMismatch(f"expected dimension {dim}, got {len(vector)}")
    if not vectors:
        return np.empty((0, dim), dtype=ACCUMULATOR)
    return np.asarray(vectors, dtype=ACCUMULATOR).reshape(len(vectors), dim)


def _norms(matrix: np.ndarray) -> np.ndarray:
    norms = np.sqrt(np.sum(matrix * matrix, axis=1))
    if np.any(norms == 0):
        raise ZeroNormVector("embedding with zero Euclidean norm")
    return norms


def _cosine_kernel(left: np.ndarray, right: np.ndarray) -> np.ndarray:
    """Row-by-row cosine similarities; both callers share this summation order"""
    dots = left @ right.T
    scaled = dots / np.outer(_norms(left), _norms(right))
    return np.clip(scaled, -1.0, 1.0).astype(np.float64)


def _common_dimension(*groups: Sequence[EmbeddingVector]) -> int:
    for group in groups:
        if group:
            return len(group[0])
    return 0


def cosine_similarity(a: EmbeddingVector, b: EmbeddingVector) -> float:
    """
    Cosine similarity (a . b) / (|a| |b|), symmetric in its arguments.

    Raises:
        DimensionMismatch: a and b differ in length
        ZeroNormVector: either vector is all zeros
    """
    if len(a) != len(b):
        raise DimensionMismatch(f"dimensions differ: {len(a)} vs {len(b)}")
    dim = len(a)
    return float(_cosine_kernel(_stack([a], dim), _stack([b], dim))[0, 0])


def cosine_distance(a: EmbeddingVector, b: EmbeddingVector) -> float:
    """Cosine distance 1 - cosine_similarity, in [0, 2]"""
    return 1.0 - cosine_similarity(a, b)


def similarity_matrix(
    entries: Sequence[EmbeddingVector], exits: Sequence[EmbeddingVector]
) -> SimilarityMatrix:
    """
    Pairwise cosine similarities between two embedding lists.

    Args:
        entries: Row embeddings
        exits: Column embeddings

    Returns:
        SimilarityMatrix: Entry (i, j) equals cosine_similarity(entries[i], exits[j])
    """
    dim = _common_dimension(entries, exits)
    left = _stack(entries, dim)
    right = _stack(exits, dim)
    if left.shape[0] == 0 or right.shape[0] == 0:
        return SimilarityMatrix(values=np.zeros((left.shape[0], right.shape[0])))
    return SimilarityMatrix(values=_cosine_kernel(left, right))


def feasibility_from_threshold(sim: SimilarityMatrix, tau: float) -> np.ndarray:
    """Boolean mask of cells whose similarity reaches tau (inclusive)"""
    return sim.values >= tau
