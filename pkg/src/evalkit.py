# src/evalkit.py
# Metrics for matching quality, embedding retrieval quality and loss diagnostics
# Losses are scalar evaluations over embedding batches; nothing here trains
# RELEVANT FILES: matching/embed.py, schemas.py, commands/evaluate.py, commands/reid.py

import logging
import math
from typing import Dict, List, Mapping, Optional, Sequence, Set, Tuple

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import logsumexp

from .config import get_settings
from .errors import (
    DimensionMismatch,
    InputError,
    InvalidDistribution,
    QueryIdentityAbsentFromGallery,
    ZeroDetected,
)
from .matching.embed import similarity_matrix
from .schemas import (
    AccuracyRow,
    EmbeddingVector,
    MatchedPair,
    MatchMetrics,
    ReidMetrics,
    RetrievalHit,
    Session,
    SimilaritySeparation,
)

logger = logging.getLogger(__name__)

# (embedding, identity label) as read from a query or gallery file
LabelledEmbedding = Tuple[EmbeddingVector, str]

# Probabilities are clamped before the log
PROBABILITY_FLOOR = 1e-12
ROW_SUM_TOLERANCE = 1e-6


def match_metrics(
    predicted: Sequence[MatchedPair],
    ground_truth: Set[Tuple[str, str]],
    total_detected: int,
) -> MatchMetrics:
    """
    TPR and precision of a set of system matches.

    TPR is system matches over all detected vehicles (a coverage rate, not recall);
    precision is correct matches over system matches.

    Raises:
        ZeroDetected: total_detected is not positive
        InputError: More system matches than detected vehicles
    """
    if total_detected <= 0:
        raise ZeroDetected(f"total_detected must be positive, got {total_detected}")

    system = len(predicted)
    if system > total_detected:
        raise InputError(f"{system} system matches exceed total_detected {total_detected}")
    correct = sum(1 for pair in predicted if pair.track_pair in ground_truth)
    return MatchMetrics(
        true_positives=correct,
        false_positives=system - correct,
        system_matches=system,
        total_detected=total_detected,
        tpr=system / total_detected,
        precision=correct / system if system else 0.0,
    )


def _ranked_correctness(
    query: Sequence[LabelledEmbedding], gallery: Sequence[LabelledEmbedding]
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Similarities, gallery order per query (descending similarity, ties by index) and its hit mask"""
    if not query:
        raise InputError("query set is empty")
    gallery_ids = {identity for _, identity in gallery}
    for _, identity in query:
        if identity not in gallery_ids:
            raise QueryIdentityAbsentFromGallery(f"identity {identity!r} has no gallery instance")

    sim = similarity_matrix([v for v, _ in query], [v for v, _ in gallery]).values
    order = np.argsort(-sim, axis=1, kind="stable")
    labels = np.array([identity for _, identity in gallery], dtype=object)
    wanted = np.array([identity for _, identity in query], dtype=object).reshape(-1, 1)
    matches = np.asarray(labels[order] == wanted, dtype=bool)
    return sim, order, matches


def cmc_map(
    query: Sequence[LabelledEmbedding],
    gallery: Sequence[LabelledEmbedding],
    max_rank: int = 10,
) -> ReidMetrics:
    """
    CMC curve and mean average precision of a query set against a gallery.

    Args:
        query: Probe embeddings with identity labels
        gallery: Reference embeddings with identity labels
        max_rank: Length of the returned CMC curve

    Returns:
        ReidMetrics: cmc[k - 1] is the fraction of queries with a hit in the top k

    Raises:
        QueryIdentityAbsentFromGallery: A query identity never occurs in the gallery
        InputError: The query set is empty
    """
    _, _, matches = _ranked_correctness(query, gallery)

    all_cmc = []
    all_ap = []
    for hits in matches:
        cmc = hits.cumsum()
        cmc[cmc > 1] = 1
        if len(cmc) < max_rank:
            cmc = np.concatenate([cmc, np.full(max_rank - len(cmc), cmc[-1])])
        all_cmc.append(cmc[:max_rank])

        # Average precision over every correct gallery instance
        relevant = hits.sum()
        precision_at = hits.cumsum() / np.arange(1, len(hits) + 1)
        all_ap.append(float((precision_at * hits).sum() / relevant))

    curve = np.asarray(all_cmc, dtype=np.float64).sum(axis=0) / len(all_cmc)
    return ReidMetrics(
        mean_average_precision=float(np.mean(all_ap)),
        cmc=[float(value) for value in curve],
        query_count=len(all_cmc),
    )


def top_k_retrieval(
    query: Sequence[LabelledEmbedding],
    gallery: Sequence[LabelledEmbedding],
    k: int = 10,
) -> List[List[RetrievalHit]]:
    """The k most similar gallery items for each query, best first"""
    sim, order, matches = _ranked_correctness(query, gallery)

    listing = []
    for q, row in enumerate(order):
        listing.append(
            [
                RetrievalHit(
                    rank=rank + 1,
                    gallery_index=int(g),
                    identity=gallery[int(g)][1],
                    similarity=float(sim[q, g]),
                    correct=bool(matches[q, rank]),
                )
                for rank, g in enumerate(row[:k])
            ]
        )
    return listing


def pair_similarities(
    query: Sequence[LabelledEmbedding], gallery: Sequence[LabelledEmbedding]
) -> Tuple[np.ndarray, np.ndarray]:
    """Cosine similarities of same-identity and different-identity query x gallery pairs"""
    sim = similarity_matrix([v for v, _ in query], [v for v, _ in gallery]).values
    same = np.array(
        [[q_id == g_id for _, g_id in gallery] for _, q_id in query], dtype=bool
    ).reshape(sim.shape)
    return sim[same], sim[~same]


def similarity_separation(
    positive: Sequence[float], negative: Sequence[float], tau: float
) -> SimilaritySeparation:
    """
    Summarize how well tau separates same-vehicle (positive) from other (negative)
    similarities. Statistics of an empty side are None.
    """
    pos = np.asarray(positive, dtype=np.float64)
    neg = np.asarray(negative, dtype=np.float64)

    def stats(values: np.ndarray):
        if values.size == 0:
            return None, None, None, None, None
        return (
            float(values.mean()),
            float(values.std()),
            float(values.min()),
            float(values.max()),
            float(np.mean(values >= tau)),
        )

    p_mean, p_std, p_min, _, p_above = stats(pos)
    n_mean, n_std, _, n_max, n_above = stats(neg)
    return SimilaritySeparation(
        tau=tau,
        positive_count=int(pos.size),
        negative_count=int(neg.size),
        positive_mean=p_mean,
        positive_std=p_std,
        positive_min=p_min,
        negative_mean=n_mean,
        negative_std=n_std,
        negative_max=n_max,
        positive_above_tau=p_above,
        negative_above_tau=n_above,
    )


def id_loss(predicted_probabilities: Sequence[Sequence[float]], true_labels: Sequence[int]) -> float:
    """
    Cross-entropy identity loss -sum_i log p[i, y_i] with one-hot targets.

    Raises:
        InvalidDistribution: A row is not a distribution or a label is out of range
    """
    if len(predicted_probabilities) != len(true_labels):
        raise InvalidDistribution(
            f"{len(predicted_probabilities)} probability rows for {len(true_labels)} labels"
        )
    if not true_labels:
        return 0.0

    widths = {len(row) for row in predicted_probabilities}
    if len(widths) != 1:
        raise InvalidDistribution("probability rows differ in class count")
    probs = np.asarray(predicted_probabilities, dtype=np.float64)
    labels = np.asarray(true_labels, dtype=np.int64)

    if not np.all(np.isfinite(probs)) or np.any(probs < 0) or np.any(probs > 1):
        raise InvalidDistribution("probabilities must be finite and lie in [0, 1]")
    bad_rows = np.nonzero(np.abs(probs.sum(axis=1) - 1.0) > ROW_SUM_TOLERANCE)[0]
    if bad_rows.size:
        raise InvalidDistribution(f"row {int(bad_rows[0])} does not sum to 1")
    if np.any(labels < 0) or np.any(labels >= probs.shape[1]):
        raise InvalidDistribution(f"labels must lie in [0, {probs.shape[1]})")

    picked = np.maximum(probs[np.arange(len(labels)), labels], PROBABILITY_FLOOR)
    return float(-math.fsum(np.log(picked)))


def _as_batch(vectors: Sequence[EmbeddingVector], name: str, dim: Optional[int]) -> np.ndarray:
    for vector in vectors:
        if dim is not None and len(vector) != dim:
            raise DimensionMismatch(f"{name}: expected dimension {dim}, got {len(vector)}")
    return np.asarray(vectors, dtype=np.float64).reshape(len(vectors), -1)


def soft_triplet_loss(
    anchors: Sequence[EmbeddingVector],
    positives: Sequence[EmbeddingVector],
    negatives: Sequence[EmbeddingVector],
) -> float:
    """
    Soft-margin triplet loss (1/N) sum_i log(1 + sum_j exp(d(a_i, p_i) - d(a_i, n_j)))
    with Euclidean d.

    Raises:
        DimensionMismatch: Batch sizes or embedding dimensions differ
    """
    n = len(anchors)
    if len(positives) != n or len(negatives) != n:
        raise DimensionMismatch(
            f"batch sizes differ: {n} anchors, {len(positives)} positives, {len(negatives)} negatives"
        )
    if n == 0:
        return 0.0

    dim = len(anchors[0])
    a = _as_batch(anchors, "anchors", dim)
    p = _as_batch(positives, "positives", dim)
    neg = _as_batch(negatives, "negatives", dim)

    d_pos = np.sqrt(np.sum((a - p) ** 2, axis=1))
    d_neg = cdist(a, neg, metric="euclidean")
    margins = d_pos[:, None] - d_neg
    # log(1 + sum exp(x)) == logsumexp over [0, x...]
    padded = np.hstack([np.zeros((n, 1)), margins])
    return float(np.mean(logsumexp(padded, axis=1)))


def count_accuracy(detected: int, true: int) -> Optional[float]:
    """Vehicle count accuracy in percent, 100 * (1 - |detected - true| / true), floored at 0"""
    if true <= 0:
        return None
    return max(0.0, 100.0 * (1.0 - abs(detected - true) / true))


def lane_count_accuracy(
    detected: Mapping[int, int], true: Mapping[int, int]
) -> Tuple[Dict[int, Optional[float]], Optional[float]]:
    """Per-lane and overall count accuracy over the lanes of the true counts"""
    per_lane = {lane: count_accuracy(detected.get(lane, 0), n) for lane, n in sorted(true.items())}
    overall = count_accuracy(sum(detected.values()), sum(true.values()))
    return per_lane, overall


def accuracy_row(
    metrics: MatchMetrics,
    count_acc: Optional[float] = None,
    *,
    zone_name: Optional[str] = None,
    session: Optional[Session] = None,
    visible_sides: Optional[str] = None,
) -> AccuracyRow:
    """One accuracy-table row with percentages rounded for display"""
    decimals = get_settings().percent_decimals
    return AccuracyRow(
        zone_name=zone_name,
        session=session,
        visible_sides=visible_sides,
        count_accuracy=round(count_acc, decimals) if count_acc is not None else None,
        tpr=round(100.0 * metrics.tpr, decimals),
        precision=round(100.0 * metrics.precision, decimals),
    )
