# tests/test_evalkit.py
# Matching metrics, retrieval metrics, loss diagnostics and count accuracy

import math
import random

import numpy as np
import pytest

from src.errors import (
    DimensionMismatch,
    InputError,
    InvalidDistribution,
    QueryIdentityAbsentFromGallery,
    ZeroDetected,
)
from src.evalkit import (
    accuracy_row,
    cmc_map,
    count_accuracy,
    id_loss,
    lane_count_accuracy,
    match_metrics,
    pair_similarities,
    similarity_separation,
    soft_triplet_loss,
    top_k_retrieval,
)
from src.matching.embed import cosine_similarity
from src.schemas import MatchedPair, Session


def _pair(entry_track, exit_track):
    return MatchedPair(
        entry_track=entry_track,
        exit_track=exit_track,
        total_cost=0.0,
        appearance_cost=0.0,
        time_cost=0.0,
        similarity=1.0,
    )


class TestMatchMetrics:
    def test_counting(self):
        predicted = [_pair(f"E{i}", f"X{i}") for i in range(6)] + [_pair("E6", "X9"), _pair("E7", "X8")]
        truth = {(f"E{i}", f"X{i}") for i in range(10)}
        metrics = match_metrics(predicted, truth, 100)
        assert metrics.true_positives == 6
        assert metrics.false_positives == 2
        assert metrics.tpr == pytest.approx(0.08)
        assert metrics.precision == pytest.approx(0.75)

    def test_empty_prediction(self):
        metrics = match_metrics([], {("E1", "X1")}, 10)
        assert (metrics.tpr, metrics.precision) == (0.0, 0.0)

    def test_precision_is_share_of_correct_system_matches(self):
        predicted = [_pair(f"E{i}", f"X{i}") for i in range(947)] + [
            _pair(f"E{i}", f"Y{i}") for i in range(53)
        ]
        truth = {(f"E{i}", f"X{i}") for i in range(1000)}
        assert match_metrics(predicted, truth, 1000).precision == pytest.approx(0.947)

    def test_zero_detected(self):
        with pytest.raises(ZeroDetected):
            match_metrics([], set(), 0)

    def test_more_matches_than_detected(self):
        predicted = [_pair(f"E{i}", f"X{i}") for i in range(5)]
        with pytest.raises(InputError, match="exceed"):
            match_metrics(predicted, set(), 3)

    def test_every_detected_vehicle_matched(self):
        predicted = [_pair(f"E{i}", f"X{i}") for i in range(3)]
        assert match_metrics(predicted, set(), 3).tpr == 1.0

    def test_permutation_invariant(self):
        predicted = [_pair(f"E{i}", f"X{i if i % 3 else i + 1}") for i in range(12)]
        truth = {(f"E{i}", f"X{i}") for i in range(12)}
        shuffled = predicted[:]
        random.Random(4).shuffle(shuffled)
        assert match_metrics(shuffled, truth, 40) == match_metrics(predicted, truth, 40)


def _reference_cmc_map(query, gallery, max_rank):
    """Sort-and-scan re-implementation used as an oracle"""
    curves, precisions = [], []
    for q_vec, q_id in query:
        ranked = sorted(
            range(len(gallery)), key=lambda g: (-cosine_similarity(q_vec, gallery[g][0]), g)
        )
        hits = [gallery[g][1] == q_id for g in ranked]
        first = hits.index(True)
        curves.append([1.0 if k > first else 0.0 for k in range(1, max_rank + 1)])
        found, total = 0, 0.0
        for position, hit in enumerate(hits, start=1):
            if hit:
                found += 1
                total += found / position
        precisions.append(total / sum(hits))
    cmc = [sum(c[k] for c in curves) / len(curves) for k in range(max_rank)]
    return cmc, sum(precisions) / len(precisions)


class TestCmcMap:
    def test_exact_top_hit(self):
        metrics = cmc_map([((1.0, 0.0), "a")], [((1.0, 0.0), "a"), ((0.0, 1.0), "b")])
        assert metrics.rank(1) == 1.0
        assert metrics.mean_average_precision == 1.0

    def test_hit_at_rank_two(self):
        gallery = [((1.0, 0.1), "b"), ((1.0, 0.5), "a"), ((0.0, 1.0), "c")]
        metrics = cmc_map([((1.0, 0.0), "a")], gallery, max_rank=3)
        assert metrics.cmc == [0.0, 1.0, 1.0]
        assert metrics.mean_average_precision == pytest.approx(0.5)

    def test_two_queries(self):
        gallery = [((1.0, 0.0), "a"), ((0.0, 1.0), "x"), ((0.0, -1.0), "y"), ((-1.0, -0.2), "b")]
        query = [((1.0, 0.05), "a"), ((0.0, 1.0), "b")]
        metrics = cmc_map(query, gallery, max_rank=4)
        assert metrics.rank(1) == 0.5
        assert metrics.mean_average_precision == pytest.approx((1 + 1 / 3) / 2)

    def test_curve_padded_to_max_rank(self):
        metrics = cmc_map([((1.0, 0.0), "a")], [((1.0, 0.0), "a")], max_rank=10)
        assert metrics.cmc == [1.0] * 10

    def test_absent_identity(self):
        with pytest.raises(QueryIdentityAbsentFromGallery):
            cmc_map([((1.0, 0.0), "z")], [((1.0, 0.0), "a")])

    def test_empty_query(self):
        with pytest.raises(InputError):
            cmc_map([], [((1.0, 0.0), "a")])

    def test_matches_reference(self):
        rng = np.random.default_rng(21)
        for _ in range(100):
            identities = [f"id{i}" for i in range(int(rng.integers(1, 6)))]
            gallery = [
                (tuple(rng.normal(size=4)), identities[int(rng.integers(len(identities)))])
                for _ in range(int(rng.integers(1, 21)))
            ]
            present = sorted({g for _, g in gallery})
            query = [
                (tuple(rng.normal(size=4)), present[int(rng.integers(len(present)))])
                for _ in range(int(rng.integers(1, 11)))
            ]
            metrics = cmc_map(query, gallery, max_rank=20)
            cmc, mean_ap = _reference_cmc_map(query, gallery, 20)
            np.testing.assert_allclose(metrics.cmc, cmc, atol=1e-9)
            assert metrics.mean_average_precision == pytest.approx(mean_ap, abs=1e-9)
            assert all(a <= b for a, b in zip(metrics.cmc, metrics.cmc[1:]))


class TestRetrievalDiagnostics:
    def test_top_k(self):
        gallery = [((1.0, 0.1), "b"), ((1.0, 0.5), "a"), ((0.0, 1.0), "c")]
        [hits] = top_k_retrieval([((1.0, 0.0), "a")], gallery, k=2)
        assert [(h.rank, h.gallery_index, h.correct) for h in hits] == [(1, 0, False), (2, 1, True)]

    def test_pair_similarities_split(self):
        query = [((1.0, 0.0), "a")]
        gallery = [((1.0, 0.0), "a"), ((0.0, 1.0), "b")]
        positive, negative = pair_similarities(query, gallery)
        assert positive.tolist() == pytest.approx([1.0])
        assert negative.tolist() == pytest.approx([0.0])

    def test_separation(self):
        summary = similarity_separation([0.95, 0.85, 0.75], [0.1, 0.81], tau=0.8)
        assert summary.positive_min == 0.75
        assert summary.negative_max == 0.81
        assert summary.positive_above_tau == pytest.approx(2 / 3)
        assert summary.negative_above_tau == pytest.approx(0.5)

    def test_separation_empty_side(self):
        summary = similarity_separation([0.9], [], tau=0.8)
        assert summary.negative_count == 0
        assert summary.negative_mean is None


class TestIdLoss:
    def test_perfect_prediction(self):
        assert id_loss([[0.0, 1.0, 0.0]], [1]) == 0.0

    def test_uniform(self):
        assert id_loss([[0.25] * 4], [2]) == pytest.approx(math.log(4), abs=1e-9)

    def test_two_samples(self):
        loss = id_loss([[0.5, 0.5], [0.25, 0.75]], [0, 0])
        assert loss == pytest.approx(math.log(2) + math.log(4), abs=1e-9)

    def test_zero_probability_is_clamped(self):
        assert id_loss([[1.0, 0.0]], [1]) == pytest.approx(-math.log(1e-12))

    @pytest.mark.parametrize(
        "probs, labels",
        [
            ([[0.5, 0.4]], [0]),
            ([[1.2, -0.2]], [0]),
            ([[0.5, 0.5]], [2]),
            ([[0.5, 0.5]], [0, 1]),
        ],
    )
    def test_invalid(self, probs, labels):
        with pytest.raises(InvalidDistribution):
            id_loss(probs, labels)

    def test_non_negative(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            probs = rng.dirichlet(np.ones(5), size=4)
            assert id_loss(probs.tolist(), list(rng.integers(0, 5, size=4))) >= 0.0


class TestSoftTripletLoss:
    def test_zero_margin(self):
        loss = soft_triplet_loss([(0.0, 0.0)], [(1.0, 0.0)], [(0.0, 1.0)])
        assert loss == pytest.approx(math.log(2), abs=1e-9)

    def test_far_negative(self):
        loss = soft_triplet_loss([(0.0, 0.0)], [(0.0, 0.0)], [(10.0, 0.0)])
        assert loss == pytest.approx(math.log1p(math.exp(-10)), abs=1e-9)

    def test_batch_of_two(self):
        anchors = [(0.0, 0.0), (1.0, 1.0)]
        positives = [(0.5, 0.0), (1.0, 2.0)]
        negatives = [(3.0, 0.0), (0.0, -2.0)]

        def d(a, b):
            return math.dist(a, b)

        expected = []
        for i, a in enumerate(anchors):
            inner = sum(math.exp(d(a, positives[i]) - d(a, n)) for n in negatives)
            expected.append(math.log(1 + inner))
        assert soft_triplet_loss(anchors, positives, negatives) == pytest.approx(
            sum(expected) / 2, abs=1e-9
        )

    def test_decreases_when_negative_moves_away(self):
        anchors = [(0.0, 0.0), (1.0, 0.0)]
        positives = [(0.1, 0.0), (1.0, 0.2)]
        negatives = [(1.0, 1.0), (2.0, 2.0)]
        before = soft_triplet_loss(anchors, positives, negatives)
        after = soft_triplet_loss(anchors, positives, [(1.0, 1.0), (3.0, 3.0)])
        assert after < before

    def test_mismatched_batches(self):
        with pytest.raises(DimensionMismatch):
            soft_triplet_loss([(0.0, 0.0)], [(0.0, 0.0), (1.0, 1.0)], [(1.0, 0.0)])
        with pytest.raises(DimensionMismatch):
            soft_triplet_loss([(0.0, 0.0)], [(0.0, 0.0, 1.0)], [(1.0, 0.0)])


class TestCountAccuracy:
    def test_exact(self):
        assert count_accuracy(120, 120) == 100.0

    def test_over_and_under_count(self):
        assert count_accuracy(95, 100) == pytest.approx(95.0)
        assert count_accuracy(105, 100) == pytest.approx(95.0)

    def test_floored_at_zero(self):
        assert count_accuracy(350, 100) == 0.0

    def test_undefined_without_true_count(self):
        assert count_accuracy(3, 0) is None

    def test_per_lane(self):
        per_lane, overall = lane_count_accuracy({1: 9, 2: 20}, {1: 10, 2: 20, 3: 5})
        assert per_lane == {1: pytest.approx(90.0), 2: 100.0, 3: 0.0}
        assert overall == pytest.approx(100 * (1 - 6 / 35))

    def test_accuracy_row_rounds_percentages(self):
        metrics = match_metrics([_pair("E1", "X1"), _pair("E2", "X3"), _pair("E3", "X3")], {("E1", "X1")}, 7)
        row = accuracy_row(metrics, 97.123456, zone_name="weaving-1", session=Session.NOON, visible_sides="RS-RS")
        assert row.tpr == 42.86
        assert row.precision == 33.33
        assert row.count_accuracy == 97.12
        assert row.session == "noon"
