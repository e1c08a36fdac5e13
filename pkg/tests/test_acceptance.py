# tests/test_acceptance.py
# Whole-pipeline scenarios: recovery, noisy precision and flow conservation

import math

import numpy as np
import pytest

from src.evalkit import match_metrics
from src.matching.assign import match_zone
from src.matching.embed import cosine_similarity
from src.model import validate_dataset
from src.schemas import MatchedPair, ScenarioSpec, ZoneConfig
from src.synth import generate_scenario
from src.weave import estimate_flows, lane_pair_counts

VEHICLES = 200
DIM = 128
SEEDS = range(10)


def _noisy_spec(seed: int) -> ScenarioSpec:
    # Two views with per-dimension noise s of a unit mean have expected cosine ~ 1 / (1 + D s^2)
    return ScenarioSpec(
        vehicle_count=VEHICLES,
        embedding_dim=DIM,
        noise_std=math.sqrt(0.111 / DIM),
        speed_std_mps=2.5,
        clutter_entry=VEHICLES // 5,
        clutter_exit=VEHICLES // 5,
        seed=seed,
    )


def _pipeline(entries, exits, zone):
    matches = match_zone(entries, exits, zone)
    counts = lane_pair_counts(matches, entries, exits)
    flows = estimate_flows(
        counts,
        validate_dataset(entries, zone).entry_lane_counts,
        validate_dataset(exits, zone).exit_lane_counts,
    )
    return matches, counts, flows


def test_perfect_recovery(zone):
    entries, exits, truth = generate_scenario(ScenarioSpec(vehicle_count=VEHICLES, embedding_dim=DIM, seed=1), zone)
    matches, _, flows = _pipeline(entries, exits, zone)
    metrics = match_metrics(matches, truth.pair_set(), VEHICLES)
    assert metrics.tpr == 1.0
    assert metrics.precision == 1.0
    assert flows.flows == {key: float(count) for key, count in truth.flow_map().items()}


@pytest.mark.slow
def test_noisy_scenarios(zone):
    time_aware, appearance_only = [], []
    no_time = zone.model_copy(update={"w2": 0.0})
    for seed in SEEDS:
        entries, exits, truth = generate_scenario(_noisy_spec(seed), zone)

        by_entry = {o.track_id: o for o in entries}
        by_exit = {o.track_id: o for o in exits}
        similarity = np.mean(
            [cosine_similarity(by_entry[e].embedding, by_exit[x].embedding) for e, x in truth.pairs]
        )
        assert similarity == pytest.approx(0.9, abs=0.02)

        matches, _, flows = _pipeline(entries, exits, zone)
        time_aware.append(match_metrics(matches, truth.pair_set(), len(entries)).precision)
        baseline = match_zone(entries, exits, no_time)
        appearance_only.append(match_metrics(baseline, truth.pair_set(), len(entries)).precision)

        for lane, n in flows.entry_totals.items():
            if flows.is_estimated(lane):
                row = math.fsum(v for (a, _), v in flows.flows.items() if a == lane)
                assert row == pytest.approx(n, rel=1e-9)

    assert np.mean(time_aware) >= 0.9
    assert np.mean(time_aware) >= np.mean(appearance_only)


@pytest.mark.slow
def test_precision_falls_as_view_noise_grows(zone):
    # Open gate and no time term, so only appearance separates the candidates in a window
    appearance_only = zone.model_copy(update={"w2": 0.0, "tau": -1.0})
    dim = 32
    by_noise = []
    for d_sigma_sq in (0.0, 1.0, 4.0, 16.0):
        precisions = []
        for seed in range(6):
            spec = ScenarioSpec(
                vehicle_count=100,
                embedding_dim=dim,
                noise_std=math.sqrt(d_sigma_sq / dim),
                duration_s=120.0,
                seed=seed,
            )
            entries, exits, truth = generate_scenario(spec, zone)
            matches = match_zone(entries, exits, appearance_only)
            precisions.append(match_metrics(matches, truth.pair_set(), len(entries)).precision)
        by_noise.append(float(np.mean(precisions)))

    assert by_noise[0] == 1.0
    assert all(later <= earlier for earlier, later in zip(by_noise, by_noise[1:]))
    assert by_noise[-1] < 0.5


def test_true_flows_reproduce_exactly():
    zone = ZoneConfig(distance_m=800, mean_speed_mps=20, entry_lanes=[1, 2], exit_lanes=[1, 2, 3])
    spec = ScenarioSpec(
        vehicle_count=120,
        embedding_dim=32,
        entry_lane_probs={1: 0.3, 2: 0.7},
        transition={1: {1: 0.5, 2: 0.5}, 2: {2: 0.2, 3: 0.8}},
        seed=12,
    )
    entries, exits, truth = generate_scenario(spec, zone)
    counts = lane_pair_counts(
        [_truth_pair(e, x) for e, x in truth.pairs], entries, exits
    )
    totals = {t.lane_id: t.count for t in truth.entry_lane_totals}
    exit_totals = {t.lane_id: t.count for t in truth.exit_lane_totals}
    flows = estimate_flows(counts, totals, exit_totals)
    assert flows.flows == {key: float(count) for key, count in truth.flow_map().items()}


def _truth_pair(entry_track, exit_track):
    return MatchedPair(
        entry_track=entry_track,
        exit_track=exit_track,
        total_cost=0.0,
        appearance_cost=0.0,
        time_cost=0.0,
        similarity=1.0,
    )
