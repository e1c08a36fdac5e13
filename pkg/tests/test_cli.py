# tests/test_cli.py
# End-to-end runs of the weave subcommands through main()

import json

import pytest

from src.main import main
from src.schemas import GroundTruth, MatchedPair, ScenarioSpec, WeavingReport, ZoneConfig
from src.storage import read_observations, write_json, write_observations
from src.synth import generate_scenario

from .factories import entry, exit_

ZONE = ["--distance-m", "500", "--speed-mps", "25", "--entry-lanes", "1,2,3", "--exit-lanes", "1,2,3"]


def _pair(entry_track, exit_track):
    return MatchedPair(
        entry_track=entry_track,
        exit_track=exit_track,
        total_cost=0.0,
        appearance_cost=0.0,
        time_cost=0.0,
        similarity=1.0,
    )


def _synth(out_dir, *extra):
    return main(["synth", *ZONE, "--out-dir", str(out_dir), *extra])


def _match(data_dir, report, *extra):
    return main(
        [
            "match",
            *ZONE,
            "--entries", str(data_dir / "entries.jsonl"),
            "--exits", str(data_dir / "exits.jsonl"),
            "--output", str(report),
            *extra,
        ]
    )


@pytest.fixture
def small_fixture(tmp_path):
    write_observations(
        tmp_path / "entries.jsonl",
        [entry("E1", 0.0, (1.0, 0.0, 0.0), lane=1), entry("E2", 5.0, (0.0, 1.0, 0.0), lane=2)],
    )
    write_observations(
        tmp_path / "exits.jsonl",
        [exit_("X1", 20.5, (1.0, 0.0, 0.0), lane=2), exit_("X2", 24.0, (0.0, 1.0, 0.0), lane=1)],
    )
    return tmp_path


class TestMatchCommand:
    def test_happy_path(self, small_fixture, capsys):
        report_path = small_fixture / "out" / "report.json"
        assert _match(small_fixture, report_path) == 0

        report = json.loads(report_path.read_text())
        assert report["schema_version"] == "1"
        assert report["sampling_rate"] == 1.0
        assert [(m["entry_track"], m["exit_track"]) for m in report["matches"]] == [("E1", "X1"), ("E2", "X2")]

        csv_lines = report_path.with_suffix(".csv").read_text().splitlines()
        assert csv_lines[0] == "entry_lane,exit_lane,matched,estimated_flow"
        assert "1,2,1,1.0" in csv_lines
        assert "3,1,0,NA" in csv_lines
        assert "matched 2 of 2 entries" in capsys.readouterr().out

    def test_malformed_line_seven(self, small_fixture, capsys):
        lines = (small_fixture / "entries.jsonl").read_text().splitlines()
        records = [json.loads(lines[0]) for _ in range(6)]
        for i, record in enumerate(records):
            record["track_id"] = f"E{i}"
        text = "\n".join(json.dumps(r) for r in records) + '\n{"camera_id": \n'
        (small_fixture / "entries.jsonl").write_text(text)

        assert _match(small_fixture, small_fixture / "report.json") == 2
        assert ":7:" in capsys.readouterr().err
        assert not (small_fixture / "report.json").exists()

    def test_invariant_violation_cites_record(self, small_fixture, capsys):
        write_observations(
            small_fixture / "exits.jsonl",
            [exit_("X1", 20.0, lane=1), exit_("X1", 21.0, lane=1)],
        )
        assert _match(small_fixture, small_fixture / "report.json") == 2
        assert "record 2 (track X1)" in capsys.readouterr().err

    @pytest.mark.parametrize("exit_time", [20.0, 5000.0])
    def test_exit_dimension_differs_from_entries(self, small_fixture, capsys, exit_time):
        write_observations(
            small_fixture / "exits.jsonl",
            [exit_("X1", exit_time, (1.0, 0.0, 0.0, 0.0)), exit_("X2", exit_time + 1, (0.0, 1.0, 0.0, 0.0))],
        )
        assert _match(small_fixture, small_fixture / "report.json") == 2
        err = capsys.readouterr().err
        assert "exits.jsonl: record 1 (track X1)" in err
        assert "dataset uses 3" in err
        assert not (small_fixture / "report.json").exists()

    def test_missing_zone(self, small_fixture):
        code = main(
            [
                "match",
                "--entries", str(small_fixture / "entries.jsonl"),
                "--exits", str(small_fixture / "exits.jsonl"),
                "--output", str(small_fixture / "report.json"),
            ]
        )
        assert code == 2

    def test_bad_zone_value(self, small_fixture):
        assert _match(small_fixture, small_fixture / "report.json", "--tau", "1.5") == 2

    def test_config_document(self, small_fixture):
        config = small_fixture / "config.json"
        config.write_text(
            json.dumps(
                {
                    "zone": {"distance_m": 500, "mean_speed_mps": 25, "entry_lanes": [1, 2], "exit_lanes": [1, 2]},
                    "zone_name": "weaving-1",
                    "session": "noon",
                }
            )
        )
        report_path = small_fixture / "report.json"
        code = main(
            [
                "match",
                "--config", str(config),
                "--entries", str(small_fixture / "entries.jsonl"),
                "--exits", str(small_fixture / "exits.jsonl"),
                "--output", str(report_path),
            ]
        )
        assert code == 0
        report = json.loads(report_path.read_text())
        assert report["zone_name"] == "weaving-1"
        assert report["session"] == "noon"

    @pytest.mark.parametrize("session", ["morning", "noon", "afternoon"])
    def test_session_flag(self, small_fixture, session):
        report_path = small_fixture / "report.json"
        assert _match(small_fixture, report_path, "--session", session) == 0
        assert json.loads(report_path.read_text())["session"] == session

    def test_unknown_session_is_rejected(self, small_fixture):
        with pytest.raises(SystemExit) as caught:
            _match(small_fixture, small_fixture / "report.json", "--session", "evening")
        assert caught.value.code == 2

    def test_synthetic_flows_match_ground_truth(self, tmp_path):
        assert _synth(tmp_path, "--vehicles", "60", "--dim", "16", "--seed", "4") == 0
        report_path = tmp_path / "report.json"
        assert _match(tmp_path, report_path, "--ground-truth", str(tmp_path / "ground_truth.json")) == 0

        report = json.loads(report_path.read_text())
        truth = GroundTruth.model_validate_json((tmp_path / "ground_truth.json").read_text())
        assert report["metrics"]["precision"] == 1.0
        flows = {(p["entry_lane"], p["exit_lane"]): p["estimated_flow"] for p in report["lane_pairs"]}
        for key, count in truth.flow_map().items():
            if flows[key] is not None:
                assert flows[key] == float(count)

    def test_reports_are_byte_identical(self, tmp_path):
        assert _synth(tmp_path, "--vehicles", "40", "--dim", "8", "--noise-std", "0.05",
                      "--clutter-entry", "4", "--clutter-exit", "4") == 0
        assert _match(tmp_path, tmp_path / "a.json") == 0
        assert _match(tmp_path, tmp_path / "b.json") == 0
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_input_order_does_not_change_pairs(self, tmp_path):
        assert _synth(tmp_path, "--vehicles", "30", "--dim", "8", "--noise-std", "0.05") == 0
        assert _match(tmp_path, tmp_path / "a.json") == 0

        shuffled = tmp_path / "shuffled"
        shuffled.mkdir()
        for name in ("entries.jsonl", "exits.jsonl"):
            lines = (tmp_path / name).read_text().splitlines()
            (shuffled / name).write_text("\n".join(reversed(lines)) + "\n")
        assert _match(shuffled, tmp_path / "b.json") == 0

        def pairs(path):
            return {(m["entry_track"], m["exit_track"]) for m in json.loads(path.read_text())["matches"]}

        assert pairs(tmp_path / "a.json") == pairs(tmp_path / "b.json")


class TestEvalCommand:
    def _run(self, tmp_path, report, truth, *extra):
        write_json(tmp_path / "report.json", report)
        write_json(tmp_path / "truth.json", truth)
        return main(
            [
                "eval",
                "--report", str(tmp_path / "report.json"),
                "--ground-truth", str(tmp_path / "truth.json"),
                *extra,
            ]
        )

    def test_perfect_prediction(self, tmp_path, capsys):
        pairs = [(f"E{i}", f"X{i}") for i in range(5)]
        report = WeavingReport(matches=[_pair(*p) for p in pairs], total_entries=5, total_matched=5)
        assert self._run(tmp_path, report, GroundTruth(pairs=pairs)) == 0
        assert "TPR 100.00 Precision 100.00" in capsys.readouterr().out

    def test_empty_prediction(self, tmp_path, capsys):
        report = WeavingReport(total_entries=5)
        assert self._run(tmp_path, report, GroundTruth(pairs=[("E1", "X1")])) == 0
        assert "TPR 0.00 Precision 0.00" in capsys.readouterr().out

    def test_counting_fixture(self, tmp_path, capsys):
        predicted = [_pair(f"E{i}", f"X{i}") for i in range(6)] + [_pair("E6", "X7"), _pair("E7", "X6")]
        truth = GroundTruth(pairs=[(f"E{i}", f"X{i}") for i in range(10)])
        out = tmp_path / "row.json"
        code = self._run(
            tmp_path, WeavingReport(matches=predicted, total_entries=8), truth,
            "--total-detected", "100", "--output", str(out),
        )
        assert code == 0
        assert "TPR 8.00 Precision 75.00" in capsys.readouterr().out
        row = json.loads(out.read_text())["row"]
        assert (row["tpr"], row["precision"]) == (8.0, 75.0)

    def test_total_detected_below_matches(self, tmp_path, capsys):
        pairs = [(f"E{i}", f"X{i}") for i in range(5)]
        report = WeavingReport(matches=[_pair(*p) for p in pairs], total_entries=5, total_matched=5)
        assert self._run(tmp_path, report, GroundTruth(pairs=pairs), "--total-detected", "3") == 2
        assert "exceed" in capsys.readouterr().err

    def test_missing_ground_truth(self, tmp_path):
        write_json(tmp_path / "report.json", WeavingReport(total_entries=1))
        code = main(
            ["eval", "--report", str(tmp_path / "report.json"), "--ground-truth", str(tmp_path / "nope.json")]
        )
        assert code == 2

    def test_count_accuracy_from_synthetic_run(self, tmp_path, capsys):
        assert _synth(tmp_path, "--vehicles", "30", "--dim", "16") == 0
        assert _match(tmp_path, tmp_path / "report.json") == 0
        capsys.readouterr()
        code = main(
            ["eval", "--report", str(tmp_path / "report.json"),
             "--ground-truth", str(tmp_path / "ground_truth.json")]
        )
        assert code == 0
        assert "count accuracy 100.00 TPR 100.00 Precision 100.00" in capsys.readouterr().out


class TestSynthCommand:
    FILES = ("entries.jsonl", "exits.jsonl", "ground_truth.json")

    def test_same_seed_byte_identical(self, tmp_path):
        args = ("--vehicles", "25", "--dim", "8", "--noise-std", "0.1", "--speed-std", "2.5",
                "--clutter-entry", "5", "--clutter-exit", "5", "--seed", "42", "--sidecar")
        assert _synth(tmp_path / "a", *args) == 0
        assert _synth(tmp_path / "b", *args) == 0
        for name in self.FILES + ("entries.wemb", "exits.wemb"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_zero_vehicles(self, tmp_path):
        assert _synth(tmp_path, "--vehicles", "0") == 0
        assert (tmp_path / "entries.jsonl").read_text() == ""
        assert (tmp_path / "exits.jsonl").read_text() == ""
        assert GroundTruth.model_validate_json((tmp_path / "ground_truth.json").read_text()).pairs == []

    def test_truck_fraction_one(self, tmp_path):
        assert _synth(tmp_path, "--vehicles", "15", "--dim", "4", "--truck-fraction", "1.0") == 0
        for name in ("entries.jsonl", "exits.jsonl"):
            classes = {json.loads(line)["class"] for line in (tmp_path / name).read_text().splitlines()}
            assert classes == {"truck"}

    @pytest.mark.parametrize("sidecar", [False, True])
    def test_files_parse_back_to_generated_records(self, tmp_path, sidecar):
        args = ["--vehicles", "12", "--dim", "6", "--noise-std", "0.2", "--seed", "7"]
        assert _synth(tmp_path, *args, *(["--sidecar"] if sidecar else [])) == 0
        zone = ZoneConfig(distance_m=500, mean_speed_mps=25, entry_lanes=[1, 2, 3], exit_lanes=[1, 2, 3])
        spec = ScenarioSpec(vehicle_count=12, embedding_dim=6, noise_std=0.2, seed=7)
        entries, exits, _ = generate_scenario(spec, zone)
        assert read_observations(tmp_path / "entries.jsonl") == entries
        assert read_observations(tmp_path / "exits.jsonl") == exits

    def test_invalid_scenario_value(self, tmp_path):
        assert _synth(tmp_path, "--truck-fraction", "2") == 2


class TestReidEvalCommand:
    def _write(self, path, samples):
        path.write_text("".join(json.dumps({"identity": i, "embedding": v}) + "\n" for v, i in samples))
        return path

    def test_self_retrieval(self, tmp_path, capsys):
        samples = [([1.0, 0.0, 0.0], "a"), ([0.0, 1.0, 0.0], "b"), ([0.0, 0.0, 1.0], "c")]
        query = self._write(tmp_path / "query.jsonl", samples)
        out = tmp_path / "reid.json"
        code = main(["reid-eval", "--query", str(query), "--gallery", str(query), "--output", str(out)])
        assert code == 0
        assert "mAP 100.00 Rank-1 100.00 Rank-5 100.00 Rank-10 100.00" in capsys.readouterr().out
        document = json.loads(out.read_text())
        assert document["percentages"]["rank1"] == 100.0
        assert [hit["correct"] for hit in document["retrieval"][0]["hits"]] == [True, False, False]

    def test_hand_fixture(self, tmp_path, capsys):
        query = self._write(tmp_path / "query.jsonl", [([1.0, 0.0], "a")])
        gallery = self._write(
            tmp_path / "gallery.jsonl", [([1.0, 0.1], "b"), ([1.0, 0.5], "a"), ([0.0, 1.0], "c")]
        )
        assert main(["reid-eval", "--query", str(query), "--gallery", str(gallery)]) == 0
        assert "mAP 50.00 Rank-1 0.00 Rank-5 100.00" in capsys.readouterr().out

    def test_empty_query(self, tmp_path):
        query = tmp_path / "query.jsonl"
        query.write_text("")
        gallery = self._write(tmp_path / "gallery.jsonl", [([1.0, 0.0], "a")])
        assert main(["reid-eval", "--query", str(query), "--gallery", str(gallery)]) == 2

    def test_identity_absent_from_gallery(self, tmp_path):
        query = self._write(tmp_path / "query.jsonl", [([1.0, 0.0], "z")])
        gallery = self._write(tmp_path / "gallery.jsonl", [([1.0, 0.0], "a")])
        assert main(["reid-eval", "--query", str(query), "--gallery", str(gallery)]) == 2
