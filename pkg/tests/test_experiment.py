import json
import math

import numpy as np
import pytest

from edmloc import cli, experiment


def tiny_exact_config(**kw):
    args = dict(
        alpha_c_values=(1.0,),
        repetitions=2,
        methods=("edm-c1",),
        master_seed=99,
        exact_tdoa=True,
        alpha_strategy="coarse-fine",
    )
    args.update(kw)
    return experiment.ExperimentConfig(**args)


class TestConfig:
    def test_method_parsing(self):
        assert experiment.parse_method("srp-phat") == ("srp", None)
        assert experiment.parse_method("edm-c2") == ("edm", 2)
        with pytest.raises(ValueError):
            experiment.parse_method("music")
        with pytest.raises(ValueError):
            experiment.parse_method("edm-c0")

    def test_validation(self):
        with pytest.raises(ValueError):
            experiment.ExperimentConfig(repetitions=0)
        with pytest.raises(ValueError):
            experiment.ExperimentConfig(methods=())
        with pytest.raises(ValueError):
            experiment.ExperimentConfig(methods=("edm-c1", "srp-phat"), exact_tdoa=True)
        with pytest.raises(ValueError):
            experiment.ExperimentConfig.from_dict({"bogus_key": 1})

    def test_seed_is_pure_function(self):
        a = experiment.scenario_seed(5, 1, 7)
        assert a == experiment.scenario_seed(5, 1, 7)
        others = {
            experiment.scenario_seed(5, 1, 8),
            experiment.scenario_seed(5, 2, 7),
            experiment.scenario_seed(6, 1, 7),
        }
        assert a not in others


class TestRunExperiment:
    def test_exact_bypass_accuracy(self):
        records = experiment.run_experiment(tiny_exact_config())
        assert len(records) == 2
        for r in records:
            assert not r.failure
            assert r.error_m < 2e-3
            assert r.method == "edm-c1"

    def test_records_sorted_and_labeled(self):
        cfg = tiny_exact_config(alpha_c_values=(0.5, 1.0), repetitions=1)
        records = experiment.run_experiment(cfg)
        ids = [(r.scenario_id, r.method) for r in records]
        assert ids == sorted(ids)
        assert {r.alpha_c for r in records} == {0.5, 1.0}


class TestSummarize:
    def _rec(self, alpha, method, err, failure=""):
        return experiment.ErrorRecord(
            scenario_id="s",
            alpha_c=alpha,
            rep=0,
            method=method,
            error_m=err,
            alpha_hat_m=float("nan"),
            cost_min=float("nan"),
            runtime_ms=1.0,
            dsp_ms=0.0,
            failure=failure,
        )

    def test_median_simple(self):
        rows = experiment.summarize(
            [self._rec(1.0, "edm-c1", e) for e in (0.01, 0.02, 0.03)]
        )
        assert rows[0]["median_m"] == 0.02

    def test_lower_median_for_even_counts(self):
        rows = experiment.summarize(
            [self._rec(1.0, "edm-c1", e) for e in (0.04, 0.01, 0.03, 0.02)]
        )
        assert rows[0]["median_m"] == 0.02
        assert rows[0]["q1_m"] == 0.01
        assert rows[0]["q3_m"] == 0.03

    def test_failures_counted_not_pooled(self):
        recs = [self._rec(1.0, "edm-c1", e) for e in (0.1, 0.3)]
        recs.append(self._rec(1.0, "edm-c1", float("nan"), failure="boom"))
        row = experiment.summarize(recs)[0]
        assert row["n"] == 3 and row["n_failed"] == 1
        assert row["n_large"] == 1  # only the 0.3 m error exceeds 25 cm

    def test_summary_recomputable_from_emitted_records(self, tmp_path):
        records = experiment.run_experiment(tiny_exact_config())
        paths = experiment.emit_results(records, tmp_path)
        back = experiment.read_results_csv(paths["results_csv"])
        recomputed = experiment.summarize(back)
        original = experiment.summarize(records)
        for a, b in zip(recomputed, original):
            assert a.keys() == b.keys()
            for key, val in a.items():
                if isinstance(val, float):
                    # raw files carry six decimals
                    assert abs(val - b[key]) <= 1e-6
                else:
                    assert val == b[key]


class TestEmit:
    def test_round_trip_and_header(self, tmp_path):
        records = experiment.run_experiment(tiny_exact_config())
        paths = experiment.emit_results(records, tmp_path)
        with open(paths["results_csv"]) as fh:
            header = fh.readline().strip()
        assert header == (
            "scenario_id,alpha_c,rep,method,error_m,alpha_hat_m,cost_min,failure"
        )
        back = experiment.read_results_csv(paths["results_csv"])
        for a, b in zip(back, records):
            assert a.scenario_id == b.scenario_id
            assert a.method == b.method
            assert abs(a.error_m - b.error_m) <= 1e-6
        with open(paths["summary_json"]) as fh:
            summary = json.load(fh)
        assert {row["method"] for row in summary} == {"edm-c1"}

    def test_rejects_empty_and_unknown_format(self, tmp_path):
        with pytest.raises(ValueError):
            experiment.emit_results([], tmp_path)
        records = experiment.run_experiment(tiny_exact_config(repetitions=1))
        with pytest.raises(ValueError):
            experiment.emit_results(records, tmp_path, formats=("xml",))

    def test_reproducible_across_parallelism(self, tmp_path):
        cfg1 = tiny_exact_config(alpha_c_values=(1.0, 2.0))
        cfg2 = tiny_exact_config(alpha_c_values=(1.0, 2.0), jobs=2)
        p1 = experiment.emit_results(experiment.run_experiment(cfg1), tmp_path / "a")
        p2 = experiment.emit_results(experiment.run_experiment(cfg2), tmp_path / "b")
        for key in ("results_csv", "results_json", "summary_csv", "summary_json"):
            assert p1[key].read_bytes() == p2[key].read_bytes()


class TestCli:
    def test_simulate_localize_report_flow(self, tmp_path, capsys):
        scene_dir = tmp_path / "scene"
        rc = cli.main(
            [
                "simulate",
                "--seed",
                "5",
                "--alpha-c",
                "1.0",
                "--duration",
                "1.0",
                "--out-dir",
                str(scene_dir),
            ]
        )
        assert rc == 0
        meta = json.loads((scene_dir / "scenario.json").read_text())
        assert meta["mic_count"] == 6

        out_file = tmp_path / "loc.json"
        rc = cli.main(
            [
                "localize",
                "--scenario-dir",
                str(scene_dir),
                "--methods",
                "edm",
                "--candidates",
                "1",
                "--exact-tdoa",
                "--out",
                str(out_file),
            ]
        )
        assert rc == 0
        report = json.loads(out_file.read_text())
        assert report[0]["method"] == "edm-c1"
        assert report[0]["error_m"] < 2e-3

    def test_experiment_and_report_commands(self, tmp_path, capsys):
        out_dir = tmp_path / "exp"
        rc = cli.main(
            [
                "experiment",
                "--seed",
                "7",
                "--reps",
                "1",
                "--alpha-c",
                "1.0",
                "--methods",
                "edm-c1",
                "--exact-tdoa",
                "--out-dir",
                str(out_dir),
            ]
        )
        assert rc == 0
        assert (out_dir / "results.csv").exists()
        rc = cli.main(["report", "--results", str(out_dir / "results.csv")])
        assert rc == 0
        captured = capsys.readouterr()
        assert "edm-c1" in captured.out

    def test_config_file_with_override(self, tmp_path):
        cfg_file = tmp_path / "cfg.json"
        cfg_file.write_text(
            json.dumps(
                {
                    "alpha_c_values": [1.0],
                    "repetitions": 1,
                    "methods": ["edm-c1"],
                    "exact_tdoa": True,
                    "master_seed": 1,
                }
            )
        )
        out_dir = tmp_path / "exp"
        rc = cli.main(
            [
                "experiment",
                "--config",
                str(cfg_file),
                "--seed",
                "123",
                "--out-dir",
                str(out_dir),
            ]
        )
        assert rc == 0
        rows = (out_dir / "results.csv").read_text().strip().splitlines()
        assert len(rows) == 2  # header + one record

    def test_localize_full_dsp_path(self, tmp_path):
        scene_dir = tmp_path / "scene"
        assert (
            cli.main(
                [
                    "simulate",
                    "--seed",
                    "11",
                    "--alpha-c",
                    "1.0",
                    "--duration",
                    "1.0",
                    "--drr-db",
                    "none",
                    "--noise",
                    "none",
                    "--out-dir",
                    str(scene_dir),
                ]
            )
            == 0
        )
        out_file = tmp_path / "loc.json"
        rc = cli.main(
            [
                "localize",
                "--scenario-dir",
                str(scene_dir),
                "--methods",
                "edm-c1",
                "--out",
                str(out_file),
            ]
        )
        assert rc == 0
        report = json.loads(out_file.read_text())
        assert report[0]["failure"] == ""
        assert report[0]["error_m"] < 0.25

    def test_bad_method_exits_nonzero(self, tmp_path, capsys):
        rc = cli.main(
            [
                "experiment",
                "--seed",
                "1",
                "--reps",
                "1",
                "--methods",
                "musicc",
                "--out-dir",
                str(tmp_path),
            ]
        )
        assert rc == 2
        assert "error" in capsys.readouterr().err
