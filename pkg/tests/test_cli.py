import csv
import json
from pathlib import Path

import numpy as np
import pytest

from fingerspell.cli import main
from fingerspell.features import read_features
from fingerspell.pgm import write_pgm


def write_config(tmp_path, **overrides):
    cfg = {
        "paths": {
            "manifest": str(tmp_path / "data" / "manifest.csv"),
            "output_dir": str(tmp_path / "out"),
            "model": str(tmp_path / "out" / "model.hsdbn"),
        },
        "feature_kind": "combined",
        "layer_sizes": [30, 20],
        "rbm": {"epochs": 2, "batch_size": 32},
        "supervised": {
            "stage2": {"epochs": 4, "batch_size": 32},
            "stage3": {"epochs": 2, "batch_size": 32, "learning_rate": 0.01},
        },
        "split": {"mode": "allseen"},
        "rng_seed": 77,
    }
    cfg.update(overrides)
    p = tmp_path / "run.json"
    p.write_text(json.dumps(cfg))
    return p


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """One tiny dataset + extraction + training shared by the read-only tests."""
    tmp_path = tmp_path_factory.mktemp("cli")
    cfg = write_config(tmp_path)
    assert main(["gen-synthetic", "--config", str(cfg), "--users", "2", "--per-class", "4"]) == 0
    assert main(["extract", "--config", str(cfg)]) == 0
    assert main(["train", "--config", str(cfg)]) == 0
    return tmp_path, cfg


class TestGenSynthetic:
    def test_counts_and_manifest(self, tmp_path):
        cfg = write_config(tmp_path)
        assert main(["gen-synthetic", "--config", str(cfg), "--users", "2", "--per-class", "3"]) == 0
        manifest = tmp_path / "data" / "manifest.csv"
        rows = list(csv.DictReader(open(manifest)))
        assert len(rows) == 2 * 24 * 3
        assert len(list((tmp_path / "data" / "images").glob("*.pgm"))) == 2 * len(rows)

    def test_rerun_byte_identical(self, tmp_path):
        cfg = write_config(tmp_path)
        main(["gen-synthetic", "--config", str(cfg), "--users", "1", "--per-class", "1"])
        files = sorted((tmp_path / "data" / "images").glob("*.pgm"))
        first = {f.name: f.read_bytes() for f in files}
        main(["gen-synthetic", "--config", str(cfg), "--users", "1", "--per-class", "1"])
        for f in sorted((tmp_path / "data" / "images").glob("*.pgm")):
            assert f.read_bytes() == first[f.name]

    def test_zero_per_class_is_usage_error(self, tmp_path):
        cfg = write_config(tmp_path)
        assert main(["gen-synthetic", "--config", str(cfg), "--users", "1", "--per-class", "0"]) == 2


class TestExtract:
    def test_combined_dimensions(self, workspace):
        tmp_path, cfg = workspace
        kind, x = read_features(tmp_path / "out" / "features_combined.bin")
        assert kind == "combined" and x.shape == (192, 10240)

    def test_labels_align(self, workspace):
        tmp_path, _ = workspace
        rows = list(csv.DictReader(open(tmp_path / "out" / "labels.csv")))
        assert len(rows) == 192
        assert set(r["user"] for r in rows) == {"u00", "u01"}

    def test_extract_twice_identical(self, tmp_path):
        cfg = write_config(tmp_path)
        main(["gen-synthetic", "--config", str(cfg), "--users", "1", "--per-class", "1"])
        main(["extract", "--config", str(cfg)])
        feat = (tmp_path / "out" / "features_combined.bin").read_bytes()
        main(["extract", "--config", str(cfg)])
        assert (tmp_path / "out" / "features_combined.bin").read_bytes() == feat

    def test_raw_kind_dimension(self, tmp_path):
        cfg = write_config(tmp_path)
        main(["gen-synthetic", "--config", str(cfg), "--users", "1", "--per-class", "1"])
        assert main(["extract", "--config", str(cfg), "--feature-kind", "raw"]) == 0
        kind, x = read_features(tmp_path / "out" / "features_raw.bin")
        assert kind == "raw" and x.shape == (24, 32768)

    def test_workers_flag_reproduces_single_worker_output(self, tmp_path):
        cfg = write_config(tmp_path)
        main(["gen-synthetic", "--config", str(cfg), "--users", "1", "--per-class", "1"])
        main(["extract", "--config", str(cfg)])
        single = (tmp_path / "out" / "features_combined.bin").read_bytes()
        main(["extract", "--config", str(cfg), "--workers", "2"])
        assert (tmp_path / "out" / "features_combined.bin").read_bytes() == single


class TestTrain:
    def test_model_and_log_written(self, workspace):
        tmp_path, _ = workspace
        assert (tmp_path / "out" / "model.hsdbn").exists()
        log = (tmp_path / "out" / "train_log.csv").read_text().splitlines()
        assert log[0].startswith("# layer_sizes=30/20")
        assert log[1] == "stage,epoch,train_loss,valid_loss,recon_error"

    def test_stage_ordering_in_log(self, workspace):
        tmp_path, _ = workspace
        stages = []
        with open(tmp_path / "out" / "train_log.csv") as fh:
            for line in fh:
                if line.startswith("#") or line.startswith("stage,") or not line.strip():
                    continue
                stages.append(line.split(",")[0])
        first_stage2 = stages.index("stage2")
        assert all(s.startswith("rbm") for s in stages[:first_stage2])
        assert "stage3" in stages and stages.index("stage3") > first_stage2

    def test_unseen_logs_held_out_user(self, tmp_path, capsys):
        cfg = write_config(tmp_path, split={"mode": "unseen", "test_user": "u01"})
        main(["gen-synthetic", "--config", str(cfg), "--users", "2", "--per-class", "5"])
        main(["extract", "--config", str(cfg)])
        assert main(["train", "--config", str(cfg)]) == 0
        out = capsys.readouterr().out
        assert "held-out user: u01" in out
        log = (tmp_path / "out" / "train_log.csv").read_text()
        assert "# held_out_user=u01" in log

    def test_unseen_all_holdouts_trains_per_user_models(self, tmp_path):
        cfg = write_config(tmp_path, split={"mode": "unseen"})
        main(["gen-synthetic", "--config", str(cfg), "--users", "2", "--per-class", "5"])
        main(["extract", "--config", str(cfg)])
        assert main(["train", "--config", str(cfg)]) == 0
        assert (tmp_path / "out" / "model_u00.hsdbn").exists()
        assert (tmp_path / "out" / "model_u01.hsdbn").exists()

    def test_missing_features_is_data_error(self, tmp_path):
        cfg = write_config(tmp_path)
        assert main(["train", "--config", str(cfg)]) == 3


class TestEval:
    def test_reports_written_and_deterministic(self, workspace):
        tmp_path, cfg = workspace
        assert main(["eval", "--config", str(cfg)]) == 0
        out = tmp_path / "out"
        first = {p.name: p.read_bytes() for p in (out / "report.json", out / "report.csv", out / "confusion.csv")}
        assert main(["eval", "--config", str(cfg)]) == 0
        for name, data in first.items():
            assert (out / name).read_bytes() == data
        report = json.loads((out / "report.json").read_text())
        assert report["total"] == 48  # one test sample per (user, letter) stratum of 4
        assert 0.0 <= report["macro_recall"] <= 1.0

    def test_unseen_averaged_report(self, tmp_path):
        cfg = write_config(tmp_path, split={"mode": "unseen"})
        main(["gen-synthetic", "--config", str(cfg), "--users", "2", "--per-class", "5"])
        main(["extract", "--config", str(cfg)])
        main(["train", "--config", str(cfg)])
        assert main(["eval", "--config", str(cfg)]) == 0
        avg = json.loads((tmp_path / "out" / "report_unseen_averaged.json").read_text())
        assert set(avg["users"]) == {"u00", "u01"}
        per_user = [avg["users"][u]["macro_recall"] for u in ("u00", "u01")]
        assert avg["macro_recall"] == pytest.approx(np.mean(per_user))
        assert (tmp_path / "out" / "report_u00.json").exists()
        assert (tmp_path / "out" / "confusion_u01.csv").exists()

    def test_missing_model_is_data_error(self, tmp_path):
        cfg = write_config(tmp_path)
        main(["gen-synthetic", "--config", str(cfg), "--users", "1", "--per-class", "1"])
        main(["extract", "--config", str(cfg)])
        assert main(["eval", "--config", str(cfg)]) == 3


class TestPredict:
    def test_scores_sum_to_one_and_sorted(self, workspace, capsys):
        tmp_path, cfg = workspace
        depth = next((tmp_path / "data" / "images").glob("*_depth.pgm"))
        intensity = Path(str(depth).replace("_depth", "_intensity"))
        assert main(["predict", "--config", str(cfg), str(depth), str(intensity)]) == 0
        out = capsys.readouterr().out.splitlines()
        assert out[0].startswith("predicted: ")
        scores = [float(line.split()[1]) for line in out[1:]]
        assert len(scores) == 24
        assert abs(sum(scores) - 1.0) < 1e-9
        assert scores == sorted(scores, reverse=True)
        assert out[0].split()[1] == out[1].split()[0]

    def test_identical_runs(self, workspace, capsys):
        tmp_path, cfg = workspace
        depth = next((tmp_path / "data" / "images").glob("*_depth.pgm"))
        intensity = Path(str(depth).replace("_depth", "_intensity"))
        main(["predict", "--config", str(cfg), str(depth), str(intensity)])
        first = capsys.readouterr().out
        main(["predict", "--config", str(cfg), str(depth), str(intensity)])
        assert capsys.readouterr().out == first

    def test_all_zero_depth_exits_3(self, workspace, tmp_path):
        ws_path, cfg = workspace
        depth = tmp_path / "zero_depth.pgm"
        intensity = tmp_path / "zero_intensity.pgm"
        write_pgm(depth, np.zeros((64, 64), dtype=np.uint16))
        write_pgm(intensity, np.zeros((64, 64), dtype=np.uint8))
        assert main(["predict", "--config", str(cfg), str(depth), str(intensity)]) == 3

    def test_missing_input_exits_3(self, workspace):
        tmp_path, cfg = workspace
        assert main(["predict", "--config", str(cfg), "nope_d.pgm", "nope_i.pgm"]) == 3


class TestConfigHandling:
    def test_bad_config_is_usage_error(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text("{not json")
        assert main(["extract", "--config", str(p)]) == 2
        p2 = tmp_path / "bad2.json"
        p2.write_text(json.dumps({"feature_kind": "wavelet"}))
        assert main(["extract", "--config", str(p2)]) == 2

    def test_effective_config_reproduces_run(self, tmp_path):
        cfg = write_config(tmp_path)
        main(["gen-synthetic", "--config", str(cfg), "--users", "1", "--per-class", "1"])
        main(["extract", "--config", str(cfg)])
        feat = (tmp_path / "out" / "features_combined.bin").read_bytes()
        echoed = tmp_path / "out" / "config.effective.json"
        assert echoed.exists()
        # rerunning from the echoed config reproduces the extraction bit-for-bit
        main(["extract", "--config", str(echoed)])
        assert (tmp_path / "out" / "features_combined.bin").read_bytes() == feat

    def test_seed_flag_changes_generation(self, tmp_path):
        cfg = write_config(tmp_path)
        main(["gen-synthetic", "--config", str(cfg), "--users", "1", "--per-class", "1"])
        a = next((tmp_path / "data" / "images").glob("*_depth.pgm")).read_bytes()
        main(["gen-synthetic", "--config", str(cfg), "--seed", "31337", "--users", "1", "--per-class", "1"])
        b = next((tmp_path / "data" / "images").glob("*_depth.pgm")).read_bytes()
        assert a != b
