import json

import numpy as np
import pandas as pd
import pytest

from dqmor.cli import main
from dqmor.dataio import load_csv

FAST = ["--rff-dim", "32", "--eig", "4", "--epochs", "3", "--gamma", "1.0", "--lr", "0.01",
        "--batch-size", "16", "--seed", "7"]


@pytest.fixture
def dataset_csv(tmp_path):
    path = tmp_path / "data.csv"
    assert main(["--quiet", "synth", "--bags", "20", "--patches", "3", "--dim", "2",
                 "--sigma", "0.1", "--seed", "1", "--out", str(path)]) == 0
    return path


@pytest.fixture
def checkpoint(tmp_path, dataset_csv):
    path = tmp_path / "model.json"
    assert main(["--quiet", "train", "--data", str(dataset_csv), "--out", str(path)] + FAST) == 0
    return path


class TestSynth:
    def test_writes_loadable_csv(self, dataset_csv):
        data = load_csv(dataset_csv, 5)
        assert len(data) == 60 and data.input_dim == 2

    def test_same_seed_same_file(self, tmp_path, dataset_csv):
        again = tmp_path / "again.csv"
        main(["--quiet", "synth", "--bags", "20", "--patches", "3", "--dim", "2",
              "--sigma", "0.1", "--seed", "1", "--out", str(again)])
        assert again.read_bytes() == dataset_csv.read_bytes()


class TestTrain:
    def test_logs_epoch_losses(self, tmp_path, dataset_csv, capsys):
        out = tmp_path / "m.json"
        assert main(["train", "--data", str(dataset_csv), "--out", str(out)] + FAST) == 0
        err = capsys.readouterr().err
        assert "epoch=0 loss=" in err and "epoch=2 loss=" in err
        report = json.loads((tmp_path / "m.report.json").read_text())
        assert report["epochs_run"] == 3

    def test_repeat_runs_write_identical_checkpoints(self, tmp_path, dataset_csv):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        for path in (a, b):
            assert main(["--quiet", "train", "--data", str(dataset_csv), "--out", str(path)] + FAST) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_dmkdc_with_preset(self, tmp_path, dataset_csv):
        out = tmp_path / "d.json"
        args = ["--quiet", "train", "--model", "dmkdc", "--preset", "synthetic_smoke", "--data", str(dataset_csv),
                "--out", str(out), "--epochs", "2", "--rff-dim", "16"]
        assert main(args) == 0
        document = json.loads(out.read_text())
        assert document["kind"] == "dmkdc"
        assert document["config"]["rff_dim"] == 16
        assert document["config"]["num_components"] == 16

    def test_missing_data_flag_is_usage_error(self, tmp_path):
        with pytest.raises(SystemExit) as info:
            main(["train", "--out", str(tmp_path / "m.json")])
        assert info.value.code == 2

    def test_out_of_range_flag_is_usage_error(self, tmp_path, dataset_csv):
        with pytest.raises(SystemExit) as info:
            main(["train", "--data", str(dataset_csv), "--out", str(tmp_path / "m.json"), "--eig", "0"])
        assert info.value.code == 2

    def test_bad_dataset_exits_one(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("bag_id,patch_id,label,f0\na,p0,9,0.5\n", encoding="utf-8")
        assert main(["train", "--data", str(bad), "--out", str(tmp_path / "m.json")] + FAST) == 1
        assert "line 2" in capsys.readouterr().err


class TestEvaluate:
    def test_tables_and_reports(self, tmp_path, dataset_csv, checkpoint, capsys):
        out = tmp_path / "metrics.json"
        assert main(["--quiet", "evaluate", "--checkpoint", str(checkpoint), "--data", str(dataset_csv),
                     "--out", str(out)]) == 0
        printed = capsys.readouterr().out
        assert "level=patch" in printed and "level=bag" in printed
        assert "method=MV" in printed and "method=PV" in printed
        assert "Gleason 6" in printed and "Gleason 10" in printed
        document = json.loads(out.read_text())
        assert [(r["level"], r["method"]) for r in document["reports"]] == [
            ("patch", "argmax"), ("bag", "MV"), ("bag", "PV")]
        variance = pd.read_csv(tmp_path / "metrics.variance.csv")
        assert len(variance) == 20

    def test_grade_base(self, tmp_path, dataset_csv, checkpoint, capsys):
        main(["--quiet", "evaluate", "--checkpoint", str(checkpoint), "--data", str(dataset_csv),
              "--out", str(tmp_path / "m.json"), "--grade-base", "0"])
        printed = capsys.readouterr().out
        assert "Gleason 0" in printed and "Gleason 10" not in printed

    def test_corrupt_checkpoint_exits_one(self, tmp_path, dataset_csv, capsys):
        broken = tmp_path / "broken.json"
        broken.write_text("{\"version\": 1", encoding="utf-8")
        assert main(["evaluate", "--checkpoint", str(broken), "--data", str(dataset_csv),
                     "--out", str(tmp_path / "m.json")]) == 1
        assert "malformed" in capsys.readouterr().err


class TestPredict:
    def test_single_bag_pv(self, tmp_path, checkpoint):
        data = tmp_path / "one.csv"
        data.write_text("bag_id,patch_id,label,f0,f1\nslide1,p0,,0.1,0.2\nslide1,p1,,0.3,0.1\n", encoding="utf-8")
        out, per_patch = tmp_path / "pred.csv", tmp_path / "patches.csv"
        assert main(["--quiet", "predict", "--checkpoint", str(checkpoint), "--data", str(data),
                     "--out", str(out), "--method", "PV", "--per-patch", str(per_patch)]) == 0
        frame = pd.read_csv(out)
        assert len(frame) == 1 and frame.loc[0, "bag_id"] == "slide1"
        assert 0 <= frame.loc[0, "predicted_grade"] <= 4
        patches = pd.read_csv(per_patch)
        assert len(patches) == 2
        np.testing.assert_allclose(patches[[f"p{r}" for r in range(5)]].sum(axis=1), 1.0, atol=1e-12)

    def test_both_methods(self, tmp_path, dataset_csv, checkpoint):
        out = tmp_path / "pred.csv"
        assert main(["--quiet", "predict", "--checkpoint", str(checkpoint), "--data", str(dataset_csv),
                     "--out", str(out)]) == 0
        frame = pd.read_csv(out)
        assert sorted(frame["method"].unique()) == ["MV", "PV"]
        assert len(frame) == 40
        assert frame.loc[frame["method"] == "MV", "variance"].isna().all()


class TestGradcheck:
    def test_passes(self, capsys):
        assert main(["--quiet", "gradcheck", "--model", "qmr", "--dim", "4", "--grades", "3",
                     "--eig", "2", "--batch", "8"]) == 0
        assert json.loads(capsys.readouterr().out)["max_relative_error"] <= 1e-4

    def test_reference_problem(self):
        assert main(["--quiet", "gradcheck", "--model", "qmr", "--dim", "8", "--grades", "5",
                     "--eig", "4", "--seed", "3"]) == 0

    def test_corrupted_gradient_exits_one(self):
        assert main(["--quiet", "gradcheck", "--model", "dmkdc", "--dim", "4", "--grades", "3",
                     "--eig", "2", "--batch", "8", "--corrupt"]) == 1

    def test_too_large(self, capsys):
        assert main(["gradcheck", "--dim", "100", "--grades", "5", "--eig", "41", "--batch", "1"]) == 1
        assert "exceed" in capsys.readouterr().err


class TestBenchmark:
    def test_reports_both_models(self, tmp_path, capsys):
        data = tmp_path / "bench.csv"
        main(["--quiet", "synth", "--bags", "30", "--patches", "2", "--dim", "2", "--sigma", "0.1",
              "--seed", "2", "--out", str(data)])
        assert main(["--quiet", "benchmark", "--data", str(data), "--trials", "2", "--rff-dim", "16",
                     "--eig", "2", "--epochs", "2", "--gamma", "1.0", "--lr", "0.01"]) == 0
        printed = capsys.readouterr().out
        assert "qmr" in printed and "dmkdc" in printed and "±" in printed

    def test_epochs_are_selected_on_validation_loss(self, tmp_path, capsys):
        data = tmp_path / "bench.csv"
        main(["--quiet", "synth", "--bags", "30", "--patches", "2", "--dim", "2", "--sigma", "0.1",
              "--seed", "2", "--out", str(data)])
        assert main(["benchmark", "--data", str(data), "--trials", "1", "--rff-dim", "16",
                     "--eig", "2", "--epochs", "2", "--gamma", "1.0", "--lr", "0.01"]) == 0
        assert "val_loss=" in capsys.readouterr().err

    def test_two_way_split_trains_without_validation(self, tmp_path, capsys):
        data = tmp_path / "bench.csv"
        main(["--quiet", "synth", "--bags", "30", "--patches", "2", "--dim", "2", "--sigma", "0.1",
              "--seed", "2", "--out", str(data)])
        assert main(["benchmark", "--data", str(data), "--trials", "1", "--split", "0.7,0,0.3",
                     "--rff-dim", "16", "--eig", "2", "--epochs", "2", "--gamma", "1.0", "--lr", "0.01"]) == 0
        err = capsys.readouterr().err
        assert "epoch=1 loss=" in err and "val_loss=" not in err
