"""End-to-end command-line workflows on a small synthetic problem."""

import numpy as np
import pytest
import yaml

from selpred.cli import main


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """One tiny trained-and-calibrated model shared by the command tests."""
    root = tmp_path_factory.mktemp("cli")
    cfg = {
        "dataset": {"kind": "synthetic", "seed": 0, "m": 600, "n_classes": 3,
                    "n_features": 5, "noise_fraction": 0.2},
        "split": {"train": 0.6, "calibration": 0.2, "test": 0.2, "seed": 0,
                  "stratified": True},
        "architecture": {"body_widths": [16], "selection_hidden": 8,
                         "dropout_rate": 0.0},
        "loss": {"target_coverage": 0.8},
        "train": {"epochs": 15, "batch_size": 64, "learning_rate": 2e-3},
        "seeds": [0],
    }
    cfg_path = root / "config.yaml"
    cfg_path.write_text(yaml.safe_dump(cfg))

    rc = main(["train", "--config", str(cfg_path),
               "--out", str(root / "run")])
    assert rc == 0
    rc = main(["calibrate", "--model", str(root / "run" / "model.ckpt"),
               "--config", str(cfg_path), "--coverage", "0.8",
               "--out", str(root / "run")])
    assert rc == 0
    return root, cfg_path


def _read_csv(path):
    lines = path.read_text().strip().split("\n")
    comments = [l for l in lines if l.startswith("# ")]
    data = [l for l in lines if not l.startswith("# ")]
    return comments, data


class TestTrain:
    def test_outputs_exist(self, workdir):
        root, _ = workdir
        assert (root / "run" / "model.ckpt").exists()
        assert (root / "run" / "history.csv").exists()
        assert (root / "run" / "effective_config.yaml").exists()

    def test_history_has_provenance_and_rows(self, workdir):
        root, _ = workdir
        comments, data = _read_csv(root / "run" / "history.csv")
        assert any(c.startswith("# config_hash=") for c in comments)
        assert any(c.startswith("# seeds=") for c in comments)
        assert data[0].startswith("epoch,total_loss")
        assert len(data) == 1 + 15  # header + one row per epoch


class TestCalibrate:
    def test_calibration_outputs(self, workdir):
        root, _ = workdir
        assert (root / "run" / "model_calibrated.ckpt").exists()
        comments, data = _read_csv(root / "run" / "calibration.csv")
        header = data[0].split(",")
        row = dict(zip(header, data[1].split(",")))
        assert float(row["target_coverage"]) == 0.8
        assert float(row["achieved_coverage"]) >= 0.8
        assert 0.0 <= float(row["tau"]) <= 1.0


class TestEvaluate:
    def test_calibrated_evaluation(self, workdir, tmp_path, capsys):
        root, cfg_path = workdir
        rc = main(["evaluate",
                   "--model", str(root / "run" / "model_calibrated.ckpt"),
                   "--config", str(cfg_path), "--out", str(tmp_path)])
        assert rc == 0
        out = capsys.readouterr().out
        assert "coverage=" in out and "risk=" in out
        assert (tmp_path / "eval.csv").exists()

    def test_tau_zero_full_coverage(self, workdir, capsys):
        root, cfg_path = workdir
        rc = main(["evaluate", "--model", str(root / "run" / "model.ckpt"),
                   "--config", str(cfg_path), "--tau", "0"])
        assert rc == 0
        assert "coverage=1.0000" in capsys.readouterr().out


class TestCurve:
    def test_curve_points(self, workdir, tmp_path):
        root, cfg_path = workdir
        rc = main(["curve", "--model", str(root / "run" / "model.ckpt"),
                   "--config", str(cfg_path), "--coverages", "1.0,0.8,0.6",
                   "--score", "g", "--out", str(tmp_path)])
        assert rc == 0
        _, data = _read_csv(tmp_path / "curve.csv")
        assert len(data) == 4
        first = data[1].split(",")
        assert float(first[0]) == 1.0 and float(first[1]) == 1.0


class TestGrid:
    def test_single_model_grid(self, workdir, tmp_path):
        root, cfg_path = workdir
        rc = main(["grid", "--models", str(root / "run" / "model.ckpt"),
                   "--config", str(cfg_path), "--coverages", "0.9,0.7",
                   "--out", str(tmp_path)])
        assert rc == 0
        _, data = _read_csv(tmp_path / "grid.csv")
        assert data[0] == "train_coverage,calib_0.9,calib_0.7"
        assert len(data) == 2


class TestCompare:
    def test_byte_identical_reruns(self, workdir, tmp_path):
        _, cfg_path = workdir
        out1, out2 = tmp_path / "a", tmp_path / "b"
        for out in (out1, out2):
            rc = main(["compare", "--config", str(cfg_path),
                       "--coverages", "1.0,0.8", "--seeds", "0",
                       "--out", str(out)])
            assert rc == 0
        assert (out1 / "compare.csv").read_bytes() == \
            (out2 / "compare.csv").read_bytes()
        _, data = _read_csv(out1 / "compare.csv")
        assert data[0].split(",")[:2] == ["coverage", "selnet_risk"]
        assert len(data) == 3


class TestExitCodes:
    def test_usage_error_is_two(self, capsys):
        with pytest.raises(SystemExit) as e:
            main(["train", "--no-such-flag"])
        assert e.value.code == 2

    def test_runtime_failure_is_one(self, tmp_path, capsys):
        missing = tmp_path / "nope.yaml"
        rc = main(["train", "--config", str(missing), "--out", str(tmp_path)])
        assert rc == 1
        assert "error:" in capsys.readouterr().err

    def test_corrupt_checkpoint_is_one(self, workdir, tmp_path, capsys):
        _, cfg_path = workdir
        bad = tmp_path / "bad.ckpt"
        bad.write_bytes(b"not a checkpoint")
        rc = main(["evaluate", "--model", str(bad), "--config", str(cfg_path)])
        assert rc == 1
        assert "error:" in capsys.readouterr().err
