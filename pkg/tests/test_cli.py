"""Tests for the hardness-bench command line."""

import json
from unittest.mock import patch

import pandas as pd
import pytest

from hardness_bench.cli import EXIT_ERROR, EXIT_OK, EXIT_PARTIAL, main


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "tiny.env"
    path.write_text(
        "N_SAMPLES=120\nN_CLASSES=3\nEPOCHS=3\nHIDDEN_SIZES=8\n"
        "HARDNESS=uniform\nP=0.1\nSEEDS=0\nMETHODS=aum,loss,el2n\n",
        encoding="utf-8",
    )
    return path


def cli(config_file, out, *args):
    return main([*args, "--config", str(config_file), "--out", str(out)])


class TestCommands:
    def test_generate(self, config_file, tmp_path):
        assert cli(config_file, tmp_path, "generate") == EXIT_OK
        frame = pd.read_csv(tmp_path / "blobs.csv")
        assert len(frame) == 120
        assert set(frame["label"]) == {0, 1, 2}

    def test_perturb(self, config_file, tmp_path):
        assert cli(config_file, tmp_path, "perturb", "--p", "0.2") == EXIT_OK
        metadata = json.loads((tmp_path / "blobs-uniform-p0.2-s0.flags.json").read_text(encoding="utf-8"))
        assert metadata["flag_count"] == 24
        assert (tmp_path / "blobs-uniform-p0.2-s0.csv").exists()

    def test_run_prints_metrics(self, config_file, tmp_path, capsys):
        assert cli(config_file, tmp_path, "run") == EXIT_OK
        output = capsys.readouterr().out
        assert "D-AUPRC" in output
        assert "el2n" in output
        assert (tmp_path / "blobs-uniform-p0.1-s0" / "metrics.csv").exists()

    def test_skipped_run_is_not_an_error(self, config_file, tmp_path, capsys):
        assert cli(config_file, tmp_path, "run", "--p", "0") == EXIT_OK
        assert "skipped" in capsys.readouterr().out

    def test_sweep_then_report(self, config_file, tmp_path):
        assert cli(config_file, tmp_path, "sweep", "--p", "0.1,0.2") == EXIT_OK
        assert main(["report", str(tmp_path)]) == EXIT_OK
        assert (tmp_path / "report.md").exists()
        assert (tmp_path / "heatmap_uniform_auprc.svg").exists()

    def test_partial_sweep(self, config_file, tmp_path):
        with patch("hardness_bench.runner.prepare_setup", side_effect=RuntimeError("disk full")):
            assert cli(config_file, tmp_path, "sweep", "--jobs", "1") == EXIT_PARTIAL
        failures = json.loads((tmp_path / "failures.json").read_text(encoding="utf-8"))
        assert failures[0]["stage"] == "load"

    def test_stability(self, config_file, tmp_path, capsys):
        assert cli(config_file, tmp_path, "stability", "--runs", "2") == EXIT_OK
        assert (tmp_path / "blobs-uniform-p0.1-s0" / "stability.json").exists()
        assert "aum" in capsys.readouterr().out

    def test_severity(self, config_file, tmp_path, capsys):
        assert cli(config_file, tmp_path, "severity", "--hardness", "ood_covariate", "--large", "1.5") == EXIT_OK
        assert "sigma 0.5 -> 1.5" in capsys.readouterr().out


class TestErrors:
    def test_report_without_results(self, tmp_path):
        assert main(["report", str(tmp_path)]) == EXIT_ERROR

    def test_invalid_override(self, config_file, tmp_path):
        assert cli(config_file, tmp_path, "run", "--p", "0.9") == EXIT_ERROR

    def test_severity_unsupported_kind(self, config_file, tmp_path):
        assert cli(config_file, tmp_path, "severity") == EXIT_ERROR

    def test_missing_config_file(self, tmp_path):
        assert main(["run", "--config", str(tmp_path / "nope.env")]) == EXIT_ERROR

    def test_unknown_command(self):
        with pytest.raises(SystemExit) as exc:
            main(["train"])
        assert exc.value.code == EXIT_ERROR

    def test_unknown_flag_is_a_usage_error(self, config_file, tmp_path):
        with pytest.raises(SystemExit) as exc:
            cli(config_file, tmp_path, "run", "--temperature", "2")
        assert exc.value.code == EXIT_ERROR

    def test_set_rejects_unknown_key(self, config_file, tmp_path):
        assert cli(config_file, tmp_path, "run", "--set", "temperature=2") == EXIT_ERROR

    def test_set_requires_assignment(self, config_file, tmp_path):
        assert cli(config_file, tmp_path, "run", "--set", "dropout") == EXIT_ERROR


class TestOverrides:
    def _manifest_config(self, out):
        return json.loads((out / "blobs-uniform-p0.1-s0" / "manifest.json").read_text(encoding="utf-8"))["config"]

    def test_config_keys_have_flags(self, config_file, tmp_path):
        expected = {
            "alpha": 0.5,
            "sigma": 2.0,
            "quantile": 0.9,
            "pixels": 2,
            "factor": 1.5,
            "separation": 6.0,
            "n_features": 3,
            "dropout": 0.2,
            "learning_rate": 0.01,
            "batch_size": 16,
            "input_grad_stride": 2,
            "train_fraction": 0.7,
        }
        args = [item for key, value in expected.items() for item in ("--" + key.replace("_", "-"), str(value))]
        assert cli(config_file, tmp_path, "run", *args) == EXIT_OK
        config = self._manifest_config(tmp_path)
        assert {key: config[key] for key in expected} == expected

    def test_set_goes_through_validation(self, config_file, tmp_path):
        assert cli(config_file, tmp_path, "run", "--set", "dropout=0.3", "--set", "HIDDEN_SIZES=6,4") == EXIT_OK
        config = self._manifest_config(tmp_path)
        assert config["dropout"] == 0.3
        assert config["hidden_sizes"] == [6, 4]

    def test_set_wins_over_flag(self, config_file, tmp_path):
        assert cli(config_file, tmp_path, "run", "--epochs", "2", "--set", "epochs=4") == EXIT_OK
        assert self._manifest_config(tmp_path)["epochs"] == 4

    def test_invalid_set_value(self, config_file, tmp_path):
        assert cli(config_file, tmp_path, "run", "--set", "dropout=1.5") == EXIT_ERROR
