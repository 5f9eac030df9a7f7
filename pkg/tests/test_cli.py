"""Tests for the command-line interface."""

import json

import pytest
from click.testing import CliRunner

from src.lccs_adapt.cli import main
from src.lccs_adapt.config.settings import reset_settings


def invoke(*args):
    return CliRunner().invoke(main, ["--log-level", "WARNING", *map(str, args)])


@pytest.fixture
def files(tmp_path):
    """Source and target datasets plus a one-epoch source model."""
    paths = {
        "source": tmp_path / "source.npz",
        "target": tmp_path / "target.npz",
        "model": tmp_path / "source.json",
    }
    for domain in ("source", "target"):
        result = invoke("gen-data", "--domain", domain, "--size", 60, "--num-classes", 3,
                        "--seed", 1, "--out", paths[domain])
        assert result.exit_code == 0, result.output
    result = invoke("train-source", "--data", paths["source"], "--out", paths["model"],
                    "--epochs", 1, "--widths", "4,6", "--batch-size", 32)
    assert result.exit_code == 0, result.output
    return paths


class TestCommands:
    """Test each command end to end."""

    def test_show_config_reads_environment(self, monkeypatch):
        monkeypatch.setenv("LCCS_SIGMA_FLOOR", "0.01")
        reset_settings()
        result = invoke("show-config")
        assert result.exit_code == 0
        assert json.loads(result.output)["sigma_floor"] == 0.01

    def test_gen_data_reports_size(self, tmp_path):
        result = invoke("gen-data", "--size", 21, "--num-classes", 3, "--out", tmp_path / "d.npz")
        assert result.exit_code == 0
        assert "Wrote 21 samples" in result.output
        assert (tmp_path / "d.npz").exists()

    @pytest.mark.parametrize("strategy", ["lccs", "adabn", "ncc", "ft-classifier"])
    def test_adapt_then_eval(self, files, tmp_path, strategy):
        adapted = tmp_path / f"{strategy}.json"
        result = invoke("adapt", "--model", files["model"], "--data", files["target"], "--strategy", strategy,
                        "--k", 2, "--epochs", 2, "--out", adapted)
        assert result.exit_code == 0, result.output

        result = invoke("eval", "--model", adapted, "--data", files["target"], "--batch", 16,
                        "--metric", "accuracy", "--metric", "macro_f1")
        assert result.exit_code == 0, result.output
        scores = json.loads(result.output)
        assert scores["batch"] == 16
        assert 0.0 <= scores["accuracy"] <= 1.0
        assert 0.0 <= scores["macro_f1"] <= 1.0

    def test_online_strategy_adapts_during_eval(self, files, tmp_path):
        adapted = tmp_path / "tent.json"
        assert invoke("adapt", "--model", files["model"], "--data", files["target"], "--strategy", "tent",
                      "--tent-lr", 0.05, "--out", adapted).exit_code == 0
        assert json.loads(adapted.read_text(encoding="utf-8"))["provenance"]["extra"] == {"lr": "0.05"}
        result = invoke("eval", "--model", adapted, "--data", files["target"], "--batch", 8, "--order", "by-class")
        assert result.exit_code == 0, result.output
        assert json.loads(result.output)["order"] == "by-class"

    @pytest.mark.parametrize("adabn_data", ["support", "target"])
    def test_adabn_with_zero_epochs_runs_one_pass(self, files, tmp_path, adabn_data):
        adapted = tmp_path / "adabn.json"
        result = invoke("adapt", "--model", files["model"], "--data", files["target"], "--strategy", "adabn",
                        "--k", 2, "--epochs", 0, "--adabn-data", adabn_data, "--out", adapted)
        assert result.exit_code == 0, result.output
        assert invoke("eval", "--model", adapted, "--data", files["target"]).exit_code == 0

    def test_garbage_checkpoint(self, files, tmp_path):
        broken = tmp_path / "broken.json"
        broken.write_text("{\"format\": ", encoding="utf-8")
        result = invoke("eval", "--model", broken, "--data", files["target"])
        assert result.exit_code == 1
        assert "[load]" in result.output

    def test_support_too_large(self, files, tmp_path):
        result = invoke("adapt", "--model", files["model"], "--data", files["target"], "--k", 50,
                        "--out", tmp_path / "never.json")
        assert result.exit_code == 1
        assert "[support]" in result.output


class TestRunAndReport:
    """Test config-driven runs and report merging."""

    def test_run_then_aggregate(self, tiny_config, tmp_path):
        config_path = tmp_path / "tiny.json"
        config_path.write_text(tiny_config(strategy="none").model_dump_json(), encoding="utf-8")
        report_path = tmp_path / "tiny.csv"

        result = invoke("run", "--config", config_path, "--report", report_path)
        assert result.exit_code == 0, result.output
        assert "3 records" in result.output

        result = invoke("report", "--input", report_path, "--aggregate")
        assert result.exit_code == 0
        lines = result.output.splitlines()
        assert lines[0].startswith("strategy,k,n,stream_batch")
        assert len(lines) == 4

    def test_report_rejects_foreign_csv(self, tmp_path):
        path = tmp_path / "foreign.csv"
        path.write_text("a,b\n1,2\n", encoding="utf-8")
        result = invoke("report", "--input", path)
        assert result.exit_code == 1
        assert "[report]" in result.output

    def test_invalid_config(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{\"seeds\": []}", encoding="utf-8")
        result = invoke("run", "--config", path)
        assert result.exit_code == 1
        assert "[config]" in result.output
