"""Tests for the thin-client CLI (driving the in-process service)."""

import json

import pytest
from click.testing import CliRunner

from blastsim.cli import main


@pytest.fixture
def runner():
    return CliRunner()


class TestRunCommand:
    def test_run_writes_artifacts(self, runner, tmp_path):
        out = tmp_path / "run1"
        result = runner.invoke(
            main,
            ["run", "--scenario", "scenario1", "--mechanism", "sp",
             "--ticks", "30", "--seed", "5", "--out", str(out)],
        )
        assert result.exit_code == 0, result.output
        for name in [
            "transactions.jsonl", "trades.jsonl", "metrics.csv",
            "world_snapshots.jsonl", "summary.csv", "privacy_report.json",
            "run_config.json",
        ]:
            assert (out / name).exists(), name
        summary = json.loads(result.output.splitlines()[0])
        assert summary["mechanism"] == "second_price"

    def test_run_from_config_file(self, runner, tmp_path):
        from blastsim.simctl import load_scenario

        config_path = tmp_path / "cfg.json"
        config_path.write_text(
            json.dumps(load_scenario("scenario2").model_dump())
        )
        out = tmp_path / "run2"
        result = runner.invoke(
            main,
            ["run", "--scenario", str(config_path), "--mechanism", "ds",
             "--ticks", "20", "--out", str(out)],
        )
        assert result.exit_code == 0, result.output
        assert (out / "summary.csv").exists()

    def test_batch_mode_emits_summaries_and_aggregate(self, runner, tmp_path):
        out = tmp_path / "batch"
        result = runner.invoke(
            main,
            ["run", "--scenario", "scenario1", "--mechanism", "ds",
             "--ticks", "20", "--seeds", "3", "--out", str(out)],
        )
        assert result.exit_code == 0, result.output
        assert len((out / "summary.csv").read_text().splitlines()) == 4
        aggregate = json.loads((out / "aggregate.json").read_text())
        assert aggregate["runs"] == 3

    def test_unknown_scenario_exits_2(self, runner, tmp_path):
        result = runner.invoke(
            main,
            ["run", "--scenario", "scenario99", "--out", str(tmp_path / "x")],
        )
        assert result.exit_code == 2

    def test_invalid_mechanism_flag_exits_2(self, runner, tmp_path):
        result = runner.invoke(
            main,
            ["run", "--scenario", "scenario1", "--mechanism", "english",
             "--out", str(tmp_path / "x")],
        )
        assert result.exit_code == 2

    def test_invalid_config_file_exits_2(self, runner, tmp_path):
        config_path = tmp_path / "bad.json"
        config_path.write_text('{"agents": []}')
        result = runner.invoke(
            main,
            ["run", "--scenario", str(config_path), "--out", str(tmp_path / "x")],
        )
        assert result.exit_code == 2


class TestVerifyPrivacyCommand:
    def test_verify_fresh_run(self, runner, tmp_path):
        out = tmp_path / "run"
        assert runner.invoke(
            main,
            ["run", "--scenario", "scenario1", "--mechanism", "sp",
             "--ticks", "30", "--out", str(out)],
        ).exit_code == 0
        result = runner.invoke(main, ["verify-privacy", "--run", str(out)])
        assert result.exit_code == 0, result.output
        report = json.loads(result.output)
        assert report["clean"] is True
        assert report["findings"] == []

    def test_missing_artifacts_exit_2(self, runner, tmp_path):
        result = runner.invoke(main, ["verify-privacy", "--run", str(tmp_path)])
        assert result.exit_code == 2
