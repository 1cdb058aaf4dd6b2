import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from cocreation.cli import cli

from conftest import CATALOG_PATH


@pytest.fixture()
def runner():
    return CliRunner()


def _write_catalog(tmp_path, doc):
    path = tmp_path / "catalog.json"
    path.write_text(json.dumps(doc), encoding="utf-8")
    return path


# -- catalog validate ---------------------------------------------------------------

def test_validate_bundled_catalog(runner):
    result = runner.invoke(cli, ["catalog", "validate"])
    assert result.exit_code == 0
    assert "9 offerings" in result.output


def test_validate_json_output(runner):
    result = runner.invoke(cli, ["catalog", "validate", "--json"])
    assert result.exit_code == 0
    doc = json.loads(result.output)
    assert doc["valid"] is True
    assert doc["offerings"] == 9


def test_validate_dangling_reference(runner, tmp_path, catalog_doc):
    catalog_doc["specs"] = [s for s in catalog_doc["specs"]
                            if s["id"] != "ss-cdn"]
    path = _write_catalog(tmp_path, catalog_doc)
    result = runner.invoke(cli, ["catalog", "validate", str(path)])
    assert result.exit_code == 1
    assert "ss-cdn" in result.output


def test_validate_missing_file_is_usage_error(runner):
    result = runner.invoke(cli, ["catalog", "validate", "/nope/catalog.json"])
    assert result.exit_code == 2


# -- bench run / report ----------------------------------------------------------------

def test_bench_run_writes_artifacts(runner, tmp_path):
    out = tmp_path / "bench"
    result = runner.invoke(cli, [
        "bench", "run", "--backend", "oracle",
        "--backend", "scripted:granite3.1-moe-3b",
        "--out", str(out), "--created-at", "2026-08-14T09:30:00+00:00"])
    assert result.exit_code == 0, result.output
    oracle_doc = json.loads((out / "oracle" / "outcome.json").read_text())
    assert oracle_doc["scores"]["baselineAchievement"] == "Pass"
    granite_doc = json.loads(
        (out / "granite3.1-moe-3b" / "outcome.json").read_text())
    # a failing score is still a completed run, so the exit code stays 0
    assert granite_doc["scores"]["baselineAchievement"] == "Fail"
    assert (out / "report.txt").exists()
    assert "Granite3.1-moe:3b" in result.output


def test_bench_run_unknown_backend_is_usage_error(runner, tmp_path):
    result = runner.invoke(cli, ["bench", "run", "--backend", "psychic",
                                 "--out", str(tmp_path / "x")])
    assert result.exit_code == 2


def test_bench_run_bad_remote_spec_is_usage_error(runner, tmp_path):
    result = runner.invoke(cli, ["bench", "run", "--backend", "remote:nope",
                                 "--out", str(tmp_path / "x")])
    assert result.exit_code == 2
    assert "remote:<url>,<model>" in result.output


def test_bench_run_missing_scenario_is_usage_error(runner, tmp_path):
    result = runner.invoke(cli, [
        "bench", "run", "--scenario", "/nope/scenario.json",
        "--out", str(tmp_path / "x")])
    assert result.exit_code == 2


def test_bench_report_formats(runner, tmp_path):
    out = tmp_path / "bench"
    runner.invoke(cli, ["bench", "run", "--backend", "oracle",
                        "--out", str(out)])
    result = runner.invoke(cli, ["bench", "report", str(out),
                                 "--format", "md"])
    assert result.exit_code == 0
    assert result.output.startswith("| Agent |")


def test_bench_report_merges_directories(runner, tmp_path):
    first, second = tmp_path / "a", tmp_path / "b"
    runner.invoke(cli, ["bench", "run", "--backend", "oracle",
                        "--out", str(first)])
    runner.invoke(cli, ["bench", "run", "--backend", "scripted:mistral-7b",
                        "--out", str(second)])
    result = runner.invoke(cli, ["bench", "report", str(first), str(second)])
    assert result.exit_code == 0
    assert "oracle" in result.output and "Mistral:7b" in result.output


def test_bench_report_empty_directory_fails(runner, tmp_path):
    result = runner.invoke(cli, ["bench", "report", str(tmp_path)])
    assert result.exit_code == 1


# -- session replay ---------------------------------------------------------------------

def _bench_oracle(runner, tmp_path):
    out = tmp_path / "bench"
    result = runner.invoke(cli, [
        "bench", "run", "--backend", "oracle", "--out", str(out),
        "--created-at", "2026-08-14T09:30:00+00:00"])
    assert result.exit_code == 0
    return out / "oracle" / "outcome.json"


def test_session_replay_round_trip(runner, tmp_path):
    outcome_path = _bench_oracle(runner, tmp_path)
    result = runner.invoke(cli, [
        "session", "replay", str(outcome_path),
        "--out", str(tmp_path / "replay")])
    assert result.exit_code == 0, result.output
    report = json.loads(result.output)
    assert report["draftMatches"] is True
    assert report["scoresMatch"] is True


def test_session_replay_flags_divergence(runner, tmp_path):
    outcome_path = _bench_oracle(runner, tmp_path)
    doc = json.loads(outcome_path.read_text(encoding="utf-8"))
    doc["orderDraftCanonical"] = doc["orderDraftCanonical"].replace(
        "780000", "780001")
    outcome_path.write_text(json.dumps(doc), encoding="utf-8")
    result = runner.invoke(cli, [
        "session", "replay", str(outcome_path),
        "--out", str(tmp_path / "replay")])
    assert result.exit_code == 1
    assert "diverged" in result.output


def test_session_replay_missing_file_is_usage_error(runner):
    result = runner.invoke(cli, ["session", "replay", "/nope/outcome.json"])
    assert result.exit_code == 2


# -- configuration precedence --------------------------------------------------------------

def test_config_file_supplies_defaults(runner, tmp_path):
    out = tmp_path / "from-config"
    config = tmp_path / "config.json"
    config.write_text(json.dumps(
        {"bench": {"run": {"backend": ["oracle"], "out": str(out)}}}),
        encoding="utf-8")
    result = runner.invoke(cli, ["--config", str(config), "bench", "run"])
    assert result.exit_code == 0, result.output
    assert (out / "oracle" / "outcome.json").exists()


def test_flag_beats_config_file(runner, tmp_path):
    config_out = tmp_path / "from-config"
    flag_out = tmp_path / "from-flag"
    config = tmp_path / "config.json"
    config.write_text(json.dumps(
        {"bench": {"run": {"backend": ["oracle"], "out": str(config_out)}}}),
        encoding="utf-8")
    result = runner.invoke(cli, ["--config", str(config), "bench", "run",
                                 "--out", str(flag_out)])
    assert result.exit_code == 0
    assert (flag_out / "oracle" / "outcome.json").exists()
    assert not config_out.exists()


def test_config_env_var_is_honored(runner, tmp_path):
    out = tmp_path / "via-env"
    config = tmp_path / "config.json"
    config.write_text(json.dumps(
        {"bench": {"run": {"backend": ["oracle"], "out": str(out)}}}),
        encoding="utf-8")
    result = runner.invoke(cli, ["bench", "run"],
                           env={"COCREATION_CONFIG": str(config)})
    assert result.exit_code == 0, result.output
    assert (out / "oracle" / "outcome.json").exists()


def test_config_file_must_be_json_object(runner, tmp_path):
    config = tmp_path / "config.json"
    config.write_text("[1, 2, 3]", encoding="utf-8")
    result = runner.invoke(cli, ["--config", str(config), "catalog",
                                 "validate"])
    assert result.exit_code == 2
    assert "JSON object" in result.output
