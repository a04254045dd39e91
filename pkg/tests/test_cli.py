"""CLI subcommands, exit codes and end-to-end plumbing."""

import filecmp
import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from steatoquant.cli import EXIT_INPUT, main


@pytest.fixture(scope="module")
def runner():
    return CliRunner()


@pytest.fixture(scope="module")
def small_phantom(tmp_path_factory, runner):
    """A small analyzable phantom shared by the slower CLI tests."""
    d = tmp_path_factory.mktemp("cli") / "ph"
    res = runner.invoke(main, ["phantom", str(d), "--seed", "7",
                               "--isolated", "10", "--pairs", "3",
                               "--canvas", "2048"])
    assert res.exit_code == 0, res.output
    return d


def test_analyze_nonexistent_path(runner, tmp_path):
    res = runner.invoke(main, ["analyze", str(tmp_path / "missing")])
    assert res.exit_code == EXIT_INPUT
    assert "path not found" in res.output or "no base level" in res.output


def test_analyze_blank_slide(runner, tmp_path):
    blank = tmp_path / "blank"
    res = runner.invoke(main, ["phantom", str(blank), "--seed", "1",
                               "--isolated", "0", "--pairs", "0",
                               "--canvas", "1024"])
    assert res.exit_code == 0, res.output
    out = tmp_path / "out"
    res = runner.invoke(main, ["analyze", str(blank), "--out", str(out)])
    assert res.exit_code == 0, res.output
    # 1024^2 canvas tissue is below the default minimum area at L4
    assert "0 tissue(s)" in res.output
    assert (out / "blank_report.json").is_file()


def test_show_config(runner):
    res = runner.invoke(main, ["analyze", "whatever", "--show-config"])
    assert res.exit_code == 0
    cfg = json.loads(res.output)
    assert cfg["detection"]["hysteresis_low"] == 0.65
    assert cfg["detection"]["hysteresis_high"] == 0.8
    assert cfg["segregation"]["accept_quality"] == 0.7


def test_config_file_and_flag_overrides(runner, tmp_path):
    cfg_path = tmp_path / "cfg.toml"
    cfg_path.write_text("[detection]\nhysteresis_low = 0.5\n")
    res = runner.invoke(main, ["analyze", "x", "--config", str(cfg_path),
                               "--invert", "--show-config"])
    assert res.exit_code == 0
    cfg = json.loads(res.output)
    assert cfg["detection"]["hysteresis_low"] == 0.5
    assert cfg["detection"]["invert"] is True


def test_bad_config_exits_2(runner, tmp_path):
    cfg_path = tmp_path / "cfg.toml"
    cfg_path.write_text("[detection]\nhysteresis_low = 0.9\nhysteresis_high = 0.8\n")
    res = runner.invoke(main, ["analyze", "x", "--config", str(cfg_path)])
    assert res.exit_code == EXIT_INPUT
    assert "bad config" in res.output


def test_phantom_determinism(runner, tmp_path):
    args = ["--seed", "7", "--isolated", "5", "--pairs", "2",
            "--canvas", "1024"]
    d1, d2 = tmp_path / "a", tmp_path / "b"
    assert runner.invoke(main, ["phantom", str(d1)] + args).exit_code == 0
    assert runner.invoke(main, ["phantom", str(d2)] + args).exit_code == 0
    for name in ["level_0.png", "pyramid.json"]:
        assert filecmp.cmp(d1 / name, d2 / name, shallow=False)
    gt1 = json.loads((d1 / "phantom.json").read_text())
    gt2 = json.loads((d2 / "phantom.json").read_text())
    assert gt1["instances"] == gt2["instances"]


def test_phantom_no_pairs(runner, tmp_path):
    d = tmp_path / "nopairs"
    res = runner.invoke(main, ["phantom", str(d), "--pairs", "0",
                               "--isolated", "5", "--canvas", "1024"])
    assert res.exit_code == 0
    gt = json.loads((d / "phantom.json").read_text())
    assert all(i["pair_id"] is None for i in gt["instances"])


def test_phantom_crowded_spec_fails(runner, tmp_path):
    res = runner.invoke(main, ["phantom", str(tmp_path / "crowd"),
                               "--isolated", "5000", "--pairs", "0",
                               "--canvas", "1024"])
    assert res.exit_code == EXIT_INPUT
    assert "placement failure" in res.output


def test_phantom_invalid_spec(runner, tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"radius_range": [1.0, 2.0]}))
    res = runner.invoke(main, ["phantom", str(tmp_path / "p"),
                               "--spec", str(spec)])
    assert res.exit_code == EXIT_INPUT
    assert "invalid phantom spec" in res.output


def test_analyze_then_eval_round_trip(runner, small_phantom, tmp_path):
    out = tmp_path / "out"
    res = runner.invoke(main, ["analyze", str(small_phantom),
                               "--out", str(out)])
    assert res.exit_code == 0, res.output
    report = out / f"{small_phantom.name}_report.json"
    res = runner.invoke(main, ["eval", str(report),
                               str(small_phantom / "phantom.json"),
                               "--out", str(tmp_path / "metrics.json")])
    assert res.exit_code == 0, res.output
    assert "IS" in res.output and "OS" in res.output
    metrics = json.loads((tmp_path / "metrics.json").read_text())
    assert metrics["isolated_accuracy"] == 1.0
    assert metrics["overlap_split_accuracy"] == 1.0


def test_eval_mismatched_slide_ids(runner, small_phantom, tmp_path):
    out = tmp_path / "out"
    assert runner.invoke(main, ["analyze", str(small_phantom),
                                "--out", str(out)]).exit_code == 0
    report = out / f"{small_phantom.name}_report.json"
    other_truth = tmp_path / "phantom.json"
    truth = json.loads((small_phantom / "phantom.json").read_text())
    truth["slide_id"] = "someone-else"
    other_truth.write_text(json.dumps(truth))
    res = runner.invoke(main, ["eval", str(report), str(other_truth)])
    assert res.exit_code == EXIT_INPUT
    assert "slide id mismatch" in res.output


def test_eval_schema_mismatch(runner, small_phantom, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"wrong": "schema"}))
    res = runner.invoke(main, ["eval", str(bad),
                               str(small_phantom / "phantom.json")])
    assert res.exit_code == EXIT_INPUT
    assert "schema mismatch" in res.output


def test_analyze_debug_dir_emits_intermediates(runner, small_phantom, tmp_path):
    out = tmp_path / "out"
    dbg = tmp_path / "dbg"
    res = runner.invoke(main, ["analyze", str(small_phantom),
                               "--out", str(out), "--debug-dir", str(dbg)])
    assert res.exit_code == 0, res.output
    names = {p.name for p in dbg.iterdir()}
    assert "tissue_0_L4_mask.png" in names
    assert "tissue_0_rotated.png" in names
