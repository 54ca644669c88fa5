"""Command-line behavior: exit codes, output, and option plumbing."""
import json

import pytest
import yaml

from policyforest.cli import SEED_ENV_VAR, main


def _yaml_config(tmp_path, **overrides):
    doc = dict(
        out_dir=str(tmp_path / "work"),
        master_seed=3,
        n_trees=6,
        max_depth=5,
        toy_n=800,
        n_generate=4000,
        batch_size=1000,
    )
    doc.update(overrides)
    path = tmp_path / "run.yaml"
    path.write_text(yaml.safe_dump(doc), encoding="utf-8")
    return path


def test_help_exits_zero(capsys):
    assert main(["--help"]) == 0
    assert "Commands" in capsys.readouterr().out


def test_unknown_command_exits_two(capsys):
    assert main(["discombobulate"]) == 2
    assert "error" in capsys.readouterr().err.lower()


def test_unknown_option_exits_two(capsys):
    assert main(["train", "--bogus"]) == 2


def test_schema_check_default(capsys):
    assert main(["schema-check"]) == 0
    out = capsys.readouterr().out
    assert "37 continuous" in out
    assert "8 discrete" in out


def test_schema_check_bad_file(tmp_path, capsys):
    bad = tmp_path / "schema.yaml"
    bad.write_text("parameters: [{name: x, kind: continuous, lower: 2, upper: 1}]")
    assert main(["schema-check", "--schema", str(bad)]) == 2
    assert "error:" in capsys.readouterr().err


def test_missing_config_file_exits_two(tmp_path, capsys):
    assert main(["train", "--config", str(tmp_path / "nope.yaml")]) == 2


def test_stage_sequence_and_eval_output(tmp_path, capsys):
    config = str(_yaml_config(tmp_path))
    for command in ("toygen", "ingest", "label", "train"):
        assert main([command, "--config", config]) == 0, command
    capsys.readouterr()
    assert main(["eval", "--config", config]) == 0
    out = capsys.readouterr().out
    assert "observed" in out
    assert "accuracy" in out

    assert main(["generate", "--config", config]) == 0
    assert main(["emulate", "--config", config]) == 0
    assert main(["report", "--config", config]) == 0
    work = tmp_path / "work"
    assert (work / "report" / "table_son_acps.csv").exists()
    assert (work / "report" / "fig_mean_std.png").exists()


def test_eval_before_train_fails_cleanly(tmp_path, capsys):
    config = str(_yaml_config(tmp_path))
    code = main(["eval", "--config", config])
    assert code == 1
    assert "run stage" in capsys.readouterr().err


def test_run_all_with_flag_overrides(tmp_path, capsys):
    config = str(_yaml_config(tmp_path))
    assert main(["run-all", "--config", config, "--trees", "5", "--n", "4000"]) == 0
    forest_meta = json.loads((tmp_path / "work" / "manifest.json").read_text())
    assert forest_meta["stages"]["train"]["params"]["n_trees"] == 5


def test_seed_env_var(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv(SEED_ENV_VAR, "77")
    config = str(_yaml_config(tmp_path))
    assert main(["toygen", "--config", config]) == 0
    manifest = json.loads((tmp_path / "work" / "manifest.json").read_text())
    assert manifest["master_seed"] == 77


def test_explicit_seed_beats_env(tmp_path, monkeypatch):
    monkeypatch.setenv(SEED_ENV_VAR, "77")
    config = str(_yaml_config(tmp_path))
    assert main(["toygen", "--config", config, "--seed", "12"]) == 0
    manifest = json.loads((tmp_path / "work" / "manifest.json").read_text())
    assert manifest["master_seed"] == 12


def test_desk_scale_flag_then_explicit_override(tmp_path):
    config = str(_yaml_config(tmp_path))
    assert main(["run-all", "--config", config, "--desk-scale", "--trees", "4", "--n", "4000"]) == 0
    manifest = json.loads((tmp_path / "work" / "manifest.json").read_text())
    # the explicit flag wins over the preset
    assert manifest["stages"]["train"]["params"]["n_trees"] == 4
    assert manifest["stages"]["generate"]["params"]["n"] == 4000
