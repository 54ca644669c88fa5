"""Stage orchestration: artifacts, manifest skipping, and reruns."""
import json

import numpy as np
import pandas as pd
import pytest

from policyforest import (
    ConfigError,
    ForestHyperparams,
    LabelSpec,
    PipelineError,
    RunConfig,
    emulate,
    fit_forest,
    run_all,
    run_stage,
    split_train_test,
)
from policyforest.pipeline import (
    STAGE_ORDER,
    load_labeled_dataset,
    save_labeled_dataset,
)
from policyforest.labeling import LabelThresholds, label_dataset


def _tiny_config(tmp_path, **overrides):
    defaults = dict(
        out_dir=str(tmp_path / "work"),
        master_seed=5,
        n_trees=8,
        max_depth=6,
        toy_n=900,
        n_generate=4000,
        batch_size=1000,
    )
    defaults.update(overrides)
    return RunConfig(**defaults)


def test_config_validation(tmp_path):
    with pytest.raises(ConfigError):
        RunConfig(out_dir=str(tmp_path), n_trees=0)
    with pytest.raises(ConfigError):
        RunConfig(out_dir=str(tmp_path), test_fraction=1.5)
    with pytest.raises(ConfigError):
        RunConfig(out_dir=str(tmp_path), high_quantile=2.0)
    with pytest.raises(ConfigError):
        RunConfig(out_dir=str(tmp_path), workers=0)


def test_config_from_mapping_rejects_unknown_keys():
    with pytest.raises(ConfigError, match="n_treez"):
        RunConfig.from_mapping({"n_treez": 100})


def test_config_yaml_round_trip(tmp_path):
    config = _tiny_config(tmp_path, baseline="No-policy")
    path = tmp_path / "run.yaml"
    config.save(path)
    assert RunConfig.from_yaml(path) == config


def test_desk_scale_preset(tmp_path):
    config = RunConfig(out_dir=str(tmp_path)).desk_scale()
    assert config.n_trees == 100
    assert config.n_generate == 100_000


def test_labeled_dataset_file_round_trip(schema, toy_corpus, tmp_path):
    dataset = label_dataset(toy_corpus, schema, LabelSpec())
    thresholds = LabelThresholds(high=1.25, low=-0.5)
    path = tmp_path / "labeled.pfds"
    save_labeled_dataset(path, dataset, thresholds, LabelSpec())
    loaded, loaded_thresholds, loaded_spec = load_labeled_dataset(path)
    assert np.array_equal(loaded.features.data, dataset.features.data)
    assert np.array_equal(np.asarray(loaded.labels), np.asarray(dataset.labels))
    assert np.array_equal(np.asarray(loaded.ids), np.asarray(dataset.ids))
    assert loaded.features.columns == dataset.features.columns
    assert loaded_thresholds == thresholds
    assert loaded_spec == LabelSpec()


def test_run_all_produces_every_artifact(tmp_path):
    config = _tiny_config(tmp_path)
    manifest = run_all(config)
    assert set(manifest.stages) == set(STAGE_ORDER)
    out = config.out
    for name in (
        "world.yaml",
        "corpus.csv",
        "ingest.json",
        "labeled.pfds",
        "forest.pfor",
        "split.json",
        "eval.json",
        "moments.json",
        "configs.csv",
        "predictions.csv",
    ):
        assert (out / name).exists(), name
    report = out / "report"
    assert (report / "table_son_acps.csv").exists()
    assert (report / "fig_parameters.png").exists()

    predictions = pd.read_csv(out / "predictions.csv")
    assert len(predictions) == config.n_generate
    assert "predicted" in predictions.columns
    assert "vote_fraction" in predictions.columns
    assert "config_id" not in predictions.columns


def test_second_run_skips_everything(tmp_path):
    config = _tiny_config(tmp_path)
    run_all(config)
    manifest = None
    for stage in STAGE_ORDER:
        manifest, ran = run_stage(config, stage, manifest)
        assert not ran, f"{stage} reran without cause"


def test_parameter_change_reruns_dependents(tmp_path):
    config = _tiny_config(tmp_path)
    run_all(config)
    bumped = _tiny_config(tmp_path, n_trees=9)
    _, ran_label = run_stage(bumped, "label")
    assert not ran_label
    _, ran_train = run_stage(bumped, "train")
    assert ran_train


def test_tampered_output_is_a_conflict(tmp_path):
    config = _tiny_config(tmp_path)
    run_all(config)
    target = config.out / "moments.json"
    doc = json.loads(target.read_text())
    doc["note"] = "edited by hand"
    target.write_text(json.dumps(doc))
    with pytest.raises(PipelineError, match="changed outside the pipeline"):
        run_stage(config, "generate")


def test_deleted_artifact_is_rebuilt(tmp_path):
    config = _tiny_config(tmp_path)
    run_all(config)
    (config.out / "eval.json").unlink()
    _, ran = run_stage(config, "eval")
    assert ran
    assert (config.out / "eval.json").exists()


def test_missing_input_names_the_producer(tmp_path):
    config = _tiny_config(tmp_path)
    with pytest.raises(PipelineError, match="run stage 'label' first"):
        run_stage(config, "eval")


def test_unknown_stage(tmp_path):
    config = _tiny_config(tmp_path)
    with pytest.raises(ConfigError, match="unknown stage"):
        run_stage(config, "deploy")


def test_external_corpus_skips_toygen(schema, toy_corpus, tmp_path):
    corpus_path = tmp_path / "corpus.csv"
    toy_corpus.to_csv(corpus_path, index=False)
    config = _tiny_config(tmp_path, corpus=str(corpus_path))
    manifest = run_all(config)
    assert "toygen" not in manifest.stages
    assert (config.out / "predictions.csv").exists()


def test_reruns_are_byte_identical(tmp_path):
    config_a = _tiny_config(tmp_path / "a")
    config_b = _tiny_config(tmp_path / "b")
    run_all(config_a)
    run_all(config_b)
    for name in ("corpus.csv", "configs.csv", "predictions.csv"):
        assert (config_a.out / name).read_bytes() == (config_b.out / name).read_bytes(), name
    for name in ("table_son_acps.csv", "table_mean_acp.csv", "fig_sorted_policies.csv"):
        a = (config_a.out / "report" / name).read_bytes()
        b = (config_b.out / "report" / name).read_bytes()
        assert a == b, name


def test_emulate_stream_contract(schema, toy_corpus, toy_labeled):
    train, _ = split_train_test(toy_labeled, 0.25, seed=1)
    forest = fit_forest(train, ForestHyperparams(n_trees=5, max_depth=5), master_seed=1)
    chunk = toy_corpus[list(schema.names)].head(32)
    out = list(emulate(forest, [chunk], schema))
    assert len(out) == 1
    result = out[0]
    assert list(result["config_id"]) == list(range(32))
    assert set(result["predicted"].unique()) <= {0, 1}
    assert ((result["vote_fraction"] >= 0) & (result["vote_fraction"] <= 1)).all()
    # the input chunk is not mutated
    assert "predicted" not in chunk.columns
