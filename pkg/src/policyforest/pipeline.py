"""Stage orchestration: corpus to report, with persisted artifacts.

Each stage reads files, writes files, and records checksums in a
manifest, so reruns with unchanged inputs are no-ops and any artifact
edited outside the pipeline is reported instead of silently rebuilt.

Stage graph (artifact names relative to the work directory):

    toygen    schema                 -> world.yaml, corpus.csv
    ingest    schema, corpus         -> ingest.json
    label     schema, corpus         -> labeled.pfds
    train     labeled.pfds           -> forest.pfor, split.json
    eval      labeled + forest/split -> eval.json
    generate  schema, corpus         -> moments.json, configs.csv
    emulate   schema, forest, configs-> predictions.csv
    report    schema, predictions    -> report/*.csv, report/*.png

`toygen` only runs when no external corpus is configured. Worker counts
and read-chunk sizes never change artifact bytes; they are excluded from
the manifest fingerprints.
"""

from __future__ import annotations

import dataclasses
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from hashlib import sha256
from importlib import resources
from pathlib import Path
from typing import Callable, Iterable, Iterator, Mapping

import numpy as np
import pandas as pd
import yaml

from ._binio import read_container, write_container
from .analysis import emit_report, report_tables_from_aggregates
from .errors import AnalysisError, ConfigError, PipelineError
from .figures import render_figures
from .forest import (
    FeatureMatrix,
    Forest,
    ForestHyperparams,
    encode_frame,
    encoding_columns,
    evaluate,
    fit_forest,
    load_forest,
    save_forest,
)
from .labeling import (
    LabelSpec,
    LabelThresholds,
    LabeledDataset,
    compute_label_thresholds,
    label_dataset,
    split_train_test,
)
from .sampler import DEFAULT_BATCH_SIZE, fit_moments, iter_config_batches
from .schema import ParameterSchema, default_schema, ingest_runs, load_schema
from .toyabm import default_world, generate_corpus, save_world

__all__ = [
    "RunConfig",
    "PipelineManifest",
    "STAGE_ORDER",
    "DATASET_MAGIC",
    "save_labeled_dataset",
    "load_labeled_dataset",
    "checksum_file",
    "emulate",
    "run_stage",
    "run_all",
    "active_stages",
]

DATASET_MAGIC = b"PFDS"
DATASET_FORMAT_VERSION = 1
MANIFEST_NAME = "manifest.json"
MANIFEST_VERSION = 1

# report aggregation reads with a fixed chunk so float reductions do not
# depend on the configurable emulate chunk size
_REPORT_CHUNK = 10_000


# --------------------------------------------------------------------------
# Run configuration.
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class RunConfig:
    """Everything a full run needs, loadable from a YAML mapping.

    `corpus` left unset means the toy generator provides the corpus in
    the work directory; pointing it at an existing file skips `toygen`.
    """

    out_dir: str = "pfwork"
    schema_path: str | None = None
    corpus: str | None = None
    master_seed: int = 0
    n_trees: int = 10_000
    max_depth: int = 15
    features_per_split: int | None = None
    min_samples_leaf: int = 1
    test_fraction: float = 0.25
    n_generate: int = 1_000_000
    batch_size: int = DEFAULT_BATCH_SIZE
    workers: int = 1
    toy_n: int = 11_076
    toy_noise_sigma: float = 0.01
    high_indicator: str = "gdp_index"
    high_quantile: float = 0.75
    low_indicator: str = "gini_index"
    low_quantile: float = 0.25
    baseline: str | None = None

    def __post_init__(self) -> None:
        if self.master_seed < 0:
            raise ConfigError("master_seed must be non-negative")
        for name in ("n_trees", "max_depth", "min_samples_leaf", "n_generate",
                     "batch_size", "workers", "toy_n"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be at least 1")
        if self.features_per_split is not None and self.features_per_split < 1:
            raise ConfigError("features_per_split must be at least 1")
        if not 0.0 < self.test_fraction < 1.0:
            raise ConfigError("test_fraction must lie strictly between 0 and 1")
        if self.toy_noise_sigma < 0.0:
            raise ConfigError("toy_noise_sigma must be non-negative")
        if not 0.0 <= self.high_quantile <= 1.0 or not 0.0 <= self.low_quantile <= 1.0:
            raise ConfigError("label quantiles must lie in [0, 1]")

    @property
    def out(self) -> Path:
        return Path(self.out_dir)

    @property
    def corpus_path(self) -> Path:
        if self.corpus is None:
            return self.out / "corpus.csv"
        return Path(self.corpus)

    @property
    def uses_toy_corpus(self) -> bool:
        return self.corpus is None

    @property
    def label_spec(self) -> LabelSpec:
        return LabelSpec(
            high_indicator=self.high_indicator,
            high_quantile=self.high_quantile,
            low_indicator=self.low_indicator,
            low_quantile=self.low_quantile,
        )

    @property
    def hyperparams(self) -> ForestHyperparams:
        return ForestHyperparams(
            n_trees=self.n_trees,
            max_depth=self.max_depth,
            features_per_split=self.features_per_split,
            min_samples_leaf=self.min_samples_leaf,
        )

    def desk_scale(self) -> "RunConfig":
        """Small-forest, small-generation variant for quick full runs."""
        return dataclasses.replace(self, n_trees=100, n_generate=100_000)

    def load_schema(self) -> ParameterSchema:
        if self.schema_path is None:
            return default_schema()
        return load_schema(self.schema_path)

    @classmethod
    def from_mapping(cls, doc: Mapping) -> "RunConfig":
        if not isinstance(doc, Mapping):
            raise ConfigError(f"run config must be a mapping, got {type(doc).__name__}")
        fields = {f.name: f for f in dataclasses.fields(cls)}
        unknown = sorted(set(doc) - set(fields))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        for key, value in doc.items():
            if isinstance(value, bool):
                raise ConfigError(f"config key {key!r} must not be a boolean")
        try:
            return cls(**dict(doc))
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_yaml(cls, path: str | Path) -> "RunConfig":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from exc
        try:
            doc = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"config file {path} is not valid YAML: {exc}") from exc
        if doc is None:
            doc = {}
        return cls.from_mapping(doc)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def save(self, path: str | Path) -> None:
        text = yaml.safe_dump(self.to_dict(), sort_keys=True, allow_unicode=True)
        Path(path).write_text(text, encoding="utf-8")


# --------------------------------------------------------------------------
# Labeled-dataset container.
# --------------------------------------------------------------------------


def save_labeled_dataset(
    path: str | Path,
    dataset: LabeledDataset,
    thresholds: LabelThresholds,
    spec: LabelSpec,
) -> None:
    header = {
        "kind": "labeled-dataset",
        "columns": list(dataset.features.columns),
        "spans": {name: list(span) for name, span in dataset.features.spans.items()},
        "thresholds": {"high": thresholds.high, "low": thresholds.low},
        "label_spec": {
            "high_indicator": spec.high_indicator,
            "high_quantile": spec.high_quantile,
            "low_indicator": spec.low_indicator,
            "low_quantile": spec.low_quantile,
        },
    }
    arrays = {
        "features": np.ascontiguousarray(dataset.features.data, dtype=np.float64),
        "labels": dataset.labels.astype(np.uint8),
        "ids": dataset.ids.astype(np.int64),
    }
    write_container(path, DATASET_MAGIC, DATASET_FORMAT_VERSION, header, arrays)


def load_labeled_dataset(
    path: str | Path,
) -> tuple[LabeledDataset, LabelThresholds, LabelSpec]:
    version, header, arrays = read_container(path, DATASET_MAGIC)
    if version != DATASET_FORMAT_VERSION:
        raise PipelineError(f"{path}: unsupported dataset format version {version}")
    if header.get("kind") != "labeled-dataset":
        raise PipelineError(f"{path}: not a labeled-dataset container")
    features = FeatureMatrix(
        data=arrays["features"],
        columns=tuple(header["columns"]),
        spans={name: tuple(span) for name, span in header["spans"].items()},
    )
    dataset = LabeledDataset(
        features=features,
        labels=arrays["labels"].astype(np.int8),
        ids=arrays["ids"],
    )
    thresholds = LabelThresholds(**header["thresholds"])
    spec = LabelSpec(**header["label_spec"])
    return dataset, thresholds, spec


# --------------------------------------------------------------------------
# Manifest.
# --------------------------------------------------------------------------


def checksum_file(path: str | Path) -> str:
    digest = sha256()
    with open(path, "rb") as handle:
        while True:
            block = handle.read(1 << 20)
            if not block:
                break
            digest.update(block)
    return digest.hexdigest()


def _checksum_bytes(data: bytes) -> str:
    return sha256(data).hexdigest()


def _write_json(path: Path, doc: dict) -> None:
    text = json.dumps(doc, sort_keys=True, indent=2, ensure_ascii=False)
    path.write_text(text + "\n", encoding="utf-8")


@dataclass
class PipelineManifest:
    """Per-stage record of parameters and artifact checksums."""

    version: int = MANIFEST_VERSION
    master_seed: int = 0
    stages: dict[str, dict] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "master_seed": self.master_seed,
            "stages": self.stages,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "PipelineManifest":
        if not isinstance(doc, dict) or "stages" not in doc:
            raise PipelineError("manifest file is malformed")
        return cls(
            version=int(doc.get("version", MANIFEST_VERSION)),
            master_seed=int(doc.get("master_seed", 0)),
            stages=dict(doc["stages"]),
        )

    @classmethod
    def load(cls, directory: str | Path) -> "PipelineManifest":
        path = Path(directory) / MANIFEST_NAME
        if not path.exists():
            return cls()
        try:
            return cls.from_dict(json.loads(path.read_text(encoding="utf-8")))
        except (json.JSONDecodeError, ValueError, TypeError) as exc:
            raise PipelineError(f"cannot parse manifest {path}: {exc}") from exc

    def save(self, directory: str | Path) -> None:
        _write_json(Path(directory) / MANIFEST_NAME, self.to_dict())


# --------------------------------------------------------------------------
# Artifact resolution.
# --------------------------------------------------------------------------

_REPORT_TABLE_FILES = (
    "report/table_mean_acp.csv",
    "report/table_son_acps.csv",
    "report/table_std_acp.csv",
    "report/table_params.csv",
    "report/fig_sorted_policies.csv",
    "report/fig_mean_std.csv",
    "report/fig_parameters.csv",
)
_REPORT_FIGURE_FILES = (
    "report/fig_sorted_policies.png",
    "report/fig_mean_std.png",
    "report/fig_parameters.png",
)


@dataclass(frozen=True)
class _StageDef:
    inputs: tuple[str, ...]
    outputs: tuple[str, ...]
    params: Callable[[RunConfig], dict]
    run: Callable[[RunConfig], None]


def _artifact_path(config: RunConfig, name: str) -> Path | None:
    if name == "schema":
        return None if config.schema_path is None else Path(config.schema_path)
    if name == "corpus.csv":
        return config.corpus_path
    return config.out / name


def _artifact_checksum(config: RunConfig, name: str) -> str | None:
    path = _artifact_path(config, name)
    if name == "schema" and path is None:
        data = (
            resources.files("policyforest.data")
            .joinpath("default_schema.yaml")
            .read_bytes()
        )
        return _checksum_bytes(data)
    if path is None or not path.exists():
        return None
    return checksum_file(path)


def _producer_hint(config: RunConfig, name: str) -> str:
    producers = {
        "world.yaml": "toygen",
        "corpus.csv": "toygen",
        "ingest.json": "ingest",
        "labeled.pfds": "label",
        "forest.pfor": "train",
        "split.json": "train",
        "moments.json": "generate",
        "configs.csv": "generate",
        "predictions.csv": "emulate",
    }
    if name == "corpus.csv" and not config.uses_toy_corpus:
        return f"provide the corpus file at {config.corpus_path}"
    if name == "schema":
        return f"provide the schema file at {config.schema_path}"
    stage = producers.get(name)
    if stage:
        return f"run stage {stage!r} first"
    return "produce it before this stage"


# --------------------------------------------------------------------------
# Stage bodies.
# --------------------------------------------------------------------------


def _stage_toygen(config: RunConfig) -> None:
    schema = config.load_schema()
    world = default_world(schema, noise_sigma=config.toy_noise_sigma,
                          seed=config.master_seed)
    save_world(world, config.out / "world.yaml")
    generate_corpus(world, schema, config.toy_n, seed=config.master_seed,
                    path=config.corpus_path)


def _stage_ingest(config: RunConfig) -> None:
    schema = config.load_schema()
    result = ingest_runs(config.corpus_path, schema)
    kinds = Counter(
        message.split(":", 1)[0]
        for messages in result.violations.values()
        for message in messages
    )
    doc = {
        "n_rows": int(len(result.valid)),
        "n_valid": result.n_valid,
        "n_invalid": result.n_invalid,
        "violation_kinds": dict(sorted(kinds.items())),
        "indicator_columns": len(result.indicator_columns),
    }
    _write_json(config.out / "ingest.json", doc)


def _stage_label(config: RunConfig) -> None:
    schema = config.load_schema()
    spec = config.label_spec
    result = ingest_runs(config.corpus_path, schema)
    if result.n_valid == 0:
        raise PipelineError("corpus has no valid rows to label")
    thresholds = compute_label_thresholds(result, schema, spec)
    dataset = label_dataset(result, schema, spec)
    save_labeled_dataset(config.out / "labeled.pfds", dataset, thresholds, spec)


def _stage_train(config: RunConfig) -> None:
    dataset, _, _ = load_labeled_dataset(config.out / "labeled.pfds")
    train, test = split_train_test(
        dataset, test_fraction=config.test_fraction, seed=config.master_seed
    )
    forest = fit_forest(train, config.hyperparams, config.master_seed,
                        workers=config.workers)
    save_forest(forest, config.out / "forest.pfor")
    doc = {
        "test_fraction": config.test_fraction,
        "seed": config.master_seed,
        "n_train": len(train),
        "n_test": len(test),
        "train_ids": [int(i) for i in train.ids],
        "test_ids": [int(i) for i in test.ids],
    }
    _write_json(config.out / "split.json", doc)


def _stage_eval(config: RunConfig) -> None:
    dataset, _, _ = load_labeled_dataset(config.out / "labeled.pfds")
    split = json.loads((config.out / "split.json").read_text(encoding="utf-8"))
    position = {int(row_id): i for i, row_id in enumerate(dataset.ids)}
    try:
        test_rows = np.array([position[int(i)] for i in split["test_ids"]], dtype=np.int64)
    except KeyError as exc:
        raise PipelineError(
            f"split.json references row id {exc.args[0]} absent from labeled.pfds"
        ) from None
    test = dataset.subset(test_rows)
    forest = load_forest(config.out / "forest.pfor")
    report = evaluate(forest, test)
    cm = report.confusion
    metrics = report.metrics
    doc = {
        "confusion": {"tn": cm.tn, "fp": cm.fp, "fn": cm.fn, "tp": cm.tp},
        "metrics": {
            "accuracy": metrics.accuracy,
            "precision": metrics.precision,
            "recall": metrics.recall,
            "f1": metrics.f1,
        },
        "n_test": len(test),
        "n_train": len(dataset) - len(test),
    }
    _write_json(config.out / "eval.json", doc)


def _stage_generate(config: RunConfig) -> None:
    schema = config.load_schema()
    result = ingest_runs(config.corpus_path, schema)
    moments = fit_moments(result, schema)
    _write_json(config.out / "moments.json", moments.to_dict())
    # generation batching is pinned so the stream never depends on knobs
    path = config.out / "configs.csv"
    with open(path, "w", newline="", encoding="utf-8") as handle:
        handle.write(",".join(_csv_escape(name) for name in schema.names) + "\n")
        for _, frame in iter_config_batches(
            schema, moments, config.n_generate, config.master_seed,
            batch_size=DEFAULT_BATCH_SIZE,
        ):
            frame.to_csv(handle, header=False, index=False, lineterminator="\n")


def _csv_escape(text: str) -> str:
    if any(ch in text for ch in ',"\n\r'):
        return '"' + text.replace('"', '""') + '"'
    return text


def emulate(
    forest: Forest,
    config_chunks: Iterable[pd.DataFrame],
    schema: ParameterSchema,
) -> Iterator[pd.DataFrame]:
    """Apply the forest to a stream of config frames.

    Yields each chunk with config_id (running ordinal), predicted, and
    vote_fraction columns appended; order-preserving and pure, so equal
    configs get equal predictions.
    """
    expected, _ = encoding_columns(schema)
    if tuple(forest.columns) != tuple(expected):
        raise PipelineError(
            "forest encoding does not cover the config schema "
            f"({len(forest.columns)} trained columns vs {len(expected)} expected)"
        )
    next_id = 0
    for chunk in config_chunks:
        features = encode_frame(chunk, schema)
        classes, fractions = forest.predict(features)
        out = chunk.copy()
        out.insert(0, "config_id", np.arange(next_id, next_id + len(chunk), dtype=np.int64))
        out["predicted"] = classes.astype(np.int64)
        out["vote_fraction"] = fractions
        next_id += len(chunk)
        yield out


def _read_config_chunks(
    path: Path, schema: ParameterSchema, chunk_size: int
) -> Iterator[pd.DataFrame]:
    dtypes = {spec.name: str for spec in schema.discrete}
    for chunk in pd.read_csv(path, chunksize=chunk_size, dtype=dtypes):
        missing = [name for name in schema.names if name not in chunk.columns]
        if missing:
            raise PipelineError(f"configs.csv is missing columns: {missing}")
        yield chunk


def _stage_emulate(config: RunConfig) -> None:
    schema = config.load_schema()
    forest = load_forest(config.out / "forest.pfor")
    out_path = config.out / "predictions.csv"
    n_in = 0
    n_out = 0
    with open(out_path, "w", newline="", encoding="utf-8") as handle:
        header = [*schema.names, "predicted", "vote_fraction"]
        handle.write(",".join(_csv_escape(name) for name in header) + "\n")
        chunks = _read_config_chunks(config.out / "configs.csv", schema, config.batch_size)
        for predicted in emulate(forest, chunks, schema):
            n_in += len(predicted)
            body = predicted[header]
            body.to_csv(handle, header=False, index=False, lineterminator="\n")
            n_out += len(body)
    if n_in != n_out:
        raise PipelineError(f"emulate wrote {n_out} rows for {n_in} configs")


def _stage_report(config: RunConfig) -> None:
    schema = config.load_schema()
    if schema.region is None or schema.policy is None:
        raise PipelineError("report needs a schema with region and policy parameters")
    region_key = schema.region.name
    policy_key = schema.policy.name
    continuous = [spec.name for spec in schema.continuous]

    counts: dict[tuple[str, str], list[int]] = {}
    param_sums: dict[str, list[float]] = {name: [] for name in continuous}
    n_optimal = 0
    total = 0
    dtypes = {spec.name: str for spec in schema.discrete}
    for chunk in pd.read_csv(config.out / "predictions.csv",
                             chunksize=_REPORT_CHUNK, dtype=dtypes):
        for name in (region_key, policy_key, "predicted", *continuous):
            if name not in chunk.columns:
                raise PipelineError(f"predictions.csv is missing column {name!r}")
        total += len(chunk)
        grouped = chunk.groupby([region_key, policy_key], sort=False, observed=True)
        sizes = grouped.size()
        hits = grouped["predicted"].sum()
        for key, n in sizes.items():
            cell = counts.setdefault((str(key[0]), str(key[1])), [0, 0])
            cell[0] += int(n)
            cell[1] += int(hits.loc[key])
        mask = chunk["predicted"].to_numpy() == 1
        n_optimal += int(mask.sum())
        if mask.any():
            for name in continuous:
                values = chunk[name].to_numpy(dtype=np.float64)[mask]
                param_sums[name].append(float(values.sum()))
    if total == 0:
        raise AnalysisError("prediction set is empty")
    if n_optimal == 0:
        raise AnalysisError("no rows predicted optimal")

    means = {name: math.fsum(sums) / n_optimal for name, sums in param_sums.items()}
    tables = report_tables_from_aggregates(
        {key: (n, k) for key, (n, k) in counts.items()},
        means,
        schema,
        region_key=region_key,
        policy_key=policy_key,
        baseline=config.baseline,
    )
    report_dir = config.out / "report"
    emit_report(tables, report_dir)
    render_figures(tables, report_dir)


# --------------------------------------------------------------------------
# Stage table and the runner.
# --------------------------------------------------------------------------

STAGE_ORDER = (
    "toygen",
    "ingest",
    "label",
    "train",
    "eval",
    "generate",
    "emulate",
    "report",
)

_STAGES: dict[str, _StageDef] = {
    "toygen": _StageDef(
        inputs=("schema",),
        outputs=("world.yaml", "corpus.csv"),
        params=lambda c: {"n": c.toy_n, "noise_sigma": c.toy_noise_sigma,
                          "seed": c.master_seed},
        run=_stage_toygen,
    ),
    "ingest": _StageDef(
        inputs=("schema", "corpus.csv"),
        outputs=("ingest.json",),
        params=lambda c: {},
        run=_stage_ingest,
    ),
    "label": _StageDef(
        inputs=("schema", "corpus.csv"),
        outputs=("labeled.pfds",),
        params=lambda c: {
            "high_indicator": c.high_indicator,
            "high_quantile": c.high_quantile,
            "low_indicator": c.low_indicator,
            "low_quantile": c.low_quantile,
        },
        run=_stage_label,
    ),
    "train": _StageDef(
        inputs=("labeled.pfds",),
        outputs=("forest.pfor", "split.json"),
        params=lambda c: {
            "n_trees": c.n_trees,
            "max_depth": c.max_depth,
            "features_per_split": c.features_per_split,
            "min_samples_leaf": c.min_samples_leaf,
            "test_fraction": c.test_fraction,
            "seed": c.master_seed,
        },
        run=_stage_train,
    ),
    "eval": _StageDef(
        inputs=("labeled.pfds", "forest.pfor", "split.json"),
        outputs=("eval.json",),
        params=lambda c: {},
        run=_stage_eval,
    ),
    "generate": _StageDef(
        inputs=("schema", "corpus.csv"),
        outputs=("moments.json", "configs.csv"),
        params=lambda c: {"n": c.n_generate, "seed": c.master_seed},
        run=_stage_generate,
    ),
    "emulate": _StageDef(
        inputs=("schema", "forest.pfor", "configs.csv"),
        outputs=("predictions.csv",),
        params=lambda c: {},
        run=_stage_emulate,
    ),
    "report": _StageDef(
        inputs=("schema", "predictions.csv"),
        outputs=_REPORT_TABLE_FILES + _REPORT_FIGURE_FILES,
        params=lambda c: {"baseline": c.baseline},
        run=_stage_report,
    ),
}


def active_stages(config: RunConfig) -> tuple[str, ...]:
    """Stage order for this config; external corpora skip toygen."""
    if config.uses_toy_corpus:
        return STAGE_ORDER
    return tuple(name for name in STAGE_ORDER if name != "toygen")


def _input_checksums(config: RunConfig, stage: _StageDef, name: str) -> dict[str, str]:
    sums: dict[str, str] = {}
    for artifact in stage.inputs:
        checksum = _artifact_checksum(config, artifact)
        if checksum is None:
            path = _artifact_path(config, artifact)
            raise PipelineError(
                f"stage {name!r} is missing input artifact {artifact!r} "
                f"({path}); {_producer_hint(config, artifact)}"
            )
        sums[artifact] = checksum
    return sums


def run_stage(
    config: RunConfig,
    stage_name: str,
    manifest: PipelineManifest | None = None,
) -> tuple[PipelineManifest, bool]:
    """Run one stage if needed. Returns (manifest, ran).

    A stage is skipped when the manifest records the same inputs and
    parameters and every output still matches its recorded checksum.
    Outputs that exist but differ from the record raise a checksum
    conflict instead of being overwritten.
    """
    if stage_name not in _STAGES:
        raise ConfigError(f"unknown stage {stage_name!r}; stages are {STAGE_ORDER}")
    stage = _STAGES[stage_name]
    config.out.mkdir(parents=True, exist_ok=True)
    if manifest is None:
        manifest = PipelineManifest.load(config.out)
    manifest.master_seed = config.master_seed

    input_sums = _input_checksums(config, stage, stage_name)
    params = stage.params(config)
    entry = manifest.stages.get(stage_name)
    if entry is not None and entry.get("inputs") == input_sums and entry.get("params") == params:
        current = {a: _artifact_checksum(config, a) for a in stage.outputs}
        if all(value is not None for value in current.values()):
            if current == entry.get("outputs"):
                return manifest, False
            changed = sorted(a for a, v in current.items() if v != entry["outputs"].get(a))
            raise PipelineError(
                f"checksum conflict in stage {stage_name!r}: output artifact(s) "
                f"{', '.join(changed)} changed outside the pipeline; "
                "remove them or the manifest entry to force a rebuild"
            )
        # some outputs are gone: rebuild

    stage.run(config)

    output_sums: dict[str, str] = {}
    for artifact in stage.outputs:
        checksum = _artifact_checksum(config, artifact)
        if checksum is None:
            raise PipelineError(
                f"stage {stage_name!r} finished without producing {artifact!r}"
            )
        output_sums[artifact] = checksum
    manifest.stages[stage_name] = {
        "inputs": input_sums,
        "params": params,
        "outputs": output_sums,
    }
    manifest.save(config.out)
    return manifest, True


def run_all(
    config: RunConfig,
    echo: Callable[[str], None] | None = None,
) -> PipelineManifest:
    """Run every active stage in order."""
    manifest = PipelineManifest.load(config.out) if config.out.exists() else PipelineManifest()
    for name in active_stages(config):
        manifest, ran = run_stage(config, name, manifest)
        if echo is not None:
            echo(f"{name}: {'done' if ran else 'skipped (up to date)'}")
    return manifest
