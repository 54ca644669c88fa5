"""Schema parsing, validation, and corpus ingestion."""
import numpy as np
import pandas as pd
import pytest

from policyforest import (
    IngestError,
    RunRecord,
    SchemaError,
    ingest_runs,
    load_schema,
    parse_schema,
    save_schema,
    serialize_schema,
    validate_record,
)
from policyforest.schema import corpus_frame


def test_default_schema_shape(schema):
    assert len(schema.continuous) == 37
    assert len(schema.discrete) == 8
    assert schema.policy.name == "Policies"
    assert schema.region.name == "Region"
    assert len(schema.region.alternatives) == 46
    assert len(schema.names) == 45


def test_default_schema_policy_alternatives(schema):
    assert schema.policy.alternatives == (
        "No-policy",
        "Purchase",
        "Monetary aid",
        "Rent vouchers",
    )


def test_round_trip(schema, tmp_path):
    text = serialize_schema(schema)
    assert parse_schema(text) == schema
    path = tmp_path / "schema.yaml"
    save_schema(schema, path)
    assert load_schema(path) == schema


def test_round_trip_small(small_schema):
    assert parse_schema(serialize_schema(small_schema)) == small_schema


def test_parse_rejects_bad_bounds():
    text = """
parameters:
  - name: x
    kind: continuous
    lower: 1.0
    upper: 1.0
"""
    with pytest.raises(SchemaError):
        parse_schema(text)


def test_parse_rejects_single_alternative():
    text = """
parameters:
  - name: x
    kind: continuous
    lower: 0.0
    upper: 1.0
  - name: mode
    kind: discrete
    alternatives: [only]
"""
    with pytest.raises(SchemaError):
        parse_schema(text)


def test_parse_rejects_duplicate_names():
    text = """
parameters:
  - name: x
    kind: continuous
    lower: 0.0
    upper: 1.0
  - name: x
    kind: continuous
    lower: 0.0
    upper: 2.0
"""
    with pytest.raises(SchemaError):
        parse_schema(text)


def test_validate_record_clean(small_schema):
    rec = RunRecord(
        config={"alpha": 0.5, "beta": 0.0, "Policies": "Purchase", "Region": "North"},
        indicators={"gdp_index": 1.0},
    )
    assert validate_record(rec, small_schema) == []


def test_validate_record_flags_everything(small_schema):
    rec = RunRecord(
        config={"alpha": 1.5, "beta": "soup", "Policies": "Subsidy"},
        indicators={},
    )
    violations = validate_record(rec, small_schema)
    kinds = sorted(v.split(":")[0] for v in violations)
    assert kinds == ["missing", "non-numeric", "out-of-bounds", "unknown-alternative"]


def test_validate_record_nan_is_missing(small_schema):
    rec = RunRecord(
        config={"alpha": float("nan"), "beta": 0.0, "Policies": "Purchase", "Region": "North"},
        indicators={},
    )
    assert validate_record(rec, small_schema) == ["missing: alpha"]


def _small_corpus_csv(tmp_path, rows):
    path = tmp_path / "corpus.csv"
    pd.DataFrame(rows).to_csv(path, index=False)
    return path


def test_ingest_flags_without_dropping(small_schema, tmp_path):
    rows = [
        {"alpha": 0.2, "beta": 0.0, "Policies": "No-policy", "Region": "North", "gdp_index": 1.0, "gini_index": 0.3},
        {"alpha": 2.0, "beta": 0.0, "Policies": "No-policy", "Region": "North", "gdp_index": 1.1, "gini_index": 0.2},
        {"alpha": 0.4, "beta": 0.0, "Policies": "Subsidy", "Region": "South", "gdp_index": 0.9, "gini_index": 0.4},
    ]
    result = ingest_runs(_small_corpus_csv(tmp_path, rows), small_schema)
    assert len(result.frame) == 3
    assert list(result.valid) == [True, False, False]
    assert set(result.violations) == {1, 2}
    assert result.indicator_columns == ("gdp_index", "gini_index")


def test_ingest_missing_column_is_fatal(small_schema, tmp_path):
    rows = [{"alpha": 0.2, "Policies": "No-policy", "Region": "North", "gdp_index": 1.0}]
    with pytest.raises(IngestError, match="beta"):
        ingest_runs(_small_corpus_csv(tmp_path, rows), small_schema)


def test_ingest_unparseable_cell_is_fatal(small_schema, tmp_path):
    rows = [
        {"alpha": "soup", "beta": 0.0, "Policies": "No-policy", "Region": "North", "gdp_index": 1.0},
    ]
    with pytest.raises(IngestError):
        ingest_runs(_small_corpus_csv(tmp_path, rows), small_schema)


def test_corpus_frame_drops_invalid(small_schema, tmp_path):
    rows = [
        {"alpha": 0.2, "beta": 0.0, "Policies": "No-policy", "Region": "North", "gdp_index": 1.0, "gini_index": 0.3},
        {"alpha": 2.0, "beta": 0.0, "Policies": "No-policy", "Region": "North", "gdp_index": 1.1, "gini_index": 0.2},
        {"alpha": 0.4, "beta": 1.0, "Policies": "Purchase", "Region": "South", "gdp_index": 0.9, "gini_index": 0.4},
    ]
    result = ingest_runs(_small_corpus_csv(tmp_path, rows), small_schema)
    frame, ids = corpus_frame(result, small_schema)
    assert len(frame) == 2
    assert list(ids) == [0, 2]
    # a plain frame passes through untouched
    plain, plain_ids = corpus_frame(result.frame, small_schema)
    assert len(plain) == 3
    assert list(plain_ids) == [0, 1, 2]


def test_corpus_frame_from_records(small_schema):
    records = [
        RunRecord(config={"alpha": 0.1}, indicators={}, valid=True),
        RunRecord(config={"alpha": 0.2}, indicators={}, valid=False, violations=("missing: beta",)),
    ]
    frame, ids = corpus_frame(records, small_schema)
    assert len(frame) == 1
    assert list(ids) == [0]
