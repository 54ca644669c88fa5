"""Optimal-run labeling and train/test splitting.

A run is labeled optimal (1) when its high-is-good indicator reaches the
corpus' upper quantile and its low-is-good indicator stays at or below the
lower quantile, both thresholds computed over the pooled corpus. Inclusive
comparisons on both sides. Quantiles use the linear-interpolation scheme
h = (n - 1) * q over the sorted values.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .errors import LabelingError
from .forest import FeatureMatrix, encode_frame
from .schema import ParameterSchema, corpus_frame


@dataclass(frozen=True)
class LabelSpec:
    """Which indicators define optimality and at which pooled quantiles."""

    high_indicator: str = "gdp_index"
    high_quantile: float = 0.75
    low_indicator: str = "gini_index"
    low_quantile: float = 0.25

    def __post_init__(self):
        if not self.high_indicator or not self.low_indicator:
            raise LabelingError("label spec needs explicit indicator column names")
        for q in (self.high_quantile, self.low_quantile):
            if not 0.0 <= q <= 1.0:
                raise LabelingError(f"quantile {q} outside [0, 1]")


def compute_quantile(values, q: float) -> float:
    """Linear-interpolation quantile: h = (n - 1) * q on the sorted values."""
    if not 0.0 <= q <= 1.0:
        raise LabelingError(f"quantile {q} outside [0, 1]")
    xs = np.sort(np.asarray(values, dtype=np.float64))
    if xs.size == 0:
        raise LabelingError("cannot take a quantile of an empty sequence")
    h = (xs.size - 1) * q
    i = int(math.floor(h))
    frac = h - i
    if frac == 0.0:
        return float(xs[i])
    return float(xs[i] + frac * (xs[i + 1] - xs[i]))


@dataclass(frozen=True)
class LabelThresholds:
    high: float
    low: float


@dataclass
class LabeledDataset:
    """Encoded features, binary labels, and source-row provenance ids."""

    features: FeatureMatrix
    labels: np.ndarray  # int8, 1 = optimal
    ids: np.ndarray     # int64 row ordinals in the source corpus

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int8)
        self.ids = np.asarray(self.ids, dtype=np.int64)
        n = self.features.n_rows
        if len(self.labels) != n or len(self.ids) != n:
            raise LabelingError("features, labels, and ids disagree on row count")

    def __len__(self) -> int:
        return self.features.n_rows

    @property
    def n_optimal(self) -> int:
        return int(self.labels.sum())

    def subset(self, indices: np.ndarray) -> "LabeledDataset":
        indices = np.asarray(indices, dtype=np.int64)
        return LabeledDataset(
            features=FeatureMatrix(
                data=self.features.data[indices],
                columns=self.features.columns,
                spans=self.features.spans,
            ),
            labels=self.labels[indices],
            ids=self.ids[indices],
        )


def compute_label_thresholds(data, schema: ParameterSchema, spec: LabelSpec) -> LabelThresholds:
    """Pooled quantile thresholds the labels are cut at."""
    frame, _ = corpus_frame(data, schema)
    for name in (spec.high_indicator, spec.low_indicator):
        if name not in frame.columns:
            raise LabelingError(f"corpus has no indicator column {name!r}")
    return LabelThresholds(
        high=compute_quantile(frame[spec.high_indicator].to_numpy(), spec.high_quantile),
        low=compute_quantile(frame[spec.low_indicator].to_numpy(), spec.low_quantile),
    )


def label_dataset(data, schema: ParameterSchema, spec: LabelSpec) -> LabeledDataset:
    """Label valid corpus rows against pooled quantile thresholds.

    ``data`` may be an IngestResult, a record list, or a corpus frame.
    Rows flagged invalid at ingestion are excluded (they are still counted
    by the ingest stage); ids report surviving rows' source ordinals.
    """
    frame, ids = corpus_frame(data, schema)
    if len(frame) == 0:
        raise LabelingError("no valid records to label")
    thresholds = compute_label_thresholds(frame, schema, spec)
    high = frame[spec.high_indicator].to_numpy(dtype=np.float64)
    low = frame[spec.low_indicator].to_numpy(dtype=np.float64)
    labels = ((high >= thresholds.high) & (low <= thresholds.low)).astype(np.int8)
    return LabeledDataset(features=encode_frame(frame, schema), labels=labels, ids=ids)


def _stratified_quotas(n_by_class: list[int], n_test: int, fraction: float) -> list[int]:
    """Largest-remainder allocation of the test quota across classes."""
    quotas = [fraction * n_c for n_c in n_by_class]
    base = [math.floor(q) for q in quotas]
    leftover = n_test - sum(base)
    order = sorted(range(len(base)), key=lambda c: (-(quotas[c] - base[c]), c))
    for c in order:
        if leftover <= 0:
            break
        if base[c] < n_by_class[c]:
            base[c] += 1
            leftover -= 1
    # paranoia: if rounding left anything, take from whoever has capacity
    for c in range(len(base)):
        while leftover > 0 and base[c] < n_by_class[c]:
            base[c] += 1
            leftover -= 1
    return base


def split_train_test(
    dataset: LabeledDataset,
    test_fraction: float = 0.25,
    seed: int = 0,
    stratified: bool = True,
) -> tuple[LabeledDataset, LabeledDataset]:
    """Deterministic seeded split into (train, test); disjoint, exhaustive.

    Stratified mode keeps each split's optimal share within one sample of
    the corpus share by allocating per-class test quotas (largest
    remainder) before shuffling within each class.
    """
    n = len(dataset)
    if n == 0:
        raise LabelingError("cannot split an empty dataset")
    if not 0.0 < test_fraction < 1.0:
        raise LabelingError(f"test fraction {test_fraction} outside (0, 1)")
    n_test = int(round(n * test_fraction))
    if n_test == 0 or n_test == n:
        raise LabelingError(f"test fraction {test_fraction} produces an empty split")

    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    if stratified:
        class_indices = [np.nonzero(dataset.labels == c)[0] for c in (0, 1)]
        quotas = _stratified_quotas([len(ix) for ix in class_indices], n_test, test_fraction)
        picks = []
        for ix, quota in zip(class_indices, quotas):
            if len(ix) == 0:
                continue
            perm = rng.permutation(len(ix))
            picks.append(ix[perm[:quota]])
        test_idx = np.sort(np.concatenate(picks)) if picks else np.empty(0, dtype=np.int64)
    else:
        perm = rng.permutation(n)
        test_idx = np.sort(perm[:n_test])

    mask = np.zeros(n, dtype=bool)
    mask[test_idx] = True
    train_idx = np.nonzero(~mask)[0]
    return dataset.subset(train_idx), dataset.subset(test_idx)
