"""Bagged CART forest over encoded run configurations.

Encoding: continuous parameters pass through as float64 columns in schema
order; each discrete parameter expands to one column per alternative, in
alternative order, holding 0.0/1.0. Splits on such columns use threshold
0.5, so one-hot membership tests come out of the same midpoint machinery
as real-valued splits.

Split search is exact CART on binary labels: candidate thresholds are the
midpoints between consecutive distinct sorted values of each candidate
feature, scored by child-size-weighted Gini impurity. Rows with value <=
threshold go left. A split must strictly reduce impurity, both children
must hold at least min_samples_leaf rows, and impurity ties break to the
lowest feature index, then the lowest threshold, which makes training
deterministic for a fixed RNG.

Randomness: each tree draws a bootstrap sample (n rows with replacement)
and, at every node, a fresh feature subset of size features_per_split
(default ceil(sqrt(n_columns))), consumed in depth-first pre-order. Tree i
of a forest uses a PCG64 generator seeded from (master_seed, i), so any
partition of trees across workers reproduces the single-worker forest.

Ties vote non-optimal: a leaf with equal class counts predicts 0, and a
forest vote fraction of exactly one half predicts 0.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import TYPE_CHECKING, NamedTuple

import multiprocessing
import numpy as np
import pandas as pd

from . import _binio
from ._seeds import DOMAIN_TREE, derive_rng
from .errors import ArtifactFileError, ForestError
from .schema import ParameterSchema, RunRecord

if TYPE_CHECKING:
    from .labeling import LabeledDataset

FOREST_MAGIC = b"PFOR"
FOREST_FORMAT_VERSION = 1


# ---------------------------------------------------------------------------
# feature encoding

@dataclass(frozen=True)
class FeatureMatrix:
    """Encoded configurations: float64 matrix plus column bookkeeping.

    ``spans`` maps each parameter name to its half-open column range;
    continuous parameters span one column, discrete ones span one column
    per alternative.
    """

    data: np.ndarray
    columns: tuple[str, ...]
    spans: dict[str, tuple[int, int]]

    def __post_init__(self):
        if self.data.ndim != 2 or self.data.shape[1] != len(self.columns):
            raise ForestError("feature matrix shape does not match its column names")

    @property
    def n_rows(self) -> int:
        return self.data.shape[0]

    @property
    def n_columns(self) -> int:
        return self.data.shape[1]


def encoding_columns(schema: ParameterSchema) -> tuple[tuple[str, ...], dict[str, tuple[int, int]]]:
    """Column names and per-parameter spans for a schema's encoding."""
    columns: list[str] = []
    spans: dict[str, tuple[int, int]] = {}
    for p in schema.continuous:
        spans[p.name] = (len(columns), len(columns) + 1)
        columns.append(p.name)
    for p in schema.discrete:
        start = len(columns)
        for alt in p.alternatives:
            columns.append(f"{p.name}={alt}")
        spans[p.name] = (start, len(columns))
    return tuple(columns), spans


def encode_frame(frame: pd.DataFrame, schema: ParameterSchema) -> FeatureMatrix:
    """Encode a frame of configurations (vectorized path).

    Raises ForestError on any discrete cell outside the declared
    alternatives; bounds are not enforced here, that is ingestion's job.
    """
    columns, spans = encoding_columns(schema)
    n = len(frame)
    data = np.empty((n, len(columns)), dtype=np.float64)
    for p in schema.continuous:
        if p.name not in frame.columns:
            raise ForestError(f"frame is missing parameter column {p.name!r}")
        data[:, spans[p.name][0]] = frame[p.name].to_numpy(dtype=np.float64)
    for p in schema.discrete:
        if p.name not in frame.columns:
            raise ForestError(f"frame is missing parameter column {p.name!r}")
        values = frame[p.name].astype(str).to_numpy()
        start, stop = spans[p.name]
        seen = np.zeros(n, dtype=bool)
        for j, alt in enumerate(p.alternatives):
            hit = values == alt
            data[:, start + j] = hit
            seen |= hit
        if not seen.all():
            bad = values[~seen][0]
            raise ForestError(f"unknown alternative {bad!r} for parameter {p.name!r}")
    return FeatureMatrix(data=data, columns=columns, spans=spans)


def encode_features(records: list[RunRecord] | pd.DataFrame, schema: ParameterSchema) -> FeatureMatrix:
    """Encode run records (or an equivalent frame) into a FeatureMatrix."""
    if isinstance(records, pd.DataFrame):
        return encode_frame(records, schema)
    if not records:
        raise ForestError("cannot encode an empty record list")
    frame = pd.DataFrame(
        {name: [r.config.get(name) for r in records] for name in schema.names}
    )
    return encode_frame(frame, schema)


# ---------------------------------------------------------------------------
# impurity and split search

def gini_impurity(counts) -> float:
    """Gini impurity 1 - sum_c p_c^2 of a class-count vector (0.0 if empty)."""
    counts = np.asarray(counts, dtype=np.float64)
    total = counts.sum()
    if total <= 0:
        return 0.0
    p = counts / total
    return float(1.0 - np.dot(p, p))


class SplitChoice(NamedTuple):
    feature: int
    threshold: float
    impurity: float  # child-size-weighted Gini of the chosen split


def best_split(
    X: np.ndarray,
    y: np.ndarray,
    rows: np.ndarray,
    features: np.ndarray,
    min_samples_leaf: int = 1,
) -> SplitChoice | None:
    """Exact best split of ``rows`` among ``features``, or None.

    Scores every midpoint between consecutive distinct values and keeps
    the split maximizing S = sum over children of (c0^2 + c1^2) / n_child,
    which orders splits identically to minimizing weighted Gini. None when
    no candidate strictly beats the parent node or respects the leaf-size
    floor. Ties break to the lowest feature index, then lowest threshold
    (features are scanned in ascending order and positions in ascending
    threshold order, so the first maximum wins).
    """
    m = rows.shape[0]
    if m < 2 * min_samples_leaf or m < 2:
        return None
    features = np.sort(np.asarray(features, dtype=np.int64))
    sub = X[np.ix_(rows, features)]
    ysub = y[rows].astype(np.float64)
    total1 = float(ysub.sum())
    total0 = float(m) - total1
    if total1 == 0.0 or total0 == 0.0:
        return None  # pure node, nothing to gain
    parent_score = (total0 * total0 + total1 * total1) / m

    order = np.argsort(sub, axis=0)
    xs = np.take_along_axis(sub, order, axis=0)
    ys = ysub[order]

    nl = np.arange(1, m, dtype=np.float64)[:, None]     # left sizes at cut i
    c1l = np.cumsum(ys, axis=0)[:-1, :]
    c0l = nl - c1l
    nr = m - nl
    c1r = total1 - c1l
    c0r = total0 - c0l
    score = (c0l * c0l + c1l * c1l) / nl + (c0r * c0r + c1r * c1r) / nr

    valid = xs[:-1, :] < xs[1:, :]
    if min_samples_leaf > 1:
        sizes_ok = (nl >= min_samples_leaf) & (nr >= min_samples_leaf)
        valid &= sizes_ok
    score = np.where(valid, score, -np.inf)

    best_pos = np.argmax(score, axis=0)                 # first max: lowest threshold
    best_per_feature = score[best_pos, np.arange(score.shape[1])]
    col = int(np.argmax(best_per_feature))              # first max: lowest feature index
    best_score = float(best_per_feature[col])
    if not (best_score > parent_score):
        return None
    pos = int(best_pos[col])
    threshold = float((xs[pos, col] + xs[pos + 1, col]) / 2.0)
    impurity = float(1.0 - best_score / m)
    return SplitChoice(feature=int(features[col]), threshold=threshold, impurity=impurity)


# ---------------------------------------------------------------------------
# trees

@dataclass(frozen=True)
class TreeNode:
    """Structural view of one node; leaves have feature -1 and children -1."""

    feature: int
    threshold: float
    left: int
    right: int
    count0: int
    count1: int

    @property
    def is_leaf(self) -> bool:
        return self.feature < 0


@dataclass(eq=False)
class Tree:
    """A fitted CART tree as parallel pre-order node arrays."""

    feature: np.ndarray    # int32, -1 marks a leaf
    threshold: np.ndarray  # float64, NaN at leaves
    left: np.ndarray       # int32 child node index, -1 at leaves
    right: np.ndarray
    count0: np.ndarray     # int64 training-sample class counts at the node
    count1: np.ndarray

    def __post_init__(self):
        # precomputed leaf votes; equal counts vote class 0
        self.leaf_class = (self.count1 > self.count0).astype(np.uint8)

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def node(self, i: int) -> TreeNode:
        return TreeNode(
            feature=int(self.feature[i]),
            threshold=float(self.threshold[i]),
            left=int(self.left[i]),
            right=int(self.right[i]),
            count0=int(self.count0[i]),
            count1=int(self.count1[i]),
        )

    def depth(self) -> int:
        """Longest root-to-leaf edge count."""
        depths = np.zeros(self.n_nodes, dtype=np.int32)
        out = 0
        for i in range(self.n_nodes):  # parents precede children in pre-order
            if self.feature[i] >= 0:
                for child in (self.left[i], self.right[i]):
                    depths[child] = depths[i] + 1
            else:
                out = max(out, int(depths[i]))
        return out

    def predict_classes(self, X: np.ndarray) -> np.ndarray:
        """Vote of this tree for each row of X (vectorized level descent)."""
        n = X.shape[0]
        idx = np.zeros(n, dtype=np.int32)
        if self.n_nodes == 1:
            return np.full(n, self.leaf_class[0], dtype=np.uint8)
        for _ in range(self.n_nodes):  # bounded; real depth is far smaller
            f = self.feature[idx]
            active = np.nonzero(f >= 0)[0]
            if active.size == 0:
                break
            at = idx[active]
            go_left = X[active, f[active]] <= self.threshold[at]
            idx[active] = np.where(go_left, self.left[at], self.right[at])
        return self.leaf_class[idx]

    def same_as(self, other: "Tree") -> bool:
        return (
            np.array_equal(self.feature, other.feature)
            and np.allclose(self.threshold, other.threshold, equal_nan=True)
            and np.array_equal(self.left, other.left)
            and np.array_equal(self.right, other.right)
            and np.array_equal(self.count0, other.count0)
            and np.array_equal(self.count1, other.count1)
        )


@dataclass(frozen=True)
class ForestHyperparams:
    """Training knobs. features_per_split None resolves to ceil(sqrt(d))."""

    n_trees: int = 10_000
    max_depth: int = 15
    features_per_split: int | None = None
    min_samples_leaf: int = 1

    def __post_init__(self):
        if self.n_trees < 1:
            raise ForestError("n_trees must be positive")
        if self.max_depth < 1:
            raise ForestError("max_depth must be positive")
        if self.features_per_split is not None and self.features_per_split < 1:
            raise ForestError("features_per_split must be positive")
        if self.min_samples_leaf < 1:
            raise ForestError("min_samples_leaf must be positive")

    def resolve(self, n_columns: int) -> "ForestHyperparams":
        k = self.features_per_split
        if k is None:
            k = math.ceil(math.sqrt(n_columns))
        return replace(self, features_per_split=min(k, n_columns))


def grow_tree(
    X: np.ndarray,
    y: np.ndarray,
    rng: np.random.Generator,
    hyperparams: ForestHyperparams,
    rows: np.ndarray | None = None,
) -> Tree:
    """Grow one tree on the given rows (no bootstrap; fit_tree adds it).

    Nodes are laid out in depth-first pre-order; the feature subset for a
    node is drawn from ``rng`` when the node is expanded, which pins the
    consumption order and makes growth reproducible.
    """
    hp = hyperparams.resolve(X.shape[1])
    if rows is None:
        rows = np.arange(X.shape[0], dtype=np.int64)
    if rows.size == 0:
        raise ForestError("cannot grow a tree on zero rows")

    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    count0: list[int] = []
    count1: list[int] = []
    d = X.shape[1]

    # stack of (rows, depth, parent index, is_left_child); right pushed first
    stack: list[tuple[np.ndarray, int, int, bool]] = [(rows, 0, -1, False)]
    while stack:
        node_rows, depth, parent, is_left = stack.pop()
        node_id = len(feature)
        if parent >= 0:
            if is_left:
                left[parent] = node_id
            else:
                right[parent] = node_id
        m = node_rows.size
        ones = int(y[node_rows].sum())
        zeros = m - ones
        count0.append(zeros)
        count1.append(ones)
        feature.append(-1)
        threshold.append(math.nan)
        left.append(-1)
        right.append(-1)

        if depth >= hp.max_depth or zeros == 0 or ones == 0 or m < 2 * hp.min_samples_leaf:
            continue
        candidates = rng.choice(d, size=hp.features_per_split, replace=False)
        split = best_split(X, y, node_rows, candidates, hp.min_samples_leaf)
        if split is None:
            continue
        feature[node_id] = split.feature
        threshold[node_id] = split.threshold
        go_left = X[node_rows, split.feature] <= split.threshold
        stack.append((node_rows[~go_left], depth + 1, node_id, False))
        stack.append((node_rows[go_left], depth + 1, node_id, True))

    return Tree(
        feature=np.asarray(feature, dtype=np.int32),
        threshold=np.asarray(threshold, dtype=np.float64),
        left=np.asarray(left, dtype=np.int32),
        right=np.asarray(right, dtype=np.int32),
        count0=np.asarray(count0, dtype=np.int64),
        count1=np.asarray(count1, dtype=np.int64),
    )


def tree_rng(master_seed: int, tree_index: int) -> np.random.Generator:
    """The generator tree ``tree_index`` uses under ``master_seed``."""
    return derive_rng(master_seed, DOMAIN_TREE, tree_index)


def fit_tree(
    X: np.ndarray,
    y: np.ndarray,
    rng: np.random.Generator,
    hyperparams: ForestHyperparams,
) -> Tree:
    """Fit one tree on a bootstrap resample (n rows drawn with replacement)."""
    n = X.shape[0]
    if n == 0:
        raise ForestError("cannot fit a tree on an empty dataset")
    rows = rng.integers(0, n, size=n)
    return grow_tree(X, y, rng, hyperparams, rows=rows)


# ---------------------------------------------------------------------------
# forest

@dataclass(eq=False)
class Forest:
    """A bag of trees plus the encoding they were trained against."""

    trees: list[Tree]
    hyperparams: ForestHyperparams
    master_seed: int
    columns: tuple[str, ...]
    spans: dict[str, tuple[int, int]]

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def predict(self, features: FeatureMatrix | np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return predict(self, features)


_POOL_STATE: dict = {}


def _pool_init(X, y, hyperparams, master_seed):
    _POOL_STATE.update(X=X, y=y, hyperparams=hyperparams, master_seed=master_seed)


def _pool_build(indices: list[int]) -> list[Tree]:
    X, y = _POOL_STATE["X"], _POOL_STATE["y"]
    hp, seed = _POOL_STATE["hyperparams"], _POOL_STATE["master_seed"]
    return [fit_tree(X, y, tree_rng(seed, i), hp) for i in indices]


def fit_forest(
    dataset: "LabeledDataset",
    hyperparams: ForestHyperparams,
    master_seed: int,
    workers: int = 1,
) -> Forest:
    """Fit a bagged forest. Tree i depends only on (master_seed, i), so any
    worker count yields the identical forest."""
    if master_seed < 0:
        raise ForestError("master_seed must be non-negative")
    X = dataset.features.data
    y = np.asarray(dataset.labels, dtype=np.int8)
    if X.shape[0] == 0:
        raise ForestError("cannot fit a forest on an empty dataset")
    if X.shape[0] != y.shape[0]:
        raise ForestError("features and labels disagree on row count")
    hp = hyperparams.resolve(X.shape[1])

    indices = list(range(hp.n_trees))
    if workers <= 1 or hp.n_trees == 1:
        trees = [fit_tree(X, y, tree_rng(master_seed, i), hp) for i in indices]
    else:
        chunk = math.ceil(len(indices) / (workers * 4))
        batches = [indices[i:i + chunk] for i in range(0, len(indices), chunk)]
        ctx = multiprocessing.get_context("fork")
        with ProcessPoolExecutor(
            max_workers=workers,
            mp_context=ctx,
            initializer=_pool_init,
            initargs=(X, y, hp, master_seed),
        ) as pool:
            trees = []
            for batch in pool.map(_pool_build, batches):
                trees.extend(batch)

    return Forest(
        trees=trees,
        hyperparams=hp,
        master_seed=master_seed,
        columns=tuple(dataset.features.columns),
        spans=dict(dataset.features.spans),
    )


def predict(forest: Forest, features: FeatureMatrix | np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Majority vote over trees.

    Returns (classes, vote_fractions). A row is class 1 only when a strict
    majority of trees votes 1; exactly half votes 1 -> class 0.
    """
    if isinstance(features, FeatureMatrix):
        if features.columns != forest.columns:
            raise ForestError("feature matrix encoding does not match the forest")
        X = features.data
    else:
        X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != len(forest.columns):
        raise ForestError(
            f"expected {len(forest.columns)} feature columns, got {X.shape[1] if X.ndim == 2 else 'non-matrix'}"
        )
    votes = np.zeros(X.shape[0], dtype=np.int32)
    for tree in forest.trees:
        votes += tree.predict_classes(X)
    n_trees = len(forest.trees)
    vote_fraction = votes / np.float64(n_trees)
    classes = (2 * votes > n_trees).astype(np.uint8)
    return classes, vote_fraction


# ---------------------------------------------------------------------------
# evaluation

@dataclass(frozen=True)
class ConfusionMatrix:
    """Binary confusion counts (class 1 = optimal)."""

    tn: int
    fp: int
    fn: int
    tp: int

    @classmethod
    def from_labels(cls, observed: np.ndarray, predicted: np.ndarray) -> "ConfusionMatrix":
        observed = np.asarray(observed).astype(bool)
        predicted = np.asarray(predicted).astype(bool)
        if observed.shape != predicted.shape:
            raise ForestError("observed and predicted label arrays differ in shape")
        return cls(
            tn=int((~observed & ~predicted).sum()),
            fp=int((~observed & predicted).sum()),
            fn=int((observed & ~predicted).sum()),
            tp=int((observed & predicted).sum()),
        )

    @property
    def total(self) -> int:
        return self.tn + self.fp + self.fn + self.tp

    def as_matrix(self) -> np.ndarray:
        """2x2 array, rows = observed (non-optimal, optimal), cols = predicted."""
        return np.array([[self.tn, self.fp], [self.fn, self.tp]], dtype=np.int64)


@dataclass(frozen=True)
class ClassificationMetrics:
    """Accuracy plus one-vs-rest metrics for the optimal class.

    precision/recall/f1 are None when their denominators vanish (no
    predicted positives, no observed positives, or both rates zero).
    """

    accuracy: float
    precision: float | None
    recall: float | None
    f1: float | None


def metrics_from_confusion(cm: ConfusionMatrix) -> ClassificationMetrics:
    if cm.total == 0:
        raise ForestError("empty confusion matrix")
    accuracy = (cm.tp + cm.tn) / cm.total
    precision = cm.tp / (cm.tp + cm.fp) if (cm.tp + cm.fp) > 0 else None
    recall = cm.tp / (cm.tp + cm.fn) if (cm.tp + cm.fn) > 0 else None
    if precision is None or recall is None or (precision + recall) == 0.0:
        f1 = None
    else:
        f1 = 2.0 * precision * recall / (precision + recall)
    return ClassificationMetrics(accuracy=accuracy, precision=precision, recall=recall, f1=f1)


@dataclass(frozen=True)
class EvaluationReport:
    confusion: ConfusionMatrix
    metrics: ClassificationMetrics


def evaluate(forest: Forest, test: "LabeledDataset") -> EvaluationReport:
    """Confusion matrix and metrics of the forest on a held-out dataset."""
    if test.features.n_rows == 0:
        raise ForestError("cannot evaluate on an empty dataset")
    classes, _ = predict(forest, test.features)
    cm = ConfusionMatrix.from_labels(np.asarray(test.labels), classes)
    return EvaluationReport(confusion=cm, metrics=metrics_from_confusion(cm))


# ---------------------------------------------------------------------------
# serialization

def save_forest(forest: Forest, path) -> None:
    """Write a forest to a versioned container (magic PFOR, pre-order trees)."""
    header = {
        "kind": "forest",
        "hyperparams": {
            "n_trees": forest.hyperparams.n_trees,
            "max_depth": forest.hyperparams.max_depth,
            "features_per_split": forest.hyperparams.features_per_split,
            "min_samples_leaf": forest.hyperparams.min_samples_leaf,
        },
        "master_seed": forest.master_seed,
        "columns": list(forest.columns),
        "spans": {k: [int(a), int(b)] for k, (a, b) in forest.spans.items()},
        "tree_nodes": [t.n_nodes for t in forest.trees],
    }
    arrays = {
        "feature": np.concatenate([t.feature for t in forest.trees]),
        "threshold": np.concatenate([t.threshold for t in forest.trees]),
        "left": np.concatenate([t.left for t in forest.trees]),
        "right": np.concatenate([t.right for t in forest.trees]),
        "count0": np.concatenate([t.count0 for t in forest.trees]),
        "count1": np.concatenate([t.count1 for t in forest.trees]),
    }
    _binio.write_container(path, FOREST_MAGIC, FOREST_FORMAT_VERSION, header, arrays)


def load_forest(path) -> Forest:
    version, header, arrays = _binio.read_container(path, FOREST_MAGIC)
    if version != FOREST_FORMAT_VERSION:
        raise ArtifactFileError(
            f"{path}: forest format version {version} not supported "
            f"(expected {FOREST_FORMAT_VERSION})"
        )
    if header.get("kind") != "forest":
        raise ArtifactFileError(f"{path}: container does not hold a forest")
    hp = ForestHyperparams(**header["hyperparams"])
    node_counts = header["tree_nodes"]
    offsets = np.concatenate([[0], np.cumsum(node_counts)])
    if offsets[-1] != len(arrays["feature"]):
        raise ArtifactFileError(f"{path}: node counts disagree with payload size")
    trees = []
    for i in range(len(node_counts)):
        a, b = int(offsets[i]), int(offsets[i + 1])
        trees.append(
            Tree(
                feature=arrays["feature"][a:b],
                threshold=arrays["threshold"][a:b],
                left=arrays["left"][a:b],
                right=arrays["right"][a:b],
                count0=arrays["count0"][a:b],
                count1=arrays["count1"][a:b],
            )
        )
    if len(trees) != hp.n_trees:
        raise ArtifactFileError(f"{path}: tree count disagrees with hyperparams")
    return Forest(
        trees=trees,
        hyperparams=hp,
        master_seed=int(header["master_seed"]),
        columns=tuple(header["columns"]),
        spans={k: (int(a), int(b)) for k, (a, b) in header["spans"].items()},
    )
