"""Result tables over prediction sets.

Aggregates emulator predictions into the deliverable tables: optimal
shares per region and policy, differences to the no-policy baseline,
dispersion bands of the binary outcome, standardized parameter scores,
and Welch's t-tests between groups.

Everything here is pure arithmetic over aggregates. File layout and
streaming live in the pipeline module; this module only needs counts
and means, so callers can feed it either full prediction frames or
pre-reduced aggregates.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from decimal import ROUND_HALF_EVEN, Decimal
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd

from .errors import AnalysisError
from .schema import ParameterSchema

__all__ = [
    "WelchResult",
    "welch_t_test",
    "student_t_cdf",
    "student_t_two_sided_p",
    "regularized_incomplete_beta",
    "GroupShareRow",
    "GroupShareTable",
    "optimal_share_by_group",
    "mean_std_bands",
    "BaselineDeltaTable",
    "diff_to_baseline",
    "std_delta_table",
    "RegionRanking",
    "PolicyRanking",
    "rank_policies_per_mr",
    "ParamScoreRow",
    "ParamScoreTable",
    "standardized_param_score",
    "load_reference_scores",
    "ReportTables",
    "build_report_tables",
    "report_tables_from_aggregates",
    "emit_report",
    "format_percent",
    "format_score",
    "REPORT_FILES",
]


# --------------------------------------------------------------------------
# Student's t machinery.
#
# The two-sided p-value needs the t-distribution CDF, which reduces to the
# regularized incomplete beta function I_x(a, b). Implemented directly
# (continued fraction, modified Lentz) so the statistic stack has no
# dependency beyond the standard library; accuracy target 1e-10 over the
# degrees-of-freedom range that sample comparisons produce.
# --------------------------------------------------------------------------

_BETA_MAX_ITER = 400
_BETA_EPS = 3e-16
_BETA_TINY = 1e-300


def _beta_continued_fraction(a: float, b: float, x: float) -> float:
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _BETA_TINY:
        d = _BETA_TINY
    d = 1.0 / d
    h = d
    for m in range(1, _BETA_MAX_ITER + 1):
        m2 = 2 * m
        # even step
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _BETA_TINY:
            d = _BETA_TINY
        c = 1.0 + aa / c
        if abs(c) < _BETA_TINY:
            c = _BETA_TINY
        d = 1.0 / d
        h *= d * c
        # odd step
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _BETA_TINY:
            d = _BETA_TINY
        c = 1.0 + aa / c
        if abs(c) < _BETA_TINY:
            c = _BETA_TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _BETA_EPS:
            return h
    raise AnalysisError(
        f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})"
    )


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b) for a, b > 0 and x in [0, 1]."""
    if not (a > 0.0 and b > 0.0):
        raise AnalysisError(f"beta parameters must be positive, got a={a}, b={b}")
    if not 0.0 <= x <= 1.0:
        raise AnalysisError(f"beta argument must lie in [0, 1], got {x}")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    # continued fraction converges fast only below the symmetry pivot
    if x < (a + 1.0) / (a + b + 2.0):
        value = front * _beta_continued_fraction(a, b, x) / a
    else:
        value = 1.0 - front * _beta_continued_fraction(b, a, 1.0 - x) / b
    return min(1.0, max(0.0, value))


def _t_halves(t: float, df: float) -> tuple[float, float]:
    """(P(|T| <= |t|), P(|T| >= |t|)), each exact where it is small.

    Both beta arguments t^2/(df+t^2) and df/(df+t^2) are formed as direct
    quotients, never as 1 - x, so whichever probability is tiny comes out
    of the beta function at full relative precision and its complement
    carries at most one rounding error.
    """
    if not df > 0.0:
        raise AnalysisError(f"degrees of freedom must be positive, got {df}")
    if math.isinf(t):
        return 1.0, 0.0
    t2 = t * t
    central_arg = t2 / (df + t2)
    if central_arg <= 0.5:
        central = regularized_incomplete_beta(0.5, df / 2.0, central_arg)
        return central, 1.0 - central
    tails = regularized_incomplete_beta(df / 2.0, 0.5, df / (df + t2))
    return 1.0 - tails, tails


def student_t_two_sided_p(t: float, df: float) -> float:
    """P(|T| >= |t|) for T ~ Student's t with df degrees of freedom."""
    return _t_halves(t, df)[1]


def student_t_cdf(t: float, df: float) -> float:
    """P(T <= t) for T ~ Student's t with df degrees of freedom."""
    central, tails = _t_halves(t, df)
    if t < 0.0:
        return 0.5 * tails
    return 0.5 + 0.5 * central


@dataclass(frozen=True)
class WelchResult:
    """Unequal-variance t-test outcome."""

    t: float
    df: float
    p: float


def welch_t_test(sample_a: Sequence[float], sample_b: Sequence[float]) -> WelchResult:
    """Welch's two-sided t-test of equal means.

    t = (mean_a - mean_b) / sqrt(var_a/n_a + var_b/n_b), with the
    Welch-Satterthwaite degrees of freedom and the p-value from the
    t-distribution CDF. Sample variances use the n-1 denominator.
    """
    a = np.asarray(sample_a, dtype=np.float64).ravel()
    b = np.asarray(sample_b, dtype=np.float64).ravel()
    na, nb = a.size, b.size
    if na < 2 or nb < 2:
        raise AnalysisError(
            f"each sample needs at least 2 values, got sizes {na} and {nb}"
        )
    va = float(np.var(a, ddof=1))
    vb = float(np.var(b, ddof=1))
    if va == 0.0 and vb == 0.0:
        raise AnalysisError("both samples have zero variance")
    ra = va / na
    rb = vb / nb
    se = math.sqrt(ra + rb)
    t = (float(np.mean(a)) - float(np.mean(b))) / se
    # df is scale-free, so divide through by the larger variance term;
    # this keeps the squares from underflowing for near-degenerate samples
    scale = max(ra, rb)
    sa, sb = ra / scale, rb / scale
    df = (sa + sb) ** 2 / (sa * sa / (na - 1) + sb * sb / (nb - 1))
    return WelchResult(t=t, df=df, p=student_t_two_sided_p(t, df))


# --------------------------------------------------------------------------
# Share tables.
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class GroupShareRow:
    """Counts and derived shares for one group."""

    key: tuple[str, ...]
    n: int
    n_optimal: int

    @property
    def share(self) -> float:
        return self.n_optimal / self.n

    @property
    def share_pct(self) -> float:
        return 100.0 * self.n_optimal / self.n

    @property
    def std_pp(self) -> float:
        # Bernoulli dispersion sqrt(p(1-p)) in percentage points
        p = self.share
        return 100.0 * math.sqrt(p * (1.0 - p))


@dataclass(frozen=True)
class GroupShareTable:
    """Optimal counts and shares keyed by group.

    Rows are ordered lexicographically by key, so the table is
    independent of input row order.
    """

    by: tuple[str, ...]
    rows: tuple[GroupShareRow, ...]

    def __post_init__(self) -> None:
        if not self.by:
            raise AnalysisError("group key list is empty")
        if not self.rows:
            raise AnalysisError("share table has no groups")
        for row in self.rows:
            if len(row.key) != len(self.by):
                raise AnalysisError(
                    f"group key {row.key!r} does not match key columns {self.by!r}"
                )
            if row.n <= 0:
                raise AnalysisError(f"group {row.key!r} has non-positive count")
            if not 0 <= row.n_optimal <= row.n:
                raise AnalysisError(
                    f"group {row.key!r} has optimal count {row.n_optimal} "
                    f"outside [0, {row.n}]"
                )

    @classmethod
    def from_counts(
        cls,
        by: Sequence[str],
        counts: Mapping[tuple[str, ...], tuple[int, int]],
    ) -> "GroupShareTable":
        """Build from {group key: (n, n_optimal)} aggregates."""
        rows = tuple(
            GroupShareRow(key=tuple(key), n=int(n), n_optimal=int(k))
            for key, (n, k) in sorted(counts.items())
        )
        return cls(by=tuple(by), rows=rows)

    @property
    def total_n(self) -> int:
        return sum(row.n for row in self.rows)

    @property
    def total_optimal(self) -> int:
        return sum(row.n_optimal for row in self.rows)

    def row(self, key: tuple[str, ...]) -> GroupShareRow:
        for candidate in self.rows:
            if candidate.key == key:
                return candidate
        raise AnalysisError(f"no group {key!r} in share table")

    def to_frame(self) -> pd.DataFrame:
        data = {name: [row.key[i] for row in self.rows] for i, name in enumerate(self.by)}
        data["n"] = [row.n for row in self.rows]
        data["n_optimal"] = [row.n_optimal for row in self.rows]
        data["share_pct"] = [row.share_pct for row in self.rows]
        data["std_pp"] = [row.std_pp for row in self.rows]
        return pd.DataFrame(data)


def _group_counts(
    predictions: pd.DataFrame,
    by: Sequence[str],
    predicted_col: str,
) -> dict[tuple[str, ...], tuple[int, int]]:
    for name in (*by, predicted_col):
        if name not in predictions.columns:
            raise AnalysisError(f"predictions are missing column {name!r}")
    values = predictions[predicted_col].to_numpy()
    flags = np.unique(values)
    if not np.isin(flags, (0, 1)).all():
        raise AnalysisError(
            f"column {predicted_col!r} must be binary 0/1, found values {flags[:5]!r}"
        )
    grouped = predictions.groupby(list(by), sort=True, observed=True)[predicted_col]
    sizes = grouped.size()
    hits = grouped.sum()
    counts: dict[tuple[str, ...], tuple[int, int]] = {}
    for key, n in sizes.items():
        key_tuple = key if isinstance(key, tuple) else (key,)
        counts[tuple(str(part) for part in key_tuple)] = (int(n), int(hits.loc[key]))
    return counts


def optimal_share_by_group(
    predictions: pd.DataFrame,
    by: Sequence[str],
    predicted_col: str = "predicted",
) -> GroupShareTable:
    """Exact optimal counts and percentages per group.

    `predictions` must carry the grouping columns and a binary 0/1
    column of predicted classes. A bare string groups by that one column.
    """
    by = (by,) if isinstance(by, str) else tuple(by)
    if not by:
        raise AnalysisError("group key list is empty")
    if predictions.empty:
        raise AnalysisError("prediction set is empty")
    return GroupShareTable.from_counts(by, _group_counts(predictions, by, predicted_col))


def mean_std_bands(
    data: pd.DataFrame | GroupShareTable,
    by: Sequence[str] | None = None,
    predicted_col: str = "predicted",
) -> pd.DataFrame:
    """Per-group mean of the binary outcome with one-sigma bands.

    Returns a frame with the group keys plus mean_pct, std_pp,
    lower_pct and upper_pct (mean minus/plus one Bernoulli sigma,
    all in percentage points). Bands are not clipped to [0, 100].
    """
    if isinstance(data, GroupShareTable):
        table = data
    else:
        if by is None:
            raise AnalysisError("group keys are required with a prediction frame")
        table = optimal_share_by_group(data, by, predicted_col)
    frame = table.to_frame()
    frame = frame.rename(columns={"share_pct": "mean_pct"})
    frame["lower_pct"] = frame["mean_pct"] - frame["std_pp"]
    frame["upper_pct"] = frame["mean_pct"] + frame["std_pp"]
    return frame[[*table.by, "mean_pct", "std_pp", "lower_pct", "upper_pct"]]


# --------------------------------------------------------------------------
# Baseline delta tables.
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class BaselineDeltaTable:
    """Per region: a baseline column plus per-policy differences.

    The same shape serves two tables: optimal-share percentages with
    percentage-point deltas, and Bernoulli sigmas with sigma deltas.
    Regions are ordered by descending baseline value (ties by name),
    with the pooled `all_label` row participating in the sort.
    """

    baseline: str
    policies: tuple[str, ...]
    regions: tuple[str, ...]
    baseline_values: dict[str, float]
    deltas: dict[tuple[str, str], float]
    all_label: str = "All"

    def __post_init__(self) -> None:
        if self.baseline in self.policies:
            raise AnalysisError("baseline must not appear among delta policies")
        for region in self.regions:
            if region not in self.baseline_values:
                raise AnalysisError(f"missing baseline value for region {region!r}")
            for policy in self.policies:
                if (region, policy) not in self.deltas:
                    raise AnalysisError(
                        f"missing delta for region {region!r}, policy {policy!r}"
                    )

    def baseline_value(self, region: str) -> float:
        try:
            return self.baseline_values[region]
        except KeyError:
            raise AnalysisError(f"no region {region!r} in delta table") from None

    def delta(self, region: str, policy: str) -> float:
        try:
            return self.deltas[(region, policy)]
        except KeyError:
            raise AnalysisError(
                f"no delta for region {region!r}, policy {policy!r}"
            ) from None

    def value(self, region: str, policy: str) -> float:
        """Reconstructed absolute value, baseline plus delta."""
        return self.baseline_value(region) + self.delta(region, policy)

    @classmethod
    def from_values(
        cls,
        baseline: str,
        policies: Sequence[str],
        baseline_values: Mapping[str, float],
        deltas: Mapping[tuple[str, str], float],
        all_label: str = "All",
        preserve_order: Sequence[str] | None = None,
    ) -> "BaselineDeltaTable":
        if preserve_order is not None:
            regions = tuple(preserve_order)
        else:
            regions = tuple(
                sorted(baseline_values, key=lambda r: (-baseline_values[r], r))
            )
        return cls(
            baseline=baseline,
            policies=tuple(policies),
            regions=regions,
            baseline_values=dict(baseline_values),
            deltas=dict(deltas),
            all_label=all_label,
        )

    def to_rows(self, places: int = 2) -> list[list[str]]:
        header = ["region", self.baseline, *self.policies]
        rows = [header]
        for region in self.regions:
            cells = [region, format_percent(self.baseline_values[region], places)]
            cells += [
                format_percent(self.deltas[(region, policy)], places)
                for policy in self.policies
            ]
            rows.append(cells)
        return rows

    def to_csv(self, path: str | Path, places: int = 2) -> None:
        _write_csv(Path(path), self.to_rows(places))

    @classmethod
    def from_csv(cls, path: str | Path, all_label: str = "All") -> "BaselineDeltaTable":
        """Read a previously written table, preserving its row order."""
        with open(path, newline="", encoding="utf-8") as handle:
            reader = csv.reader(handle)
            header = next(reader, None)
            if header is None or len(header) < 3 or header[0] != "region":
                raise AnalysisError(f"{path}: not a baseline delta table")
            baseline = header[1]
            policies = tuple(header[2:])
            regions: list[str] = []
            baseline_values: dict[str, float] = {}
            deltas: dict[tuple[str, str], float] = {}
            for line in reader:
                if len(line) != len(header):
                    raise AnalysisError(f"{path}: ragged row {line!r}")
                region = line[0]
                if region in baseline_values:
                    raise AnalysisError(f"{path}: duplicate region {region!r}")
                regions.append(region)
                try:
                    baseline_values[region] = float(line[1])
                    for policy, cell in zip(policies, line[2:]):
                        deltas[(region, policy)] = float(cell)
                except ValueError as exc:
                    raise AnalysisError(f"{path}: non-numeric cell in {line!r}") from exc
        if not regions:
            raise AnalysisError(f"{path}: table has no rows")
        return cls.from_values(
            baseline,
            policies,
            baseline_values,
            deltas,
            all_label=all_label,
            preserve_order=regions,
        )


def _share_by_region_policy(
    table: GroupShareTable,
) -> tuple[dict[str, dict[str, GroupShareRow]], tuple[str, ...]]:
    if len(table.by) != 2:
        raise AnalysisError(
            f"delta tables need (region, policy) grouping, got keys {table.by!r}"
        )
    per_region: dict[str, dict[str, GroupShareRow]] = {}
    policies: list[str] = []
    for row in table.rows:
        region, policy = row.key
        per_region.setdefault(region, {})[policy] = row
        if policy not in policies:
            policies.append(policy)
    return per_region, tuple(policies)


def _delta_table_from_shares(
    table: GroupShareTable,
    baseline: str,
    all_label: str,
    cell: "callable",
    pooled_cell: "callable",
) -> BaselineDeltaTable:
    per_region, policies = _share_by_region_policy(table)
    if baseline not in policies:
        raise AnalysisError(f"baseline policy {baseline!r} has no groups")
    if all_label in per_region:
        raise AnalysisError(f"region name collides with pooled row label {all_label!r}")
    others = tuple(p for p in policies if p != baseline)
    baseline_values: dict[str, float] = {}
    deltas: dict[tuple[str, str], float] = {}
    pooled: dict[str, tuple[int, int]] = {p: (0, 0) for p in policies}
    for region, rows in per_region.items():
        if baseline not in rows:
            raise AnalysisError(f"region {region!r} has no baseline group {baseline!r}")
        base_value = cell(rows[baseline])
        baseline_values[region] = base_value
        for policy in others:
            if policy not in rows:
                raise AnalysisError(
                    f"region {region!r} has no group for policy {policy!r}"
                )
            deltas[(region, policy)] = cell(rows[policy]) - base_value
        for policy in policies:
            n, k = pooled[policy]
            row = rows[policy]
            pooled[policy] = (n + row.n, k + row.n_optimal)
    pooled_base = pooled_cell(*pooled[baseline])
    baseline_values[all_label] = pooled_base
    for policy in others:
        deltas[(all_label, policy)] = pooled_cell(*pooled[policy]) - pooled_base
    return BaselineDeltaTable.from_values(
        baseline, others, baseline_values, deltas, all_label=all_label
    )


def diff_to_baseline(
    table: GroupShareTable,
    baseline: str,
    all_label: str = "All",
) -> BaselineDeltaTable:
    """Optimal-share differences to the baseline policy, in percentage points.

    Exact subtraction of the per-group percentages; the pooled `all_label`
    row is recomputed from summed counts, not averaged from rows.
    """
    return _delta_table_from_shares(
        table,
        baseline,
        all_label,
        cell=lambda row: row.share_pct,
        pooled_cell=lambda n, k: 100.0 * k / n,
    )


def _pooled_std_pp(n: int, k: int) -> float:
    p = k / n
    return 100.0 * math.sqrt(p * (1.0 - p))


def std_delta_table(
    table: GroupShareTable,
    baseline: str,
    all_label: str = "All",
) -> BaselineDeltaTable:
    """Bernoulli sigma per group, as baseline column plus per-policy diffs."""
    return _delta_table_from_shares(
        table,
        baseline,
        all_label,
        cell=lambda row: row.std_pp,
        pooled_cell=_pooled_std_pp,
    )


# --------------------------------------------------------------------------
# Policy ranking.
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class RegionRanking:
    """Best policy set for one region.

    `best` is the argmax set over the delta columns; `improves` is
    whether that maximum is strictly positive. Regions that do not
    improve keep their argmax but are left out of the winner tally.
    """

    region: str
    best: tuple[str, ...]
    max_delta: float
    improves: bool


@dataclass(frozen=True)
class PolicyRanking:
    per_region: tuple[RegionRanking, ...]
    tally: dict[str, int]
    n_ties: int
    no_improvement: tuple[str, ...]

    @property
    def n_regions(self) -> int:
        return len(self.per_region)


def rank_policies_per_mr(table: BaselineDeltaTable) -> PolicyRanking:
    """Best policy per region plus the global win tally.

    The pooled `all_label` row is skipped. A region whose best delta is
    not strictly positive counts as no improvement; a region whose best
    delta is shared by two or more policies counts as a tie. Only
    improving single-winner regions enter the tally.
    """
    per_region: list[RegionRanking] = []
    tally: dict[str, int] = {policy: 0 for policy in table.policies}
    n_ties = 0
    no_improvement: list[str] = []
    for region in table.regions:
        if region == table.all_label:
            continue
        values = [table.deltas[(region, policy)] for policy in table.policies]
        max_delta = max(values)
        best = tuple(
            policy
            for policy, value in zip(table.policies, values)
            if value == max_delta
        )
        improves = max_delta > 0.0
        per_region.append(
            RegionRanking(region=region, best=best, max_delta=max_delta, improves=improves)
        )
        if not improves:
            no_improvement.append(region)
        elif len(best) > 1:
            n_ties += 1
        else:
            tally[best[0]] += 1
    return PolicyRanking(
        per_region=tuple(per_region),
        tally=tally,
        n_ties=n_ties,
        no_improvement=tuple(no_improvement),
    )


# --------------------------------------------------------------------------
# Parameter scores.
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ParamScoreRow:
    parameter: str
    score: float
    reference: float | None = None


@dataclass(frozen=True)
class ParamScoreTable:
    """Min-max standardized parameter means.

    score = (mean - lower) / (upper - lower) over the schema bounds,
    so every score lies in [0, 1]. The optional reference column holds
    externally supplied scores for side-by-side comparison.
    """

    rows: tuple[ParamScoreRow, ...]

    def __post_init__(self) -> None:
        for row in self.rows:
            if not 0.0 <= row.score <= 1.0:
                raise AnalysisError(
                    f"score for {row.parameter!r} is {row.score}, outside [0, 1]"
                )

    @property
    def parameters(self) -> tuple[str, ...]:
        return tuple(row.parameter for row in self.rows)

    @property
    def has_reference(self) -> bool:
        return any(row.reference is not None for row in self.rows)

    def score(self, parameter: str) -> float:
        for row in self.rows:
            if row.parameter == parameter:
                return row.score
        raise AnalysisError(f"no parameter {parameter!r} in score table")

    @classmethod
    def from_means(
        cls,
        means: Mapping[str, float],
        schema: ParameterSchema,
        reference: Mapping[str, float] | None = None,
    ) -> "ParamScoreTable":
        rows: list[ParamScoreRow] = []
        for spec in schema.continuous:
            if spec.name not in means:
                continue
            mean = float(means[spec.name])
            span = spec.upper - spec.lower
            score = (mean - spec.lower) / span
            if -1e-9 <= score < 0.0:
                score = 0.0
            elif 1.0 < score <= 1.0 + 1e-9:
                score = 1.0
            ref = None
            if reference is not None and spec.name in reference:
                ref = float(reference[spec.name])
            rows.append(ParamScoreRow(parameter=spec.name, score=score, reference=ref))
        if not rows:
            raise AnalysisError("no continuous parameters with means to score")
        return cls(rows=tuple(rows))


def standardized_param_score(
    frame: pd.DataFrame,
    schema: ParameterSchema,
    subset: str = "optimal",
    predicted_col: str = "predicted",
    reference: Mapping[str, float] | None = None,
) -> ParamScoreTable:
    """Min-max scores of the continuous parameter means over a subset.

    `subset` selects either the rows predicted optimal or all rows.
    """
    if subset not in ("optimal", "all"):
        raise AnalysisError(f"subset must be 'optimal' or 'all', got {subset!r}")
    if subset == "optimal":
        if predicted_col not in frame.columns:
            raise AnalysisError(f"predictions are missing column {predicted_col!r}")
        frame = frame[frame[predicted_col] == 1]
        if frame.empty:
            raise AnalysisError("no rows predicted optimal")
    elif frame.empty:
        raise AnalysisError("prediction set is empty")
    means: dict[str, float] = {}
    for spec in schema.continuous:
        if spec.name not in frame.columns:
            raise AnalysisError(f"predictions are missing parameter {spec.name!r}")
        means[spec.name] = float(frame[spec.name].to_numpy(dtype=np.float64).mean())
    return ParamScoreTable.from_means(means, schema, reference=reference)


def load_reference_scores(schema: ParameterSchema | None = None) -> dict[str, float]:
    """Packaged comparison scores from the original hand-run study.

    Restricted to parameters present in `schema` when one is given.
    """
    names = None if schema is None else set(s.name for s in schema.continuous)
    scores: dict[str, float] = {}
    text = (
        resources.files("policyforest.data")
        .joinpath("reference_param_scores.csv")
        .read_text(encoding="utf-8")
    )
    reader = csv.DictReader(text.splitlines())
    for line in reader:
        name = line["parameter"]
        if names is None or name in names:
            scores[name] = float(line["reference_score"])
    return scores


# --------------------------------------------------------------------------
# Report assembly.
# --------------------------------------------------------------------------

REPORT_FILES = (
    "table_mean_acp.csv",
    "table_son_acps.csv",
    "table_std_acp.csv",
    "table_params.csv",
    "fig_sorted_policies.csv",
    "fig_mean_std.csv",
    "fig_parameters.csv",
)


@dataclass(frozen=True)
class ReportTables:
    """Everything the report writer and figure renderer need."""

    shares: GroupShareTable
    deltas: BaselineDeltaTable
    std_deltas: BaselineDeltaTable
    params: ParamScoreTable
    region_key: str
    policy_key: str
    baseline: str


def _resolve_roles(
    schema: ParameterSchema,
    region_key: str | None,
    policy_key: str | None,
) -> tuple[str, str]:
    if region_key is None:
        if schema.region is None:
            raise AnalysisError("schema has no region-role parameter")
        region_key = schema.region.name
    if policy_key is None:
        if schema.policy is None:
            raise AnalysisError("schema has no policy-role parameter")
        policy_key = schema.policy.name
    return region_key, policy_key


def _resolve_baseline(schema: ParameterSchema, policy_key: str, baseline: str | None) -> str:
    if baseline is not None:
        return baseline
    spec = schema.param(policy_key)
    return spec.alternatives[0]


def report_tables_from_aggregates(
    counts: Mapping[tuple[str, str], tuple[int, int]],
    optimal_param_means: Mapping[str, float],
    schema: ParameterSchema,
    region_key: str | None = None,
    policy_key: str | None = None,
    baseline: str | None = None,
    reference: Mapping[str, float] | None = None,
) -> ReportTables:
    """Assemble all report tables from streaming-friendly reductions.

    `counts` maps (region, policy) to (n, n_optimal); `optimal_param_means`
    maps continuous parameter names to their mean over predicted-optimal
    rows. Equivalent to `build_report_tables` on the full frame.
    """
    region_key, policy_key = _resolve_roles(schema, region_key, policy_key)
    baseline = _resolve_baseline(schema, policy_key, baseline)
    if reference is None:
        reference = load_reference_scores(schema)
    shares = GroupShareTable.from_counts((region_key, policy_key), counts)
    return ReportTables(
        shares=shares,
        deltas=diff_to_baseline(shares, baseline),
        std_deltas=std_delta_table(shares, baseline),
        params=ParamScoreTable.from_means(optimal_param_means, schema, reference=reference),
        region_key=region_key,
        policy_key=policy_key,
        baseline=baseline,
    )


def build_report_tables(
    predictions: pd.DataFrame,
    schema: ParameterSchema,
    region_key: str | None = None,
    policy_key: str | None = None,
    baseline: str | None = None,
    predicted_col: str = "predicted",
    reference: Mapping[str, float] | None = None,
) -> ReportTables:
    """Assemble all report tables from a full prediction frame."""
    region_key, policy_key = _resolve_roles(schema, region_key, policy_key)
    baseline = _resolve_baseline(schema, policy_key, baseline)
    if reference is None:
        reference = load_reference_scores(schema)
    shares = optimal_share_by_group(predictions, (region_key, policy_key), predicted_col)
    params = standardized_param_score(
        predictions, schema, subset="optimal", predicted_col=predicted_col, reference=reference
    )
    return ReportTables(
        shares=shares,
        deltas=diff_to_baseline(shares, baseline),
        std_deltas=std_delta_table(shares, baseline),
        params=params,
        region_key=region_key,
        policy_key=policy_key,
        baseline=baseline,
    )


def format_percent(value: float, places: int = 2) -> str:
    """Fixed-point decimal string, half-even rounding on the exact value."""
    quantum = Decimal(1).scaleb(-places)
    result = Decimal(value).quantize(quantum, rounding=ROUND_HALF_EVEN)
    if result == 0:
        result = abs(result)  # never print -0.00
    return f"{result:.{places}f}"


def format_score(value: float) -> str:
    return format_percent(value, places=3)


def _write_csv(path: Path, rows: Iterable[Sequence[str]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerows(rows)


def _param_rows(params: ParamScoreTable, order: Sequence[ParamScoreRow]) -> list[list[str]]:
    if params.has_reference:
        rows = [["parameter", "reference_score", "surrogate_score"]]
        for row in order:
            ref = "" if row.reference is None else format_score(row.reference)
            rows.append([row.parameter, ref, format_score(row.score)])
    else:
        rows = [["parameter", "surrogate_score"]]
        for row in order:
            rows.append([row.parameter, format_score(row.score)])
    return rows


def emit_report(tables: ReportTables, directory: str | Path) -> list[Path]:
    """Write the delimited result tables into `directory`.

    Produces one file per table or figure analog (REPORT_FILES) with
    fixed formatting, so identical tables give byte-identical files.
    """
    if tables.shares.total_n == 0:
        raise AnalysisError("prediction set is empty")
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    # per-group counts and shares
    rows = [[tables.region_key, tables.policy_key, "n", "n_optimal", "share_pct", "std_pp"]]
    for row in tables.shares.rows:
        rows.append(
            [
                row.key[0],
                row.key[1],
                str(row.n),
                str(row.n_optimal),
                format_percent(row.share_pct),
                format_percent(row.std_pp),
            ]
        )
    path = directory / "table_mean_acp.csv"
    _write_csv(path, rows)
    written.append(path)

    # share deltas to baseline
    path = directory / "table_son_acps.csv"
    tables.deltas.to_csv(path)
    written.append(path)

    # dispersion deltas to baseline
    path = directory / "table_std_acp.csv"
    tables.std_deltas.to_csv(path)
    written.append(path)

    # parameter scores in schema order
    path = directory / "table_params.csv"
    _write_csv(path, _param_rows(tables.params, tables.params.rows))
    written.append(path)

    # per-policy share curves, regions ranked by share
    rows = [[tables.policy_key, "rank", tables.region_key, "share_pct"]]
    by_policy: dict[str, list[GroupShareRow]] = {}
    for row in tables.shares.rows:
        by_policy.setdefault(row.key[1], []).append(row)
    for policy in sorted(by_policy):
        ranked = sorted(by_policy[policy], key=lambda r: (-r.share_pct, r.key[0]))
        for rank, row in enumerate(ranked, start=1):
            rows.append([policy, str(rank), row.key[0], format_percent(row.share_pct)])
    path = directory / "fig_sorted_policies.csv"
    _write_csv(path, rows)
    written.append(path)

    # mean with one-sigma band per group
    bands = mean_std_bands(tables.shares)
    rows = [[tables.region_key, tables.policy_key, "mean_pct", "std_pp", "lower_pct", "upper_pct"]]
    for record in bands.itertuples(index=False):
        rows.append(
            [
                record[0],
                record[1],
                format_percent(record.mean_pct),
                format_percent(record.std_pp),
                format_percent(record.lower_pct),
                format_percent(record.upper_pct),
            ]
        )
    path = directory / "fig_mean_std.csv"
    _write_csv(path, rows)
    written.append(path)

    # parameter scores ranked for plotting
    order = sorted(tables.params.rows, key=lambda r: (-r.score, r.parameter))
    path = directory / "fig_parameters.csv"
    _write_csv(path, _param_rows(tables.params, order))
    written.append(path)

    return written
