"""End-to-end acceptance checks.

One test per criterion; each prints a single PASS line with the measured
numbers when it holds, so a verbose run reads as a checklist. Oracles
here are deliberately independent re-derivations (exhaustive split
enumeration, closed-form CDFs, textbook constants) rather than calls
back into the code under test.
"""
import importlib.resources as resources
import math
import time

import numpy as np
import pandas as pd
import pytest
import scipy.optimize
import scipy.stats

from policyforest import (
    BaselineDeltaTable,
    ConfusionMatrix,
    ContinuousParamSpec,
    EmpiricalMoments,
    ForestHyperparams,
    LabelSpec,
    RunConfig,
    best_split,
    default_schema,
    default_world,
    emulate,
    evaluate,
    fit_forest,
    generate_corpus,
    iter_config_batches,
    label_dataset,
    load_forest,
    metrics_from_confusion,
    rank_policies_per_mr,
    run_all,
    sample_continuous,
    sample_discrete,
    split_train_test,
    welch_t_test,
)
from policyforest.analysis import student_t_two_sided_p
from policyforest.sampler import fit_moments

SCHEMA = default_schema()


def _report_bytes(directory):
    return {p.name: p.read_bytes() for p in sorted((directory / "report").iterdir())}


@pytest.fixture(scope="module")
def desk_run(tmp_path_factory):
    """One full desk-scale pipeline run, shared by the criteria below."""
    out = tmp_path_factory.mktemp("desk_a")
    config = RunConfig(out_dir=str(out), master_seed=7).desk_scale()
    started = time.monotonic()
    run_all(config)
    elapsed = time.monotonic() - started
    return config, elapsed


# ---------------------------------------------------------------------------
# criterion 1: classification metrics on a fixed confusion matrix

def test_criterion_01_metrics_golden():
    m = metrics_from_confusion(ConfusionMatrix(tn=2602, fp=2, fn=21, tp=144))
    expected = {
        "accuracy": 0.9917,
        "precision": 0.9863,
        "recall": 0.8727,
        "f1": 0.9260,
    }
    for name, want in expected.items():
        got = getattr(m, name)
        assert got == pytest.approx(want, abs=1e-4), name
    print(
        "PASS criterion 1: metrics on (2602,2,21,144) = "
        f"{m.accuracy:.4f}/{m.precision:.4f}/{m.recall:.4f}/{m.f1:.4f}, all within 1e-4"
    )


# ---------------------------------------------------------------------------
# criterion 2: the reference policy-delta table and its ranking

def _reference_deltas():
    with resources.as_file(
        resources.files("policyforest.data") / "reference_policy_deltas.csv"
    ) as path:
        return BaselineDeltaTable.from_csv(path)


def test_criterion_02_reference_table_and_tally():
    table = _reference_deltas()
    assert table.baseline_value("All") == pytest.approx(17.87)
    assert table.deltas[("All", "Purchase")] == pytest.approx(-14.25)
    assert table.deltas[("All", "Rent vouchers")] == pytest.approx(13.16)
    assert table.deltas[("All", "Monetary aid")] == pytest.approx(15.05)

    ranking = rank_policies_per_mr(table)
    assert ranking.tally["Rent vouchers"] == 24
    assert ranking.tally["Monetary aid"] == 19
    assert ranking.n_ties == 1
    assert len(ranking.no_improvement) == 2
    print(
        "PASS criterion 2: All row 17.87/-14.25/+13.16/+15.05 exact; "
        "tally Rent 24, Monetary 19, ties 1, no-improvement 2"
    )


# ---------------------------------------------------------------------------
# criterion 3: Bernoulli dispersion at the reference share

def test_criterion_03_sigma_at_reference_share():
    sigma_pp = math.sqrt(0.1787 * (1 - 0.1787)) * 100.0
    assert sigma_pp == pytest.approx(38.31, abs=0.01)
    print(f"PASS criterion 3: sigma at p=0.1787 = {sigma_pp:.4f}pp, within 0.01 of 38.31")


# ---------------------------------------------------------------------------
# criterion 4: split finding against an exhaustive oracle

def _oracle_split(X, y, min_samples_leaf=1):
    best = None
    n, d = X.shape
    c0 = int(np.sum(y == 0))
    c1 = n - c0
    parent = (c0 * c0 + c1 * c1) / n
    for f in range(d):
        values = np.unique(X[:, f])
        for lo, hi in zip(values[:-1], values[1:]):
            thr = (lo + hi) / 2.0
            mask = X[:, f] <= thr
            nl = int(mask.sum())
            nr = n - nl
            if nl < min_samples_leaf or nr < min_samples_leaf:
                continue
            l0 = int(np.sum(y[mask] == 0)); l1 = nl - l0
            r0 = c0 - l0; r1 = c1 - l1
            score = (l0 * l0 + l1 * l1) / nl + (r0 * r0 + r1 * r1) / nr
            key = (-score, f, thr)
            if best is None or key < best[0]:
                best = (key, f, thr, score)
    if best is None or not best[3] > parent:
        return None
    return best[1], best[2]


def test_criterion_04_split_oracle_200_instances():
    rng = np.random.default_rng(2024)
    started = time.monotonic()
    agreements = 0
    for trial in range(200):
        n = int(rng.integers(2, 51))
        d = int(rng.integers(1, 6))
        # mix smooth and heavily tied columns to exercise midpoints
        X = np.where(
            rng.uniform(size=(n, d)) < 0.5,
            np.round(rng.normal(size=(n, d)), 1),
            rng.normal(size=(n, d)),
        )
        y = rng.integers(0, 2, size=n).astype(np.int8)
        got = best_split(X, y, np.arange(n), np.arange(d))
        want = _oracle_split(X, y)
        if want is None:
            assert got is None, f"trial {trial}: expected no usable split"
        else:
            assert got is not None, f"trial {trial}: split missed"
            assert got.feature == want[0], f"trial {trial}"
            assert got.threshold == want[1], f"trial {trial}"
        agreements += 1
    elapsed = time.monotonic() - started
    assert elapsed < 10.0
    print(f"PASS criterion 4: 200/200 split choices match the exhaustive oracle in {elapsed:.2f}s")


# ---------------------------------------------------------------------------
# criterion 5: labeling against an independent quantile oracle

def test_criterion_05_labeler_oracle_100_corpora():
    rng = np.random.default_rng(99)
    small = default_schema()
    names = list(small.names)
    spec = LabelSpec()
    for trial in range(100):
        n = 1000
        data = {}
        for p in small.continuous:
            data[p.name] = rng.uniform(p.lower, p.upper, size=n)
        for p in small.discrete:
            data[p.name] = rng.choice(list(p.alternatives), size=n)
        gdp = rng.normal(size=n)
        gini = rng.normal(size=n)
        # force exact ties onto the quantile boundaries now and then
        if trial % 3 == 0:
            gdp = np.round(gdp, 1)
            gini = np.round(gini, 1)
        frame = pd.DataFrame(data, columns=names)
        frame["gdp_index"] = gdp
        frame["gini_index"] = gini
        dataset = label_dataset(frame, small, spec)
        expected = (gdp >= np.quantile(gdp, 0.75)) & (gini <= np.quantile(gini, 0.25))
        assert np.array_equal(np.asarray(dataset.labels).astype(bool), expected), trial
    print("PASS criterion 5: labels equal the numpy quantile oracle on 100 corpora of 1000 rows")


# ---------------------------------------------------------------------------
# criterion 6: sampling distributions

def _truncnorm_cdf(x, mean, sigma, lo, hi):
    def phi(z):
        return 0.5 * (1.0 + math.erf(z / math.sqrt(2.0)))

    a = phi((lo - mean) / sigma)
    b = phi((hi - mean) / sigma)
    return (np.vectorize(phi)((x - mean) / sigma) - a) / (b - a)


def test_criterion_06_sampler_distributions():
    started = time.monotonic()
    n = 100_000
    rng = np.random.default_rng(31)
    settings = [
        (ContinuousParamSpec("x", 0.0, 1.0), (0.5, 0.15)),
        (ContinuousParamSpec("x", 0.0, 1.0), (0.05, 0.2)),   # mass piled at the low bound
        (ContinuousParamSpec("x", -3.0, 7.0), (6.5, 1.0)),   # mass piled at the high bound
        (ContinuousParamSpec("x", -1.0, 1.0), (0.0, 5.0)),   # near-flat
    ]
    worst_d = 0.0
    for spec, (mean, std) in settings:
        draws = sample_continuous(spec, (mean, std), n, rng)
        assert np.all(draws >= spec.lower) and np.all(draws <= spec.upper)
        cdf = _truncnorm_cdf(np.sort(draws), mean, 3.0 * std, spec.lower, spec.upper)
        grid = np.arange(1, n + 1) / n
        d = float(np.max(np.maximum(np.abs(cdf - grid), np.abs(cdf - (grid - 1 / n)))))
        worst_d = max(worst_d, d)
        assert d < 0.01, f"KS D={d:.5f} for mean={mean}, std={std}"

    # degenerate width pins every draw to the clamped mean
    frozen = sample_continuous(ContinuousParamSpec("x", 0.0, 1.0), (2.0, 0.0), n, rng)
    assert np.all(frozen == 1.0)

    worst_p = 1.0
    for spec in (SCHEMA.policy, SCHEMA.region):
        draws = sample_discrete(spec, n, rng)
        m = len(spec.alternatives)
        counts = pd.Series(draws).value_counts().reindex(spec.alternatives, fill_value=0)
        chi2 = float((((counts - n / m) ** 2) / (n / m)).sum())
        p = float(scipy.stats.chi2.sf(chi2, m - 1))
        worst_p = min(worst_p, p)
        assert p > 0.001, f"chi2 p={p:.5f} for {spec.name}"
    elapsed = time.monotonic() - started
    assert elapsed < 10.0
    print(
        f"PASS criterion 6: worst KS D={worst_d:.5f} (<0.01), worst chi2 p={worst_p:.3f} "
        f"(>0.001), zero out-of-bounds draws, {elapsed:.2f}s"
    )


# ---------------------------------------------------------------------------
# criterion 7: the planted rule is learnable at reference size

def test_criterion_07_toy_learnability():
    started = time.monotonic()
    hp = ForestHyperparams(n_trees=100, max_depth=15)
    results = {}
    for sigma, seed in ((0.0, 11), (0.01, 11)):
        world = default_world(SCHEMA, noise_sigma=sigma, seed=seed)
        frame = generate_corpus(world, SCHEMA, 11_076, seed=seed)
        dataset = label_dataset(frame, SCHEMA, LabelSpec())
        train, test = split_train_test(dataset, 0.25, seed=seed)
        forest = fit_forest(train, hp, master_seed=seed)
        results[sigma] = evaluate(forest, test).metrics

    clean = results[0.0]
    noisy = results[0.01]
    assert clean.accuracy >= 0.99, f"clean accuracy {clean.accuracy:.4f}"
    assert clean.recall >= 0.95, f"clean recall {clean.recall:.4f}"
    assert noisy.accuracy >= 0.95, f"noisy accuracy {noisy.accuracy:.4f}"
    assert noisy.f1 >= 0.90, f"noisy F1 {noisy.f1:.4f}"
    elapsed = time.monotonic() - started
    assert elapsed < 120.0
    print(
        f"PASS criterion 7: sigma=0 acc {clean.accuracy:.4f} (>=0.99) recall {clean.recall:.4f} "
        f"(>=0.95); sigma=0.01 acc {noisy.accuracy:.4f} (>=0.95) F1 {noisy.f1:.4f} (>=0.90); "
        f"{elapsed:.1f}s"
    )


# ---------------------------------------------------------------------------
# criterion 8: the desk-scale pipeline recovers the planted directions

def test_criterion_08_desk_scale_directions(desk_run):
    config, elapsed = desk_run
    assert elapsed < 300.0, f"desk-scale run took {elapsed:.0f}s"
    table = BaselineDeltaTable.from_csv(config.out / "report" / "table_son_acps.csv")
    regions = [r for r in table.regions if r != "All"]
    hits = {"Purchase": 0, "Rent vouchers": 0, "Monetary aid": 0}
    for region in regions:
        if table.deltas[(region, "Purchase")] < 0:
            hits["Purchase"] += 1
        if table.deltas[(region, "Rent vouchers")] > 0:
            hits["Rent vouchers"] += 1
        if table.deltas[(region, "Monetary aid")] > 0:
            hits["Monetary aid"] += 1
    n = len(regions)
    for policy, count in hits.items():
        assert count >= 0.9 * n, f"{policy}: {count}/{n} regions"
    assert table.deltas[("All", "Purchase")] < 0
    assert table.deltas[("All", "Rent vouchers")] > 0
    assert table.deltas[("All", "Monetary aid")] > 0
    print(
        "PASS criterion 8: desk-scale run-all in "
        f"{elapsed:.0f}s (<300s); direction hits "
        f"{hits['Purchase']}/{n}, {hits['Rent vouchers']}/{n}, {hits['Monetary aid']}/{n} "
        "(>=90% each)"
    )


# ---------------------------------------------------------------------------
# criterion 9: reruns and worker counts leave the report bytes unchanged

def test_criterion_09_byte_identical_reports(desk_run, tmp_path_factory):
    config_a, _ = desk_run
    out_b = tmp_path_factory.mktemp("desk_b")
    config_b = RunConfig(out_dir=str(out_b), master_seed=7).desk_scale()
    run_all(config_b)
    bytes_a = _report_bytes(config_a.out)
    bytes_b = _report_bytes(config_b.out)
    assert bytes_a == bytes_b, "rerun changed report bytes"

    out_c = tmp_path_factory.mktemp("desk_c")
    config_c = RunConfig(out_dir=str(out_c), master_seed=7, workers=4).desk_scale()
    run_all(config_c)
    assert (config_a.out / "forest.pfor").read_bytes() == (
        config_c.out / "forest.pfor"
    ).read_bytes(), "worker count changed the model file"
    assert bytes_a == _report_bytes(config_c.out), "worker count changed report bytes"
    files = len(bytes_a)
    print(
        f"PASS criterion 9: all {files} report files byte-identical across a rerun "
        "and across workers 1 vs 4"
    )


# ---------------------------------------------------------------------------
# criterion 10: bulk emulation throughput and shard reconciliation

def test_criterion_10_bulk_emulation(desk_run):
    config, _ = desk_run
    forest = load_forest(config.out / "forest.pfor")
    moments = _desk_moments(config)
    n = 1_000_000
    started = time.monotonic()
    chunks = (frame for _, frame in iter_config_batches(SCHEMA, moments, n, 123))
    total = 0
    optimal = 0
    for chunk in emulate(forest, chunks, SCHEMA):
        total += len(chunk)
        optimal += int(chunk["predicted"].sum())
    elapsed = time.monotonic() - started
    assert total == n
    assert 0 < optimal < n
    assert elapsed < 180.0, f"emulated {n} configs in {elapsed:.0f}s"

    # sharded generation must concatenate to the single-shard stream
    whole = pd.concat(
        (f for _, f in iter_config_batches(SCHEMA, moments, 60_000, 123)),
        ignore_index=True,
    )
    pieces = {}
    for k in range(4):
        for b, frame in iter_config_batches(
            SCHEMA, moments, 60_000, 123, shard_index=k, shard_count=4
        ):
            pieces[b] = frame
    merged = pd.concat((pieces[b] for b in sorted(pieces)), ignore_index=True)
    pd.testing.assert_frame_equal(whole, merged)
    print(
        f"PASS criterion 10: emulated {n:,} configs in {elapsed:.0f}s (<180s), "
        f"{optimal:,} flagged optimal; 4-shard stream equals the single stream"
    )


def _desk_moments(config):
    import json

    doc = json.loads((config.out / "moments.json").read_text())
    return EmpiricalMoments.from_dict(doc)


# ---------------------------------------------------------------------------
# criterion 11: Welch test agreement and t-table constants

TWO_SIDED_CRITICALS = {
    # df: two-sided 5% critical value (textbook constants)
    1: 12.706204736,
    2: 4.302652730,
    5: 2.570581836,
    10: 2.228138852,
    30: 2.042272456,
    120: 1.979930405,
}


def test_criterion_11_welch_against_scipy_and_t_table():
    rng = np.random.default_rng(7)
    worst_t = 0.0
    worst_p = 0.0
    for _ in range(100):
        na = int(rng.integers(2, 60))
        nb = int(rng.integers(2, 60))
        a = rng.normal(rng.uniform(-3, 3), rng.uniform(0.2, 4.0), size=na)
        b = rng.normal(rng.uniform(-3, 3), rng.uniform(0.2, 4.0), size=nb)
        ours = welch_t_test(a, b)
        ref = scipy.stats.ttest_ind(a, b, equal_var=False)
        worst_t = max(worst_t, abs(ours.t - float(ref.statistic)))
        worst_p = max(worst_p, abs(ours.p - float(ref.pvalue)))
    assert worst_t < 1e-9
    assert worst_p < 1e-8

    worst_c = 0.0
    for df, expected in TWO_SIDED_CRITICALS.items():
        critical = scipy.optimize.brentq(
            lambda t: student_t_two_sided_p(t, float(df)) - 0.05, 0.1, 200.0, xtol=1e-12
        )
        worst_c = max(worst_c, abs(critical - expected))
        assert critical == pytest.approx(expected, abs=1e-6), f"df={df}"
    print(
        f"PASS criterion 11: 100 Welch pairs max |dt|={worst_t:.2e} (<1e-9), "
        f"max |dp|={worst_p:.2e} (<1e-8); t-table criticals recovered to {worst_c:.2e} (<1e-6)"
    )
