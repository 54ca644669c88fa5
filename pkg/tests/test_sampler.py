"""Moment fitting and truncated-normal / uniform configuration sampling."""
import math

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from policyforest import (
    ContinuousParamSpec,
    DiscreteParamSpec,
    EmpiricalMoments,
    SamplerError,
    fit_moments,
    generate_configs,
    iter_config_batches,
    sample_continuous,
    sample_discrete,
)


def test_fit_moments_golden(small_schema):
    frame = pd.DataFrame(
        {
            "alpha": [0.2, 0.4, 0.6],
            "beta": [1.0, 1.0, 1.0],
            "Policies": ["No-policy"] * 3,
            "Region": ["North"] * 3,
        }
    )
    moments = fit_moments(frame, small_schema)
    assert moments.mean("alpha") == pytest.approx(0.4)
    assert moments.std("alpha") == pytest.approx(0.2)  # ddof=1
    assert moments.std("beta") == 0.0
    assert set(moments.params) == {"alpha", "beta"}


def test_fit_moments_single_row(small_schema):
    frame = pd.DataFrame(
        {"alpha": [0.3], "beta": [0.5], "Policies": ["No-policy"], "Region": ["North"]}
    )
    moments = fit_moments(frame, small_schema)
    assert moments.std("alpha") == 0.0


def test_moments_round_trip():
    m = EmpiricalMoments(params={"a": (0.5, 0.1), "b": (-1.0, 2.0)})
    assert EmpiricalMoments.from_dict(m.to_dict()) == m


@given(
    mean=st.floats(-5, 5),
    std=st.floats(0, 4),
    seed=st.integers(0, 2**31),
)
@settings(max_examples=60, deadline=None)
def test_continuous_samples_stay_in_bounds(mean, std, seed):
    spec = ContinuousParamSpec("x", -1.0, 2.0)
    rng = np.random.default_rng(seed)
    draws = sample_continuous(spec, (mean, std), 500, rng)
    assert draws.shape == (500,)
    assert np.all(draws >= spec.lower)
    assert np.all(draws <= spec.upper)


def test_continuous_zero_std_clamps_mean():
    spec = ContinuousParamSpec("x", 0.0, 1.0)
    rng = np.random.default_rng(0)
    assert np.all(sample_continuous(spec, (0.4, 0.0), 50, rng) == 0.4)
    # a degenerate mean outside the bounds pins to the nearer bound
    assert np.all(sample_continuous(spec, (7.0, 0.0), 50, rng) == 1.0)
    assert np.all(sample_continuous(spec, (-3.0, 0.0), 50, rng) == 0.0)


def test_continuous_matches_analytic_cdf():
    # inverse-CDF draws against the closed-form truncated normal CDF
    spec = ContinuousParamSpec("x", -1.0, 1.5)
    mean, std = 0.3, 0.5
    sigma = 3.0 * std
    rng = np.random.default_rng(42)
    draws = np.sort(sample_continuous(spec, (mean, std), 20_000, rng))

    def phi(z):
        return 0.5 * (1.0 + math.erf(z / math.sqrt(2.0)))

    lo = phi((spec.lower - mean) / sigma)
    hi = phi((spec.upper - mean) / sigma)
    cdf = (np.vectorize(phi)((draws - mean) / sigma) - lo) / (hi - lo)
    grid = (np.arange(len(draws)) + 0.5) / len(draws)
    assert np.max(np.abs(cdf - grid)) < 0.02


def test_discrete_uniform_and_single_alternative():
    spec = DiscreteParamSpec("mode", ("a", "b", "c", "d"))
    rng = np.random.default_rng(1)
    draws = sample_discrete(spec, 40_000, rng)
    _, counts = np.unique(draws, return_counts=True)
    assert counts.min() > 9_500 and counts.max() < 10_500

    lone = DiscreteParamSpec("fixed", ("only",))
    assert set(sample_discrete(lone, 100, rng)) == {"only"}


def _uniform_moments(schema):
    return EmpiricalMoments(
        params={p.name: ((p.lower + p.upper) / 2, (p.upper - p.lower) / 4) for p in schema.continuous}
    )


def test_batches_deterministic(small_schema):
    moments = _uniform_moments(small_schema)
    a = pd.concat(f for _, f in iter_config_batches(small_schema, moments, 500, 9, batch_size=200))
    b = pd.concat(f for _, f in iter_config_batches(small_schema, moments, 500, 9, batch_size=200))
    pd.testing.assert_frame_equal(a, b)


def test_shards_reassemble_to_single_stream(small_schema):
    moments = _uniform_moments(small_schema)
    whole = pd.concat(
        (f for _, f in iter_config_batches(small_schema, moments, 1000, 3, batch_size=128)),
        ignore_index=True,
    )
    pieces = {}
    for k in range(3):
        for b, frame in iter_config_batches(
            small_schema, moments, 1000, 3, batch_size=128, shard_index=k, shard_count=3
        ):
            pieces[b] = frame
    merged = pd.concat((pieces[b] for b in sorted(pieces)), ignore_index=True)
    pd.testing.assert_frame_equal(whole, merged)


def test_batch_frames_carry_all_parameters(small_schema):
    moments = _uniform_moments(small_schema)
    _, frame = next(iter_config_batches(small_schema, moments, 10, 0))
    assert list(frame.columns) == list(small_schema.names)
    assert len(frame) == 10


def test_generate_configs_list(small_schema):
    moments = _uniform_moments(small_schema)
    configs = generate_configs(small_schema, moments, 25, 4)
    assert len(configs) == 25
    assert set(configs[0]) == set(small_schema.names)
    assert configs[0]["Policies"] in {"No-policy", "Purchase"}


def test_generation_rejects_bad_arguments(small_schema):
    moments = _uniform_moments(small_schema)
    with pytest.raises(SamplerError):
        list(iter_config_batches(small_schema, moments, 0, 0))
    with pytest.raises(SamplerError):
        list(iter_config_batches(small_schema, moments, 10, 0, batch_size=0))
    with pytest.raises(SamplerError):
        list(iter_config_batches(small_schema, moments, 10, 0, shard_index=2, shard_count=2))


def test_moments_missing_parameter_is_an_error(small_schema):
    moments = EmpiricalMoments(params={"alpha": (0.5, 0.1)})
    with pytest.raises(SamplerError, match="beta"):
        list(iter_config_batches(small_schema, moments, 10, 0))
