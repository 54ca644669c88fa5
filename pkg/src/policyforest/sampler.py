"""Large-scale configuration generation around the corpus distribution.

Continuous parameters draw from a truncated normal centered on the corpus
mean with the corpus standard deviation inflated threefold, truncated to
the schema bounds. Draws use the inverse-CDF transform: a uniform variate
is rescaled into [Phi(a), Phi(b)] and pushed through the normal quantile,
so every draw lands in bounds by construction and a single uniform stream
fixes the output. Discrete parameters draw uniformly over their
alternatives (probability 1/m each).

Generation is batched: batch b of a run derives its generator from
(master_seed, b) alone, so sharding batches across workers and
concatenating in batch order reproduces the single-threaded stream byte
for byte.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np
import pandas as pd
from scipy.special import ndtr, ndtri

from ._seeds import DOMAIN_GENERATE, derive_rng
from .errors import SamplerError
from .schema import ContinuousParamSpec, DiscreteParamSpec, ParameterSchema, corpus_frame

DEFAULT_BATCH_SIZE = 10_000
STD_INFLATION = 3.0

# A generated configuration has the same shape as RunRecord.config.
GeneratedConfig = dict[str, object]


@dataclass(frozen=True)
class EmpiricalMoments:
    """Per-parameter (mean, sample std) fitted over valid corpus rows."""

    params: dict[str, tuple[float, float]]

    def mean(self, name: str) -> float:
        return self.params[name][0]

    def std(self, name: str) -> float:
        return self.params[name][1]

    def to_dict(self) -> dict:
        return {k: [v[0], v[1]] for k, v in self.params.items()}

    @classmethod
    def from_dict(cls, doc: dict) -> "EmpiricalMoments":
        return cls(params={k: (float(v[0]), float(v[1])) for k, v in doc.items()})


def fit_moments(data, schema: ParameterSchema) -> EmpiricalMoments:
    """Mean and sample std (ddof=1) of each continuous parameter.

    A single-row corpus yields std 0.0 rather than NaN.
    """
    frame, _ = corpus_frame(data, schema)
    if len(frame) == 0:
        raise SamplerError("cannot fit moments on an empty corpus")
    params: dict[str, tuple[float, float]] = {}
    for p in schema.continuous:
        values = frame[p.name].to_numpy(dtype=np.float64)
        mean = float(values.mean())
        std = float(values.std(ddof=1)) if len(values) > 1 else 0.0
        params[p.name] = (mean, std)
    return EmpiricalMoments(params=params)


def sample_continuous(
    spec: ContinuousParamSpec,
    moments: tuple[float, float],
    n: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Inverse-CDF truncated-normal draws within the parameter's bounds.

    sigma is three times the corpus std; std 0 degenerates to the mean
    clamped into bounds. Never produces an out-of-bounds value.
    """
    if n < 0:
        raise SamplerError("sample size must be non-negative")
    mean, std = float(moments[0]), float(moments[1])
    if std < 0:
        raise SamplerError(f"{spec.name}: negative std")
    if std == 0.0:
        return np.full(n, min(max(mean, spec.lower), spec.upper), dtype=np.float64)
    sigma = STD_INFLATION * std
    alpha = (spec.lower - mean) / sigma
    beta = (spec.upper - mean) / sigma
    pa, pb = ndtr(alpha), ndtr(beta)
    u = rng.random(n)
    x = mean + sigma * ndtri(pa + u * (pb - pa))
    return np.clip(x, spec.lower, spec.upper)


def sample_discrete(spec: DiscreteParamSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform draws over the alternatives (probability 1/m each)."""
    if n < 0:
        raise SamplerError("sample size must be non-negative")
    idx = rng.integers(0, len(spec.alternatives), size=n)
    return np.asarray(spec.alternatives, dtype=object)[idx]


def _sample_batch(
    schema: ParameterSchema, moments: EmpiricalMoments, n_rows: int, rng: np.random.Generator
) -> pd.DataFrame:
    data: dict[str, np.ndarray] = {}
    for p in schema.continuous:
        if p.name not in moments.params:
            raise SamplerError(f"moments missing for parameter {p.name!r}")
        data[p.name] = sample_continuous(p, moments.params[p.name], n_rows, rng)
    for p in schema.discrete:
        data[p.name] = sample_discrete(p, n_rows, rng)
    return pd.DataFrame(data, columns=list(schema.names))


def iter_config_batches(
    schema: ParameterSchema,
    moments: EmpiricalMoments,
    n: int,
    master_seed: int,
    batch_size: int = DEFAULT_BATCH_SIZE,
    shard_index: int = 0,
    shard_count: int = 1,
) -> Iterator[tuple[int, pd.DataFrame]]:
    """Yield (batch index, frame) pairs for this shard, bounded memory.

    Batch b covers rows [b * batch_size, ...) and is generated from
    (master_seed, b) regardless of sharding; shard k handles batches with
    b % shard_count == k. Concatenating all shards' batches in batch order
    equals the single-shard stream exactly.
    """
    if n < 1:
        raise SamplerError("must generate at least one configuration")
    if batch_size < 1:
        raise SamplerError("batch size must be positive")
    if shard_count < 1 or not 0 <= shard_index < shard_count:
        raise SamplerError(f"bad shard spec {shard_index}/{shard_count}")
    n_batches = math.ceil(n / batch_size)
    for b in range(shard_index, n_batches, shard_count):
        rows = min(batch_size, n - b * batch_size)
        rng = derive_rng(master_seed, DOMAIN_GENERATE, b)
        yield b, _sample_batch(schema, moments, rows, rng)


def generate_configs(
    schema: ParameterSchema,
    moments: EmpiricalMoments,
    n: int,
    master_seed: int,
    batch_size: int = DEFAULT_BATCH_SIZE,
) -> list[GeneratedConfig]:
    """Materialize n sampled configurations (list of config dicts).

    Convenience wrapper over iter_config_batches for corpus-scale n; the
    pipeline streams batches instead of calling this.
    """
    out: list[GeneratedConfig] = []
    for _, frame in iter_config_batches(schema, moments, n, master_seed, batch_size):
        out.extend(frame.to_dict(orient="records"))
    return out
