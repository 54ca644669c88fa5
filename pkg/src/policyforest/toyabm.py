"""Synthetic stand-in for the original agent-based simulator.

The toy world produces two meaningful indicators per run, gdp_index
(high is good) and gini_index (low is good), as linear images of the
configuration plus optional Gaussian noise:

    gdp_index  = sum_p w_gdp[p] * z_p + region_gdp_shift + policy_gdp_shift + eps
    gini_index = sum_p w_gini[p] * z_p + region_gini_shift + policy_gini_shift + eps'

where z_p is the parameter value min-max normalized by its bounds. The
remaining indicator columns are deterministic "derived noise" computed
from the two indices, padding the corpus to the original's 66-column
width. With noise_sigma = 0 the whole indicator row is an exact function
of the configuration.

The default preset loads a single parameter with opposite signs on the
two indices, so one normalized value drives gdp up exactly as it drives
gini down and the label rule collapses to a per-policy threshold on that
value. Purchase craters gdp (harmful), Rent vouchers and Monetary aid
trade a small gdp boost for lower inequality (beneficial), and every
region responds identically.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd
import yaml

from ._seeds import DOMAIN_TOY, derive_rng
from .errors import SchemaError
from .schema import ParameterSchema

TOTAL_INDICATOR_COLUMNS = 66
GDP_INDICATOR = "gdp_index"
GINI_INDICATOR = "gini_index"
_N_AUX = TOTAL_INDICATOR_COLUMNS - 2

DEFAULT_NOISE_SIGMA = 0.01

# One loaded parameter with opposite-signed weights makes both label
# conditions cuts on the same normalized value z, so each policy cell is
# optimal iff z clears a single threshold: No-policy 0.90, Purchase 0.95,
# the two aid policies a shared 0.81. Three distinct thresholds over ~11k
# rows keeps the rule learnable from a depth-limited forest; per-cell
# shares land near 10/5/19/19 percent (pooled ~13).
_DEFAULT_POLICY_EFFECTS = {
    "No-policy": (0.0, 0.0),
    "Purchase": (-0.20, -0.42),
    "Rent vouchers": (0.10, -0.09),
    "Monetary aid": (0.10, -0.09),
}
_DEFAULT_LOADINGS = {
    "% of population": (1.0, -1.0),
}


@dataclass(frozen=True)
class ToyWorldSpec:
    """Shift-plus-noise world: effects, loadings, and loaded-param bounds."""

    region_effects: dict[str, tuple[float, float]]
    policy_effects: dict[str, tuple[float, float]]
    loadings: dict[str, tuple[float, float]]
    bounds: dict[str, tuple[float, float]]
    noise_sigma: float = DEFAULT_NOISE_SIGMA
    seed: int = 0

    def __post_init__(self):
        if self.noise_sigma < 0:
            raise SchemaError("noise_sigma must be non-negative")
        for name in self.loadings:
            if name not in self.bounds:
                raise SchemaError(f"loaded parameter {name!r} has no bounds in the world spec")
        for name, (lo, hi) in self.bounds.items():
            if not lo < hi:
                raise SchemaError(f"world bounds for {name!r} are not increasing")


def default_world(schema: ParameterSchema, noise_sigma: float = DEFAULT_NOISE_SIGMA,
                  seed: int = 0) -> ToyWorldSpec:
    """The tuned default preset against a schema with policy and region rows."""
    if schema.policy is None or schema.region is None:
        raise SchemaError("default world needs a schema with policy and region parameters")
    region_effects = {name: (0.0, 0.0) for name in schema.region.alternatives}
    policy_effects = {}
    for name in schema.policy.alternatives:
        if name not in _DEFAULT_POLICY_EFFECTS:
            raise SchemaError(f"default world has no effect for policy {name!r}")
        policy_effects[name] = _DEFAULT_POLICY_EFFECTS[name]
    loadings = {}
    bounds = {}
    for pname, weights in _DEFAULT_LOADINGS.items():
        p = schema.param(pname)
        loadings[pname] = weights
        bounds[pname] = (p.lower, p.upper)
    return ToyWorldSpec(
        region_effects=region_effects,
        policy_effects=policy_effects,
        loadings=loadings,
        bounds=bounds,
        noise_sigma=noise_sigma,
        seed=seed,
    )


def _check_world_against_schema(world: ToyWorldSpec, schema: ParameterSchema) -> None:
    if schema.policy is None or schema.region is None:
        raise SchemaError("toy corpus generation needs policy and region parameters")
    missing_regions = set(schema.region.alternatives) - set(world.region_effects)
    if missing_regions:
        raise SchemaError(f"world lacks effects for regions: {sorted(missing_regions)[:3]} ...")
    missing_policies = set(schema.policy.alternatives) - set(world.policy_effects)
    if missing_policies:
        raise SchemaError(f"world lacks effects for policies: {sorted(missing_policies)}")
    for name, (lo, hi) in world.bounds.items():
        p = schema.param(name)
        if (p.lower, p.upper) != (lo, hi):
            raise SchemaError(
                f"world bounds for {name!r} disagree with the schema "
                f"({lo}, {hi}) vs ({p.lower}, {p.upper})"
            )


def _indicator_frame(
    frame: pd.DataFrame,
    world: ToyWorldSpec,
    policy_name: str,
    region_name: str,
    rng: np.random.Generator | None,
) -> pd.DataFrame:
    n = len(frame)
    gdp = np.zeros(n, dtype=np.float64)
    gini = np.zeros(n, dtype=np.float64)
    zsum = np.zeros(n, dtype=np.float64)
    for pname, (w_gdp, w_gini) in world.loadings.items():
        lo, hi = world.bounds[pname]
        z = (frame[pname].to_numpy(dtype=np.float64) - lo) / (hi - lo)
        gdp += w_gdp * z
        gini += w_gini * z
        zsum += z

    region_gdp = {r: e[0] for r, e in world.region_effects.items()}
    region_gini = {r: e[1] for r, e in world.region_effects.items()}
    policy_gdp = {p: e[0] for p, e in world.policy_effects.items()}
    policy_gini = {p: e[1] for p, e in world.policy_effects.items()}
    regions = frame[region_name].astype(str)
    policies = frame[policy_name].astype(str)
    gdp += regions.map(region_gdp).to_numpy(dtype=np.float64)
    gini += regions.map(region_gini).to_numpy(dtype=np.float64)
    gdp += policies.map(policy_gdp).to_numpy(dtype=np.float64)
    gini += policies.map(policy_gini).to_numpy(dtype=np.float64)

    if world.noise_sigma > 0:
        if rng is None:
            rng = derive_rng(world.seed, DOMAIN_TOY, 1)
        gdp = gdp + world.noise_sigma * rng.standard_normal(n)
        gini = gini + world.noise_sigma * rng.standard_normal(n)

    out = {GDP_INDICATOR: gdp, GINI_INDICATOR: gini}
    for k in range(1, _N_AUX + 1):
        out[f"aux_{k:02d}"] = np.sin(1.7 * k + 3.1 * gdp + 5.3 * gini + 0.9 * k * zsum)
    return pd.DataFrame(out)


def simulate_run(config: dict, world: ToyWorldSpec, rng: np.random.Generator | None = None) -> dict[str, float]:
    """Indicator map for one configuration.

    The config must name one key per world effect table (the policy and
    region keys are found by membership in the effect maps).
    """
    policy_name = _find_key(config, world.policy_effects, "policy")
    region_name = _find_key(config, world.region_effects, "region")
    frame = pd.DataFrame({k: [v] for k, v in config.items()})
    ind = _indicator_frame(frame, world, policy_name, region_name, rng)
    return {k: float(v) for k, v in ind.iloc[0].items()}


def _find_key(config: dict, effects: dict, kind: str) -> str:
    hits = [k for k, v in config.items() if isinstance(v, str) and v in effects]
    if len(hits) != 1:
        raise SchemaError(f"cannot identify the {kind} key in the config (found {hits})")
    return hits[0]


def generate_corpus(
    world: ToyWorldSpec,
    schema: ParameterSchema,
    n: int,
    seed: int,
    path: str | Path | None = None,
) -> pd.DataFrame:
    """Draw n configurations and simulate them into a corpus frame.

    Continuous parameters draw uniformly within bounds, discrete ones
    uniformly over alternatives. Writes the ingestion-format CSV when a
    path is given; always returns the frame.
    """
    if n < 1:
        raise SchemaError("corpus size must be positive")
    _check_world_against_schema(world, schema)
    rng = derive_rng(seed, DOMAIN_TOY, 0)
    data: dict[str, np.ndarray] = {}
    for p in schema.continuous:
        data[p.name] = rng.uniform(p.lower, p.upper, size=n)
    for p in schema.discrete:
        idx = rng.integers(0, len(p.alternatives), size=n)
        data[p.name] = np.asarray(p.alternatives, dtype=object)[idx]
    frame = pd.DataFrame(data, columns=list(schema.names))

    noise_rng = derive_rng(seed, DOMAIN_TOY, 1)
    indicators = _indicator_frame(
        frame, world, schema.policy.name, schema.region.name, noise_rng
    )
    corpus = pd.concat([frame, indicators], axis=1)
    if path is not None:
        corpus.to_csv(path, index=False, encoding="utf-8")
    return corpus


# ---------------------------------------------------------------------------
# world files

def world_to_yaml(world: ToyWorldSpec) -> str:
    doc = {
        "noise_sigma": world.noise_sigma,
        "seed": world.seed,
        "loadings": {k: list(v) for k, v in world.loadings.items()},
        "bounds": {k: list(v) for k, v in world.bounds.items()},
        "policy_effects": {k: list(v) for k, v in world.policy_effects.items()},
        "region_effects": {k: list(v) for k, v in world.region_effects.items()},
    }
    return yaml.safe_dump(doc, sort_keys=True, allow_unicode=True)


def world_from_yaml(text: str) -> ToyWorldSpec:
    doc = yaml.safe_load(text)
    if not isinstance(doc, dict):
        raise SchemaError("world document must be a mapping")
    try:
        return ToyWorldSpec(
            region_effects={k: (float(a), float(b)) for k, (a, b) in doc["region_effects"].items()},
            policy_effects={k: (float(a), float(b)) for k, (a, b) in doc["policy_effects"].items()},
            loadings={k: (float(a), float(b)) for k, (a, b) in doc["loadings"].items()},
            bounds={k: (float(a), float(b)) for k, (a, b) in doc["bounds"].items()},
            noise_sigma=float(doc.get("noise_sigma", DEFAULT_NOISE_SIGMA)),
            seed=int(doc.get("seed", 0)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"malformed world document: {exc}") from exc


def load_world(path: str | Path) -> ToyWorldSpec:
    return world_from_yaml(Path(path).read_text(encoding="utf-8"))


def save_world(world: ToyWorldSpec, path: str | Path) -> None:
    Path(path).write_text(world_to_yaml(world), encoding="utf-8")
