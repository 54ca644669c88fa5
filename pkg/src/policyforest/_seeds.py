"""Domain-separated RNG derivation from a single master seed.

Every stochastic component derives its generator from
(master_seed, domain tag, index) through numpy's SeedSequence, so any
unit of work is reproducible in isolation and independent of how work is
sharded across workers.
"""
from __future__ import annotations

import numpy as np

DOMAIN_TREE = 1
DOMAIN_GENERATE = 2
DOMAIN_SPLIT = 3
DOMAIN_TOY = 4


def derive_rng(master_seed: int, domain: int, index: int) -> np.random.Generator:
    if master_seed < 0:
        raise ValueError("master seed must be non-negative")
    seq = np.random.SeedSequence((master_seed, domain, index))
    return np.random.Generator(np.random.PCG64(seq))
