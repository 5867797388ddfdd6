"""Shared numeric tolerances and seeded random streams."""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Tolerances:
    row_sum: float = 1e-12
    distribution_sum: float = 1e-9
    fixed_point: float = 1e-10
    oracle: float = 1e-10


TOL = Tolerances()

HONEST, MALICIOUS, SYBIL = 0, 1, 2
LABEL_NAMES = {HONEST: "honest", MALICIOUS: "malicious", SYBIL: "sybil"}
LABEL_CODES = {v: k for k, v in LABEL_NAMES.items()}


def named_rng(seed, name):
    """Return an independent generator for one experiment component.

    Streams are keyed by ``(seed, name)`` so that changing how many draws
    one component makes does not perturb the others.
    """
    key = zlib.crc32(name.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence([int(seed), key]))


def as_rng(rng):
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)
