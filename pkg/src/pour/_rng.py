"""Seeded random streams.

Every random draw in the package goes through :func:`make_rng`, a numpy
``Generator`` over the counter-based Philox-4x64 bit generator. Normal
variates come from numpy's ziggurat sampler, so a given seed yields
bitwise-identical arrays across runs on one platform.
"""

from __future__ import annotations

import hashlib

import numpy as np


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed)))


def derive_seed(base: int, *names: object) -> int:
    """Deterministic child seed for a named sub-stream of ``base``."""
    key = ":".join([str(int(base)), *map(str, names)]).encode()
    return int.from_bytes(hashlib.sha256(key).digest()[:8], "little")
