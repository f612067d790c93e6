"""Seed derivation: every random stream is keyed by (master seed, name)."""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(seed: int, *names) -> int:
    key = "/".join([str(int(seed)), *map(str, names)]).encode()
    return int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "little")


def stream(seed: int, *names) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, *names))
