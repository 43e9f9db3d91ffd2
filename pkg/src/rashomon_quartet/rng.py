"""Seeded random streams.

Every random draw in the package comes from ``substream(seed, label)``: a
PCG64 generator whose seed sequence is keyed by the master seed plus a
SHA-256 digest of a text label. Distinct labels give statistically
independent streams, so train/test data, forest trees and network inits never
share state and results do not depend on evaluation order.

Normal variates are produced by inverse-CDF transform of 53-bit uniforms
(``standard_normal`` below), not numpy's ziggurat, so the mapping from
uniform stream to normals is fixed and documented.
"""

from __future__ import annotations

import hashlib

import numpy as np
from scipy.special import ndtri

MAX_SEED = 2**64 - 1
_TWO53 = float(2**53)


def _label_key(label: str) -> tuple[int, ...]:
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    return tuple(int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4))


def substream(seed: int, label: str) -> np.random.Generator:
    """Independent generator for ``(seed, label)``."""
    if not 0 <= int(seed) <= MAX_SEED:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=_label_key(label))
    return np.random.Generator(np.random.PCG64(ss))


def open_uniform(rng: np.random.Generator, size) -> np.ndarray:
    """Uniforms on the open interval (0, 1) with 53-bit resolution."""
    k = rng.integers(0, 2**53, size=size, dtype=np.uint64)
    return (k.astype(np.float64) + 0.5) / _TWO53


def standard_normal(rng: np.random.Generator, size) -> np.ndarray:
    return ndtri(open_uniform(rng, size))


def derive_seed(seed: int, label: str) -> int:
    """A 63-bit integer seed for code that runs its own generator (numba kernels)."""
    return int(substream(seed, label).integers(1, 2**63, dtype=np.int64))
