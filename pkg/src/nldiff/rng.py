"""Counter-based normal streams.

Each path owns a SplitMix64 stream whose key is a hash of ``(seed, path)``;
draw ``n`` of that stream is ``mix64(key + (n + 1) * GAMMA)``.  Any draw can
be computed directly from ``(seed, path, n)``, so results do not depend on
chunking, worker count or evaluation order.

Uniforms take the top 53 bits and are centred in their bin, so they lie in
the open interval (0, 1); normals come from the inverse normal CDF.
"""
from __future__ import annotations

import numpy as np
from scipy.special import ndtri

GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_PATH_SALT = np.uint64(0xD1B54A32D192ED03)


def mix64(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.uint64)
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def path_keys(seed: int, paths: np.ndarray) -> np.ndarray:
    """Stream key of every path index in ``paths`` for ``seed``."""
    base = mix64(np.array([seed & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64) + GAMMA)
    p = np.asarray(paths, dtype=np.uint64)
    return mix64(base ^ mix64(p * _PATH_SALT + GAMMA))


def uniforms(keys: np.ndarray, n: int) -> np.ndarray:
    """Draw number ``n`` of each stream, as floats in (0, 1)."""
    counter = np.array([n + 1], dtype=np.uint64) * GAMMA
    bits = mix64(keys + counter) >> np.uint64(11)
    return (bits.astype(np.float64) + 0.5) * (2.0**-53)


def normals(keys: np.ndarray, n: int) -> np.ndarray:
    return ndtri(uniforms(keys, n))
