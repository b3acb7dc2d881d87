"""Counter-based pseudo-random streams.

Every draw is a pure function of ``(seed, stream label, index within the
call)``: hashing the label into the seed opens an independent stream, and the
i-th value of a stream is a splitmix64 finalizer applied to ``key + i*phi``.
Calling the same (seed, label) twice returns the same values, which is what
makes training resumable without serialized generator state: callers fold the
step number into the label instead.

Normals come from Box-Muller over disjoint uniform counters, so they are as
addressable as the uniforms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_PHI = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_TWO53 = float(1 << 53)


def _fnv1a(label: str) -> int:
    h = _FNV_OFFSET
    for byte in label.encode("utf-8"):
        h = ((h ^ byte) * _FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


def _splitmix(x: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = (x + _PHI) * np.uint64(1)  # copy into uint64 space
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
        z = z ^ (z >> np.uint64(31))
    return z


def _raw(key: int, start: int, n: int) -> np.ndarray:
    idx = np.arange(start, start + n, dtype=np.uint64)
    with np.errstate(over="ignore"):
        x = np.uint64(key) + idx * _PHI
    return _splitmix(x)


@dataclass(frozen=True)
class Rng:
    """A seed plus label-addressed streams derived from it."""

    seed: int

    def _key(self, label: str) -> int:
        mixed = (self.seed ^ _fnv1a(label)) & 0xFFFFFFFFFFFFFFFF
        return int(_splitmix(np.array([mixed], dtype=np.uint64))[0])

    def uniform(self, label: str, shape=()) -> np.ndarray:
        """Uniform draws in [0, 1)."""
        n = int(np.prod(shape, dtype=np.int64)) if shape else 1
        bits = _raw(self._key(label), 0, n) >> np.uint64(11)
        vals = bits.astype(np.float64) / _TWO53
        return vals.reshape(shape) if shape else vals[0]

    def normal(self, label: str, shape=()) -> np.ndarray:
        """Standard normal draws via Box-Muller."""
        n = int(np.prod(shape, dtype=np.int64)) if shape else 1
        m = (n + 1) // 2
        key = self._key(label)
        # u1 in (0, 1] so the log is finite; u2 in [0, 1)
        u1 = ((_raw(key, 0, m) >> np.uint64(11)) + np.uint64(1)).astype(np.float64) / _TWO53
        u2 = (_raw(key, m, m) >> np.uint64(11)).astype(np.float64) / _TWO53
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u2
        vals = np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:n]
        return vals.reshape(shape) if shape else vals[0]

    def integers(self, label: str, shape, low: int, high: int) -> np.ndarray:
        """Integer draws in [low, high)."""
        if high <= low:
            raise ValueError(f"empty integer range [{low}, {high})")
        u = self.uniform(label, shape)
        return (np.floor(u * (high - low)) + low).astype(np.int64)

    def derive(self, label: str) -> "Rng":
        """Child generator with an independent seed (kept in int64 range)."""
        return Rng(self._key(label) & 0x7FFFFFFFFFFFFFFF)
