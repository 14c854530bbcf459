"""Portable, seedable random number generation.

Two flavours, both fully specified so results can be reproduced in any
language:

* :class:`Rng` — a sequential xoshiro256** generator (Blackman/Vigna
  constants) seeded through splitmix64.  Used for algorithmic decisions:
  subsampling, shuffles, split assignment, augmentation draws.
* counter-based array helpers (`hash_u64`, `uniform_array`,
  `normal_array`) — splitmix64 applied elementwise to an index array.
  Used for bulk synthetic fields (point coordinates, pixel noise,
  embedding noise) where a sequential generator would be needlessly slow.

Named sub-streams are derived with FNV-1a 64 over the stream name so
per-sample work is order-independent and parallel-safe.
"""

from __future__ import annotations

import math

import numpy as np

_MASK64 = 0xFFFFFFFFFFFFFFFF

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3

# 1 / 2**53, for mapping the top 53 bits of a u64 onto [0, 1)
_INV53 = 1.0 / (1 << 53)


def fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for b in data:
        h = ((h ^ b) * _FNV_PRIME) & _MASK64
    return h


def splitmix64(state: int) -> tuple[int, int]:
    """One splitmix64 step; returns (new_state, output)."""
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


def derive_seed(seed: int, name: str) -> int:
    """Deterministic 64-bit sub-seed for a named stream."""
    _, out = splitmix64((seed & _MASK64) ^ fnv1a64(name.encode("utf-8")))
    return out


class Rng:
    """xoshiro256** with splitmix64 seeding."""

    def __init__(self, seed: int):
        s = seed & _MASK64
        state = []
        for _ in range(4):
            s, out = splitmix64(s)
            state.append(out)
        self._s = state

    @classmethod
    def stream(cls, seed: int, name: str) -> "Rng":
        """Independent stream keyed by (seed, name), e.g. a sample id."""
        return cls(derive_seed(seed, name))

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self._s
        x = (s1 * 5) & _MASK64
        result = (((x << 7) | (x >> 57)) & _MASK64) * 9 & _MASK64
        t = (s1 << 17) & _MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = ((s3 << 45) | (s3 >> 19)) & _MASK64
        self._s = [s0, s1, s2, s3]
        return result

    def uniform(self, low: float = 0.0, high: float = 1.0) -> float:
        """Uniform double in [low, high) from the top 53 bits."""
        u = (self.next_u64() >> 11) * _INV53
        return low + (high - low) * u

    def below(self, n: int) -> int:
        """Unbiased integer in [0, n) by rejection from the top bits."""
        if n <= 0:
            raise ValueError("below() requires n >= 1")
        # reject values in the tail that would bias the modulo
        limit = (_MASK64 + 1) - ((_MASK64 + 1) % n)
        while True:
            x = self.next_u64()
            if x < limit:
                return x % n

    def normal(self, mean: float = 0.0, sigma: float = 1.0) -> float:
        return mean + sigma * self.normals(1)[0]

    def normals(self, n: int) -> np.ndarray:
        """n standard normals via Box-Muller; consumes 2*ceil(n/2) u64 draws."""
        out = np.empty(n, dtype=np.float64)
        i = 0
        while i < n:
            u1 = (self.next_u64() >> 11) * _INV53
            u2 = (self.next_u64() >> 11) * _INV53
            if u1 <= 0.0:
                u1 = _INV53
            r = math.sqrt(-2.0 * math.log(u1))
            out[i] = r * math.cos(2.0 * math.pi * u2)
            i += 1
            if i < n:
                out[i] = r * math.sin(2.0 * math.pi * u2)
                i += 1
        return out

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates."""
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]

    def sample_indices(self, n: int, k: int) -> np.ndarray:
        """k distinct indices from range(n), partial Fisher-Yates order."""
        if k > n:
            raise ValueError("k must not exceed n")
        idx = np.arange(n, dtype=np.int64)
        for i in range(k):
            j = i + self.below(n - i)
            idx[i], idx[j] = idx[j], idx[i]
        return idx[:k].copy()

    def poisson(self, lam: float) -> int:
        """Poisson count; Knuth below 1000, rounded normal approximation above."""
        if lam < 0:
            raise ValueError("lambda must be >= 0")
        if lam == 0:
            return 0
        if lam < 1000.0:
            limit = math.exp(-lam)
            k, p = 0, 1.0
            while True:
                p *= self.uniform()
                if p <= limit:
                    return k
                k += 1
        return max(0, int(round(self.normal(lam, math.sqrt(lam)))))


# --- counter-based bulk helpers -----------------------------------------

def hash_u64(indices: np.ndarray, seed: int) -> np.ndarray:
    """Vectorised splitmix64 output for (index + seed-offset) counters."""
    with np.errstate(over="ignore"):
        x = (indices.astype(np.uint64) + np.uint64((seed + 0x9E3779B97F4A7C15) & _MASK64))
        x = x * np.uint64(0x9E3779B97F4A7C15)
        z = x
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return z ^ (z >> np.uint64(31))


def uniform_array(seed: int, n: int, offset: int = 0) -> np.ndarray:
    """n uniforms in [0,1) from counters offset..offset+n-1."""
    idx = np.arange(offset, offset + n, dtype=np.uint64)
    return (hash_u64(idx, seed) >> np.uint64(11)).astype(np.float64) * _INV53


def normal_array(seed: int, n: int, offset: int = 0) -> np.ndarray:
    """n standard normals, Box-Muller over counter pairs."""
    m = (n + 1) // 2
    u1 = uniform_array(seed, m, offset=offset)
    u2 = uniform_array(seed, m, offset=offset + m)
    u1 = np.maximum(u1, _INV53)
    r = np.sqrt(-2.0 * np.log(u1))
    theta = 2.0 * np.pi * u2
    out = np.empty(2 * m, dtype=np.float64)
    out[0::2] = r * np.cos(theta)
    out[1::2] = r * np.sin(theta)
    return out[:n]
