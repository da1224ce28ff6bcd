"""Deterministic random number generation.

Everything stochastic in this package (simulation noise, weight
initialization, batch sampling) draws from :class:`SplitMix64` so that a
seed pins down results bit-for-bit across platforms and reruns.

SplitMix64 (Steele, Lea & Flood 2014) is counter based: the k-th 64-bit
output (k = 1, 2, ...) is ``mix(seed + k * GAMMA)`` computed modulo 2**64,
where GAMMA = 0x9E3779B97F4A7C15 and ``mix`` is

    z ^= z >> 30; z *= 0xBF58476D1CE4E5B9
    z ^= z >> 27; z *= 0x94D049BB133111EB
    z ^= z >> 31

Derived draws:
  * uniform:      u = (z >> 11) * 2**-53            in [0, 1)
  * exponential:  -ln(((z >> 11) + 1) * 2**-53)     inverse CDF, mean 1
  * normal:       Box-Muller on consecutive pairs (consumes 2*ceil(n/2))
"""

import numpy as np

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_U53 = 2.0 ** -53


class SplitMix64:
    """Seeded 64-bit generator with vectorized draws."""

    def __init__(self, seed: int):
        self._seed = np.uint64(seed & 0xFFFFFFFFFFFFFFFF)
        self._count = 0  # 64-bit outputs consumed so far

    def next_u64(self, n: int) -> np.ndarray:
        """The next ``n`` raw 64-bit outputs as a uint64 array."""
        if n < 0:
            raise ValueError("n must be nonnegative")
        ks = np.arange(self._count + 1, self._count + n + 1, dtype=np.uint64)
        self._count += n
        z = self._seed + ks * _GAMMA
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
        return z ^ (z >> np.uint64(31))

    def uniform(self, n: int) -> np.ndarray:
        """i.i.d. uniforms on [0, 1)."""
        return (self.next_u64(n) >> np.uint64(11)).astype(np.float64) * _U53

    def exponential(self, n: int) -> np.ndarray:
        """i.i.d. unit-mean exponentials via inverse CDF, -ln U with U in (0, 1]."""
        u = ((self.next_u64(n) >> np.uint64(11)) + np.uint64(1)).astype(np.float64) * _U53
        return -np.log(u)

    def normal(self, n: int) -> np.ndarray:
        """i.i.d. standard normals (Box-Muller)."""
        m = (n + 1) // 2
        u1 = ((self.next_u64(m) >> np.uint64(11)) + np.uint64(1)).astype(np.float64) * _U53
        u2 = (self.next_u64(m) >> np.uint64(11)).astype(np.float64) * _U53
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u2
        return np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:n]

    def integers(self, upper: int, n: int) -> np.ndarray:
        """i.i.d. integers in [0, upper). Uses floor(u * upper); the modulo
        bias is below 2**-40 for any upper < 2**13 and irrelevant here."""
        if upper <= 0:
            raise ValueError("upper must be positive")
        return np.minimum((self.uniform(n) * upper).astype(np.int64), upper - 1)
