"""Deterministic PRNG for reproducible clustering.

xorshift64* (Marsaglia xorshift with the Vigna output multiplier):

    x ^= x >> 12;  x ^= x << 25;  x ^= x >> 27;  output = x * 2685821657736338717

State is 64-bit and must be nonzero; seed 0 is remapped to the golden-ratio
constant 0x9E3779B97F4A7C15.  The same constants reproduce the sequence in
any language, which is what keeps k-means fits comparable across runs.
"""

_MASK = 0xFFFFFFFFFFFFFFFF
_MULT = 2685821657736338717  # 0x2545F4914F6CDD1D
_ZERO_SEED = 0x9E3779B97F4A7C15


class XorShift64Star:
    def __init__(self, seed: int):
        self._state = (seed & _MASK) or _ZERO_SEED

    def next_u64(self) -> int:
        x = self._state
        x ^= x >> 12
        x ^= (x << 25) & _MASK
        x ^= x >> 27
        self._state = x
        return (x * _MULT) & _MASK

    def next_float(self) -> float:
        """Uniform float in [0, 1) with 53 bits of precision."""
        return (self.next_u64() >> 11) * (2.0 ** -53)

    def next_index(self, n: int) -> int:
        """Uniform index in [0, n)."""
        return min(int(self.next_float() * n), n - 1)
