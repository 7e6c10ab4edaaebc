"""Portable 64-bit PRNG (SplitMix64) used everywhere randomness is needed.

The generator is fixed so that sampling, random chains and simulation sweeps
are reproducible bit-for-bit across platforms and implementations. Reference
sequence for seed 0:

    0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4, 0x06C45D188009454F

(these are asserted in the test suite).
"""

MASK64 = (1 << 64) - 1

_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


class SplitMix64:
    """SplitMix64 with the standard finalizer.

    state update: x += 0x9E3779B97F4A7C15
    output: murmur-style 30/27/31 xor-shift multiply finalizer.
    """

    __slots__ = ("_x",)

    def __init__(self, seed):
        self._x = int(seed) & MASK64

    def next_u64(self):
        self._x = (self._x + _GOLDEN) & MASK64
        z = self._x
        z = ((z ^ (z >> 30)) * _MIX1) & MASK64
        z = ((z ^ (z >> 27)) * _MIX2) & MASK64
        return (z ^ (z >> 31)) & MASK64

    def next_float(self):
        """Uniform in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * 2.0**-53

    def next_below(self, n):
        """Uniform-ish integer in [0, n). Plain modulo; the bias for the
        small n used here (alphabet sizes, chain lengths) is irrelevant and
        the result is portable."""
        return self.next_u64() % n

    def shuffle(self, items):
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.next_below(i + 1)
            items[i], items[j] = items[j], items[i]
        return items
