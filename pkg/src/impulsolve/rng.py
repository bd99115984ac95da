"""Deterministic 64-bit shift-mix generator (splitmix64, counter mode).

Every random draw in this package comes from this generator so that runs are
reproducible bit-for-bit from a single integer seed, across backends and
across reimplementations in other languages.  The scheme is fixed by the
three lines below and documented in docs/formats.md:

    counter k (1-based):  z = mix64((seed + k * 0x9E3779B97F4A7C15) mod 2^64)
    uniform draw:         u_k = z / 2^64            (exact double division)

with the finalizer

    mix64(z): z ^= z >> 30; z *= 0xBF58476D1CE4E5B9
              z ^= z >> 27; z *= 0x94D049BB133111EB
              z ^= z >> 31                          (all mod 2^64)

Counter mode means draw k is a pure function of (seed, k), so consumers may
evaluate draws out of order or vectorised without changing the stream.
"""

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_MUL1 = 0xBF58476D1CE4E5B9
_MUL2 = 0x94D049BB133111EB
_INV_2_64 = 2.0 ** -64


def mix64(z: int) -> int:
    """splitmix64 finalizer on a 64-bit integer."""
    z &= MASK64
    z ^= z >> 30
    z = (z * _MUL1) & MASK64
    z ^= z >> 27
    z = (z * _MUL2) & MASK64
    z ^= z >> 31
    return z


def draw_uint64(seed: int, counter: int) -> int:
    """The counter-th 64-bit draw of the stream for `seed` (counter >= 1)."""
    return mix64((seed + counter * GOLDEN) & MASK64)


def draw_uniform(seed: int, counter: int) -> float:
    """The counter-th uniform in [0, 1): draw_uint64 scaled by 2^-64."""
    return draw_uint64(seed, counter) * _INV_2_64


class SplitMix64:
    """Sequential convenience wrapper over the counter scheme."""

    def __init__(self, seed: int = 0):
        self.seed = seed & MASK64
        self.counter = 0

    def next_uint64(self) -> int:
        self.counter += 1
        return draw_uint64(self.seed, self.counter)

    def next_uniform(self) -> float:
        return self.next_uint64() * _INV_2_64

    def next_below(self, n: int) -> int:
        """Integer in [0, n) by scaling; fine for the small n used here."""
        return int(self.next_uniform() * n)
