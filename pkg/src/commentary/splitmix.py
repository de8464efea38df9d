"""splitmix64: the only randomness source in the package.

Every sampled quantity (scenarios, feature noise, parameter init, batch
shuffles) is drawn from this generator so results are bit-exact across
platforms.
"""

import numpy as np

MASK64 = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB


def mix64(z):
    z = (z ^ (z >> 30)) * _M1 & MASK64
    z = (z ^ (z >> 27)) * _M2 & MASK64
    return z ^ (z >> 31)


class SplitMix64:
    """Sequential splitmix64 stream.

    ``next_u64`` matches the reference C implementation; ``u64_array`` draws a
    block of values identical to calling ``next_u64`` repeatedly.
    """

    def __init__(self, seed):
        self.state = int(seed) & MASK64

    def next_u64(self):
        self.state = (self.state + GAMMA) & MASK64
        return mix64(self.state)

    def below(self, n):
        """Uniform integer in [0, n) via the multiply-shift reduction."""
        if n <= 0:
            raise ValueError(f"bound must be positive, got {n}")
        return (self.next_u64() * n) >> 64

    def uniform(self):
        """Float in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def u64_array(self, count):
        idx = np.arange(1, count + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            z = np.uint64(self.state) + idx * np.uint64(GAMMA)
            z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
            z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
            z = z ^ (z >> np.uint64(31))
        self.state = (self.state + count * GAMMA) & MASK64
        return z

    def uniform_array(self, shape, low=0.0, high=1.0):
        count = int(np.prod(shape, dtype=np.int64))
        bits = self.u64_array(count) >> np.uint64(11)
        unit = bits.astype(np.float64) * (1.0 / (1 << 53))
        return (low + (high - low) * unit).reshape(shape)

    def permutation(self, n):
        """Fisher-Yates shuffle of range(n)."""
        order = list(range(n))
        for i in range(n - 1, 0, -1):
            j = self.below(i + 1)
            order[i], order[j] = order[j], order[i]
        return order


def derive_seed(*parts):
    """Combine integers into one 64-bit seed (used for per-epoch reseeding)."""
    acc = 0
    for p in parts:
        acc = mix64((acc ^ (int(p) & MASK64)) + GAMMA & MASK64)
    return acc
