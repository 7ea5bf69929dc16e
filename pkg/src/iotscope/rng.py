"""Portable seeded pseudo-random generator.

SplitMix64 is used for every seeded decision in the toolkit (split
shuffles, fold assignment, bootstrap draws, weight initialisation and
synthetic traffic) so that a given seed yields the same result on any
platform or implementation language.

Algorithm, with all arithmetic modulo 2**64::

    state += 0x9E3779B97F4A7C15
    z = state
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    return z ^ (z >> 31)

Derived draws:

* ``random()``: ``(next_u64() >> 11) * 2**-53``, uniform on [0, 1).
* ``randbelow(n)``: rejection sampling; draws ``x = next_u64()`` until
  ``x < 2**64 - (2**64 mod n)`` and returns ``x mod n``.
* ``shuffle(seq)``: Fisher-Yates, for ``i`` from ``len - 1`` down to 1 swap
  ``seq[i]`` with ``seq[randbelow(i + 1)]``.
* ``gauss()``: Box-Muller using two ``random()`` draws, ``u1`` mapped to
  ``1 - u1`` so the logarithm is finite.
"""

import math

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


class SplitMix64:
    def __init__(self, seed):
        self.state = int(seed) & _MASK

    def next_u64(self):
        self.state = (self.state + _GOLDEN) & _MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        return z ^ (z >> 31)

    def random(self):
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def uniform(self, low, high):
        return low + (high - low) * self.random()

    def randbelow(self, n):
        if n <= 0:
            raise ValueError("n must be positive")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            x = self.next_u64()
            if x < limit:
                return x % n

    def shuffle(self, seq):
        for i in range(len(seq) - 1, 0, -1):
            j = self.randbelow(i + 1)
            seq[i], seq[j] = seq[j], seq[i]
        return seq

    def permutation(self, n):
        return self.shuffle(list(range(n)))

    def gauss(self, mu=0.0, sigma=1.0):
        u1 = 1.0 - self.random()
        u2 = self.random()
        z = math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)
        return mu + sigma * z
