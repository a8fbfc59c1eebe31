"""Reference SplitMix64 streams in plain Python.

The compiled walker uses the same construction; this module exists so the
generator can be checked independently and reused from non-compiled code.
"""

from __future__ import annotations

MASK = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15


def mix64(z: int) -> int:
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
    return z ^ (z >> 31)


def stream_key(seed: int, path: int, stream: int) -> int:
    s = mix64((seed + GOLDEN) & MASK)
    s = mix64(s ^ ((path + GOLDEN) & MASK))
    return mix64(s ^ ((stream * GOLDEN + GOLDEN) & MASK))


class SplitMix64:
    """Counter-based stream: the ``k``-th output depends only on the key and ``k``."""

    def __init__(self, seed: int, path: int = 0, stream: int = 0):
        self.state = stream_key(seed, path, stream)

    def next_u64(self) -> int:
        self.state = (self.state + GOLDEN) & MASK
        return mix64(self.state)

    def uniform(self) -> float:
        """Uniform on (0, 1]."""
        return ((self.next_u64() >> 11) + 1) * 2.0**-53
