"""Deterministic random streams built on the splitmix64 generator.

Every sampled quantity in the package flows from a single 64-bit seed
through this module.  splitmix64 is a tiny, well-known mixer with a
fixed published constant set, so the exact sample sequences can be
reproduced from any language without dragging in a full Mersenne
twister state.
"""
from __future__ import annotations

_MASK = 0xFFFFFFFFFFFFFFFF
_GAMMA = 0x9E3779B97F4A7C15

# FNV-1a, used only to fold stream labels into sub-seeds.
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def _mix(z: int) -> int:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 & _MASK
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB & _MASK
    return z ^ (z >> 31)


class SplitMix64:
    """splitmix64 stream: state advances by the golden-gamma constant."""

    def __init__(self, seed: int):
        self._state = seed & _MASK

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & _MASK
        return _mix(self._state)

    def uniform(self, lo: float = 0.0, hi: float = 1.0) -> float:
        """Uniform double in [lo, hi) using the top 53 bits."""
        u = (self.next_u64() >> 11) * 2.0**-53
        return lo + (hi - lo) * u

    def uniforms(self, k: int, lo: float = 0.0, hi: float = 1.0) -> list[float]:
        return [self.uniform(lo, hi) for _ in range(k)]

    def randint(self, n: int) -> int:
        """Integer in [0, n) by 64-bit modular reduction.

        The modulo bias is below 2**-50 for every n used in the package,
        far under any tolerance in play, and keeps the stream identical
        across platforms.
        """
        return self.next_u64() % n


def stream(seed: int, label: str) -> SplitMix64:
    """Derive an independent named substream from the master seed.

    The label is folded with FNV-1a and mixed once so that distinct
    labels give unrelated streams regardless of thread scheduling.
    """
    h = _FNV_OFFSET
    for ch in label.encode("utf-8"):
        h = ((h ^ ch) * _FNV_PRIME) & _MASK
    return SplitMix64(_mix((seed ^ h) & _MASK))
