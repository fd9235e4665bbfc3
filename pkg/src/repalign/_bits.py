"""64-bit hashing and seed-mixing primitives.

Every stochastic path in the package derives its streams from these three
functions, so they are pinned here once:

* ``fnv1a64`` — FNV-1a over UTF-8 bytes, used to turn opaque string ids
  into seeds.
* ``splitmix64`` — one step of the SplitMix64 sequence (advance by the
  golden-gamma constant, then finalize).
* ``mix(a, b) = splitmix64(a XOR b)`` — derives independent sub-streams
  (per-trial seeds, per-row seeds, per-layer seeds).

All arithmetic is modulo 2**64. Not cryptographic.
"""

MASK64 = (1 << 64) - 1

GOLDEN_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def fnv1a64(data: bytes | str) -> int:
    """FNV-1a 64-bit hash; strings are hashed as their UTF-8 bytes."""
    if isinstance(data, str):
        data = data.encode("utf-8")
    h = _FNV_OFFSET
    for byte in data:
        h = ((h ^ byte) * _FNV_PRIME) & MASK64
    return h


def _finalize(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & MASK64
    return (z ^ (z >> 31)) & MASK64


def splitmix64(state: int) -> int:
    """Output of one SplitMix64 step started from ``state``."""
    return _finalize((state + GOLDEN_GAMMA) & MASK64)


def mix(a: int, b: int) -> int:
    """Derive an independent 64-bit seed from two seeds."""
    return splitmix64((a & MASK64) ^ (b & MASK64))
