"""Counter-based random streams.

Every stream is a Philox generator whose key is derived from ``(seed, tag,
index)``; position inside the stream is the Philox counter, so the j-th raw
word of stream ``(seed, tag, index)`` is fixed regardless of what else has
been drawn. This gives random access to profile ``index`` without replaying
earlier profiles.
"""

from __future__ import annotations

import zlib
from fractions import Fraction

import numpy as np

_TWO64 = 1 << 64


def _tag_word(tag: str) -> int:
    return zlib.crc32(tag.encode("utf-8"))


def philox(seed: int, tag: str, index: int = 0) -> np.random.Philox:
    if seed < 0 or index < 0:
        raise ValueError("seed and index must be non-negative")
    ss = np.random.SeedSequence([seed & (_TWO64 - 1), seed >> 64, _tag_word(tag), index])
    key = ss.generate_state(2, dtype=np.uint64)
    return np.random.Philox(key=key)


def raw_words(seed: int, tag: str, index: int, count: int) -> np.ndarray:
    """The first ``count`` uint64 words of stream ``(seed, tag, index)``."""
    return philox(seed, tag, index).random_raw(count)


def generator(seed: int, tag: str, index: int = 0) -> np.random.Generator:
    return np.random.Generator(philox(seed, tag, index))


def threshold(p: Fraction) -> np.uint64:
    """Integer cut so that ``word < threshold(p)`` has probability p (to 2**-64)."""
    if not 0 <= p <= 1:
        raise ValueError(f"probability out of range: {p}")
    cut = (p.numerator * _TWO64) // p.denominator
    return np.uint64(min(cut, _TWO64 - 1))


def derive_seed(seed: int, tag: str) -> int:
    """A 64-bit child seed, used to separate independent consumers of one seed."""
    ss = np.random.SeedSequence([seed & (_TWO64 - 1), seed >> 64, _tag_word(tag)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])
