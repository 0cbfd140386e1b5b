"""Binary64 values stored as four 16-bit words ordered by significance.

Word 0 holds the sign, the 11 exponent bits and the top 4 fraction bits;
words 1-3 hold the remaining 48 fraction bits, high to low. A reader that
only needs k*16 bits touches the first k words and nothing else.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass


def _bits(x: float) -> int:
    return struct.unpack(">Q", struct.pack(">d", x))[0]


def _float(bits: int) -> float:
    return struct.unpack(">d", struct.pack(">Q", bits))[0]


@dataclass(frozen=True)
class ChunkedF64:
    chunks: tuple[int, int, int, int]

    def __post_init__(self):
        if len(self.chunks) != 4 or any(not 0 <= c <= 0xFFFF for c in self.chunks):
            raise ValueError("ChunkedF64 needs exactly four 16-bit words")

    def to_json(self) -> list[str]:
        return [f"0x{c:04X}" for c in self.chunks]

    @classmethod
    def from_json(cls, words: list[str]) -> "ChunkedF64":
        return cls(tuple(int(w, 16) for w in words))


def encode(x: float) -> ChunkedF64:
    """Split the bit pattern of x into its four significance-ordered words.

    >>> encode(1.0).chunks
    (16368, 0, 0, 0)
    """
    b = _bits(float(x))
    return ChunkedF64(((b >> 48) & 0xFFFF, (b >> 32) & 0xFFFF, (b >> 16) & 0xFFFF, b & 0xFFFF))


def decode_at_level(c: ChunkedF64, k: int) -> float:
    """Value built from the first ``k`` words with the rest zero-filled.

    Zero-filling truncates toward zero in magnitude; ``k == 4`` is lossless.
    """
    if not 1 <= k <= 4:
        raise ValueError(f"level must be 1..4, got {k}")
    bits = 0
    for i in range(k):
        bits |= c.chunks[i] << (48 - 16 * i)
    return _float(bits)
