"""Canonical bit-level encoding of persistent state.

Fields are written most-significant bit first in fixed order with fixed
widths, so the encoded length is exactly what a policy is charged for.
"""
from dataclasses import dataclass


def int_width(max_value):
    """Bits for an unsigned field holding values in ``[0, max_value]``.

    Equals ``ceil(log2(max_value + 1))``.
    """
    if max_value < 0:
        raise ValueError("max_value must be non-negative")
    return int(max_value).bit_length()


@dataclass(frozen=True)
class BitString:
    value: int
    length: int

    def __len__(self):
        return self.length

    def to_bytes(self):
        nbytes = (self.length + 7) // 8
        return (self.value << (nbytes * 8 - self.length)).to_bytes(nbytes, "big")

    @classmethod
    def from_bytes(cls, data, length):
        nbytes = (length + 7) // 8
        if len(data) != nbytes:
            raise ValueError("byte count does not match bit length")
        return cls(int.from_bytes(data, "big") >> (nbytes * 8 - length), length)

    def hex(self):
        return f"{self.length}:{self.to_bytes().hex()}"


EMPTY = BitString(0, 0)


class BitWriter:
    def __init__(self):
        self._value = 0
        self._length = 0

    def uint(self, value, width):
        value = int(value)
        if value < 0 or value >> width:
            raise OverflowError(f"{value} does not fit in {width} bits")
        self._value = (self._value << width) | value
        self._length += width
        return self

    def flag(self, bit):
        return self.uint(1 if bit else 0, 1)

    def bits(self):
        return BitString(self._value, self._length)


class BitReader:
    def __init__(self, bits):
        self._bits = bits
        self._pos = 0

    def uint(self, width):
        end = self._pos + width
        if end > self._bits.length:
            raise ValueError("read past end of encoding")
        shift = self._bits.length - end
        self._pos = end
        return (self._bits.value >> shift) & ((1 << width) - 1)

    def flag(self):
        return bool(self.uint(1))

    def done(self):
        return self._pos == self._bits.length


@dataclass
class CounterState:
    """A bag of bounded counters; handy for simple policies and tests."""
    bound: int
    counters: list

    def encode(self):
        w = int_width(self.bound)
        out = BitWriter()
        for c in self.counters:
            out.uint(c, w)
        return out.bits()


def measure_state_bits(state):
    """Length in bits of the canonical encoding of ``state``."""
    if state is None:
        return 0
    if isinstance(state, BitString):
        return state.length
    return len(state.encode())
