"""Scalar models of the DSP built-ins the kernels are written against.

Every operation takes an optional :class:`OpCounters` and tallies itself
there.  The ``*_many`` functions are vectorized numpy twins used as the fast
path and as cross-checks for the compiled backend.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import NamedTuple, Optional

import numpy as np

from .errors import ContractError

INT32_MIN, INT32_MAX = -(1 << 31), (1 << 31) - 1

# Order is shared with the compiled kernels' counter array.
COUNTER_FIELDS = (
    "loads",
    "stores",
    "macs",
    "vector_dots",
    "bit_extracts",
    "bit_inserts",
    "popcounts",
    "compares",
    "vector_maxes",
    "scalar_loads",
    "scalar_macs",
    "im2col_loads",
    "im2col_stores",
)
NUM_COUNTERS = len(COUNTER_FIELDS)


@dataclass
class OpCounters:
    """Operation tallies.

    ``loads``/``stores`` count operand traffic of the compute loops;
    ``scalar_loads``/``scalar_macs`` are the subset spent in scalar K-tails,
    and im2col copy traffic is kept apart in ``im2col_loads``/``im2col_stores``.
    """

    loads: int = 0
    stores: int = 0
    macs: int = 0
    vector_dots: int = 0
    bit_extracts: int = 0
    bit_inserts: int = 0
    popcounts: int = 0
    compares: int = 0
    vector_maxes: int = 0
    scalar_loads: int = 0
    scalar_macs: int = 0
    im2col_loads: int = 0
    im2col_stores: int = 0

    def __add__(self, other: "OpCounters") -> "OpCounters":
        return OpCounters(*(getattr(self, f) + getattr(other, f) for f in COUNTER_FIELDS))

    def __iadd__(self, other: "OpCounters") -> "OpCounters":
        for f in COUNTER_FIELDS:
            setattr(self, f, getattr(self, f) + getattr(other, f))
        return self

    def to_array(self) -> np.ndarray:
        return np.array([getattr(self, f) for f in COUNTER_FIELDS], dtype=np.int64)

    @classmethod
    def from_array(cls, arr) -> "OpCounters":
        return cls(*(int(v) for v in arr))

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @property
    def macs_per_load(self) -> float:
        """MAC-to-load ratio of the vector loops, scalar tails excluded."""
        loads = self.loads - self.scalar_loads
        return (self.macs - self.scalar_macs) / loads if loads else 0.0


class Vec4i8(NamedTuple):
    l0: int
    l1: int
    l2: int
    l3: int


def _check_i8(v: int) -> int:
    if not -128 <= v <= 127:
        raise ValueError(f"{v} does not fit a signed byte")
    return v


def pack4(a: int, b: int, c: int, d: int, counters: Optional[OpCounters] = None) -> Vec4i8:
    return Vec4i8(_check_i8(a), _check_i8(b), _check_i8(c), _check_i8(d))


def dot4_acc(a, b, acc: int, counters: Optional[OpCounters] = None) -> int:
    r = acc + a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3]
    if not INT32_MIN <= r <= INT32_MAX:
        raise OverflowError("sdotp4 accumulator left the INT-32 range")
    if counters is not None:
        counters.vector_dots += 1
        counters.macs += 4
    return r


def max4(a, b, counters: Optional[OpCounters] = None) -> Vec4i8:
    if counters is not None:
        counters.vector_maxes += 1
    return Vec4i8(*(x if x >= y else y for x, y in zip(a, b)))


def _check_field(offset: int, size: int, sizes=(1, 2, 4, 8)) -> None:
    if size not in sizes:
        raise ContractError(f"field size {size} not in {sizes}")
    if offset < 0 or offset + size > 32:
        raise ContractError(f"field [{offset}, {offset + size}) exceeds a 32-bit word")


def sign_extend(v: int, size: int) -> int:
    sign = 1 << (size - 1)
    return ((v & ((1 << size) - 1)) ^ sign) - sign


def bextract(word: int, offset: int, size: int, counters: Optional[OpCounters] = None) -> int:
    """Sign-extended ``size``-bit field of ``word`` starting at bit ``offset``."""
    _check_field(offset, size)
    if counters is not None:
        counters.bit_extracts += 1
    return sign_extend((word & 0xFFFFFFFF) >> offset, size)


def bitinsert(dest: int, src: int, offset: int, size: int,
              counters: Optional[OpCounters] = None) -> int:
    """``dest`` with its ``size``-bit field at ``offset`` replaced by the low bits of ``src``."""
    _check_field(offset, size, sizes=tuple(range(1, 33)))
    if counters is not None:
        counters.bit_inserts += 1
    mask = ((1 << size) - 1) << offset
    return ((dest & ~mask) | ((src << offset) & mask)) & 0xFFFFFFFF


def popcount(word: int, counters: Optional[OpCounters] = None) -> int:
    if counters is not None:
        counters.popcounts += 1
    return (word & 0xFFFFFFFF).bit_count()


def _unpack4(packed: int, size: int, counters: Optional[OpCounters]) -> Vec4i8:
    return Vec4i8(*(bextract(packed, i * size, size, counters) for i in range(4)))


def unpack_int4_to_vec(packed: int, counters: Optional[OpCounters] = None) -> Vec4i8:
    """Four INT-4 fields of a 16-bit word, low field first."""
    return _unpack4(packed & 0xFFFF, 4, counters)


def unpack_int2_to_vec(packed: int, counters: Optional[OpCounters] = None) -> Vec4i8:
    """Four INT-2 fields of a byte, low field first."""
    return _unpack4(packed & 0xFF, 2, counters)


# -- vectorized twins -------------------------------------------------------

def dot4_acc_many(a, b, acc) -> np.ndarray:
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    return np.asarray(acc, dtype=np.int64) + (a * b).sum(axis=-1)


def max4_many(a, b) -> np.ndarray:
    return np.maximum(np.asarray(a, dtype=np.int8), np.asarray(b, dtype=np.int8))


def bextract_many(words, offset: int, size: int) -> np.ndarray:
    _check_field(offset, size)
    w = np.asarray(words, dtype=np.uint64) & np.uint64(0xFFFFFFFF)
    field = ((w >> np.uint64(offset)) & np.uint64((1 << size) - 1)).astype(np.int64)
    sign = 1 << (size - 1)
    return (field ^ sign) - sign


def bitinsert_many(dest, src, offset: int, size: int) -> np.ndarray:
    _check_field(offset, size, sizes=tuple(range(1, 33)))
    mask = np.uint64(((1 << size) - 1) << offset)
    d = np.asarray(dest, dtype=np.uint64)
    s = np.asarray(src, dtype=np.int64).astype(np.uint64)
    return ((d & ~mask) | ((s << np.uint64(offset)) & mask)) & np.uint64(0xFFFFFFFF)


def popcount_many(words) -> np.ndarray:
    w = np.asarray(words, dtype=np.uint64) & np.uint64(0xFFFFFFFF)
    as_bytes = w.astype("<u4").view(np.uint8).reshape(*w.shape, 4)
    return np.unpackbits(as_bytes, axis=-1).sum(axis=-1).astype(np.int64)


def unpack4_many(packed, size: int) -> np.ndarray:
    """Vectorized unpack of four ``size``-bit fields per word into (n, 4) int8 lanes."""
    p = np.asarray(packed, dtype=np.int64)
    lanes = np.stack([bextract_many(p, i * size, size) for i in range(4)], axis=-1)
    return lanes.astype(np.int8)
