"""HWC tensors with bit-packed storage for INT-8/4/2/1 elements.

Sub-byte elements are packed little-endian inside each byte: the element with
the lower linear index sits in the less significant bits.  INT-8/4/2 values
are two's complement; INT-1 stores bit ``b`` for the value ``2*b - 1``.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .errors import ContractError, GeometryError


class BitWidth(IntEnum):
    INT8 = 8
    INT4 = 4
    INT2 = 2
    INT1 = 1

    @property
    def min_value(self) -> int:
        return -1 if self == 1 else -(1 << (self - 1))

    @property
    def max_value(self) -> int:
        return 1 if self == 1 else (1 << (self - 1)) - 1

    @property
    def mask(self) -> int:
        return (1 << self) - 1


def packed_nbytes(count: int, bits: int) -> int:
    return (count * int(bits) + 7) // 8


def check_representable(v: int, bits: BitWidth) -> None:
    if bits == 1:
        if v not in (-1, 1):
            raise ValueError(f"INT-1 elements must be -1 or +1, got {v}")
    elif not bits.min_value <= v <= bits.max_value:
        raise ValueError(f"{v} is not representable in INT-{int(bits)}")


def encode(v: int, bits: BitWidth) -> int:
    """Field image (unsigned, ``bits`` wide) of a representable value."""
    if bits == 1:
        return (v + 1) >> 1
    return v & bits.mask


def decode(code: int, bits: BitWidth) -> int:
    if bits == 1:
        return 2 * (code & 1) - 1
    sign = 1 << (bits - 1)
    return (code & bits.mask ^ sign) - sign


def pack_elements(values, bits) -> np.ndarray:
    """Pack a flat sequence of element values into a uint8 buffer."""
    bits = BitWidth(bits)
    v = np.asarray(values, dtype=np.int64).ravel()
    if v.size and (v.min() < bits.min_value or v.max() > bits.max_value):
        raise ValueError(f"values out of INT-{int(bits)} range")
    if bits == 1:
        if v.size and not np.all(np.abs(v) == 1):
            raise ValueError("INT-1 elements must be -1 or +1")
        codes = (v + 1) >> 1
    else:
        codes = v & bits.mask
    if bits == 8:
        return codes.astype(np.uint8)
    per_byte = 8 // bits
    padded = np.zeros(packed_nbytes(v.size, bits) * per_byte, dtype=np.int64)
    padded[: v.size] = codes
    lanes = padded.reshape(-1, per_byte)
    shifts = np.arange(per_byte, dtype=np.int64) * int(bits)
    return (lanes << shifts).sum(axis=1).astype(np.uint8)


def unpack_elements(data, bits, count: int) -> np.ndarray:
    """Inverse of :func:`pack_elements`; returns ``count`` int8 values."""
    bits = BitWidth(bits)
    raw = np.asarray(data, dtype=np.uint8)
    if bits == 8:
        return raw[:count].view(np.int8).copy()
    per_byte = 8 // bits
    shifts = np.arange(per_byte, dtype=np.uint8) * np.uint8(bits)
    codes = ((raw[:, None] >> shifts) & np.uint8(bits.mask)).ravel()[:count]
    codes = codes.astype(np.int16)
    if bits == 1:
        return (2 * codes - 1).astype(np.int8)
    sign = 1 << (bits - 1)
    return ((codes ^ sign) - sign).astype(np.int8)


def _field(index: int, bits: int) -> tuple[int, int]:
    bitpos = index * bits
    return bitpos >> 3, bitpos & 7


def read_element(data: np.ndarray, index: int, bits: BitWidth) -> int:
    byte, shift = _field(index, bits)
    return decode(int(data[byte]) >> shift, bits)


def write_element(data: np.ndarray, index: int, bits: BitWidth, v: int) -> None:
    check_representable(v, bits)
    byte, shift = _field(index, bits)
    m = bits.mask << shift
    data[byte] = (int(data[byte]) & ~m & 0xFF) | (encode(v, bits) << shift)


@dataclass
class QTensor:
    """Activation tensor in HWC order (channel fastest)."""

    height: int
    width: int
    channels: int
    bits: BitWidth
    data: np.ndarray

    def __post_init__(self):
        self.bits = BitWidth(self.bits)
        if min(self.height, self.width, self.channels) < 1:
            raise ContractError("tensor dimensions must be positive")
        self.data = np.ascontiguousarray(self.data, dtype=np.uint8).ravel()
        expected = packed_nbytes(self.size, self.bits)
        if self.data.size != expected:
            raise ContractError(
                f"buffer holds {self.data.size} bytes, expected {expected}")

    @classmethod
    def zeros(cls, height, width, channels, bits) -> "QTensor":
        """All-zero buffer; for INT-1 every element therefore reads -1."""
        bits = BitWidth(bits)
        return cls(height, width, channels, bits,
                   np.zeros(packed_nbytes(height * width * channels, bits), np.uint8))

    @classmethod
    def from_array(cls, values, bits) -> "QTensor":
        """Build from an (H, W, C) integer array (a 1-D array is read as 1x1xC)."""
        arr = np.asarray(values)
        if arr.ndim == 1:
            arr = arr.reshape(1, 1, -1)
        if arr.ndim != 3:
            raise ContractError("expected an (H, W, C) array")
        h, w, c = arr.shape
        return cls(h, w, c, bits, pack_elements(arr, bits))

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.height, self.width, self.channels

    @property
    def size(self) -> int:
        return self.height * self.width * self.channels

    @property
    def nbytes(self) -> int:
        return self.data.size

    def to_array(self) -> np.ndarray:
        return unpack_elements(self.data, self.bits, self.size).reshape(self.shape)

    def copy(self) -> "QTensor":
        return QTensor(self.height, self.width, self.channels, self.bits, self.data.copy())

    def linear_index(self, y: int, x: int, c: int) -> int:
        if not (0 <= y < self.height and 0 <= x < self.width and 0 <= c < self.channels):
            raise IndexError(f"({y}, {x}, {c}) outside {self.shape}")
        return (y * self.width + x) * self.channels + c

    def get(self, y: int, x: int, c: int) -> int:
        return read_element(self.data, self.linear_index(y, x, c), self.bits)

    def set(self, y: int, x: int, c: int, v: int) -> None:
        write_element(self.data, self.linear_index(y, x, c), self.bits, int(v))

    def __eq__(self, other):
        if not isinstance(other, QTensor):
            return NotImplemented
        return (self.shape == other.shape and self.bits == other.bits
                and np.array_equal(self.data, other.data))


def linear_index(t: QTensor, y: int, x: int, c: int) -> int:
    return t.linear_index(y, x, c)


def get_element(t: QTensor, y: int, x: int, c: int) -> int:
    return t.get(y, x, c)


def set_element(t: QTensor, y: int, x: int, c: int, v: int) -> None:
    t.set(y, x, c, v)


@dataclass
class WeightSet:
    """M filter banks, each stored in (kh, kw, C) order with channel fastest."""

    out_channels: int
    kernel_h: int
    kernel_w: int
    in_channels: int
    bits: BitWidth
    data: np.ndarray

    def __post_init__(self):
        self.bits = BitWidth(self.bits)
        if min(self.out_channels, self.kernel_h, self.kernel_w, self.in_channels) < 1:
            raise ContractError("weight dimensions must be positive")
        self.data = np.ascontiguousarray(self.data, dtype=np.uint8).ravel()
        expected = packed_nbytes(self.size, self.bits)
        if self.data.size != expected:
            raise ContractError(
                f"weight buffer holds {self.data.size} bytes, expected {expected}")

    @classmethod
    def from_array(cls, values, bits) -> "WeightSet":
        """Build from an (M, kh, kw, C) integer array."""
        arr = np.asarray(values)
        if arr.ndim == 2:
            arr = arr.reshape(arr.shape[0], 1, 1, arr.shape[1])
        if arr.ndim != 4:
            raise ContractError("expected an (M, kh, kw, C) array")
        m, kh, kw, c = arr.shape
        return cls(m, kh, kw, c, bits, pack_elements(arr, bits))

    @property
    def bank_size(self) -> int:
        return self.kernel_h * self.kernel_w * self.in_channels

    @property
    def size(self) -> int:
        return self.out_channels * self.bank_size

    def bank_range(self, m: int) -> tuple[int, int]:
        if not 0 <= m < self.out_channels:
            raise IndexError(f"bank {m} outside [0, {self.out_channels})")
        k = self.bank_size
        return m * k, (m + 1) * k

    def to_array(self) -> np.ndarray:
        return unpack_elements(self.data, self.bits, self.size).reshape(
            self.out_channels, self.kernel_h, self.kernel_w, self.in_channels)

    def bank(self, m: int) -> np.ndarray:
        lo, hi = self.bank_range(m)
        return unpack_elements(self.data, self.bits, self.size)[lo:hi]

    def get(self, m: int, ky: int, kx: int, c: int) -> int:
        if not (0 <= ky < self.kernel_h and 0 <= kx < self.kernel_w
                and 0 <= c < self.in_channels):
            raise IndexError(f"tap ({ky}, {kx}, {c}) out of range")
        lo, _ = self.bank_range(m)
        return read_element(self.data, lo + (ky * self.kernel_w + kx) * self.in_channels + c,
                            self.bits)


# Largest |w*x| for each operand width.
_MAX_PRODUCT = {8: 128 * 128, 4: 8 * 8, 2: 2 * 2, 1: 1}
ACC_LIMIT = {8: (1 << 31) - 1, 4: (1 << 15) - 1, 2: (1 << 15) - 1, 1: (1 << 15) - 1}


def check_accumulator(terms: int, bits) -> None:
    """Reject geometries whose worst-case dot product overflows the accumulator.

    INT-8 operands accumulate in 32 bits; sub-byte and binary ones in 16 bits.
    """
    bits = int(bits)
    worst = terms * _MAX_PRODUCT[bits]
    if worst > ACC_LIMIT[bits]:
        width = 32 if bits == 8 else 16
        raise GeometryError(
            f"{terms} INT-{bits} products can reach {worst}, beyond the "
            f"INT-{width} accumulator")
