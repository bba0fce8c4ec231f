"""Quantization arithmetic: Q-bit codes, INT-8 scale-and-clamp, staircase thresholds.

Rounding is half-away-from-zero everywhere.  The staircase comparison is
``tau <= acc``: an accumulator equal to a threshold takes the upper step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import ContractError, ThresholdRangeError, UnsupportedParameterError

INT16_MIN, INT16_MAX = -(1 << 15), (1 << 15) - 1
INT32_MIN, INT32_MAX = -(1 << 31), (1 << 31) - 1


def round_half_away(x: float) -> int:
    a = abs(x)
    f = math.floor(a)
    if a - f >= 0.5:
        f += 1
    return int(f) if x >= 0 else -int(f)


def _check_q(q: int, allowed) -> int:
    q = int(q)
    if q not in allowed:
        raise ContractError(f"bit width {q} not supported here (expected one of {allowed})")
    return q


def quantize_value(w: float, q: int) -> int:
    """Signed INT-Q code of a real value on the half-open range [-1, 1)."""
    q = _check_q(q, (8, 4, 2))
    if not math.isfinite(w):
        raise ValueError(f"cannot quantize non-finite value {w!r}")
    half = 1 << (q - 1)
    return max(-half, min(round_half_away(w * half), half - 1))


def dequantize_value(code: int, q: int) -> float:
    q = _check_q(q, (8, 4, 2))
    half = 1 << (q - 1)
    if not -half <= code < half:
        raise ValueError(f"{code} is outside the INT-{q} range")
    return code / half


@dataclass
class QuantParamsInt8:
    """Scale-and-clamp requantization of INT-32 accumulators to INT-8."""

    out_shift: int
    bias: np.ndarray

    def __post_init__(self):
        if not 0 <= int(self.out_shift) <= 31:
            raise ContractError(f"out_shift {self.out_shift} outside [0, 31]")
        self.out_shift = int(self.out_shift)
        bias = np.asarray(self.bias, dtype=np.int64).ravel()
        if bias.size and (bias.min() < INT32_MIN or bias.max() > INT32_MAX):
            raise ContractError("bias does not fit INT-32")
        self.bias = bias.astype(np.int32)

    @property
    def channels(self) -> int:
        return self.bias.size


def requantize_int8(acc: int, p: QuantParamsInt8, channel: int = 0) -> int:
    v = int(acc) + int(p.bias[channel])
    s = p.out_shift
    if s:
        half = 1 << (s - 1)
        v = (v + half) >> s if v >= 0 else -((-v + half) >> s)
    return max(-128, min(v, 127))


def requantize_int8_array(acc, p: QuantParamsInt8) -> np.ndarray:
    """Vectorized :func:`requantize_int8`; the last axis of ``acc`` is the channel."""
    v = np.asarray(acc, dtype=np.int64) + p.bias.astype(np.int64)
    s = p.out_shift
    if s:
        half = 1 << (s - 1)
        mag = (np.abs(v) + half) >> s
        v = np.where(v >= 0, mag, -mag)
    return np.clip(v, -128, 127).astype(np.int8)


def levels(q: int) -> int:
    """Number of thresholds per channel for a Q-bit staircase."""
    return (1 << q) - 1


def _validate_thresholds(tau, q: int) -> None:
    if len(tau) != levels(q):
        raise ContractError(f"INT-{q} staircase needs {levels(q)} thresholds, got {len(tau)}")
    for a, b in zip(tau, tau[1:]):
        if a > b:
            raise ContractError("thresholds must be sorted non-decreasing")


def compress_staircase(acc: int, tau, q: int) -> int:
    """Map an accumulator to a Q-bit level with a balanced comparison tree.

    Returns a value in [-2^(Q-1), 2^(Q-1) - 1]; for Q = 1 that is {-1, 0},
    i.e. the binary output bit minus one.
    """
    q = _check_q(q, (4, 2, 1))
    tau = [int(t) for t in tau]
    _validate_thresholds(tau, q)
    lo, hi = 0, len(tau)
    while lo < hi:
        mid = (lo + hi) >> 1
        if tau[mid] <= acc:
            lo = mid + 1
        else:
            hi = mid
    return lo - (1 << (q - 1))


def compress_staircase_array(acc, tau, q: int) -> np.ndarray:
    """The same tree descent vectorized over many accumulators."""
    q = _check_q(q, (4, 2, 1))
    tau = np.asarray(tau, dtype=np.int64)
    _validate_thresholds(list(tau), q)
    acc = np.asarray(acc, dtype=np.int64)
    lo = np.zeros(acc.shape, dtype=np.int64)
    hi = np.full(acc.shape, tau.size, dtype=np.int64)
    for _ in range(q):
        mid = (lo + hi) >> 1
        up = tau[np.minimum(mid, tau.size - 1)] <= acc
        lo = np.where(up, mid + 1, lo)
        hi = np.where(up, hi, mid)
    return (lo - (1 << (q - 1))).astype(np.int8)


@dataclass
class ThresholdSet:
    """Per-channel sorted INT-16 thresholds, shape (M, 2^Q - 1)."""

    bits: int
    values: np.ndarray

    def __post_init__(self):
        self.bits = _check_q(self.bits, (4, 2, 1))
        v = np.asarray(self.values, dtype=np.int64)
        if v.ndim == 1:
            v = v.reshape(-1, 1) if self.bits == 1 else v.reshape(1, -1)
        if v.ndim != 2 or v.shape[1] != levels(self.bits):
            raise ContractError(
                f"INT-{self.bits} thresholds need shape (M, {levels(self.bits)}), got {v.shape}")
        if v.size and (v.min() < INT16_MIN or v.max() > INT16_MAX):
            raise ThresholdRangeError("thresholds must fit INT-16")
        if np.any(np.diff(v, axis=1) < 0):
            raise ContractError("thresholds must be sorted non-decreasing per channel")
        self.values = np.ascontiguousarray(v, dtype=np.int16)

    @property
    def channels(self) -> int:
        return self.values.shape[0]


@dataclass
class BatchNormParams:
    """Per-channel batch-norm and bias, folded into thresholds."""

    gamma: float
    sigma: float
    mu: float
    beta: float
    bias_b: float = 0.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise ContractError("sigma must be strictly positive")


def _bn_level(bn: BatchNormParams, q: int, acc: int) -> int:
    """Exact level of the real-valued BN-then-quantize pipeline for one accumulator."""
    scale = Fraction(bn.gamma) / Fraction(bn.sigma)
    phi = Fraction(acc, 1 << (2 * (q - 1)))
    y = scale * (Fraction(bn.bias_b) + phi - Fraction(bn.mu)) + Fraction(bn.beta)
    if q == 1:
        return 0 if y >= 0 else -1
    half = 1 << (q - 1)
    t = y * half
    mag = (abs(t.numerator) * 2 + t.denominator) // (2 * t.denominator)
    code = mag if t >= 0 else -mag
    return max(-half, min(code, half - 1))


def compute_thresholds(bn: BatchNormParams, q: int) -> list[int]:
    """Thresholds reproducing BN + quantization on every INT-16 accumulator.

    Each boundary is located by bisection against the exact rational
    pipeline, which is monotone for gamma > 0.  Q = 1 binarizes at y >= 0.
    """
    q = _check_q(q, (4, 2, 1))
    if not bn.sigma > 0:
        raise ContractError("sigma must be strictly positive")
    if not bn.gamma > 0:
        raise UnsupportedParameterError("only gamma > 0 (ascending staircase) is supported")
    half = 1 << (q - 1)
    tau = []
    for p in range(-half + 1, half):
        if _bn_level(bn, q, INT16_MAX) < p:
            raise ThresholdRangeError(f"level {p} is unreachable within INT-16")
        lo, hi = INT16_MIN, INT16_MAX
        while lo < hi:
            mid = (lo + hi) // 2
            if _bn_level(bn, q, mid) >= p:
                hi = mid
            else:
                lo = mid + 1
        tau.append(lo)
    return tau
