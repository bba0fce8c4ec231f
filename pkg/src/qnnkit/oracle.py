"""Naive reference implementations used as ground truth in tests.

Everything here runs in int64 or exact rationals, reads packed buffers with
its own bit decoding, and uses linear scans instead of comparison trees.
Nothing is shared with the optimized kernels beyond the tensor containers.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np

from .quantfmt import BatchNormParams, QuantParamsInt8, ThresholdSet
from .tensor import QTensor, WeightSet


def _decode(data: np.ndarray, bits: int, count: int) -> np.ndarray:
    """Signed values of ``count`` packed elements, via a per-bit expansion."""
    bitstream = np.unpackbits(np.asarray(data, dtype=np.uint8), bitorder="little")
    fields = bitstream[: count * bits].reshape(count, bits).astype(np.int64)
    weights = 1 << np.arange(bits, dtype=np.int64)
    codes = fields @ weights
    if bits == 1:
        return 2 * codes - 1
    return np.where(codes >= 1 << (bits - 1), codes - (1 << bits), codes)


def _encode(values: np.ndarray, bits: int) -> np.ndarray:
    v = np.asarray(values, dtype=np.int64).ravel()
    codes = (v + 1) // 2 if bits == 1 else np.where(v < 0, v + (1 << bits), v)
    fields = (codes[:, None] >> np.arange(bits, dtype=np.int64)) & 1
    return np.packbits(fields.astype(np.uint8).ravel(), bitorder="little")


def tensor_values(t: QTensor) -> np.ndarray:
    return _decode(t.data, int(t.bits), t.size).reshape(t.shape)


def weight_values(w: WeightSet) -> np.ndarray:
    return _decode(w.data, int(w.bits), w.size).reshape(
        w.out_channels, w.kernel_h, w.kernel_w, w.in_channels)


def make_tensor(values: np.ndarray, bits: int) -> QTensor:
    h, w, c = values.shape
    return QTensor(h, w, c, bits, _encode(values, bits))


def _div_round_half_away(n: np.ndarray, d: int) -> np.ndarray:
    q, r = np.divmod(np.abs(n), d)
    q = q + (2 * r >= d)
    return np.where(n < 0, -q, q)


def requant_ref(acc: np.ndarray, p: QuantParamsInt8) -> np.ndarray:
    """Scale-and-clamp in exact integer division; last axis is the channel."""
    v = np.asarray(acc, dtype=np.int64) + np.asarray(p.bias, dtype=np.int64)
    return np.clip(_div_round_half_away(v, 1 << p.out_shift), -128, 127)


def requant_fraction_ref(acc: int, bias: int, shift: int) -> int:
    """The same map through rational arithmetic, for cross-checking requant_ref."""
    x = Fraction(acc + bias, 1 << shift)
    mag = abs(x)
    n = mag.numerator // mag.denominator
    if mag - n >= Fraction(1, 2):
        n += 1
    return max(-128, min(n if x >= 0 else -n, 127))


def staircase_ref(acc, thresholds, q: int) -> np.ndarray:
    """Level = (number of thresholds <= acc) - 2^(Q-1), by linear scan."""
    acc = np.asarray(acc, dtype=np.int64)
    count = np.zeros(acc.shape, dtype=np.int64)
    for tau in np.asarray(thresholds, dtype=np.int64).ravel():
        count += tau <= acc
    return count - (1 << (q - 1))


def _apply_requant(acc: np.ndarray, requant, bits: int) -> np.ndarray:
    """Per-channel requantization of an (..., M) accumulator array."""
    if bits == 8:
        return requant_ref(acc, requant)
    tau = requant.values if isinstance(requant, ThresholdSet) else np.asarray(requant)
    out = np.empty(acc.shape, dtype=np.int64)
    for m in range(acc.shape[-1]):
        out[..., m] = staircase_ref(acc[..., m], tau[m], bits)
    return out


def conv_accumulators(x: np.ndarray, w: np.ndarray, stride: int, pad: int) -> np.ndarray:
    """Exact (outH, outW, M) accumulators with zero padding."""
    H, W, C = x.shape
    M, kh, kw, _ = w.shape
    xp = np.zeros((H + 2 * pad, W + 2 * pad, C), dtype=np.int64)
    xp[pad:pad + H, pad:pad + W] = x
    out_h = (H + 2 * pad - kh) // stride + 1
    out_w = (W + 2 * pad - kw) // stride + 1
    acc = np.zeros((out_h, out_w, M), dtype=np.int64)
    for ky in range(kh):
        for kx in range(kw):
            patch = xp[ky:ky + stride * (out_h - 1) + 1:stride,
                       kx:kx + stride * (out_w - 1) + 1:stride]
            acc += patch @ w[:, ky, kx, :].astype(np.int64).T
    return acc


def conv2d_ref(t: QTensor, weights: WeightSet, geom, requant) -> QTensor:
    x = tensor_values(t)
    w = weight_values(weights)
    acc = conv_accumulators(x, w, geom.stride, geom.pad)
    return make_tensor(_apply_requant(acc, requant, int(t.bits)), int(t.bits))


def binary_conv_accumulators(x: np.ndarray, w: np.ndarray, stride: int, pad: int) -> np.ndarray:
    """+-1 dot products where padded taps contribute nothing."""
    return conv_accumulators(x, w, stride, pad)


def conv2d_binary_ref(t: QTensor, weights: WeightSet, geom, thresholds) -> QTensor:
    acc = binary_conv_accumulators(tensor_values(t), weight_values(weights),
                                   geom.stride, geom.pad)
    tau = (thresholds.values if isinstance(thresholds, ThresholdSet)
           else np.asarray(thresholds)).astype(np.int64).ravel()
    bits = np.where(tau <= acc, 1, -1)
    return make_tensor(bits, 1)


def binary_dot_ref(w_bits, x_bits, n: int) -> int:
    """Sum of (2w-1)(2x-1) over the first ``n`` bit pairs."""
    total = 0
    for i in range(n):
        total += (2 * int(w_bits[i]) - 1) * (2 * int(x_bits[i]) - 1)
    return total


def fc_ref(t: QTensor, weights: WeightSet, requant) -> QTensor:
    x = tensor_values(t).ravel()
    w = weight_values(weights).reshape(weights.out_channels, -1)
    acc = w @ x
    return make_tensor(_apply_requant(acc.reshape(1, 1, -1), requant, int(t.bits)), int(t.bits))


def relu_ref(t: QTensor) -> QTensor:
    return make_tensor(np.maximum(tensor_values(t), 0), int(t.bits))


def pool_ref(t: QTensor, pool_h: int, pool_w: int, stride: int) -> QTensor:
    x = tensor_values(t)
    H, W, C = x.shape
    out_h = (H - pool_h) // stride + 1
    out_w = (W - pool_w) // stride + 1
    out = np.empty((out_h, out_w, C), dtype=np.int64)
    for oy in range(out_h):
        for ox in range(out_w):
            win = x[oy * stride:oy * stride + pool_h, ox * stride:ox * stride + pool_w]
            out[oy, ox] = win.reshape(-1, C).max(axis=0)
    return make_tensor(out, int(t.bits))


def bn_pipeline_ref(bn: BatchNormParams, q: int, acc) -> np.ndarray:
    """Exact BN-then-quantize level for each accumulator.

    y = gamma/sigma * (b + acc / 4^(Q-1) - mu) + beta is rewritten as
    (A*acc + B) / D with integers A, B and D > 0, then rounded half away from
    zero at scale 2^(Q-1) (or thresholded at zero for Q = 1).
    """
    g, s, b, mu, beta = (Fraction(v) for v in (bn.gamma, bn.sigma, bn.bias_b, bn.mu, bn.beta))
    scale = g / s
    lin = scale / (1 << (2 * (q - 1)))
    off = scale * (b - mu) + beta
    half = 1 if q == 1 else 1 << (q - 1)
    lin *= half
    off *= half
    D = lin.denominator * off.denominator
    A = lin.numerator * off.denominator
    B = off.numerator * lin.denominator
    acc = np.asarray(acc, dtype=np.int64)
    out = np.empty(acc.shape, dtype=np.int64)
    flat = out.ravel()
    for i, a in enumerate(acc.ravel().tolist()):
        n = A * a + B
        if q == 1:
            flat[i] = 0 if n >= 0 else -1
            continue
        mag = (2 * abs(n) + D) // (2 * D)
        code = mag if n >= 0 else -mag
        flat[i] = max(-half, min(code, half - 1))
    return flat.reshape(acc.shape)
