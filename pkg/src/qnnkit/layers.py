"""Layer kernels: im2col, quantized and binary convolution, FC, ReLU, max-pool.

Each kernel validates its operands, then hands flat buffers to the active
backend through :func:`qnnkit.parallel.run_parallel_layer`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .bitops import NUM_COUNTERS, OpCounters
from .errors import ContractError, GeometryError
from .microkernel import TileShape
from .parallel import ExecContext, ParallelOp, run_parallel_layer
from .quantfmt import QuantParamsInt8, ThresholdSet
from .tensor import (BitWidth, QTensor, WeightSet, check_accumulator, pack_elements,
                     packed_nbytes, unpack_elements)

Requant = Union[QuantParamsInt8, ThresholdSet]

_NO_BIAS = np.zeros(1, dtype=np.int32)
_NO_THR = np.zeros((1, 1), dtype=np.int16)


@dataclass(frozen=True)
class ConvGeometry:
    in_h: int
    in_w: int
    in_ch: int
    out_ch: int
    kernel_h: int
    kernel_w: int
    stride: int = 1
    pad: int = 0

    def __post_init__(self):
        if min(self.in_h, self.in_w, self.in_ch, self.out_ch, self.kernel_h, self.kernel_w) < 1:
            raise GeometryError("dimensions and kernel sizes must be positive")
        if self.stride < 1 or self.pad < 0:
            raise GeometryError("stride must be >= 1 and pad >= 0")
        if self.out_h < 1 or self.out_w < 1:
            raise GeometryError(f"kernel does not fit the padded input: {self}")

    @classmethod
    def for_layer(cls, t: QTensor, w: WeightSet, stride: int = 1, pad: int = 0) -> "ConvGeometry":
        return cls(t.height, t.width, t.channels, w.out_channels,
                   w.kernel_h, w.kernel_w, stride, pad)

    @property
    def out_h(self) -> int:
        return (self.in_h + 2 * self.pad - self.kernel_h) // self.stride + 1

    @property
    def out_w(self) -> int:
        return (self.in_w + 2 * self.pad - self.kernel_w) // self.stride + 1

    @property
    def field_size(self) -> int:
        """Receptive-field length K = kh * kw * C."""
        return self.kernel_h * self.kernel_w * self.in_ch

    @property
    def out_pixels(self) -> int:
        return self.out_h * self.out_w

    @property
    def macs(self) -> int:
        return self.out_pixels * self.out_ch * self.field_size


def new_im2col_buffer(geom: ConvGeometry) -> np.ndarray:
    return np.zeros(geom.field_size, dtype=np.int8)


def _check_input(t: QTensor, geom: ConvGeometry) -> None:
    if t.shape != (geom.in_h, geom.in_w, geom.in_ch):
        raise ContractError(f"input shape {t.shape} does not match geometry {geom}")


def _check_weights(w: WeightSet, geom: ConvGeometry) -> None:
    if (w.out_channels, w.kernel_h, w.kernel_w, w.in_channels) != (
            geom.out_ch, geom.kernel_h, geom.kernel_w, geom.in_ch):
        raise ContractError("weight shape does not match geometry")


def _ctx(ctx: Optional[ExecContext]) -> ExecContext:
    return ctx if ctx is not None else ExecContext()


def im2col(t: QTensor, geom: ConvGeometry, out_x: int, out_y: int, dest: np.ndarray,
           counters: Optional[OpCounters] = None, ctx: Optional[ExecContext] = None) -> None:
    """Fill ``dest`` with the (kh, kw, C) receptive field of one output pixel."""
    _check_input(t, geom)
    if t.bits == BitWidth.INT1:
        raise ContractError("binary inputs are gathered bit-packed, not through im2col")
    if dest.dtype != np.int8 or dest.shape != (geom.field_size,):
        raise ContractError(f"im2col buffer must be int8 of length {geom.field_size}")
    if not (0 <= out_x < geom.out_w and 0 <= out_y < geom.out_h):
        raise ContractError(f"output pixel ({out_x}, {out_y}) outside the output map")
    cnt = np.zeros(NUM_COUNTERS, dtype=np.int64)
    _ctx(ctx).kernels.im2col(t.data, geom.in_h, geom.in_w, geom.in_ch, int(t.bits),
                             geom.kernel_h, geom.kernel_w, geom.stride, geom.pad,
                             geom.out_w, out_y * geom.out_w + out_x, dest, cnt)
    if counters is not None:
        counters += OpCounters.from_array(cnt)


def _requant_args(bits: BitWidth, requant: Requant, channels: int):
    """(mode, bias, shift, thresholds) for the kernel ABI."""
    if bits == BitWidth.INT8:
        if not isinstance(requant, QuantParamsInt8):
            raise ContractError("INT-8 layers take QuantParamsInt8")
        if requant.channels != channels:
            raise ContractError(f"need {channels} biases, got {requant.channels}")
        return 0, requant.bias, requant.out_shift, _NO_THR
    if not isinstance(requant, ThresholdSet):
        raise ContractError(f"INT-{int(bits)} layers take a ThresholdSet")
    if requant.bits != bits:
        raise ContractError(f"INT-{requant.bits} thresholds on an INT-{int(bits)} layer")
    if requant.channels != channels:
        raise ContractError(f"need thresholds for {channels} channels, got {requant.channels}")
    return 1, _NO_BIAS, 0, requant.values


def _out_nbytes(count: int, bits: BitWidth) -> int:
    return packed_nbytes(count, bits)


def conv2d_q(t: QTensor, weights: WeightSet, geom: ConvGeometry, requant: Requant,
             tile: Optional[TileShape] = None, ctx: Optional[ExecContext] = None) -> QTensor:
    """INT-8/4/2 convolution; output keeps the input's bit width."""
    ctx = _ctx(ctx)
    tile = tile or ctx.tile
    bits = t.bits
    if bits == BitWidth.INT1:
        raise ContractError("use conv2d_binary for INT-1 tensors")
    if weights.bits != bits:
        raise ContractError(f"INT-{int(weights.bits)} weights on an INT-{int(bits)} input")
    _check_input(t, geom)
    _check_weights(weights, geom)
    K = geom.field_size
    check_accumulator(K, bits)
    mode, bias, shift, thr = _requant_args(bits, requant, geom.out_ch)
    kern = ctx.kernels

    def run(w, chunk, out, cnt):
        kern.conv_q(t.data, geom.in_h, geom.in_w, geom.in_ch, int(bits),
                    weights.data, geom.out_ch, geom.kernel_h, geom.kernel_w,
                    geom.stride, geom.pad, geom.out_h, geom.out_w,
                    chunk.start, chunk.end, tile.s, tile.r, mode, bias, shift, thr,
                    out, ctx.scratch(w, tile.r, K), cnt)

    n_out = geom.out_pixels * geom.out_ch
    op = ParallelOp("conv2d_q", geom.out_pixels, _out_nbytes(n_out, bits), run,
                    packed=bits != BitWidth.INT8)
    out, _ = run_parallel_layer(op, ctx)
    return QTensor(geom.out_h, geom.out_w, geom.out_ch, bits, out)


def _binary_thresholds(thresholds, channels: int) -> np.ndarray:
    if isinstance(thresholds, ThresholdSet):
        if thresholds.bits != 1:
            raise ContractError("binary layers take one threshold per channel")
        tau = thresholds.values.ravel()
    else:
        tau = ThresholdSet(1, np.asarray(thresholds).ravel()).values.ravel()
    if tau.size != channels:
        raise ContractError(f"need {channels} thresholds, got {tau.size}")
    return np.ascontiguousarray(tau, dtype=np.int16)


def conv2d_binary(t: QTensor, weights: WeightSet, geom: ConvGeometry, thresholds,
                  ctx: Optional[ExecContext] = None) -> QTensor:
    """XNOR-popcount convolution on {-1, +1} operands.

    Padded taps are dropped from both the popcount and the tap count, so a
    border output equals the +-1 dot product over in-image taps only.
    """
    ctx = _ctx(ctx)
    if t.bits != BitWidth.INT1 or weights.bits != BitWidth.INT1:
        raise ContractError("binary convolution needs INT-1 input and weights")
    _check_input(t, geom)
    _check_weights(weights, geom)
    K = geom.field_size
    check_accumulator(K, 1)
    tau = _binary_thresholds(thresholds, geom.out_ch)
    nwords = (K + 31) // 32
    kern = ctx.kernels

    def run(w, chunk, out, cnt):
        xbuf, mbuf = ctx.binary_scratch(w, nwords)
        kern.conv_bin(t.data, geom.in_h, geom.in_w, geom.in_ch, weights.data,
                      geom.out_ch, geom.kernel_h, geom.kernel_w, geom.stride, geom.pad,
                      geom.out_h, geom.out_w, chunk.start, chunk.end, tau, out,
                      xbuf, mbuf, cnt)

    n_out = geom.out_pixels * geom.out_ch
    op = ParallelOp("conv2d_binary", geom.out_pixels, _out_nbytes(n_out, 1), run, packed=True)
    out, _ = run_parallel_layer(op, ctx)
    return QTensor(geom.out_h, geom.out_w, geom.out_ch, BitWidth.INT1, out)


def fully_connected(t: QTensor, weights: WeightSet, requant: Requant,
                    ctx: Optional[ExecContext] = None) -> QTensor:
    """Matrix-vector product over the flattened input with a 2x1 tile; output is 1x1xM."""
    ctx = _ctx(ctx)
    bits = t.bits
    if bits == BitWidth.INT1:
        raise ContractError("fully-connected layers support INT-8/4/2 only")
    if weights.bits != bits:
        raise ContractError(f"INT-{int(weights.bits)} weights on an INT-{int(bits)} input")
    N = t.size
    if weights.bank_size != N:
        raise ContractError(f"weight rows hold {weights.bank_size} values, input has {N}")
    check_accumulator(N, bits)
    M = weights.out_channels
    mode, bias, shift, thr = _requant_args(bits, requant, M)
    kern = ctx.kernels

    def run(w, chunk, out, cnt):
        kern.fc_q(t.data, N, int(bits), weights.data, M, chunk.start, chunk.end,
                  mode, bias, shift, thr, out, cnt)

    op = ParallelOp("fully_connected", M, _out_nbytes(M, bits), run,
                    packed=bits != BitWidth.INT8)
    out, _ = run_parallel_layer(op, ctx)
    return QTensor(1, 1, M, bits, out)


def relu(t: QTensor, ctx: Optional[ExecContext] = None) -> QTensor:
    ctx = _ctx(ctx)
    if t.bits == BitWidth.INT1:
        raise ContractError("ReLU is undefined on {-1, +1} tensors")
    kern = ctx.kernels

    def run(w, chunk, out, cnt):
        kern.relu(t.data, out, int(t.bits), chunk.start, chunk.end, cnt)

    op = ParallelOp("relu", t.size, t.nbytes, run, packed=t.bits != BitWidth.INT8)
    out, _ = run_parallel_layer(op, ctx)
    return QTensor(t.height, t.width, t.channels, t.bits, out)


def pool_output_dims(h: int, w: int, pool_h: int, pool_w: int, stride: int) -> tuple[int, int]:
    if pool_h < 1 or pool_w < 1 or stride < 1:
        raise ContractError("pool window and stride must be positive")
    if pool_h > h or pool_w > w:
        raise ContractError(f"{pool_h}x{pool_w} window larger than {h}x{w} input")
    return (h - pool_h) // stride + 1, (w - pool_w) // stride + 1


def maxpool(t: QTensor, pool_h: int, pool_w: int, stride: int,
            ctx: Optional[ExecContext] = None, inplace: bool = False) -> QTensor:
    """Two-phase max-pool: along width into a work buffer, then along height.

    With one worker and ``inplace=True`` an INT-8 input is reduced in situ and
    its buffer is clobbered.  Otherwise phase 1 writes a private copy.
    """
    ctx = _ctx(ctx)
    H, W, C = t.shape
    out_h, out_w = pool_output_dims(H, W, pool_h, pool_w, stride)
    kern = ctx.kernels
    if t.bits == BitWidth.INT8:
        src = t.data.view(np.int8)
        in_situ = inplace and ctx.num_workers == 1
    else:
        src = unpack_elements(t.data, t.bits, t.size)
        in_situ = ctx.num_workers == 1
    work = src if in_situ else np.zeros(t.size, dtype=np.int8)

    def phase1(w, chunk, out, cnt):
        kern.pool_width(src, out.view(np.int8), H, W, C, pool_w, stride, out_w,
                        chunk.start, chunk.end, cnt)

    def phase2(w, chunk, out, cnt):
        kern.pool_height(work, out.view(np.int8), W, C, pool_h, stride, out_w,
                         chunk.start, chunk.end, cnt)

    _, c1 = run_parallel_layer(ParallelOp("maxpool/width", H * out_w, t.size, phase1),
                               ctx, out=work.view(np.uint8))
    out, c2 = run_parallel_layer(
        ParallelOp("maxpool/height", out_h * out_w, out_h * out_w * C, phase2), ctx)
    total = c1 + c2
    ctx.last_counters = total
    if t.bits != BitWidth.INT8:
        out = pack_elements(out.view(np.int8), t.bits)
    return QTensor(out_h, out_w, C, t.bits, out)
