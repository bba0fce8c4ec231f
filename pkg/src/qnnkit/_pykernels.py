"""Pure-Python kernels with the same entry points as the compiled core.

These run the built-in models from :mod:`qnnkit.bitops` literally, one
operation at a time, so they are slow but easy to audit.  They are selected
when the extension is unavailable or ``QNNKIT_BACKEND=python`` is set.
"""

from __future__ import annotations

import numpy as np

from . import bitops
from .bitops import COUNTER_FIELDS, OpCounters
from .microkernel import run_tile

_UNPACK = {4: bitops.unpack_int4_to_vec, 2: bitops.unpack_int2_to_vec}


def _flush(c: OpCounters, counters: np.ndarray) -> None:
    counters += c.to_array()


def _check_counters(counters):
    if counters.shape[0] != len(COUNTER_FIELDS):
        raise ValueError(f"counter array must have {len(COUNTER_FIELDS)} slots")


class _Packed:
    """Element access into a packed little-endian buffer."""

    def __init__(self, buf: np.ndarray, bits: int):
        self.raw = bytes(buf)
        self.bits = bits
        self.int8 = np.frombuffer(self.raw, dtype=np.int8) if bits == 8 else None

    def word(self, bitpos: int, nbits: int) -> int:
        lo = bitpos >> 3
        hi = (bitpos + nbits + 7) >> 3
        return (int.from_bytes(self.raw[lo:hi], "little") >> (bitpos & 7)) & ((1 << nbits) - 1)

    def element(self, e: int, c: OpCounters) -> int:
        if self.bits == 8:
            return int(self.int8[e])
        code = self.word(e * self.bits, self.bits)
        if self.bits == 1:
            return 2 * code - 1
        return bitops.bextract(code, 0, self.bits, c)

    def vec(self, e: int, c: OpCounters) -> bitops.Vec4i8:
        if self.bits == 8:
            return bitops.pack4(*(int(v) for v in self.int8[e:e + 4]))
        return _UNPACK[self.bits](self.word(e * self.bits, 4 * self.bits), c)


def _insert(out: np.ndarray, e: int, bits: int, code: int, c: OpCounters) -> None:
    bp = e * bits
    out[bp >> 3] = bitops.bitinsert(int(out[bp >> 3]), code, bp & 7, bits, c) & 0xFF


def _stair(acc: int, tau, q: int, c: OpCounters) -> int:
    lo, hi = 0, len(tau)
    while lo < hi:
        mid = (lo + hi) >> 1
        c.compares += 1
        if tau[mid] <= acc:
            lo = mid + 1
        else:
            hi = mid
    return lo - (1 << (q - 1))


def _req8(v: int, shift: int) -> int:
    if shift:
        half = 1 << (shift - 1)
        v = (v + half) >> shift if v >= 0 else -((-v + half) >> shift)
    return max(-128, min(v, 127))


class _Emitter:
    def __init__(self, out, mode, bits, bias, shift, thr, c):
        self.out, self.mode, self.bits = out, mode, bits
        self.bias = [int(b) for b in bias]
        self.shift = shift
        self.thr = [[int(t) for t in row] for row in thr]
        self.c = c

    def __call__(self, e: int, m: int, acc: int) -> None:
        c = self.c
        if self.mode == 0:
            self.out[e] = _req8(acc + self.bias[m], self.shift) & 0xFF
        else:
            lvl = _stair(acc, self.thr[m], self.bits, c)
            _insert(self.out, e, self.bits, lvl, c)
        c.stores += 1


def _tile(wsrc: _Packed, w_offs, xsrcs, x_offs, k_len, c):
    return run_tile(
        len(w_offs), len(x_offs), k_len,
        lambda i, k, cc: wsrc.vec(w_offs[i] + k, cc),
        lambda i, k, cc: wsrc.element(w_offs[i] + k, cc),
        lambda j, k, cc: xsrcs[j].vec(x_offs[j] + k, cc),
        lambda j, k, cc: xsrcs[j].element(x_offs[j] + k, cc),
        c,
    )


def _im2col(src: _Packed, H, W, C, kh, kw, stride, pad, outW, p, dst: np.ndarray, c):
    oy, ox = divmod(p, outW)
    for ky in range(kh):
        iy = oy * stride - pad + ky
        for kx in range(kw):
            ix = ox * stride - pad + kx
            d = (ky * kw + kx) * C
            if 0 <= iy < H and 0 <= ix < W:
                base = (iy * W + ix) * C
                for ch in range(C):
                    dst[d + ch] = src.element(base + ch, c)
                c.im2col_loads += C
            else:
                dst[d:d + C] = 0
            c.im2col_stores += C


def im2col(inp, H, W, C, bits, kh, kw, stride, pad, outW, p, dst, counters):
    _check_counters(counters)
    if dst.shape[0] != kh * kw * C:
        raise ValueError("im2col buffer length does not match the geometry")
    c = OpCounters()
    _im2col(_Packed(inp, bits), H, W, C, kh, kw, stride, pad, outW, p, dst, c)
    _flush(c, counters)


def conv_q(inp, H, W, C, bits, wts, M, kh, kw, stride, pad, outH, outW,
           pix_start, pix_end, s, r, mode, bias, shift, thr, out, scratch, counters):
    _check_counters(counters)
    K = kh * kw * C
    if scratch.shape[0] < r or scratch.shape[1] < K:
        raise ValueError("im2col scratch too small for this tile and geometry")
    c = OpCounters()
    src = _Packed(inp, bits)
    wsrc = _Packed(wts, bits)
    emit = _Emitter(out, mode, bits, bias, shift, thr, c)
    rows = [scratch[j, :K] for j in range(r)]

    def buffers(n):
        return [_Packed(rows[j].view(np.uint8), 8) for j in range(n)]

    p = pix_start
    while p + r <= pix_end:
        for j in range(r):
            _im2col(src, H, W, C, kh, kw, stride, pad, outW, p + j, rows[j], c)
        xs = buffers(r)
        m = 0
        while m + s <= M:
            acc = _tile(wsrc, [(m + i) * K for i in range(s)], xs, [0] * r, K, c)
            for i in range(s):
                for j in range(r):
                    emit((p + j) * M + m + i, m + i, acc[i][j])
            m += s
        for m in range(m, M):
            for j in range(r):
                acc = _tile(wsrc, [m * K], [xs[j]], [0], K, c)
                emit((p + j) * M + m, m, acc[0][0])
        p += r
    for p in range(p, pix_end):
        _im2col(src, H, W, C, kh, kw, stride, pad, outW, p, rows[0], c)
        xs = buffers(1)
        for m in range(M):
            acc = _tile(wsrc, [m * K], xs, [0], K, c)
            emit(p * M + m, m, acc[0][0])
    _flush(c, counters)


def conv_bin(inp, H, W, C, wts, M, kh, kw, stride, pad, outH, outW,
             pix_start, pix_end, thr, out, xbuf, mbuf, counters):
    _check_counters(counters)
    K = kh * kw * C
    nwords = (K + 31) >> 5
    if xbuf.shape[0] < nwords or mbuf.shape[0] < nwords:
        raise ValueError("binary im2col scratch too small")
    c = OpCounters()
    src = _Packed(inp, 1)
    wsrc = _Packed(wts, 1)
    thr = [int(t) for t in thr]
    for p in range(pix_start, pix_end):
        oy, ox = divmod(p, outW)
        xbits = 0
        mbits = 0
        neff = 0
        for ky in range(kh):
            iy = oy * stride - pad + ky
            if not 0 <= iy < H:
                continue
            for kx in range(kw):
                ix = ox * stride - pad + kx
                if not 0 <= ix < W:
                    continue
                tap = (ky * kw + kx) * C
                for o in range(0, C, 32):
                    n = min(32, C - o)
                    xbits |= src.word((iy * W + ix) * C + o, n) << (tap + o)
                    mbits |= ((1 << n) - 1) << (tap + o)
                    c.im2col_loads += 1
                    c.im2col_stores += 1
                neff += C
        for w in range(nwords):
            xbuf[w] = (xbits >> (32 * w)) & 0xFFFFFFFF
            mbuf[w] = (mbits >> (32 * w)) & 0xFFFFFFFF
        for m in range(M):
            P = 0
            for w in range(nwords):
                n = min(32, K - 32 * w)
                ww = wsrc.word(m * K + 32 * w, n)
                P += bitops.popcount(~(ww ^ int(xbuf[w])) & int(mbuf[w]), c)
            c.loads += 2 * nwords
            c.macs += neff
            acc = 2 * P - neff
            c.compares += 1
            _insert(out, p * M + m, 1, 1 if thr[m] <= acc else 0, c)
            c.stores += 1
    _flush(c, counters)


def fc_q(inp, N, bits, wts, M, ch_start, ch_end, mode, bias, shift, thr, out, counters):
    _check_counters(counters)
    c = OpCounters()
    xs = [_Packed(inp, bits)]
    wsrc = _Packed(wts, bits)
    emit = _Emitter(out, mode, bits, bias, shift, thr, c)
    m = ch_start
    while m + 2 <= ch_end:
        acc = _tile(wsrc, [m * N, (m + 1) * N], xs, [0], N, c)
        emit(m, m, acc[0][0])
        emit(m + 1, m + 1, acc[1][0])
        m += 2
    if m < ch_end:
        acc = _tile(wsrc, [m * N], xs, [0], N, c)
        emit(m, m, acc[0][0])
    _flush(c, counters)


def relu(inp, out, bits, start, end, counters):
    _check_counters(counters)
    c = OpCounters()
    zero = bitops.pack4(0, 0, 0, 0)
    if bits == 8:
        src = inp.view(np.int8)
        dst = out.view(np.int8)
        e = start
        while e + 4 <= end:
            v = bitops.max4(bitops.pack4(*(int(x) for x in src[e:e + 4])), zero, c)
            dst[e:e + 4] = v
            c.loads += 1
            c.stores += 1
            e += 4
        for e in range(e, end):
            c.loads += 1
            c.compares += 1
            c.stores += 1
            dst[e] = max(int(src[e]), 0)
    else:
        src = _Packed(inp, bits)
        for e in range(start, end):
            v = src.element(e, c)
            c.loads += 1
            c.compares += 1
            _insert(out, e, bits, max(v, 0), c)
            c.stores += 1
    _flush(c, counters)


def _window_max(src, first, step, count, C, dst, dst_base, c):
    ch = 0
    while ch + 4 <= C:
        acc = bitops.pack4(*(int(v) for v in src[first + ch:first + ch + 4]))
        for k in range(1, count):
            at = first + k * step + ch
            acc = bitops.max4(acc, bitops.pack4(*(int(v) for v in src[at:at + 4])), c)
        dst[dst_base + ch:dst_base + ch + 4] = acc
        c.loads += count
        c.stores += 1
        ch += 4
    for ch in range(ch, C):
        best = int(src[first + ch])
        for k in range(1, count):
            best = max(best, int(src[first + k * step + ch]))
        dst[dst_base + ch] = best
        c.loads += count
        c.compares += count - 1
        c.stores += 1


def pool_width(src, dst, H, W, C, pw, stride, outW, start, end, counters):
    _check_counters(counters)
    c = OpCounters()
    for q in range(start, end):
        y, ox = divmod(q, outW)
        _window_max(src, (y * W + ox * stride) * C, C, pw, C, dst, (y * W + ox) * C, c)
    _flush(c, counters)


def pool_height(src, out, W, C, ph, stride, outW, start, end, counters):
    _check_counters(counters)
    c = OpCounters()
    for q in range(start, end):
        oy, ox = divmod(q, outW)
        _window_max(src, (oy * stride * W + ox) * C, W * C, ph, C, out, q * C, c)
    _flush(c, counters)


def matmul_tile(weights, buffers, counters):
    _check_counters(counters)
    c = OpCounters()
    s, r = weights.shape[0], buffers.shape[0]
    acc = run_tile(
        s, r, buffers.shape[1],
        lambda i, k, cc: bitops.pack4(*(int(v) for v in weights[i, k:k + 4])),
        lambda i, k, cc: int(weights[i, k]),
        lambda j, k, cc: bitops.pack4(*(int(v) for v in buffers[j, k:k + 4])),
        lambda j, k, cc: int(buffers[j, k]),
        c,
    )
    _flush(c, counters)
    return np.array(acc, dtype=np.int64)


def staircase_many(acc, tau, q):
    from .quantfmt import compress_staircase_array

    return compress_staircase_array(acc, tau, q)


dot4_acc_many = bitops.dot4_acc_many
max4_many = bitops.max4_many
bextract_many = bitops.bextract_many
popcount_many = bitops.popcount_many
unpack4_many = bitops.unpack4_many


def bitinsert_many(dest, src, offset, size):
    return bitops.bitinsert_many(dest, src, offset, size).astype(np.uint32)


__all__ = [
    "im2col", "conv_q", "conv_bin", "fc_q", "relu", "pool_width", "pool_height",
    "matmul_tile", "staircase_many", "dot4_acc_many", "max4_many",
    "bextract_many", "bitinsert_many", "popcount_many", "unpack4_many",
]
