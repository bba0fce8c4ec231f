# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled layer kernels.

Entry points mirror :mod:`qnnkit._pykernels` one for one.  Every kernel
releases the GIL for its whole body so worker threads run concurrently, and
tallies operations into a caller-owned int64 counter array.
"""

import numpy as np

from libc.stdint cimport int8_t, uint8_t, int16_t, int32_t, int64_t, uint32_t, uint64_t
from libc.string cimport memcpy, memset

cdef extern from *:
    int __builtin_popcount(unsigned int) nogil

cdef enum:
    LOADS = 0
    STORES
    MACS
    VDOTS
    BEXT
    BINS
    POPC
    CMPS
    VMAX
    SLOADS
    SMACS
    ILOADS
    ISTORES
    NCOUNT

COUNTER_FIELDS = (
    "loads", "stores", "macs", "vector_dots", "bit_extracts", "bit_inserts",
    "popcounts", "compares", "vector_maxes", "scalar_loads", "scalar_macs",
    "im2col_loads", "im2col_stores",
)


cdef struct Src:
    const uint8_t* ptr
    Py_ssize_t nbytes
    int bits
    int64_t off


# -- built-in semantics ------------------------------------------------------

cdef inline int32_t sext(uint32_t v, int size) noexcept nogil:
    cdef int32_t sign = 1 << (size - 1)
    return (<int32_t>(v & (((<uint32_t>1) << size) - 1)) ^ sign) - sign


cdef inline int32_t bext(uint32_t word, int offset, int size) noexcept nogil:
    return sext(word >> offset, size)


cdef inline uint32_t binsert(uint32_t dest, uint32_t src, int offset, int size) noexcept nogil:
    cdef uint32_t m
    if size >= 32:
        m = <uint32_t>0xFFFFFFFF
    else:
        m = (((<uint32_t>1) << size) - 1) << offset
    return (dest & ~m) | ((src << offset) & m)


cdef inline int popc(uint32_t w) noexcept nogil:
    return __builtin_popcount(w)


cdef inline int32_t dot4(const int8_t* a, const int8_t* b) noexcept nogil:
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3]


cdef inline void vmax4(const int8_t* a, const int8_t* b, int8_t* out) noexcept nogil:
    cdef int i
    for i in range(4):
        out[i] = a[i] if a[i] >= b[i] else b[i]


cdef inline void unpack4(uint32_t word, int size, int8_t* lanes) noexcept nogil:
    cdef int i
    for i in range(4):
        lanes[i] = <int8_t>bext(word, i * size, size)


cdef inline uint32_t read_bits(const uint8_t* buf, Py_ssize_t nbytes,
                               int64_t bitpos, int nbits) noexcept nogil:
    cdef Py_ssize_t byte = bitpos >> 3
    cdef int sh = bitpos & 7
    cdef int need = (sh + nbits + 7) >> 3
    cdef uint64_t w = 0
    cdef int i
    for i in range(need):
        if byte + i < nbytes:
            w |= (<uint64_t>buf[byte + i]) << (8 * i)
    w >>= sh
    if nbits < 32:
        w &= ((<uint64_t>1) << nbits) - 1
    return <uint32_t>w


cdef inline void write_bits(uint32_t* words, int64_t bitpos, uint32_t val, int nbits) noexcept nogil:
    # target region must be zero
    cdef int64_t w = bitpos >> 5
    cdef int sh = bitpos & 31
    words[w] |= val << sh
    if sh and sh + nbits > 32:
        words[w + 1] |= val >> (32 - sh)


cdef inline void put_field(uint8_t* out, int64_t e, int bits, uint32_t code) noexcept nogil:
    cdef int64_t bp = e * bits
    out[bp >> 3] = <uint8_t>binsert(out[bp >> 3], code, <int>(bp & 7), bits)


cdef inline int32_t get_elem(const uint8_t* buf, Py_ssize_t nbytes, int64_t e, int bits) noexcept nogil:
    if bits == 8:
        return (<const int8_t*>buf)[e]
    if bits == 1:
        return 2 * <int32_t>read_bits(buf, nbytes, e, 1) - 1
    return sext(read_bits(buf, nbytes, e * bits, bits), bits)


cdef inline int8_t req8(int64_t v, int shift) noexcept nogil:
    cdef int64_t half
    if shift:
        half = (<int64_t>1) << (shift - 1)
        if v >= 0:
            v = (v + half) >> shift
        else:
            v = -((-v + half) >> shift)
    if v > 127:
        return 127
    if v < -128:
        return -128
    return <int8_t>v


cdef inline int stair(int32_t acc, const int16_t* tau, int q, int64_t* ncmp) noexcept nogil:
    # balanced tree over 2^q - 1 sorted thresholds: exactly q comparisons
    cdef int lo = 0
    cdef int hi = (1 << q) - 1
    cdef int mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if tau[mid] <= acc:
            lo = mid + 1
        else:
            hi = mid
        ncmp[0] += 1
    return lo - (1 << (q - 1))


# -- s x r tile --------------------------------------------------------------

cdef inline void load_vec(const Src* s, int64_t k, int8_t* lanes) noexcept nogil:
    cdef int b = s.bits
    if b == 8:
        memcpy(lanes, s.ptr + s.off + k, 4)
    else:
        unpack4(read_bits(s.ptr, s.nbytes, (s.off + k) * b, 4 * b), b, lanes)


cdef void tile(const Src* w, int s, const Src* x, int r, int64_t K,
               int32_t* acc, int64_t* cnt) noexcept nogil:
    cdef int8_t wv[4][4]
    cdef int8_t xv[4][4]
    cdef int32_t ws[4]
    cdef int32_t xs[4]
    cdef int i, j
    cdef int64_t k = 0
    cdef int64_t full = K - (K & 3)
    cdef int64_t iters = 0
    cdef int packed_ops = 0
    for i in range(s):
        if w[i].bits != 8:
            packed_ops += 1
    for j in range(r):
        if x[j].bits != 8:
            packed_ops += 1
    for i in range(s * r):
        acc[i] = 0
    while k < full:
        for i in range(s):
            load_vec(&w[i], k, wv[i])
        for j in range(r):
            load_vec(&x[j], k, xv[j])
        for i in range(s):
            for j in range(r):
                acc[i * r + j] += dot4(wv[i], xv[j])
        iters += 1
        k += 4
    cnt[LOADS] += iters * (s + r)
    cnt[BEXT] += iters * 4 * packed_ops
    cnt[VDOTS] += iters * s * r
    cnt[MACS] += iters * 4 * s * r
    while k < K:
        for i in range(s):
            ws[i] = get_elem(w[i].ptr, w[i].nbytes, w[i].off + k, w[i].bits)
        for j in range(r):
            xs[j] = get_elem(x[j].ptr, x[j].nbytes, x[j].off + k, x[j].bits)
        for i in range(s):
            for j in range(r):
                acc[i * r + j] += ws[i] * xs[j]
        cnt[LOADS] += s + r
        cnt[SLOADS] += s + r
        cnt[BEXT] += packed_ops
        cnt[MACS] += s * r
        cnt[SMACS] += s * r
        k += 1


cdef inline void emit(uint8_t* out, int64_t e, int m, int32_t acc, int mode, int bits,
                      const int32_t* bias, int shift, const int16_t* thr, int L,
                      int64_t* cnt) noexcept nogil:
    cdef int lvl
    if mode == 0:
        (<int8_t*>out)[e] = req8(<int64_t>acc + bias[m], shift)
    else:
        lvl = stair(acc, thr + m * L, bits, &cnt[CMPS])
        put_field(out, e, bits, <uint32_t>lvl)
        cnt[BINS] += 1
    cnt[STORES] += 1


cdef void im2col_fill(const uint8_t* inp, Py_ssize_t nbytes, int H, int W, int C, int bits,
                      int kh, int kw, int stride, int pad, int outW, int64_t p,
                      int8_t* dst, int64_t* cnt) noexcept nogil:
    cdef int64_t oy = p // outW
    cdef int64_t ox = p % outW
    cdef int64_t iy, ix, base
    cdef int ky, kx, c
    cdef int8_t* d
    for ky in range(kh):
        iy = oy * stride - pad + ky
        for kx in range(kw):
            ix = ox * stride - pad + kx
            d = dst + (ky * kw + kx) * C
            if iy < 0 or iy >= H or ix < 0 or ix >= W:
                memset(d, 0, C)
            else:
                base = (iy * W + ix) * C
                if bits == 8:
                    memcpy(d, inp + base, C)
                else:
                    for c in range(C):
                        d[c] = <int8_t>get_elem(inp, nbytes, base + c, bits)
                    cnt[BEXT] += C
                cnt[ILOADS] += C
            cnt[ISTORES] += C


def _check_counters(int64_t[::1] counters):
    if counters.shape[0] != NCOUNT:
        raise ValueError(f"counter array must have {NCOUNT} slots")


def im2col(const uint8_t[::1] inp, int H, int W, int C, int bits,
           int kh, int kw, int stride, int pad, int outW, Py_ssize_t p,
           int8_t[::1] dst, int64_t[::1] counters):
    """Receptive field of output pixel ``p`` as INT-8, taps outside the image zeroed."""
    cdef int64_t cnt[NCOUNT]
    cdef int i
    _check_counters(counters)
    if dst.shape[0] != <Py_ssize_t>kh * kw * C:
        raise ValueError("im2col buffer length does not match the geometry")
    memset(cnt, 0, sizeof(cnt))
    with nogil:
        im2col_fill(&inp[0], inp.shape[0], H, W, C, bits, kh, kw, stride, pad,
                    outW, p, &dst[0], cnt)
    for i in range(NCOUNT):
        counters[i] += cnt[i]


def conv_q(const uint8_t[::1] inp, int H, int W, int C, int bits,
           const uint8_t[::1] wts, int M, int kh, int kw, int stride, int pad,
           int outH, int outW, Py_ssize_t pix_start, Py_ssize_t pix_end,
           int s, int r, int mode, const int32_t[::1] bias, int shift,
           const int16_t[:, ::1] thr, uint8_t[::1] out,
           int8_t[:, ::1] scratch, int64_t[::1] counters):
    """Quantized convolution over output pixels [pix_start, pix_end).

    mode 0: INT-8 scale-and-clamp with ``bias``/``shift``;
    mode 1: staircase thresholds ``thr`` (M, 2^bits - 1), packed output.
    """
    cdef int64_t K = <int64_t>kh * kw * C
    cdef int64_t cnt[NCOUNT]
    cdef int32_t acc[16]
    cdef Src wsrc[4]
    cdef Src xsrc[4]
    cdef int i, j, m
    cdef int64_t p
    cdef int L = thr.shape[1]
    cdef const uint8_t* wptr = &wts[0]
    cdef Py_ssize_t wn = wts.shape[0]
    cdef uint8_t* optr = &out[0]
    _check_counters(counters)
    if not (1 <= s <= 4 and 1 <= r <= 4):
        raise ValueError("tile dimensions must be in [1, 4]")
    if scratch.shape[0] < r or scratch.shape[1] < K:
        raise ValueError("im2col scratch too small for this tile and geometry")
    memset(cnt, 0, sizeof(cnt))
    with nogil:
        for j in range(r):
            xsrc[j].ptr = <const uint8_t*>&scratch[j, 0]
            xsrc[j].nbytes = K
            xsrc[j].bits = 8
            xsrc[j].off = 0
        for i in range(4):
            wsrc[i].ptr = wptr
            wsrc[i].nbytes = wn
            wsrc[i].bits = bits
        p = pix_start
        while p + r <= pix_end:
            for j in range(r):
                im2col_fill(&inp[0], inp.shape[0], H, W, C, bits, kh, kw, stride, pad,
                            outW, p + j, &scratch[j, 0], cnt)
            m = 0
            while m + s <= M:
                for i in range(s):
                    wsrc[i].off = (m + i) * K
                tile(wsrc, s, xsrc, r, K, acc, cnt)
                for i in range(s):
                    for j in range(r):
                        emit(optr, (p + j) * M + m + i, m + i, acc[i * r + j], mode, bits,
                             &bias[0], shift, &thr[0, 0], L, cnt)
                m += s
            while m < M:
                wsrc[0].off = m * K
                for j in range(r):
                    tile(wsrc, 1, &xsrc[j], 1, K, acc, cnt)
                    emit(optr, (p + j) * M + m, m, acc[0], mode, bits,
                         &bias[0], shift, &thr[0, 0], L, cnt)
                m += 1
            p += r
        while p < pix_end:
            im2col_fill(&inp[0], inp.shape[0], H, W, C, bits, kh, kw, stride, pad,
                        outW, p, &scratch[0, 0], cnt)
            for m in range(M):
                wsrc[0].off = m * K
                tile(wsrc, 1, xsrc, 1, K, acc, cnt)
                emit(optr, p * M + m, m, acc[0], mode, bits,
                     &bias[0], shift, &thr[0, 0], L, cnt)
            p += 1
    for i in range(NCOUNT):
        counters[i] += cnt[i]


def conv_bin(const uint8_t[::1] inp, int H, int W, int C,
             const uint8_t[::1] wts, int M, int kh, int kw, int stride, int pad,
             int outH, int outW, Py_ssize_t pix_start, Py_ssize_t pix_end,
             const int16_t[::1] thr, uint8_t[::1] out,
             uint32_t[::1] xbuf, uint32_t[::1] mbuf, int64_t[::1] counters):
    """XNOR-popcount convolution; padded taps are masked out of P and N."""
    cdef int64_t K = <int64_t>kh * kw * C
    cdef int64_t nwords = (K + 31) >> 5
    cdef int64_t cnt[NCOUNT]
    cdef int64_t p, oy, ox, iy, ix, o, w, n, neff, P
    cdef int ky, kx, m, nb
    cdef int32_t acc
    cdef uint32_t ww, v
    cdef const uint8_t* iptr = &inp[0]
    cdef const uint8_t* wptr = &wts[0]
    cdef Py_ssize_t inb = inp.shape[0]
    cdef Py_ssize_t wn = wts.shape[0]
    cdef uint32_t* xb = &xbuf[0]
    cdef uint32_t* mb = &mbuf[0]
    _check_counters(counters)
    if xbuf.shape[0] < nwords or mbuf.shape[0] < nwords:
        raise ValueError("binary im2col scratch too small")
    memset(cnt, 0, sizeof(cnt))
    with nogil:
        for p in range(pix_start, pix_end):
            oy = p // outW
            ox = p % outW
            memset(xb, 0, nwords * 4)
            memset(mb, 0, nwords * 4)
            neff = 0
            for ky in range(kh):
                iy = oy * stride - pad + ky
                if iy < 0 or iy >= H:
                    continue
                for kx in range(kw):
                    ix = ox * stride - pad + kx
                    if ix < 0 or ix >= W:
                        continue
                    o = 0
                    while o < C:
                        nb = 32 if C - o >= 32 else <int>(C - o)
                        v = read_bits(iptr, inb, (iy * W + ix) * C + o, nb)
                        write_bits(xb, (ky * kw + kx) * C + o, v, nb)
                        write_bits(mb, (ky * kw + kx) * C + o,
                                   <uint32_t>0xFFFFFFFF if nb == 32 else ((<uint32_t>1) << nb) - 1, nb)
                        cnt[ILOADS] += 1
                        cnt[ISTORES] += 1
                        o += nb
                    neff += C
            for m in range(M):
                P = 0
                for w in range(nwords):
                    n = 32 if K - 32 * w >= 32 else K - 32 * w
                    ww = read_bits(wptr, wn, m * K + 32 * w, <int>n)
                    P += popc(~(ww ^ xb[w]) & mb[w])
                cnt[LOADS] += 2 * nwords
                cnt[POPC] += nwords
                cnt[MACS] += neff
                acc = <int32_t>(2 * P - neff)
                put_field(&out[0], p * M + m, 1, 1 if thr[m] <= acc else 0)
                cnt[CMPS] += 1
                cnt[BINS] += 1
                cnt[STORES] += 1
    for m in range(NCOUNT):
        counters[m] += cnt[m]


def fc_q(const uint8_t[::1] inp, Py_ssize_t N, int bits,
         const uint8_t[::1] wts, int M, int ch_start, int ch_end,
         int mode, const int32_t[::1] bias, int shift,
         const int16_t[:, ::1] thr, uint8_t[::1] out, int64_t[::1] counters):
    """Fully-connected layer over neurons [ch_start, ch_end) with a 2x1 tile."""
    cdef int64_t cnt[NCOUNT]
    cdef int32_t acc[2]
    cdef Src wsrc[2]
    cdef Src xsrc
    cdef int m
    cdef int L = thr.shape[1]
    _check_counters(counters)
    memset(cnt, 0, sizeof(cnt))
    with nogil:
        xsrc.ptr = &inp[0]
        xsrc.nbytes = inp.shape[0]
        xsrc.bits = bits
        xsrc.off = 0
        for m in range(2):
            wsrc[m].ptr = &wts[0]
            wsrc[m].nbytes = wts.shape[0]
            wsrc[m].bits = bits
        m = ch_start
        while m + 2 <= ch_end:
            wsrc[0].off = m * N
            wsrc[1].off = (m + 1) * N
            tile(wsrc, 2, &xsrc, 1, N, acc, cnt)
            emit(&out[0], m, m, acc[0], mode, bits, &bias[0], shift, &thr[0, 0], L, cnt)
            emit(&out[0], m + 1, m + 1, acc[1], mode, bits, &bias[0], shift, &thr[0, 0], L, cnt)
            m += 2
        if m < ch_end:
            wsrc[0].off = m * N
            tile(wsrc, 1, &xsrc, 1, N, acc, cnt)
            emit(&out[0], m, m, acc[0], mode, bits, &bias[0], shift, &thr[0, 0], L, cnt)
    for m in range(NCOUNT):
        counters[m] += cnt[m]


def relu(const uint8_t[::1] inp, uint8_t[::1] out, int bits,
         Py_ssize_t start, Py_ssize_t end, int64_t[::1] counters):
    """max(v, 0) over elements [start, end); INT-8 runs four lanes per max4."""
    cdef int64_t cnt[NCOUNT]
    cdef int8_t zero[4]
    cdef int8_t lanes[4]
    cdef Py_ssize_t e = start
    cdef int32_t v
    cdef const int8_t* src = <const int8_t*>&inp[0]
    cdef int8_t* dst = <int8_t*>&out[0]
    _check_counters(counters)
    memset(cnt, 0, sizeof(cnt))
    memset(zero, 0, 4)
    with nogil:
        if bits == 8:
            while e + 4 <= end:
                vmax4(src + e, zero, lanes)
                memcpy(dst + e, lanes, 4)
                cnt[LOADS] += 1
                cnt[VMAX] += 1
                cnt[STORES] += 1
                e += 4
            while e < end:
                dst[e] = src[e] if src[e] > 0 else 0
                cnt[LOADS] += 1
                cnt[CMPS] += 1
                cnt[STORES] += 1
                e += 1
        else:
            while e < end:
                v = get_elem(&inp[0], inp.shape[0], e, bits)
                if v < 0:
                    v = 0
                put_field(&out[0], e, bits, <uint32_t>v)
                cnt[LOADS] += 1
                cnt[BEXT] += 1
                cnt[CMPS] += 1
                cnt[BINS] += 1
                cnt[STORES] += 1
                e += 1
    for v in range(NCOUNT):
        counters[v] += cnt[v]


def pool_width(const int8_t[::1] src, int8_t[::1] dst, int H, int W, int C,
               int pw, int stride, int outW, Py_ssize_t start, Py_ssize_t end,
               int64_t[::1] counters):
    """Phase 1 of max-pooling: reduce windows along width.

    Items are (row, out_col) pairs; results land at (row, out_col) of ``dst``
    in the input's row stride, so ``dst`` may alias ``src``.
    """
    cdef int64_t cnt[NCOUNT]
    cdef int8_t acc[4]
    cdef Py_ssize_t q, y, ox, sb, db
    cdef int c, kx
    cdef int8_t best, cur
    _check_counters(counters)
    memset(cnt, 0, sizeof(cnt))
    with nogil:
        for q in range(start, end):
            y = q // outW
            ox = q % outW
            sb = (y * W + ox * stride) * C
            db = (y * W + ox) * C
            c = 0
            while c + 4 <= C:
                memcpy(acc, &src[sb + c], 4)
                for kx in range(1, pw):
                    vmax4(acc, &src[sb + kx * C + c], acc)
                memcpy(&dst[db + c], acc, 4)
                cnt[LOADS] += pw
                cnt[VMAX] += pw - 1
                cnt[STORES] += 1
                c += 4
            while c < C:
                best = src[sb + c]
                for kx in range(1, pw):
                    cur = src[sb + kx * C + c]
                    if cur > best:
                        best = cur
                dst[db + c] = best
                cnt[LOADS] += pw
                cnt[CMPS] += pw - 1
                cnt[STORES] += 1
                c += 1
    for c in range(NCOUNT):
        counters[c] += cnt[c]


def pool_height(const int8_t[::1] src, int8_t[::1] out, int W, int C,
                int ph, int stride, int outW, Py_ssize_t start, Py_ssize_t end,
                int64_t[::1] counters):
    """Phase 2 of max-pooling: reduce the width-pooled rows into output pixels."""
    cdef int64_t cnt[NCOUNT]
    cdef int8_t acc[4]
    cdef Py_ssize_t q, oy, ox, sb, ob
    cdef int c, ky
    cdef int8_t best, cur
    _check_counters(counters)
    memset(cnt, 0, sizeof(cnt))
    with nogil:
        for q in range(start, end):
            oy = q // outW
            ox = q % outW
            sb = (oy * stride * W + ox) * C
            ob = q * C
            c = 0
            while c + 4 <= C:
                memcpy(acc, &src[sb + c], 4)
                for ky in range(1, ph):
                    vmax4(acc, &src[sb + ky * W * C + c], acc)
                memcpy(&out[ob + c], acc, 4)
                cnt[LOADS] += ph
                cnt[VMAX] += ph - 1
                cnt[STORES] += 1
                c += 4
            while c < C:
                best = src[sb + c]
                for ky in range(1, ph):
                    cur = src[sb + ky * W * C + c]
                    if cur > best:
                        best = cur
                out[ob + c] = best
                cnt[LOADS] += ph
                cnt[CMPS] += ph - 1
                cnt[STORES] += 1
                c += 1
    for c in range(NCOUNT):
        counters[c] += cnt[c]


# -- direct access to the primitives (tests, benchmarks) ---------------------

def matmul_tile(const int8_t[:, ::1] weights, const int8_t[:, ::1] buffers,
                int64_t[::1] counters):
    cdef int s = weights.shape[0]
    cdef int r = buffers.shape[0]
    cdef int64_t K = buffers.shape[1]
    cdef int64_t cnt[NCOUNT]
    cdef int32_t acc[16]
    cdef Src wsrc[4]
    cdef Src xsrc[4]
    cdef int i, j
    _check_counters(counters)
    if not (1 <= s <= 4 and 1 <= r <= 4) or weights.shape[1] != K or K == 0:
        raise ValueError("bad tile operands")
    memset(cnt, 0, sizeof(cnt))
    for i in range(s):
        wsrc[i].ptr = <const uint8_t*>&weights[i, 0]
        wsrc[i].nbytes = K
        wsrc[i].bits = 8
        wsrc[i].off = 0
    for j in range(r):
        xsrc[j].ptr = <const uint8_t*>&buffers[j, 0]
        xsrc[j].nbytes = K
        xsrc[j].bits = 8
        xsrc[j].off = 0
    with nogil:
        tile(wsrc, s, xsrc, r, K, acc, cnt)
    for i in range(NCOUNT):
        counters[i] += cnt[i]
    res = np.empty((s, r), dtype=np.int64)
    for i in range(s):
        for j in range(r):
            res[i, j] = acc[i * r + j]
    return res


def staircase_many(const int32_t[::1] acc, const int16_t[::1] tau, int q):
    cdef Py_ssize_t n = acc.shape[0], i
    cdef int64_t ncmp = 0
    if tau.shape[0] != (1 << q) - 1:
        raise ValueError("threshold count does not match q")
    res = np.empty(n, dtype=np.int8)
    cdef int8_t[::1] rv = res
    with nogil:
        for i in range(n):
            rv[i] = <int8_t>stair(acc[i], &tau[0], q, &ncmp)
    return res


def dot4_acc_many(const int8_t[:, ::1] a, const int8_t[:, ::1] b, const int64_t[::1] acc):
    cdef Py_ssize_t n = a.shape[0], i
    res = np.empty(n, dtype=np.int64)
    cdef int64_t[::1] rv = res
    for i in range(n):
        rv[i] = acc[i] + dot4(&a[i, 0], &b[i, 0])
    return res


def max4_many(const int8_t[:, ::1] a, const int8_t[:, ::1] b):
    cdef Py_ssize_t n = a.shape[0], i
    res = np.empty((n, 4), dtype=np.int8)
    cdef int8_t[:, ::1] rv = res
    for i in range(n):
        vmax4(&a[i, 0], &b[i, 0], &rv[i, 0])
    return res


def bextract_many(const uint32_t[::1] words, int offset, int size):
    cdef Py_ssize_t n = words.shape[0], i
    res = np.empty(n, dtype=np.int64)
    cdef int64_t[::1] rv = res
    for i in range(n):
        rv[i] = bext(words[i], offset, size)
    return res


def bitinsert_many(const uint32_t[::1] dest, const int64_t[::1] src, int offset, int size):
    cdef Py_ssize_t n = dest.shape[0], i
    res = np.empty(n, dtype=np.uint32)
    cdef uint32_t[::1] rv = res
    for i in range(n):
        rv[i] = binsert(dest[i], <uint32_t>src[i], offset, size)
    return res


def popcount_many(const uint32_t[::1] words):
    cdef Py_ssize_t n = words.shape[0], i
    res = np.empty(n, dtype=np.int64)
    cdef int64_t[::1] rv = res
    for i in range(n):
        rv[i] = popc(words[i])
    return res


def unpack4_many(const uint32_t[::1] packed, int size):
    cdef Py_ssize_t n = packed.shape[0], i
    res = np.empty((n, 4), dtype=np.int8)
    cdef int8_t[:, ::1] rv = res
    for i in range(n):
        unpack4(packed[i], size, &rv[i, 0])
    return res
